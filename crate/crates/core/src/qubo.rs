//! Quadratic forms over binary variables.
//!
//! Couplings live in an upper-triangular map keyed by `(i, j)` with `i < j`.
//! A diagonal entry folds into the linear term since `x² = x` for binaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuboError {
    #[error("expected {expected} variables, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("variable index {index} out of range for {n_vars} variables")]
    Index { index: usize, n_vars: usize },
    #[error("malformed model dump at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A linear expression `Σ c_k x_k` over binary variables.
pub type LinearExpr = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuboModel {
    n_vars: usize,
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl QuboModel {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            linear: vec![0.0; n_vars],
            quadratic: BTreeMap::new(),
            offset: 0.0,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.quadratic.get(&key).copied().unwrap_or(0.0)
    }

    pub fn add_offset(&mut self, value: f64) {
        self.offset += value;
    }

    pub fn add_linear(&mut self, i: usize, value: f64) {
        assert!(i < self.n_vars, "variable {i} out of range");
        self.linear[i] += value;
    }

    /// Adds `value · x_i · x_j`. Order of `i` and `j` does not matter; `i == j`
    /// lands in the linear term.
    pub fn add_quadratic(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            i < self.n_vars && j < self.n_vars,
            "coupling ({i}, {j}) out of range"
        );
        if i == j {
            self.linear[i] += value;
            return;
        }
        let key = if i < j { (i, j) } else { (j, i) };
        *self.quadratic.entry(key).or_insert(0.0) += value;
    }

    /// Energy of an assignment.
    pub fn energy(&self, assignment: &[bool]) -> Result<f64, QuboError> {
        if assignment.len() != self.n_vars {
            return Err(QuboError::Shape {
                expected: self.n_vars,
                got: assignment.len(),
            });
        }
        Ok(self.energy_unchecked(assignment))
    }

    pub(crate) fn energy_unchecked(&self, assignment: &[bool]) -> f64 {
        let mut e = self.offset;
        for (v, &a) in self.linear.iter().zip(assignment) {
            if a {
                e += v;
            }
        }
        for (&(i, j), v) in &self.quadratic {
            if assignment[i] && assignment[j] {
                e += v;
            }
        }
        e
    }

    /// Adds `weight · (Σ c_k x_k − constant)²`, expanded with `x² = x`.
    /// Zero weight leaves the model untouched.
    pub fn add_squared_linear(&mut self, terms: &[(usize, f64)], constant: f64, weight: f64) {
        assert!(weight >= 0.0, "penalty weight must be nonnegative");
        if weight == 0.0 {
            return;
        }
        for (a, &(i, ci)) in terms.iter().enumerate() {
            self.add_linear(i, weight * (ci * ci - 2.0 * constant * ci));
            for &(j, cj) in &terms[a + 1..] {
                self.add_quadratic(i, j, weight * 2.0 * ci * cj);
            }
        }
        self.offset += weight * constant * constant;
    }

    /// Adds `weight · Σ_i l_i e_i` where each `e_i` is a linear expression.
    pub fn add_linear_form(&mut self, exprs: &[LinearExpr], coeffs: &[f64], weight: f64) {
        assert_eq!(exprs.len(), coeffs.len());
        if weight == 0.0 {
            return;
        }
        for (expr, &l) in exprs.iter().zip(coeffs) {
            for &(k, c) in expr {
                self.add_linear(k, weight * l * c);
            }
        }
    }

    /// Adds `weight · Σ_{i,j} q_ij e_i e_j` for a symmetric matrix `q`, each
    /// `e_i` being a linear expression over binaries.
    pub fn add_quadratic_form(&mut self, exprs: &[LinearExpr], q: &[Vec<f64>], weight: f64) {
        assert_eq!(exprs.len(), q.len());
        if weight == 0.0 {
            return;
        }
        let n = exprs.len();
        for i in 0..n {
            for &(p, cp) in &exprs[i] {
                // diagonal block: Σ_{d,e} q_ii c_d c_e x_d x_e
                for &(r, cr) in &exprs[i] {
                    if r >= p {
                        let mult = if r == p { 1.0 } else { 2.0 };
                        self.add_quadratic(p, r, weight * mult * q[i][i] * cp * cr);
                    }
                }
                for j in i + 1..n {
                    let qij = q[i][j] + q[j][i];
                    if qij == 0.0 {
                        continue;
                    }
                    for &(r, cr) in &exprs[j] {
                        self.add_quadratic(p, r, weight * qij * cp * cr);
                    }
                }
            }
        }
    }

    /// Adds `scale` times every entry of `other` into this model.
    pub fn accumulate(&mut self, other: &QuboModel, scale: f64) -> Result<(), QuboError> {
        if other.n_vars != self.n_vars {
            return Err(QuboError::Shape {
                expected: self.n_vars,
                got: other.n_vars,
            });
        }
        if scale == 0.0 {
            return Ok(());
        }
        for (a, b) in self.linear.iter_mut().zip(&other.linear) {
            *a += scale * b;
        }
        for (&key, &v) in &other.quadratic {
            *self.quadratic.entry(key).or_insert(0.0) += scale * v;
        }
        self.offset += scale * other.offset;
        Ok(())
    }

    /// Largest absolute linear or pairwise coefficient.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.linear
            .iter()
            .chain(self.quadratic.values())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Neighbour lists for every variable, used by the samplers.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n_vars];
        for (&(i, j), &v) in &self.quadratic {
            if v != 0.0 {
                adj[i].push((j, v));
                adj[j].push((i, v));
            }
        }
        adj
    }

    /// Text dump: `M offset` header, then `i j value` lines with `j == i`
    /// for linear terms. Zero coefficients are omitted.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {:?}", self.n_vars, self.offset).unwrap();
        for (i, &v) in self.linear.iter().enumerate() {
            if v != 0.0 {
                writeln!(out, "{i} {i} {v:?}").unwrap();
            }
        }
        for (&(i, j), &v) in &self.quadratic {
            if v != 0.0 {
                writeln!(out, "{i} {j} {v:?}").unwrap();
            }
        }
        out
    }

    pub fn from_dump(reader: impl BufRead) -> Result<Self, QuboError> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, message: &str| QuboError::Parse {
            line: line + 1,
            message: message.to_owned(),
        };
        let (_, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let header = header.map_err(|e| parse_err(0, &e.to_string()))?;
        let mut fields = header.split_whitespace();
        let n_vars: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err(0, "bad variable count"))?;
        let offset: f64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err(0, "bad offset"))?;
        let mut model = QuboModel::new(n_vars);
        model.offset = offset;
        for (no, line) in lines {
            let line = line.map_err(|e| parse_err(no, &e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse_err(no, "expected `i j value`"));
            }
            let i: usize = parts[0].parse().map_err(|_| parse_err(no, "bad index"))?;
            let j: usize = parts[1].parse().map_err(|_| parse_err(no, "bad index"))?;
            let v: f64 = parts[2].parse().map_err(|_| parse_err(no, "bad value"))?;
            for idx in [i, j] {
                if idx >= n_vars {
                    return Err(QuboError::Index { index: idx, n_vars });
                }
            }
            model.add_quadratic(i, j, v);
        }
        Ok(model)
    }
}

/// Sums models with per-model weights. A zero weight skips its model.
pub fn merge(models: &[(&QuboModel, f64)]) -> Result<QuboModel, QuboError> {
    let n_vars = models.first().map_or(0, |(m, _)| m.n_vars());
    let mut out = QuboModel::new(n_vars);
    for (model, weight) in models {
        out.accumulate(model, *weight)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Budget,
    Cardinality,
    IndicatorCoupling,
    Tracking,
    Return,
    Risk,
}

impl TermKind {
    pub fn is_constraint(self) -> bool {
        matches!(
            self,
            TermKind::Budget | TermKind::Cardinality | TermKind::IndicatorCoupling
        )
    }
}

/// One weighted piece of an objective over the shared variable registry.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTerm {
    pub kind: TermKind,
    pub weight: f64,
    pub fragment: QuboModel,
}

impl PenaltyTerm {
    pub fn new(kind: TermKind, weight: f64, fragment: QuboModel) -> Self {
        assert!(weight >= 0.0, "term weight must be nonnegative");
        Self {
            kind,
            weight,
            fragment,
        }
    }
}

/// Merges terms in order.
pub fn compose(terms: &[PenaltyTerm]) -> Result<QuboModel, QuboError> {
    let parts: Vec<(&QuboModel, f64)> = terms.iter().map(|t| (&t.fragment, t.weight)).collect();
    merge(&parts)
}
