//! Low-energy assignment search.
//!
//! [`solve_exhaustive`] enumerates every assignment of small models and
//! serves as the oracle. [`solve_sa`] runs independent single-flip
//! Metropolis annealing chains, one per requested sample.

use std::cmp::Ordering;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{check_decoded, decode, EncodingError, EncodingScheme, Feasibility};
use crate::qubo::QuboModel;

/// Largest model the exhaustive solver accepts.
pub const MAX_EXHAUSTIVE_VARS: usize = 24;

/// Energies closer than this (relative to `max(1, |E|)`) count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("model has {0} variables; exhaustive search is limited to {MAX_EXHAUSTIVE_VARS}")]
    TooLarge(usize),
    #[error("invalid anneal config: {0}")]
    Config(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    /// `T_hot` is the largest single-flip |ΔE| from the chain's random start,
    /// `T_cold = 1e-3 · T_hot`.
    Auto,
    Fixed { t_hot: f64, t_cold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub n_samples: usize,
    pub sweeps: usize,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            n_samples: 20,
            sweeps: 5000,
            schedule: Schedule::Auto,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.n_samples == 0 {
            return Err(SolverError::Config("n_samples must be at least 1".into()));
        }
        if self.sweeps == 0 {
            return Err(SolverError::Config("sweeps must be at least 1".into()));
        }
        if let Schedule::Fixed { t_hot, t_cold } = self.schedule {
            if !(t_hot > t_cold && t_cold > 0.0 && t_hot.is_finite()) {
                return Err(SolverError::Config(format!(
                    "need t_hot > t_cold > 0, got t_hot={t_hot}, t_cold={t_cold}"
                )));
            }
        }
        Ok(())
    }
}

/// A raw assignment with its exact energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(with = "bitstring")]
    pub assignment: Vec<bool>,
    pub energy: f64,
    pub sample_index: usize,
    pub seed_used: u64,
}

impl Sample {
    /// Recomputes the energy from scratch.
    pub fn new(model: &QuboModel, assignment: Vec<bool>, sample_index: usize, seed_used: u64) -> Self {
        let energy = model
            .energy(&assignment)
            .expect("assignment length matches model");
        Self {
            assignment,
            energy,
            sample_index,
            seed_used,
        }
    }
}

/// A sample decoded into a portfolio and checked against the constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    #[serde(with = "bitstring")]
    pub assignment: Vec<bool>,
    pub energy: f64,
    pub units: Vec<u32>,
    pub weights: Vec<f64>,
    pub selected: Vec<bool>,
    pub feasibility: Feasibility,
    pub sample_index: usize,
    pub seed_used: u64,
}

impl Solution {
    pub fn from_sample(sample: Sample, scheme: &EncodingScheme) -> Result<Self, SolverError> {
        let decoded = decode(&sample.assignment, scheme)?;
        let feasibility = check_decoded(&decoded, scheme);
        Ok(Self {
            assignment: sample.assignment,
            energy: sample.energy,
            units: decoded.units,
            weights: decoded.weights,
            selected: decoded.selected,
            feasibility,
            sample_index: sample.sample_index,
            seed_used: sample.seed_used,
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility.is_feasible()
    }
}

pub fn decode_samples(
    samples: Vec<Sample>,
    scheme: &EncodingScheme,
) -> Result<Vec<Solution>, SolverError> {
    samples
        .into_iter()
        .map(|s| Solution::from_sample(s, scheme))
        .collect()
}

/// Lexicographic order on assignments, `false < true`, index 0 first.
pub fn lex_cmp(a: &[bool], b: &[bool]) -> Ordering {
    a.cmp(b)
}

fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Orders by energy, then lexicographically on the assignment. Energies
/// within [`TIE_TOLERANCE`] compare equal.
pub fn energy_order(a_energy: f64, a: &[bool], b_energy: f64, b: &[bool]) -> Ordering {
    if is_tie(a_energy, b_energy) {
        lex_cmp(a, b)
    } else {
        a_energy.total_cmp(&b_energy)
    }
}

/// Global optimum by enumeration. Walks all 2^M assignments in Gray-code
/// order with incremental energies, then re-evaluates the candidates near
/// the minimum exactly and breaks ties lexicographically.
pub fn solve_exhaustive(model: &QuboModel) -> Result<Sample, SolverError> {
    let m = model.n_vars();
    if m > MAX_EXHAUSTIVE_VARS {
        return Err(SolverError::TooLarge(m));
    }
    let mut dense = vec![vec![0.0; m]; m];
    for (&(i, j), &v) in model.quadratic() {
        dense[i][j] = v;
        dense[j][i] = v;
    }
    // scale of the incremental rounding error
    let magnitude: f64 = model.offset().abs()
        + model.linear().iter().map(|v| v.abs()).sum::<f64>()
        + model.quadratic().values().map(|v| v.abs()).sum::<f64>();
    let slack = 1e-9 * magnitude.max(1.0);

    let mut state = vec![false; m];
    let mut field: Vec<f64> = model.linear().to_vec();
    let mut energy = model.offset();
    let mut best = energy;
    let mut candidates: Vec<u32> = vec![0];
    let mut code: u32 = 0;
    for step in 1u64..(1u64 << m) {
        let bit = step.trailing_zeros() as usize;
        if state[bit] {
            energy -= field[bit];
            state[bit] = false;
            for (j, row) in dense[bit].iter().enumerate() {
                field[j] -= row;
            }
        } else {
            energy += field[bit];
            state[bit] = true;
            for (j, row) in dense[bit].iter().enumerate() {
                field[j] += row;
            }
        }
        code ^= 1 << bit;
        if energy < best - slack {
            best = energy;
            candidates.clear();
            candidates.push(code);
        } else if energy <= best + slack {
            if energy < best {
                best = energy;
            }
            candidates.push(code);
        }
    }

    let to_assignment = |c: u32| -> Vec<bool> { (0..m).map(|k| c >> k & 1 == 1).collect() };
    let mut exact: Vec<(f64, Vec<bool>)> = candidates
        .into_iter()
        .map(|c| {
            let a = to_assignment(c);
            (model.energy_unchecked(&a), a)
        })
        .collect();
    let min = exact
        .iter()
        .map(|(e, _)| *e)
        .fold(f64::INFINITY, f64::min);
    exact.retain(|(e, _)| is_tie(*e, min));
    let (_, assignment) = exact
        .into_iter()
        .min_by(|a, b| lex_cmp(&a.1, &b.1))
        .expect("at least one assignment");
    Ok(Sample::new(model, assignment, 0, 0))
}

/// Local fields `h_i = linear_i + Σ_j Q_ij x_j`; flipping `i` changes the
/// energy by `+h_i` (0→1) or `−h_i` (1→0).
fn local_fields(model: &QuboModel, adj: &[Vec<(usize, f64)>], state: &[bool]) -> Vec<f64> {
    let mut h = model.linear().to_vec();
    for (i, nbrs) in adj.iter().enumerate() {
        for &(j, q) in nbrs {
            if state[j] {
                h[i] += q;
            }
        }
    }
    h
}

fn anneal_chain(
    model: &QuboModel,
    adj: &[Vec<(usize, f64)>],
    config: &AnnealConfig,
    sample_index: usize,
) -> Sample {
    let seed = config.seed ^ sample_index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = model.n_vars();
    let mut state: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
    let mut h = local_fields(model, adj, &state);

    let (t_hot, t_cold) = match config.schedule {
        Schedule::Fixed { t_hot, t_cold } => (t_hot, t_cold),
        Schedule::Auto => {
            let max_delta = h.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let t_hot = if max_delta > 0.0 { max_delta } else { 1.0 };
            (t_hot, 1e-3 * t_hot)
        }
    };
    let ratio = if config.sweeps > 1 {
        (t_cold / t_hot).powf(1.0 / (config.sweeps - 1) as f64)
    } else {
        1.0
    };

    let mut energy = model.energy_unchecked(&state);
    let mut best_energy = energy;
    let mut best_state = state.clone();
    let mut temperature = if config.sweeps > 1 { t_hot } else { t_cold };
    for _ in 0..config.sweeps {
        for i in 0..m {
            let delta = if state[i] { -h[i] } else { h[i] };
            let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / temperature).exp();
            if accept {
                let sign = if state[i] { -1.0 } else { 1.0 };
                state[i] = !state[i];
                energy += delta;
                for &(j, q) in &adj[i] {
                    h[j] += sign * q;
                }
            }
        }
        if energy < best_energy {
            best_energy = energy;
            best_state.clone_from(&state);
        }
        temperature *= ratio;
    }

    // zero-temperature polish so every returned sample is a local minimum
    loop {
        let mut improved = false;
        for i in 0..m {
            let field = h_at(model, adj, &best_state, i);
            let delta = if best_state[i] { -field } else { field };
            if delta < 0.0 {
                best_state[i] = !best_state[i];
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    let sample = Sample::new(model, best_state, sample_index, seed);
    debug!(
        "sample {sample_index}: seed {seed:#x}, energy {:.6e}",
        sample.energy
    );
    sample
}

fn h_at(model: &QuboModel, adj: &[Vec<(usize, f64)>], state: &[bool], i: usize) -> f64 {
    let mut h = model.linear()[i];
    for &(j, q) in &adj[i] {
        if state[j] {
            h += q;
        }
    }
    h
}

/// Runs `n_samples` independent annealing chains; chain `k` is seeded with
/// `seed ^ k`. The result is sorted by energy with lexicographic tie-break
/// and does not depend on thread scheduling.
pub fn solve_sa(model: &QuboModel, config: &AnnealConfig) -> Result<Vec<Sample>, SolverError> {
    config.validate()?;
    let adj = model.adjacency();
    let mut samples: Vec<Sample> = (0..config.n_samples)
        .into_par_iter()
        .map(|k| anneal_chain(model, &adj, config, k))
        .collect();
    samples.sort_by(|a, b| {
        energy_order(a.energy, &a.assignment, b.energy, &b.assignment)
            .then(a.sample_index.cmp(&b.sample_index))
    });
    Ok(samples)
}

/// Feasible solutions ranked by energy, the rejects, and the success rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub feasible: Vec<Solution>,
    pub infeasible: Vec<Solution>,
    pub success_rate: f64,
}

impl Ranked {
    pub fn n_samples(&self) -> usize {
        self.feasible.len() + self.infeasible.len()
    }

    pub fn best(&self) -> Option<&Solution> {
        self.feasible.first()
    }

    /// Count of each violation tag among the infeasible samples.
    pub fn violation_counts(&self) -> Vec<(&'static str, usize)> {
        let mut counts: Vec<(&'static str, usize)> = Vec::new();
        for s in &self.infeasible {
            for v in s.feasibility.violations() {
                match counts.iter_mut().find(|(t, _)| *t == v.tag()) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((v.tag(), 1)),
                }
            }
        }
        counts.sort();
        counts
    }
}

pub fn filter_rank(solutions: Vec<Solution>) -> Ranked {
    let total = solutions.len();
    let (mut feasible, mut infeasible): (Vec<_>, Vec<_>) =
        solutions.into_iter().partition(Solution::is_feasible);
    let order = |a: &Solution, b: &Solution| {
        energy_order(a.energy, &a.assignment, b.energy, &b.assignment)
            .then(a.sample_index.cmp(&b.sample_index))
    };
    feasible.sort_by(order);
    infeasible.sort_by(order);
    let success_rate = if total == 0 {
        0.0
    } else {
        feasible.len() as f64 / total as f64
    };
    Ranked {
        feasible,
        infeasible,
        success_rate,
    }
}

/// Serializes assignments as compact `0`/`1` strings.
pub mod bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!("invalid bit `{other}`"))),
            })
            .collect()
    }
}
