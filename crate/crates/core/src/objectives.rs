//! Compiles market data and an encoding scheme into QUBO models.
//!
//! Holdings enter every objective through `ω_i = Σ_d c_d x_{i,d} / K`, so a
//! quadratic form in ω becomes a quadratic form in the holding bits. The
//! constraint terms are shared by all modes:
//!
//! * budget: `(Σ ω − 1)²`
//! * cardinality: `(Σ z − C)²`
//! * indicator coupling: `Σ_{i,d} x_{i,d} (1 − z_i)`, which forbids a
//!   holding whose indicator is off. The reverse case (indicator on, no
//!   holding) is caught when decoding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::EncodingScheme;
use crate::market_data::{CovarianceSet, Matrix, ReturnsPanel};
use crate::qubo::{compose, LinearExpr, PenaltyTerm, QuboError, QuboModel, TermKind};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("panel has {panel} assets but the encoding scheme has {scheme}")]
    AssetCount { panel: usize, scheme: usize },
    #[error("risk ratio lambda={0} must lie in [0, 1]")]
    Lambda(f64),
    #[error("{name} must be a nonnegative finite number, got {value}")]
    Weight { name: &'static str, value: f64 },
    #[error("rolling covariances cover {covered} periods, panel has {periods}")]
    MissingCovariance { covered: usize, periods: usize },
    #[error(transparent)]
    Qubo(#[from] QuboError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Markowitz,
    #[default]
    Tracking,
    Enhanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub mode: Mode,
    /// Risk aversion γ.
    pub gamma: f64,
    /// Risk ratio λ; only read in enhanced mode.
    pub lambda: f64,
    pub tracking_weight: f64,
    pub budget_weight: f64,
    pub cardinality_weight: f64,
    pub indicator_weight: f64,
    /// Replace the three constraint weights by twice the largest objective
    /// coefficient.
    pub auto_scale: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tracking,
            gamma: 1.0,
            lambda: 0.0,
            tracking_weight: 1.0,
            budget_weight: 1.0,
            cardinality_weight: 1.0,
            indicator_weight: 1.0,
            auto_scale: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        for (name, value) in [
            ("gamma", self.gamma),
            ("tracking weight", self.tracking_weight),
            ("budget weight", self.budget_weight),
            ("cardinality weight", self.cardinality_weight),
            ("indicator weight", self.indicator_weight),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ObjectiveError::Weight { name, value });
            }
        }
        if self.mode == Mode::Enhanced && !(0.0..=1.0).contains(&self.lambda) {
            return Err(ObjectiveError::Lambda(self.lambda));
        }
        Ok(())
    }
}

/// ω_i as a linear expression over holding bits.
pub fn weight_exprs(scheme: &EncodingScheme) -> Vec<LinearExpr> {
    let reg = scheme.registry();
    let unit = scheme.unit();
    (0..scheme.n_assets())
        .map(|i| {
            scheme
                .coefficients()
                .iter()
                .enumerate()
                .map(|(d, &c)| (reg.holding(i, d), c as f64 * unit))
                .collect()
        })
        .collect()
}

fn check_shape(panel: &ReturnsPanel, scheme: &EncodingScheme) -> Result<(), ObjectiveError> {
    if panel.n_assets() != scheme.n_assets() {
        return Err(ObjectiveError::AssetCount {
            panel: panel.n_assets(),
            scheme: scheme.n_assets(),
        });
    }
    Ok(())
}

/// `(Σ ω − 1)²`.
pub fn budget_fragment(scheme: &EncodingScheme) -> QuboModel {
    let terms: Vec<(usize, f64)> = weight_exprs(scheme).into_iter().flatten().collect();
    let mut m = QuboModel::new(scheme.n_vars());
    m.add_squared_linear(&terms, 1.0, 1.0);
    m
}

/// `(Σ z − C)²`.
pub fn cardinality_fragment(scheme: &EncodingScheme) -> QuboModel {
    let reg = scheme.registry();
    let terms: Vec<(usize, f64)> = (0..scheme.n_assets())
        .map(|i| (reg.indicator(i), 1.0))
        .collect();
    let mut m = QuboModel::new(scheme.n_vars());
    m.add_squared_linear(&terms, scheme.cardinality() as f64, 1.0);
    m
}

/// `Σ_{i,d} x_{i,d} (1 − z_i)`.
pub fn indicator_fragment(scheme: &EncodingScheme) -> QuboModel {
    let reg = scheme.registry();
    let mut m = QuboModel::new(scheme.n_vars());
    for i in 0..scheme.n_assets() {
        let z = reg.indicator(i);
        for x in reg.holding_block(i) {
            m.add_linear(x, 1.0);
            m.add_quadratic(x, z, -1.0);
        }
    }
    m
}

/// `Σ_t (ω·r_t − r̂_t)²`, expanded through the Gram matrix `Σ_t r_t r_tᵀ`.
pub fn tracking_fragment(panel: &ReturnsPanel, scheme: &EncodingScheme) -> QuboModel {
    let n = panel.n_assets();
    let mut gram = vec![vec![0.0; n]; n];
    let mut cross = vec![0.0; n];
    let mut index_sq = 0.0;
    for (row, &target) in panel.returns().iter().zip(panel.index_returns()) {
        for i in 0..n {
            cross[i] += row[i] * target;
            for j in i..n {
                gram[i][j] += row[i] * row[j];
            }
        }
        index_sq += target * target;
    }
    for i in 0..n {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }
    let exprs = weight_exprs(scheme);
    let mut m = QuboModel::new(scheme.n_vars());
    m.add_quadratic_form(&exprs, &gram, 1.0);
    let linear: Vec<f64> = cross.iter().map(|c| -2.0 * c).collect();
    m.add_linear_form(&exprs, &linear, 1.0);
    m.add_offset(index_sq);
    m
}

/// `−ω·μ` for a per-asset return vector μ.
pub fn return_fragment(mu: &[f64], scheme: &EncodingScheme) -> QuboModel {
    let exprs = weight_exprs(scheme);
    let neg: Vec<f64> = mu.iter().map(|v| -v).collect();
    let mut m = QuboModel::new(scheme.n_vars());
    m.add_linear_form(&exprs, &neg, 1.0);
    m
}

/// `ωᵀ Σ ω`.
pub fn risk_fragment(cov: &Matrix, scheme: &EncodingScheme) -> QuboModel {
    let mut m = QuboModel::new(scheme.n_vars());
    m.add_quadratic_form(&weight_exprs(scheme), cov, 1.0);
    m
}

/// Budget, cardinality and indicator-coupling terms at their configured
/// weights.
pub fn constraint_terms(scheme: &EncodingScheme, config: &ObjectiveConfig) -> Vec<PenaltyTerm> {
    vec![
        PenaltyTerm::new(TermKind::Budget, config.budget_weight, budget_fragment(scheme)),
        PenaltyTerm::new(
            TermKind::Cardinality,
            config.cardinality_weight,
            cardinality_fragment(scheme),
        ),
        PenaltyTerm::new(
            TermKind::IndicatorCoupling,
            config.indicator_weight,
            indicator_fragment(scheme),
        ),
    ]
}

/// Applies auto-scaling if requested: each constraint term gets twice the
/// largest absolute coefficient of the weighted objective terms.
fn finalize(mut terms: Vec<PenaltyTerm>, config: &ObjectiveConfig) -> Result<Vec<PenaltyTerm>, ObjectiveError> {
    if config.auto_scale {
        let objective: Vec<PenaltyTerm> = terms
            .iter()
            .filter(|t| !t.kind.is_constraint())
            .cloned()
            .collect();
        let scale = 2.0 * compose(&objective)?.max_abs_coefficient();
        if scale > 0.0 {
            for t in terms.iter_mut().filter(|t| t.kind.is_constraint()) {
                t.weight = scale;
            }
        }
    }
    Ok(terms)
}

/// Mean-variance terms `−ωᵀμ + γ ωᵀΣω + A_b(Σω − 1)²`.
pub fn markowitz_terms(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    config: &ObjectiveConfig,
) -> Result<Vec<PenaltyTerm>, ObjectiveError> {
    check_shape(panel, scheme)?;
    config.validate()?;
    let cov = if panel.n_periods() >= 2 {
        crate::market_data::sample_covariance(panel.returns())
    } else {
        vec![vec![0.0; panel.n_assets()]; panel.n_assets()]
    };
    let terms = vec![
        PenaltyTerm::new(TermKind::Return, 1.0, return_fragment(&panel.mean_returns(), scheme)),
        PenaltyTerm::new(TermKind::Risk, config.gamma, risk_fragment(&cov, scheme)),
        PenaltyTerm::new(TermKind::Budget, config.budget_weight, budget_fragment(scheme)),
    ];
    finalize(terms, config)
}

pub fn build_markowitz(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    config: &ObjectiveConfig,
) -> Result<QuboModel, ObjectiveError> {
    Ok(compose(&markowitz_terms(panel, scheme, config)?)?)
}

/// Mean-variance objective with the cardinality and indicator terms added,
/// so solutions hold exactly C assets.
pub fn build_cardinality_markowitz(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    config: &ObjectiveConfig,
) -> Result<QuboModel, ObjectiveError> {
    check_shape(panel, scheme)?;
    let mut terms: Vec<PenaltyTerm> = markowitz_terms(panel, scheme, &ObjectiveConfig {
        auto_scale: false,
        ..config.clone()
    })?;
    terms.extend(
        constraint_terms(scheme, config)
            .into_iter()
            .filter(|t| t.kind != TermKind::Budget),
    );
    Ok(compose(&finalize(terms, config)?)?)
}

pub fn tracking_terms(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    config: &ObjectiveConfig,
) -> Result<Vec<PenaltyTerm>, ObjectiveError> {
    check_shape(panel, scheme)?;
    config.validate()?;
    let mut terms = vec![PenaltyTerm::new(
        TermKind::Tracking,
        config.tracking_weight,
        tracking_fragment(panel, scheme),
    )];
    terms.extend(constraint_terms(scheme, config));
    finalize(terms, config)
}

/// `A_tr Σ_t (ω·r_t − r̂_t)²` plus the constraint terms.
pub fn build_tracking(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    config: &ObjectiveConfig,
) -> Result<QuboModel, ObjectiveError> {
    Ok(compose(&tracking_terms(panel, scheme, config)?)?)
}

pub fn enhanced_terms(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    covset: &CovarianceSet,
    config: &ObjectiveConfig,
) -> Result<Vec<PenaltyTerm>, ObjectiveError> {
    check_shape(panel, scheme)?;
    config.validate()?;
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(ObjectiveError::Lambda(config.lambda));
    }
    let periods = panel.n_periods();
    if covset.rolling.is_empty() || covset.n_periods_covered() != periods {
        return Err(ObjectiveError::MissingCovariance {
            covered: if covset.rolling.is_empty() {
                0
            } else {
                covset.n_periods_covered()
            },
            periods,
        });
    }

    let n = panel.n_assets();
    let lambda = config.lambda;
    let mut return_sum = vec![0.0; n];
    let mut risk_sum = vec![vec![0.0; n]; n];
    if lambda > 0.0 {
        for (t, row) in panel.returns().iter().enumerate() {
            for (acc, r) in return_sum.iter_mut().zip(row) {
                *acc += r;
            }
            let cov = covset.at_period(t);
            for i in 0..n {
                for j in 0..n {
                    risk_sum[i][j] += cov[i][j];
                }
            }
        }
    }

    let mut terms = vec![
        PenaltyTerm::new(
            TermKind::Tracking,
            config.tracking_weight * (1.0 - lambda),
            tracking_fragment(panel, scheme),
        ),
        PenaltyTerm::new(TermKind::Return, lambda, return_fragment(&return_sum, scheme)),
        PenaltyTerm::new(
            TermKind::Risk,
            lambda * config.gamma,
            risk_fragment(&risk_sum, scheme),
        ),
    ];
    terms.extend(constraint_terms(scheme, config));
    finalize(terms, config)
}

/// `Σ_t [(1−λ)(ω·r_t − r̂_t)² + λ(−ω·r_t + γ ωᵀΣ_tω)]` plus the constraint
/// terms, with Σ_t the rolling covariance attached to period t.
pub fn build_enhanced(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    covset: &CovarianceSet,
    config: &ObjectiveConfig,
) -> Result<QuboModel, ObjectiveError> {
    Ok(compose(&enhanced_terms(panel, scheme, covset, config)?)?)
}

/// Builds the model selected by `config.mode`.
pub fn build(
    panel: &ReturnsPanel,
    scheme: &EncodingScheme,
    covset: Option<&CovarianceSet>,
    config: &ObjectiveConfig,
) -> Result<QuboModel, ObjectiveError> {
    match config.mode {
        Mode::Markowitz => build_markowitz(panel, scheme, config),
        Mode::Tracking => build_tracking(panel, scheme, config),
        Mode::Enhanced => {
            let covset = covset.ok_or(ObjectiveError::MissingCovariance {
                covered: 0,
                periods: panel.n_periods(),
            })?;
            build_enhanced(panel, scheme, covset, config)
        }
    }
}
