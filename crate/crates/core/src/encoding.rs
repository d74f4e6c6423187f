//! Bounded integer encoding of asset holdings into binary variables.
//!
//! Every asset owns a block of `D` holding bits whose coefficients are
//! `1, 2, 4, …, 2^(D-2)` plus one residual coefficient, so the block sums to
//! exactly `K_max` and reaches every integer in `[0, K_max]`. After the N
//! holding blocks come N indicator bits, one per asset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("cardinality C={c} must be between 1 and the number of assets N={n}")]
    Cardinality { c: u32, n: usize },
    #[error("resolution K={k} is below cardinality C={c}: K/C < 1")]
    Infeasible { k: u32, c: u32 },
    #[error("max holding fraction {0} must lie in (0, 1]")]
    HoldingFraction(f64),
    #[error(
        "holding bound too tight: K_max={k_max} units cannot place K={k} units on C={c} assets"
    )]
    BoundTooTight { k: u32, c: u32, k_max: u32 },
    #[error("assignment has {got} variables, expected {expected}")]
    Shape { got: usize, expected: usize },
}

/// Per-asset bounded integer encoding shared by all assets of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingScheme {
    resolution: u32,
    cardinality: u32,
    max_holding_fraction: f64,
    k_max: u32,
    coefficients: Vec<u32>,
    n_assets: usize,
}

/// Whole units available under a fractional cap. The small epsilon absorbs
/// representation error in products such as `0.2 * 255`.
pub fn holding_cap_units(max_holding_fraction: f64, resolution: u32) -> u32 {
    (max_holding_fraction * resolution as f64 + 1e-9).floor() as u32
}

/// Coefficients `1, 2, …, 2^(D-2), residual` summing to `k_max`.
pub fn bounded_coefficients(k_max: u32) -> Vec<u32> {
    if k_max == 0 {
        return Vec::new();
    }
    let d = bit_depth(k_max);
    let mut coeffs: Vec<u32> = (0..d - 1).map(|b| 1u32 << b).collect();
    coeffs.push(k_max - ((1u32 << (d - 1)) - 1));
    coeffs
}

/// Number of bits needed for values in `[0, k_max]`: ⌈log2(k_max + 1)⌉.
pub fn bit_depth(k_max: u32) -> u32 {
    u32::BITS - k_max.leading_zeros()
}

pub fn build_scheme(
    resolution: u32,
    cardinality: u32,
    max_holding_fraction: f64,
    n_assets: usize,
) -> Result<EncodingScheme, EncodingError> {
    if cardinality == 0 || cardinality as usize > n_assets {
        return Err(EncodingError::Cardinality {
            c: cardinality,
            n: n_assets,
        });
    }
    if resolution < cardinality {
        return Err(EncodingError::Infeasible {
            k: resolution,
            c: cardinality,
        });
    }
    if !(max_holding_fraction > 0.0 && max_holding_fraction <= 1.0) {
        return Err(EncodingError::HoldingFraction(max_holding_fraction));
    }
    let k_max = holding_cap_units(max_holding_fraction, resolution)
        .min(resolution - cardinality + 1);
    // C assets capped at K_max must be able to absorb all K units.
    if k_max < resolution.div_ceil(cardinality) {
        return Err(EncodingError::BoundTooTight {
            k: resolution,
            c: cardinality,
            k_max,
        });
    }
    Ok(EncodingScheme {
        resolution,
        cardinality,
        max_holding_fraction,
        k_max,
        coefficients: bounded_coefficients(k_max),
        n_assets,
    })
}

impl EncodingScheme {
    /// K, the number of investment units.
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn cardinality(&self) -> u32 {
        self.cardinality
    }

    pub fn max_holding_fraction(&self) -> f64 {
        self.max_holding_fraction
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn coefficients(&self) -> &[u32] {
        &self.coefficients
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    /// D, holding bits per asset.
    pub fn bits_per_asset(&self) -> usize {
        self.coefficients.len()
    }

    /// M = N·(D+1).
    pub fn n_vars(&self) -> usize {
        self.n_assets * (self.bits_per_asset() + 1)
    }

    pub fn registry(&self) -> VariableRegistry {
        VariableRegistry {
            n_assets: self.n_assets,
            bits_per_asset: self.bits_per_asset(),
        }
    }

    /// Weight contributed by one unit, 1/K.
    pub fn unit(&self) -> f64 {
        1.0 / self.resolution as f64
    }
}

/// What a flat variable index stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    Holding { asset: usize, bit: usize },
    Indicator { asset: usize },
}

/// Flat layout: asset blocks of holding bits `x[i][0..D]`, then the
/// indicators `z[0..N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableRegistry {
    n_assets: usize,
    bits_per_asset: usize,
}

impl VariableRegistry {
    pub fn n_vars(&self) -> usize {
        self.n_assets * (self.bits_per_asset + 1)
    }

    pub fn holding(&self, asset: usize, bit: usize) -> usize {
        debug_assert!(asset < self.n_assets && bit < self.bits_per_asset);
        asset * self.bits_per_asset + bit
    }

    pub fn indicator(&self, asset: usize) -> usize {
        debug_assert!(asset < self.n_assets);
        self.n_assets * self.bits_per_asset + asset
    }

    pub fn holding_block(&self, asset: usize) -> std::ops::Range<usize> {
        let start = asset * self.bits_per_asset;
        start..start + self.bits_per_asset
    }

    pub fn locate(&self, flat: usize) -> Option<Variable> {
        let holdings = self.n_assets * self.bits_per_asset;
        if flat < holdings {
            Some(Variable::Holding {
                asset: flat / self.bits_per_asset,
                bit: flat % self.bits_per_asset,
            })
        } else if flat < self.n_vars() {
            Some(Variable::Indicator {
                asset: flat - holdings,
            })
        } else {
            None
        }
    }
}

/// A binary assignment mapped back into portfolio space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Integer holding per asset, in units of 1/K.
    pub units: Vec<u32>,
    pub weights: Vec<f64>,
    pub selected: Vec<bool>,
}

pub fn decode(assignment: &[bool], scheme: &EncodingScheme) -> Result<Decoded, EncodingError> {
    if assignment.len() != scheme.n_vars() {
        return Err(EncodingError::Shape {
            got: assignment.len(),
            expected: scheme.n_vars(),
        });
    }
    let reg = scheme.registry();
    let units: Vec<u32> = (0..scheme.n_assets)
        .map(|i| {
            assignment[reg.holding_block(i)]
                .iter()
                .zip(&scheme.coefficients)
                .filter(|(&bit, _)| bit)
                .map(|(_, &c)| c)
                .sum()
        })
        .collect();
    let k = scheme.resolution as f64;
    Ok(Decoded {
        weights: units.iter().map(|&u| u as f64 / k).collect(),
        selected: (0..scheme.n_assets)
            .map(|i| assignment[reg.indicator(i)])
            .collect(),
        units,
    })
}

/// Bits for `units` in one asset block; the greedy choice from the largest
/// coefficient down always succeeds for bounded coefficients.
pub fn encode_units(units: u32, scheme: &EncodingScheme) -> Option<Vec<bool>> {
    if units > scheme.k_max {
        return None;
    }
    let mut rest = units;
    let mut bits = vec![false; scheme.coefficients.len()];
    for (b, &c) in scheme.coefficients.iter().enumerate().rev() {
        if c <= rest {
            bits[b] = true;
            rest -= c;
        }
    }
    (rest == 0).then_some(bits)
}

/// Full assignment for a unit vector and a selection.
pub fn encode_portfolio(
    units: &[u32],
    selected: &[bool],
    scheme: &EncodingScheme,
) -> Option<Vec<bool>> {
    if units.len() != scheme.n_assets || selected.len() != scheme.n_assets {
        return None;
    }
    let reg = scheme.registry();
    let mut assignment = vec![false; scheme.n_vars()];
    for (i, &u) in units.iter().enumerate() {
        let bits = encode_units(u, scheme)?;
        assignment[reg.holding_block(i)].copy_from_slice(&bits);
        assignment[reg.indicator(i)] = selected[i];
    }
    Some(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Holdings do not add up to K units.
    Budget { units: f64, expected: u32 },
    Cardinality { selected: usize, expected: u32 },
    /// Indicator set on an asset with no holding.
    PhantomIndicator { asset: usize },
    /// Holding without its indicator.
    UnflaggedHolding { asset: usize },
    /// Weight is not a whole number of units.
    OffGrid { asset: usize, weight: f64 },
    BelowMinimum { asset: usize, weight: f64 },
    AboveMaximum { asset: usize, weight: f64 },
}

impl Violation {
    pub fn tag(&self) -> &'static str {
        match self {
            Violation::Budget { .. } => "budget",
            Violation::Cardinality { .. } => "cardinality",
            Violation::PhantomIndicator { .. } => "phantom_indicator",
            Violation::UnflaggedHolding { .. } => "unflagged_holding",
            Violation::OffGrid { .. } => "off_grid",
            Violation::BelowMinimum { .. } => "below_minimum",
            Violation::AboveMaximum { .. } => "above_maximum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "violations", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible,
    Infeasible(Vec<Violation>),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Feasibility::Feasible => &[],
            Feasibility::Infeasible(v) => v,
        }
    }
}

/// Checks budget, cardinality, indicator consistency and holding bounds.
/// `tolerance` is in units of 1/K.
pub fn feasible(
    weights: &[f64],
    selected: &[bool],
    scheme: &EncodingScheme,
    tolerance: f64,
) -> Feasibility {
    let k = scheme.resolution as f64;
    let mut violations = Vec::new();

    let units: Vec<f64> = weights.iter().map(|w| w * k).collect();
    let total: f64 = units.iter().sum();
    if (total - k).abs() > tolerance {
        violations.push(Violation::Budget {
            units: total,
            expected: scheme.resolution,
        });
    }
    let n_selected = selected.iter().filter(|&&s| s).count();
    if n_selected != scheme.cardinality as usize {
        violations.push(Violation::Cardinality {
            selected: n_selected,
            expected: scheme.cardinality,
        });
    }
    for (asset, (&u, &sel)) in units.iter().zip(selected).enumerate() {
        let weight = weights[asset];
        let invested = u > tolerance;
        match (invested, sel) {
            (false, true) => violations.push(Violation::PhantomIndicator { asset }),
            (true, false) => violations.push(Violation::UnflaggedHolding { asset }),
            _ => {}
        }
        if !invested {
            if u < -tolerance {
                violations.push(Violation::BelowMinimum { asset, weight });
            }
            continue;
        }
        if (u - u.round()).abs() > tolerance {
            violations.push(Violation::OffGrid { asset, weight });
        }
        if u < 1.0 - tolerance {
            violations.push(Violation::BelowMinimum { asset, weight });
        }
        if u > scheme.k_max as f64 + tolerance {
            violations.push(Violation::AboveMaximum { asset, weight });
        }
    }

    if violations.is_empty() {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible(violations)
    }
}

/// Feasibility of a decoded assignment (exact integer units).
pub fn check_decoded(decoded: &Decoded, scheme: &EncodingScheme) -> Feasibility {
    feasible(&decoded.weights, &decoded.selected, scheme, 1e-9)
}
