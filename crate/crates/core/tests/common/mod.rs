#![allow(dead_code)]

use idxtrack::encoding::{build_scheme, EncodingScheme};
use idxtrack::market_data::{sample_covariance, CovarianceSet, ReturnsPanel};
use idxtrack::objectives::{Mode, ObjectiveConfig};
use idxtrack::solver::lex_cmp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn panel(rows: Vec<Vec<f64>>, index: Vec<f64>) -> ReturnsPanel {
    let n = rows.first().map_or(1, Vec::len);
    let start = chrono::NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    ReturnsPanel::new(
        (0..rows.len())
            .map(|t| (start + chrono::Days::new(t as u64)).to_string())
            .collect(),
        (0..n).map(|i| format!("A{i}")).collect(),
        rows,
        index,
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_returns(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.001, 0.02).unwrap();
    (0..t)
        .map(|_| (0..n).map(|_| normal.sample(rng)).collect())
        .collect()
}

/// Random panel whose index is a noisy mix of its assets.
pub fn random_panel(rng: &mut ChaCha8Rng, n: usize, t: usize) -> ReturnsPanel {
    let rows = random_returns(rng, n, t);
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let noise = Normal::new(0.0, 0.003).unwrap();
    let index = rows
        .iter()
        .map(|r| r.iter().zip(&w).map(|(a, b)| a * b / total).sum::<f64>() + noise.sample(rng))
        .collect();
    panel(rows, index)
}

/// Index equal to an exact unit portfolio of the panel's assets.
pub fn constructed_panel(rows: Vec<Vec<f64>>, units: &[u32], k: u32) -> ReturnsPanel {
    let index = rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(units)
                .map(|(x, &u)| x * u as f64 / k as f64)
                .sum()
        })
        .collect();
    panel(rows, index)
}

/// Four assets over 60 periods: A0 replicates a volatile index exactly, A1
/// follows it at three quarters of the amplitude, A2 and A3 are quiet and
/// unrelated. Every series is recentred to a fixed mean so that only the
/// variance structure differs between the candidates.
pub fn high_variance_duplicate() -> ReturnsPanel {
    let t = 60;
    let mut r = rng(4);
    let mut draw = |sd: f64, mean: f64| -> Vec<f64> {
        let normal = Normal::new(0.0, sd).unwrap();
        let x: Vec<f64> = (0..t).map(|_| normal.sample(&mut r)).collect();
        let m = x.iter().sum::<f64>() / t as f64;
        x.into_iter().map(|v| v - m + mean).collect()
    };
    let index = draw(0.04, 0.002);
    let wobble = draw(0.002, 0.0);
    let quiet = [draw(0.004, 0.0), draw(0.004, 0.0)];
    let rows = (0..t)
        .map(|i| vec![index[i], 0.75 * index[i] + 0.0005 + wobble[i], quiet[0][i], quiet[1][i]])
        .collect();
    panel(rows, index)
}

pub struct Portfolio {
    pub units: Vec<u32>,
    pub weights: Vec<f64>,
    pub selected: Vec<bool>,
    pub bits_on: Vec<usize>,
}

/// Reads units straight from the coefficient list.
pub fn portfolio(assignment: &[bool], scheme: &EncodingScheme) -> Portfolio {
    let n = scheme.n_assets();
    let d = scheme.bits_per_asset();
    let coef = scheme.coefficients();
    let mut units = vec![0u32; n];
    let mut bits_on = vec![0usize; n];
    for i in 0..n {
        for b in 0..d {
            if assignment[i * d + b] {
                units[i] += coef[b];
                bits_on[i] += 1;
            }
        }
    }
    Portfolio {
        weights: units
            .iter()
            .map(|&u| u as f64 / scheme.resolution() as f64)
            .collect(),
        selected: (0..n).map(|i| assignment[n * d + i]).collect(),
        units,
        bits_on,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad(w: &[f64], m: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            s += w[i] * m[i][j] * w[j];
        }
    }
    s
}

/// Objective plus penalties evaluated in portfolio space, term by term.
pub fn formula_energy(
    assignment: &[bool],
    scheme: &EncodingScheme,
    panel: &ReturnsPanel,
    covset: Option<&CovarianceSet>,
    cfg: &ObjectiveConfig,
) -> f64 {
    let p = portfolio(assignment, scheme);
    let w = &p.weights;
    let rows = panel.returns();
    let objective = match cfg.mode {
        Mode::Tracking => {
            cfg.tracking_weight
                * rows
                    .iter()
                    .zip(panel.index_returns())
                    .map(|(r, x)| (dot(w, r) - x).powi(2))
                    .sum::<f64>()
        }
        Mode::Enhanced => {
            let cs = covset.expect("enhanced needs covariances");
            let l = cfg.lambda;
            rows.iter()
                .zip(panel.index_returns())
                .enumerate()
                .map(|(t, (r, x))| {
                    (1.0 - l) * cfg.tracking_weight * (dot(w, r) - x).powi(2)
                        + l * (-dot(w, r) + cfg.gamma * quad(w, cs.at_period(t)))
                })
                .sum()
        }
        Mode::Markowitz => {
            let cov = sample_covariance(rows);
            -dot(w, &panel.mean_returns()) + cfg.gamma * quad(w, &cov)
        }
    };
    let budget = (w.iter().sum::<f64>() - 1.0).powi(2);
    if cfg.mode == Mode::Markowitz {
        return objective + cfg.budget_weight * budget;
    }
    let n_sel = p.selected.iter().filter(|&&s| s).count() as f64;
    let card = (n_sel - scheme.cardinality() as f64).powi(2);
    let unflagged: f64 = p
        .bits_on
        .iter()
        .zip(&p.selected)
        .map(|(&b, &z)| if z { 0.0 } else { b as f64 })
        .sum();
    objective
        + cfg.budget_weight * budget
        + cfg.cardinality_weight * card
        + cfg.indicator_weight * unflagged
}

pub fn all_assignments(m: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..1 << m).map(move |code| (0..m).map(|i| code >> (m - 1 - i) & 1 == 1).collect())
}

fn tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Minimum of `energy` over every assignment; lexicographically smallest
/// among ties.
pub fn brute_force(m: usize, energy: impl Fn(&[bool]) -> f64) -> (Vec<bool>, f64) {
    let mut best: Option<(Vec<bool>, f64)> = None;
    for a in all_assignments(m) {
        let e = energy(&a);
        let better = match &best {
            None => true,
            Some((b, be)) => {
                if tie(e, *be) {
                    lex_cmp(&a, b).is_lt()
                } else {
                    e < *be
                }
            }
        };
        if better {
            best = Some((a, e));
        }
    }
    best.unwrap()
}

/// Small tracking instance with N ≤ 6, C ≤ 3 and at most two bits per asset.
pub fn random_small_instance(r: &mut ChaCha8Rng) -> (ReturnsPanel, EncodingScheme, ObjectiveConfig) {
    loop {
        let n = r.random_range(2..=6usize);
        let c = r.random_range(1..=n.min(3)) as u32;
        let k = r.random_range(c..=c + 2);
        let frac = [1.0, 0.75, 0.5][r.random_range(0..3)];
        let Ok(scheme) = build_scheme(k, c, frac, n) else { continue };
        if scheme.bits_per_asset() > 2 {
            continue;
        }
        let t = r.random_range(3..=8usize);
        let panel = random_panel(r, n, t);
        let cfg = ObjectiveConfig {
            tracking_weight: r.random_range(10.0..500.0),
            budget_weight: r.random_range(0.5..2.0),
            cardinality_weight: r.random_range(0.5..2.0),
            indicator_weight: r.random_range(0.5..2.0),
            ..Default::default()
        };
        return (panel, scheme, cfg);
    }
}
