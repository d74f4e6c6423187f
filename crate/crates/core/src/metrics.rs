//! Portfolio scoring against the target index.

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::market_data::{rolling_variance, CovarianceSet, ReturnsPanel};

/// Denominators below this magnitude are skipped in relative errors.
pub const RELATIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("period {period}: return {value} is at or below -100%, log undefined")]
    Domain { period: usize, value: f64 },
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("period {period}: nonpositive portfolio variance {variance}")]
    DegenerateRisk { period: usize, variance: f64 },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
}

pub fn portfolio_returns(weights: &[f64], panel: &ReturnsPanel) -> Vec<f64> {
    panel
        .returns()
        .iter()
        .map(|row| row.iter().zip(weights).map(|(r, w)| r * w).sum())
        .collect()
}

/// Σ_t (ω·r_t − r̂_t)².
pub fn tracking_error(weights: &[f64], panel: &ReturnsPanel) -> f64 {
    tracking_error_series(&portfolio_returns(weights, panel), panel.index_returns())
}

pub fn tracking_error_series(portfolio: &[f64], index: &[f64]) -> f64 {
    portfolio
        .iter()
        .zip(index)
        .map(|(p, i)| (p - i).powi(2))
        .sum()
}

/// Running sums of `ln(1 + r_t)`.
pub fn cumulative_log_returns(series: &[f64]) -> Result<Vec<f64>, MetricError> {
    let mut acc = 0.0;
    series
        .iter()
        .enumerate()
        .map(|(period, &r)| {
            if r <= -1.0 || !r.is_finite() {
                return Err(MetricError::Domain { period, value: r });
            }
            acc += r.ln_1p();
            Ok(acc)
        })
        .collect()
}

/// Σ_t [Σ_{s≤t} ln(1+ω·r_s) − ln(1+r̂_s)]².
pub fn cumulative_tracking_error(weights: &[f64], panel: &ReturnsPanel) -> Result<f64, MetricError> {
    cumulative_tracking_error_series(&portfolio_returns(weights, panel), panel.index_returns())
}

pub fn cumulative_tracking_error_series(portfolio: &[f64], index: &[f64]) -> Result<f64, MetricError> {
    check_lengths(portfolio, index)?;
    let p = cumulative_log_returns(portfolio)?;
    let i = cumulative_log_returns(index)?;
    Ok(p.iter().zip(&i).map(|(a, b)| (a - b).powi(2)).sum())
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::Length(a.len(), b.len()));
    }
    Ok(())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeErrors {
    pub mre: f64,
    pub mdre: f64,
    /// Periods dropped for a near-zero index cumulative return.
    pub skipped: usize,
}

/// Mean and median over time of |cumulative log gap| / |index cumulative log
/// return|.
pub fn relative_error_summary(weights: &[f64], panel: &ReturnsPanel) -> Result<RelativeErrors, MetricError> {
    relative_error_series(&portfolio_returns(weights, panel), panel.index_returns())
}

pub fn relative_error_series(portfolio: &[f64], index: &[f64]) -> Result<RelativeErrors, MetricError> {
    check_lengths(portfolio, index)?;
    let p = cumulative_log_returns(portfolio)?;
    let i = cumulative_log_returns(index)?;
    let mut skipped = 0;
    let rel: Vec<f64> = p
        .iter()
        .zip(&i)
        .filter_map(|(a, b)| {
            if b.abs() < RELATIVE_FLOOR {
                skipped += 1;
                None
            } else {
                Some((a - b).abs() / b.abs())
            }
        })
        .collect();
    if rel.is_empty() {
        return Err(MetricError::Undefined(
            "index cumulative return is zero at every period".into(),
        ));
    }
    Ok(RelativeErrors {
        mre: rel.iter().sum::<f64>() / rel.len() as f64,
        mdre: median(&rel).unwrap_or(0.0),
        skipped,
    })
}

/// Sample standard deviation (T−1 denominator).
pub fn stdev(series: &[f64]) -> Option<f64> {
    if series.len() < 2 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let ss: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    Some((ss / (series.len() - 1) as f64).sqrt())
}

/// (σ_portfolio − σ_index) / σ_index, signed.
pub fn vol_error(weights: &[f64], panel: &ReturnsPanel) -> Result<f64, MetricError> {
    vol_error_series(&portfolio_returns(weights, panel), panel.index_returns())
}

pub fn vol_error_series(portfolio: &[f64], index: &[f64]) -> Result<f64, MetricError> {
    check_lengths(portfolio, index)?;
    let (Some(sp), Some(si)) = (stdev(portfolio), stdev(index)) else {
        return Err(MetricError::Undefined("volatility needs at least 2 periods".into()));
    };
    if si == 0.0 {
        return Err(MetricError::Undefined("index volatility is zero".into()));
    }
    Ok((sp - si) / si)
}

/// Pearson correlation of per-period returns.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(MetricError::Undefined("correlation needs at least 2 periods".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::Undefined("constant series has no correlation".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Per-period Sharpe ratio `ω·r_t / sqrt(ωᵀ Σ_t ω)` with zero risk-free rate.
pub fn sharpe_series(
    weights: &[f64],
    panel: &ReturnsPanel,
    covset: &CovarianceSet,
) -> Result<Vec<f64>, MetricError> {
    if covset.n_periods_covered() != panel.n_periods() {
        return Err(MetricError::Length(covset.n_periods_covered(), panel.n_periods()));
    }
    portfolio_returns(weights, panel)
        .into_iter()
        .enumerate()
        .map(|(t, ret)| {
            let cov = covset.at_period(t);
            let mut variance = 0.0;
            for (i, wi) in weights.iter().enumerate() {
                for (j, wj) in weights.iter().enumerate() {
                    variance += wi * cov[i][j] * wj;
                }
            }
            if variance <= 0.0 {
                return Err(MetricError::DegenerateRisk { period: t, variance });
            }
            Ok(ret / variance.sqrt())
        })
        .collect()
}

/// Sharpe series of the index itself, its risk taken from the rolling
/// variance of index returns with the same window alignment.
pub fn index_sharpe_series(panel: &ReturnsPanel, window: usize) -> Result<Vec<f64>, MetricError> {
    let index = panel.index_returns();
    let variances = rolling_variance(index, window)
        .map_err(|e| MetricError::Undefined(e.to_string()))?;
    index
        .iter()
        .zip(variances)
        .enumerate()
        .map(|(t, (r, v))| {
            if v <= 0.0 {
                Err(MetricError::DegenerateRisk { period: t, variance: v })
            } else {
                Ok(r / v.sqrt())
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeMedian {
    pub value: f64,
    pub skipped: usize,
}

/// Median over t of `(S_p,t − S_i,t) / |S_i,t|`.
pub fn mdrse(portfolio: &[f64], index: &[f64]) -> Result<RelativeMedian, MetricError> {
    check_lengths(portfolio, index)?;
    let mut skipped = 0;
    let rel: Vec<f64> = portfolio
        .iter()
        .zip(index)
        .filter_map(|(p, i)| {
            if i.abs() < RELATIVE_FLOOR {
                skipped += 1;
                None
            } else {
                Some((p - i) / i.abs())
            }
        })
        .collect();
    let value = median(&rel).ok_or_else(|| {
        MetricError::Undefined("no period with a nonzero index Sharpe ratio".into())
    })?;
    Ok(RelativeMedian { value, skipped })
}

/// Sharpe improvement per unit of cumulative tracking error.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "ScoreRepr")]
pub enum EnhancementScore {
    Finite(f64),
    /// Zero tracking error.
    Infinite,
}

impl EnhancementScore {
    pub fn as_f64(self) -> f64 {
        match self {
            EnhancementScore::Finite(v) => v,
            EnhancementScore::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for EnhancementScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnhancementScore::Finite(v) => write!(f, "{v}"),
            EnhancementScore::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for EnhancementScore {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            EnhancementScore::Finite(v) => s.serialize_f64(*v),
            EnhancementScore::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScoreRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<ScoreRepr> for EnhancementScore {
    type Error = String;

    fn try_from(r: ScoreRepr) -> Result<Self, String> {
        match r {
            ScoreRepr::Number(v) => Ok(EnhancementScore::Finite(v)),
            ScoreRepr::Text(t) if t == "inf" => Ok(EnhancementScore::Infinite),
            ScoreRepr::Text(t) => Err(format!("unknown score `{t}`")),
        }
    }
}

/// MDRSE / ε_CTE; zero tracking error gives the infinite sentinel.
pub fn enhancement_score(mdrse: f64, cte: f64) -> EnhancementScore {
    if cte <= 0.0 {
        EnhancementScore::Infinite
    } else {
        EnhancementScore::Finite(mdrse / cte)
    }
}

/// All metrics for one portfolio. Metrics that are undefined for the
/// portfolio (zero risk, returns below −100%, …) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub te: f64,
    pub cte: Option<f64>,
    pub mre: Option<f64>,
    pub mdre: Option<f64>,
    pub relative_skipped: usize,
    pub vol_error: Option<f64>,
    pub correlation: Option<f64>,
    pub sharpe_series: Option<Vec<f64>>,
    pub mdrse: Option<f64>,
    pub enhancement_score: Option<EnhancementScore>,
    pub success_rate: f64,
}

impl TrackingReport {
    pub fn evaluate(
        weights: &[f64],
        panel: &ReturnsPanel,
        covset: Option<&CovarianceSet>,
        success_rate: f64,
    ) -> Self {
        let portfolio = portfolio_returns(weights, panel);
        let index = panel.index_returns();
        let cte = cumulative_tracking_error_series(&portfolio, index).ok();
        let rel = relative_error_series(&portfolio, index).ok();
        let sharpe = covset.and_then(|c| sharpe_series(weights, panel, c).ok());
        let mdrse = match (&sharpe, covset) {
            (Some(s), Some(c)) => index_sharpe_series(panel, c.window)
                .and_then(|i| mdrse(s, &i))
                .ok()
                .map(|m| m.value),
            _ => None,
        };
        Self {
            te: tracking_error_series(&portfolio, index),
            cte,
            mre: rel.as_ref().map(|r| r.mre),
            mdre: rel.as_ref().map(|r| r.mdre),
            relative_skipped: rel.as_ref().map_or(0, |r| r.skipped),
            vol_error: vol_error_series(&portfolio, index).ok(),
            correlation: correlation(&portfolio, index).ok(),
            sharpe_series: sharpe,
            mdrse,
            enhancement_score: match (mdrse, cte) {
                (Some(m), Some(c)) => Some(enhancement_score(m, c)),
                _ => None,
            },
            success_rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::covariances;

    fn panel(rows: Vec<Vec<f64>>, index: Vec<f64>) -> ReturnsPanel {
        let n = rows[0].len();
        ReturnsPanel::new(
            (0..rows.len()).map(|t| t.to_string()).collect(),
            (0..n).map(|i| format!("A{i}")).collect(),
            rows,
            index,
        )
        .unwrap()
    }

    const INDEX: [f64; 6] = [0.012, -0.008, 0.015, 0.003, -0.011, 0.007];

    #[test]
    fn perfect_tracking_is_zero() {
        let p = panel(INDEX.iter().map(|&r| vec![r, 0.5 * r]).collect(), INDEX.to_vec());
        let w = [1.0, 0.0];
        assert_eq!(tracking_error(&w, &p), 0.0);
        assert_eq!(cumulative_tracking_error(&w, &p).unwrap(), 0.0);
        let rel = relative_error_summary(&w, &p).unwrap();
        assert_eq!((rel.mre, rel.mdre), (0.0, 0.0));
        assert_eq!(vol_error(&w, &p).unwrap(), 0.0);
    }

    #[test]
    fn constant_deviation() {
        let delta = 0.002;
        let port: Vec<f64> = INDEX.iter().map(|r| r + delta).collect();
        let te = tracking_error_series(&port, &INDEX);
        assert!((te - 6.0 * delta * delta).abs() < 1e-18);
    }

    #[test]
    fn cte_single_period_e() {
        let cte = cumulative_tracking_error_series(&[std::f64::consts::E - 1.0], &[0.0]).unwrap();
        assert!((cte - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cte_rejects_total_loss() {
        assert_eq!(
            cumulative_tracking_error_series(&[0.0, -1.0], &[0.0, 0.0]),
            Err(MetricError::Domain { period: 1, value: -1.0 })
        );
    }

    #[test]
    fn relative_error_constant_ratio() {
        // portfolio cumulative log return is 1.1x the index at every period
        let idx = [0.01, 0.02, -0.005, 0.013];
        let cum = cumulative_log_returns(&idx).unwrap();
        let scaled: Vec<f64> = cum.iter().map(|c| 1.1 * c).collect();
        let mut port = Vec::new();
        let mut prev = 0.0;
        for c in scaled {
            port.push((c - prev).exp_m1());
            prev = c;
        }
        let rel = relative_error_series(&port, &idx).unwrap();
        assert!((rel.mre - 0.10).abs() < 1e-12);
        assert!((rel.mdre - 0.10).abs() < 1e-12);
    }

    #[test]
    fn relative_error_all_zero_index() {
        let r = relative_error_series(&[0.01, 0.0], &[0.0, 0.0]);
        assert!(matches!(r, Err(MetricError::Undefined(_))));
    }

    #[test]
    fn vol_error_scaling() {
        let p110: Vec<f64> = INDEX.iter().map(|r| 1.10 * r).collect();
        let p080: Vec<f64> = INDEX.iter().map(|r| 0.80 * r).collect();
        assert!((vol_error_series(&p110, &INDEX).unwrap() - 0.10).abs() < 1e-12);
        assert!((vol_error_series(&p080, &INDEX).unwrap() + 0.20).abs() < 1e-12);
        assert!(vol_error_series(&[0.1, 0.2], &[0.01, 0.01]).is_err());
    }

    #[test]
    fn correlation_extremes() {
        let neg: Vec<f64> = INDEX.iter().map(|r| -r).collect();
        assert!((correlation(&INDEX, &INDEX).unwrap() - 1.0).abs() < 1e-15);
        assert!((correlation(&INDEX, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sharpe_single_asset() {
        let set = CovarianceSet {
            full: vec![vec![0.0001]],
            rolling: vec![vec![vec![0.0001]]],
            window: 2,
        };
        let p = panel(vec![vec![0.01], vec![0.0]], vec![0.0, 0.0]);
        let s = sharpe_series(&[1.0], &p, &set).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn sharpe_degenerate() {
        let set = CovarianceSet {
            full: vec![vec![0.0]],
            rolling: vec![vec![vec![0.0]]],
            window: 2,
        };
        let p = panel(vec![vec![0.01], vec![0.0]], vec![0.0, 0.0]);
        assert!(matches!(
            sharpe_series(&[1.0], &p, &set),
            Err(MetricError::DegenerateRisk { period: 0, .. })
        ));
    }

    #[test]
    fn sharpe_two_asset_quadratic_form() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|t| vec![0.01 * ((t % 3) as f64 - 1.0), 0.004 * ((t % 4) as f64 - 1.5)])
            .collect();
        let p = panel(rows.clone(), vec![0.001; 8]);
        let cov = covariances(&p, 4).unwrap();
        let s = sharpe_series(&[0.5, 0.5], &p, &cov).unwrap();
        for t in 0..8 {
            let c = cov.at_period(t);
            let var = 0.25 * (c[0][0] + c[1][1] + 2.0 * c[0][1]);
            let ret = 0.5 * (rows[t][0] + rows[t][1]);
            assert!((s[t] - ret / var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn mdrse_examples() {
        let idx = [0.5, 0.2, 0.9, 1.3, 0.7];
        assert_eq!(mdrse(&idx, &idx).unwrap().value, 0.0);
        let up: Vec<f64> = idx.iter().map(|s| 1.36 * s).collect();
        let rel = mdrse(&up, &idx).unwrap().value;
        assert!((rel - 0.36).abs() < 1e-12, "{rel}");
        let pos = [0.5, 0.2, 0.9];
        let half: Vec<f64> = pos.iter().map(|s| 0.5 * s).collect();
        assert!((mdrse(&half, &pos).unwrap().value + 0.5).abs() < 1e-12);
        assert!(mdrse(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn enhancement_scores() {
        match enhancement_score(0.36, 0.00030) {
            EnhancementScore::Finite(v) => assert!((v - 1200.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert_eq!(enhancement_score(0.0, 0.01), EnhancementScore::Finite(0.0));
        let a = enhancement_score(0.5, 0.02).as_f64();
        let b = enhancement_score(0.5, 0.04).as_f64();
        assert!((a - 2.0 * b).abs() < 1e-12);
        assert_eq!(enhancement_score(0.4, 0.0), EnhancementScore::Infinite);
        assert_eq!(
            serde_json::to_string(&EnhancementScore::Infinite).unwrap(),
            "\"inf\""
        );
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
