//! Deterministic synthetic market data for fixtures and demos.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::market_data::{Matrix, PricePanel, ReturnsPanel};

/// Daily returns from one market factor, a handful of sector factors and
/// idiosyncratic noise. Asset `i` belongs to sector `i % n_sectors`.
pub fn factor_returns(n_assets: usize, n_periods: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sectors = 4;
    let market = Normal::new(4e-4, 0.011).unwrap();
    let sector = Normal::new(0.0, 0.006).unwrap();
    let beta = Uniform::new(0.6, 1.4).unwrap();
    let idio_scale = Uniform::new(0.004, 0.014).unwrap();
    let drift = Uniform::new(-2e-4, 4e-4).unwrap();

    let betas: Vec<f64> = (0..n_assets).map(|_| beta.sample(&mut rng)).collect();
    let idio: Vec<Normal<f64>> = (0..n_assets)
        .map(|_| Normal::new(0.0, idio_scale.sample(&mut rng)).unwrap())
        .collect();
    let drifts: Vec<f64> = (0..n_assets).map(|_| drift.sample(&mut rng)).collect();

    (0..n_periods)
        .map(|_| {
            let m = market.sample(&mut rng);
            let s: Vec<f64> = (0..n_sectors).map(|_| sector.sample(&mut rng)).collect();
            (0..n_assets)
                .map(|i| {
                    let r = drifts[i] + betas[i] * m + s[i % n_sectors] + idio[i].sample(&mut rng);
                    r.max(-0.5)
                })
                .collect()
        })
        .collect()
}

/// Positive weights summing to one, skewed like a cap-weighted index.
pub fn index_weights(n_assets: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let u = Uniform::new(0.0, 1.0).unwrap();
    let raw: Vec<f64> = (0..n_assets)
        .map(|_| (2.0 * u.sample(&mut rng) as f64).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Index return series of a fixed-weight portfolio.
pub fn mix(returns: &Matrix, weights: &[f64]) -> Vec<f64> {
    returns
        .iter()
        .map(|row| row.iter().zip(weights).map(|(r, w)| r * w).sum())
        .collect()
}

fn labels(n_periods: usize, n_assets: usize) -> (Vec<String>, Vec<String>) {
    let start = chrono::NaiveDate::from_ymd_opt(2021, 6, 1).unwrap();
    let dates = (0..n_periods)
        .map(|t| {
            (start + chrono::Days::new(t as u64 + 1))
                .format("%Y-%m-%d")
                .to_string()
        })
        .collect();
    let ids = (0..n_assets).map(|i| format!("S{i:03}")).collect();
    (dates, ids)
}

/// Panel whose index is the given fixed-weight portfolio of its assets.
pub fn panel_with_index(returns: Matrix, index_weights: &[f64]) -> ReturnsPanel {
    let n_assets = returns.first().map_or(index_weights.len(), Vec::len);
    let (dates, ids) = labels(returns.len(), n_assets);
    let index = mix(&returns, index_weights);
    ReturnsPanel::new(dates, ids, returns, index).expect("synthetic panel is valid")
}

/// Factor-model panel tracked against a cap-weighted index of all assets.
pub fn synthetic_panel(n_assets: usize, n_periods: usize, seed: u64) -> ReturnsPanel {
    let returns = factor_returns(n_assets, n_periods, seed);
    panel_with_index(returns, &index_weights(n_assets, seed))
}

/// Compounds returns from a base price of 100 into a price panel.
pub fn to_prices(panel: &ReturnsPanel, index_name: &str) -> PricePanel {
    let n = panel.n_assets();
    let start = chrono::NaiveDate::parse_from_str(&panel.dates()[0], "%Y-%m-%d")
        .map(|d| (d - chrono::Days::new(1)).format("%Y-%m-%d").to_string())
        .unwrap_or_else(|_| "base".into());
    let mut dates = vec![start];
    dates.extend(panel.dates().iter().cloned());
    let mut prices = vec![vec![100.0; n]];
    let mut index = vec![100.0];
    for (row, r_index) in panel.returns().iter().zip(panel.index_returns()) {
        let last = prices.last().unwrap();
        let next = last.iter().zip(row).map(|(p, r)| p * (1.0 + r)).collect();
        prices.push(next);
        index.push(index.last().unwrap() * (1.0 + r_index));
    }
    PricePanel {
        dates,
        asset_ids: panel.asset_ids().to_vec(),
        prices,
        index_name: Some(index_name.to_owned()),
        index: Some(index),
    }
}

/// Writes a wide price CSV readable by [`crate::market_data::parse_prices`].
pub fn write_prices_csv(prices: &PricePanel, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_owned()];
    header.extend(prices.asset_ids.iter().cloned());
    if let Some(name) = &prices.index_name {
        header.push(name.clone());
    }
    w.write_record(&header)?;
    for (t, date) in prices.dates.iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend(prices.prices[t].iter().map(|p| format!("{p:?}")));
        if let Some(ix) = &prices.index {
            rec.push(format!("{:?}", ix[t]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
