mod common;

use approx::assert_abs_diff_eq;
use common::*;
use idxtrack::market_data::{covariances, parse_prices, to_returns};
use idxtrack::metrics::{cumulative_log_returns, cumulative_tracking_error, portfolio_returns, tracking_error};
use idxtrack::synth;
use nalgebra::DMatrix;

#[test]
fn rolling_covariances_are_psd() {
    let panel = synth::synthetic_panel(8, 80, 3);
    let set = covariances(&panel, 15).unwrap();
    assert_eq!(set.rolling.len(), 80 - 15 + 1);
    for cov in set.rolling.iter().chain([&set.full]) {
        let n = cov.len();
        let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
        assert_eq!(m, m.transpose());
        let scale = m.diagonal().max();
        let min_eig = m.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-12 * scale, "eigenvalue {min_eig}");
    }
}

#[test]
fn returns_compound_back_to_prices() {
    let panel = synth::synthetic_panel(4, 30, 5);
    let prices = synth::to_prices(&panel, "INDEX");
    let back = to_returns(&prices).unwrap();
    for (a, b) in back.returns().iter().flatten().zip(panel.returns().iter().flatten()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
    let growth: f64 = panel.index_returns().iter().map(|r| (1.0 + r).ln()).sum();
    let last = *cumulative_log_returns(panel.index_returns()).unwrap().last().unwrap();
    assert_abs_diff_eq!(growth, last, epsilon = 1e-12);
    let idx = prices.index.as_ref().unwrap();
    assert_abs_diff_eq!((idx[30] / idx[0]).ln(), last, epsilon = 1e-10);
}

#[test]
fn shuffled_csv_rows_parse_identically() {
    let sorted = "date,A,B,INDEX\n2024-01-01,10,20,100\n2024-01-02,11,19,101\n2024-01-03,12,21,103\n";
    let shuffled = "date,A,B,INDEX\n2024-01-03,12,21,103\n2024-01-01,10,20,100\n2024-01-02,11,19,101\n";
    let a = parse_prices(sorted.as_bytes(), "INDEX").unwrap();
    let b = parse_prices(shuffled.as_bytes(), "INDEX").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_rows(), 3);
}

#[test]
fn zero_error_iff_perfect_tracking() {
    let mut r = rng(21);
    let rows = random_returns(&mut r, 4, 25);
    let p = constructed_panel(rows, &[1, 0, 2, 0], 3);
    let exact = [1.0 / 3.0, 0.0, 2.0 / 3.0, 0.0];
    assert!(tracking_error(&exact, &p) < 1e-30);
    assert!(cumulative_tracking_error(&exact, &p).unwrap() < 1e-26);
    let off = [1.0 / 3.0, 0.01, 2.0 / 3.0 - 0.01, 0.0];
    assert!(tracking_error(&off, &p) > 0.0);
    assert!(cumulative_tracking_error(&off, &p).unwrap() > 0.0);
}

#[test]
fn portfolio_returns_are_linear() {
    let mut r = rng(22);
    let p = random_panel(&mut r, 3, 10);
    let a = portfolio_returns(&[0.2, 0.3, 0.5], &p);
    let b = portfolio_returns(&[0.4, 0.6, 1.0], &p);
    for (x, y) in a.iter().zip(&b) {
        assert_abs_diff_eq!(2.0 * x, y, epsilon = 1e-15);
    }
}
