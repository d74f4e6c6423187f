//! Cardinality-constrained index tracking as a QUBO.
//!
//! Pipeline: load prices ([`market_data`]), pick a bounded binary encoding
//! for the holdings ([`encoding`]), compile a tracking, enhanced-tracking or
//! mean-variance objective into a [`qubo::QuboModel`] ([`objectives`]),
//! sample it ([`solver`]) and score the decoded portfolios ([`metrics`]).

pub mod cli;
pub mod encoding;
pub mod market_data;
pub mod metrics;
pub mod objectives;
pub mod qubo;
pub mod solver;
pub mod synth;

pub use encoding::{build_scheme, decode, EncodingScheme};
pub use market_data::{covariances, load_prices, to_returns, CovarianceSet, ReturnsPanel};
pub use metrics::TrackingReport;
pub use objectives::{build_enhanced, build_markowitz, build_tracking, Mode, ObjectiveConfig};
pub use qubo::QuboModel;
pub use solver::{filter_rank, solve_exhaustive, solve_sa, AnnealConfig, Solution};
