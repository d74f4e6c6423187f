//! One function per subcommand. Each reads the data, solves, scores and
//! writes its artifacts into the output directory.

use std::path::Path;

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use super::config::{Command, RunConfig};
use super::output::{fmt_cte, fmt_sig, opt, write_atomic, Table};
use super::CliError;
use crate::encoding::{build_scheme, EncodingScheme};
use crate::market_data::{covariances, load_prices, to_returns, CovarianceSet, DataError, ReturnsPanel};
use crate::metrics::{cumulative_log_returns, portfolio_returns, EnhancementScore, TrackingReport};
use crate::objectives::{build_cardinality_markowitz, build_enhanced, build_tracking, Mode, ObjectiveConfig};
use crate::qubo::QuboModel;
use crate::solver::{decode_samples, filter_rank, solve_sa, AnnealConfig, Ranked, Schedule, Solution};
use crate::synth;

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Track => track(cfg),
        Command::Enhance => enhance(cfg),
        Command::Sweep => sweep(cfg),
        Command::Markowitz => markowitz(cfg),
        Command::Report => report(cfg),
        Command::Synth => synth_prices(cfg),
    }
}

fn write(cfg: &RunConfig, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = cfg.out.join(name);
    write_path(&path, bytes)
}

fn write_path(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_panel(cfg: &RunConfig) -> Result<ReturnsPanel, CliError> {
    let prices = load_prices(cfg.data_path(), &cfg.index_col)?;
    let panel = to_returns(&prices)?;
    info!(
        "loaded {} assets over {} return periods",
        panel.n_assets(),
        panel.n_periods()
    );
    Ok(panel)
}

fn load_covariances(cfg: &RunConfig, panel: &ReturnsPanel) -> Result<CovarianceSet, CliError> {
    let window = cfg.window.min(panel.n_periods());
    if window < cfg.window {
        warn!("window {} exceeds the {} available periods; using {window}", cfg.window, panel.n_periods());
    }
    Ok(covariances(panel, window)?)
}

fn scheme_for(cfg: &RunConfig, c: u32, k: u32, n: usize) -> Result<EncodingScheme, CliError> {
    Ok(build_scheme(k, c, cfg.max_holding, n)?)
}

fn objective(cfg: &RunConfig, mode: Mode, lambda: f64) -> ObjectiveConfig {
    ObjectiveConfig {
        mode,
        gamma: cfg.gamma,
        lambda,
        tracking_weight: cfg.penalty_tracking,
        budget_weight: cfg.penalty_budget,
        cardinality_weight: cfg.penalty_card,
        indicator_weight: cfg.penalty_indicator,
        auto_scale: cfg.auto_scale,
    }
}

fn anneal(cfg: &RunConfig) -> AnnealConfig {
    AnnealConfig {
        n_samples: cfg.samples,
        sweeps: cfg.sweeps,
        schedule: Schedule::Auto,
        seed: cfg.seed,
    }
}

fn solve(cfg: &RunConfig, model: &QuboModel, scheme: &EncodingScheme) -> Result<Ranked, CliError> {
    info!("annealing {} variables: {} samples x {} sweeps", model.n_vars(), cfg.samples, cfg.sweeps);
    let samples = solve_sa(model, &anneal(cfg))?;
    Ok(filter_rank(decode_samples(samples, scheme)?))
}

fn dump_model(cfg: &RunConfig, model: &QuboModel) -> Result<(), CliError> {
    if let Some(path) = &cfg.dump_qubo {
        write_path(path, model.to_dump().as_bytes())?;
    }
    Ok(())
}

fn meta(cfg: &RunConfig, scheme: &EncodingScheme) -> serde_json::Value {
    json!({
        "data": cfg.data.as_ref().map(|p| p.display().to_string()),
        "index_col": cfg.index_col,
        "resolution": scheme.resolution(),
        "cardinality": scheme.cardinality(),
        "max_holding": scheme.max_holding_fraction(),
        "k_max": scheme.k_max(),
        "bits_per_asset": scheme.bits_per_asset(),
        "n_vars": scheme.n_vars(),
        "gamma": cfg.gamma,
        "penalty_tracking": cfg.penalty_tracking,
        "penalty_budget": cfg.penalty_budget,
        "penalty_card": cfg.penalty_card,
        "penalty_indicator": cfg.penalty_indicator,
        "auto_scale_penalties": cfg.auto_scale,
        "samples": cfg.samples,
        "sweeps": cfg.sweeps,
        "seed": cfg.seed,
        "window": cfg.window,
    })
}

#[derive(Serialize)]
struct Entry<'a> {
    #[serde(flatten)]
    solution: &'a Solution,
    report: &'a TrackingReport,
}

/// A ranked run with one report per sample, feasible samples first.
struct Scored {
    ranked: Ranked,
    reports: Vec<TrackingReport>,
}

impl Scored {
    fn new(ranked: Ranked, panel: &ReturnsPanel, covset: Option<&CovarianceSet>) -> Self {
        let reports = ranked
            .feasible
            .iter()
            .chain(&ranked.infeasible)
            .map(|s| TrackingReport::evaluate(&s.weights, panel, covset, ranked.success_rate))
            .collect();
        Self { ranked, reports }
    }

    fn all(&self) -> impl Iterator<Item = (&Solution, &TrackingReport)> {
        self.ranked
            .feasible
            .iter()
            .chain(&self.ranked.infeasible)
            .zip(&self.reports)
    }

    fn feasible(&self) -> impl Iterator<Item = (usize, &Solution, &TrackingReport)> {
        self.all().take(self.ranked.feasible.len()).enumerate().map(|(i, (s, r))| (i, s, r))
    }

    /// Feasible position with the lowest ε_CTE; energy order breaks ties.
    fn best_by_cte(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, _, r) in self.feasible() {
            let cte = r.cte.unwrap_or(f64::INFINITY);
            if best.is_none_or(|(_, b)| cte < b) {
                best = Some((i, cte));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Feasible position with the highest enhancement score.
    fn best_by_score(&self) -> Option<usize> {
        let key = |r: &TrackingReport| r.enhancement_score.map_or(f64::NEG_INFINITY, EnhancementScore::as_f64);
        let mut best: Option<(usize, f64)> = None;
        for (i, _, r) in self.feasible() {
            let k = key(r);
            if best.is_none_or(|(_, b)| k > b) {
                best = Some((i, k));
            }
        }
        best.map(|(i, _)| i)
    }

    fn mean_mre(&self) -> Option<f64> {
        let values: Vec<f64> = self.feasible().filter_map(|(_, _, r)| r.mre).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    fn entries(&self) -> Vec<Entry<'_>> {
        self.all().map(|(solution, report)| Entry { solution, report }).collect()
    }

    fn sample_index(&self, pos: Option<usize>) -> Option<usize> {
        pos.map(|p| self.ranked.feasible[p].sample_index)
    }

    fn violation_summary(&self) -> String {
        let counts = self.ranked.violation_counts();
        let list: Vec<String> = counts.iter().map(|(t, c)| format!("{t}={c}")).collect();
        format!(
            "{}/{} samples feasible; violations: {}",
            self.ranked.feasible.len(),
            self.ranked.n_samples(),
            if list.is_empty() { "none".into() } else { list.join(", ") }
        )
    }

    fn json(&self, meta: serde_json::Value) -> serde_json::Value {
        let counts: serde_json::Map<String, serde_json::Value> = self
            .ranked
            .violation_counts()
            .into_iter()
            .map(|(t, c)| (t.to_owned(), json!(c)))
            .collect();
        json!({
            "meta": meta,
            "success_rate": self.ranked.success_rate,
            "best_by_energy": self.sample_index(self.ranked.best().map(|_| 0)),
            "best_by_cte": self.sample_index(self.best_by_cte()),
            "mean_mre": self.mean_mre(),
            "violation_counts": counts,
            "samples": self.entries(),
        })
    }
}

fn to_json(value: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn report_row(table: &mut Table, c: u32, k: u32, r: Option<&TrackingReport>) {
    let sig = |x| fmt_sig(x, 5);
    table.row([
        c.to_string(),
        k.to_string(),
        opt(r.and_then(|r| r.cte), fmt_cte),
        opt(r.and_then(|r| r.mre), sig),
        opt(r.and_then(|r| r.mdre), sig),
        opt(r.and_then(|r| r.vol_error), sig),
    ]);
}

const REPORT_HEADER: [&str; 6] = ["C", "K", "e_cte", "mre", "mdre", "vol_error"];

fn weights_csv(panel: &ReturnsPanel, s: &Solution) -> Vec<u8> {
    let mut t = Table::new(&["asset", "weight", "units", "selected"]);
    for (i, id) in panel.asset_ids().iter().enumerate() {
        t.row([
            id.clone(),
            fmt_sig(s.weights[i], 5),
            s.units[i].to_string(),
            (s.selected[i] as u8).to_string(),
        ]);
    }
    t.into_bytes()
}

fn cumrets_csv(panel: &ReturnsPanel, s: &Solution) -> Result<Vec<u8>, CliError> {
    let port = portfolio_returns(&s.weights, panel);
    let undefined = |what: &str| CliError::NoFeasible(format!("{what} cumulative log return undefined"));
    let idx = cumulative_log_returns(panel.index_returns()).map_err(|_| undefined("index"))?;
    let pc = cumulative_log_returns(&port).map_err(|_| undefined("portfolio"))?;
    let mut t = Table::new(&["date", "index", "portfolio"]);
    for ((d, a), b) in panel.dates().iter().zip(&idx).zip(&pc) {
        t.row([d.clone(), format!("{a:.10}"), format!("{b:.10}")]);
    }
    Ok(t.into_bytes())
}

fn success_txt(r: &Ranked) -> Vec<u8> {
    format!(
        "success_rate {} ({}/{})\n",
        fmt_sig(r.success_rate, 5),
        r.feasible.len(),
        r.n_samples()
    )
    .into_bytes()
}

fn track(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    let scheme = scheme_for(cfg, cfg.cardinality, cfg.resolution, panel.n_assets())?;
    let model = build_tracking(&panel, &scheme, &objective(cfg, Mode::Tracking, 0.0))?;
    dump_model(cfg, &model)?;
    let scored = Scored::new(solve(cfg, &model, &scheme)?, &panel, None);

    write(cfg, "solutions.json", &to_json(&scored.json(meta(cfg, &scheme))))?;
    write(cfg, "success.txt", &success_txt(&scored.ranked))?;
    let Some(best) = scored.ranked.best() else {
        return Err(CliError::NoFeasible(scored.violation_summary()));
    };

    let mut table = Table::new(&REPORT_HEADER);
    report_row(&mut table, cfg.cardinality, cfg.resolution, Some(&scored.reports[0]));
    write(cfg, "report.csv", &table.into_bytes())?;
    let by_cte = scored.best_by_cte().expect("a feasible sample exists");
    let mut table = Table::new(&REPORT_HEADER);
    report_row(&mut table, cfg.cardinality, cfg.resolution, Some(&scored.reports[by_cte]));
    write(cfg, "report_best_cte.csv", &table.into_bytes())?;
    write(cfg, "weights.csv", &weights_csv(&panel, best))?;
    write(cfg, "cumrets.csv", &cumrets_csv(&panel, best)?)?;
    info!("{}", scored.violation_summary());
    Ok(())
}

const ENHANCED_HEADER: [&str; 6] = ["lambda", "e_cte", "vol_error", "mdrse", "correlation", "score"];

fn enhanced_row(table: &mut Table, lam: &str, r: Option<&TrackingReport>) {
    let sig = |x| fmt_sig(x, 5);
    table.row([
        lam.to_owned(),
        opt(r.and_then(|r| r.cte), fmt_cte),
        opt(r.and_then(|r| r.vol_error), sig),
        opt(r.and_then(|r| r.mdrse), sig),
        opt(r.and_then(|r| r.correlation), sig),
        r.and_then(|r| r.enhancement_score).map(score_text).unwrap_or_default(),
    ]);
}

/// One row per λ in `enhanced.csv` (lowest energy) and in
/// `enhanced_best_score.csv` (highest enhancement score).
fn enhance(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    let covset = load_covariances(cfg, &panel)?;
    let scheme = scheme_for(cfg, cfg.cardinality, cfg.resolution, panel.n_assets())?;

    let mut by_energy = Table::new(&ENHANCED_HEADER);
    let mut by_score = Table::new(&ENHANCED_HEADER);
    let mut scatter = Table::new(&["lambda", "sample_index", "e_cte", "mdrse", "feasible"]);
    let mut holdings = Table::new(&["lambda", "asset", "weight", "units", "selected"]);
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for &lambda in &cfg.lambda_grid {
        let model = build_enhanced(&panel, &scheme, &covset, &objective(cfg, Mode::Enhanced, lambda))?;
        let scored = Scored::new(solve(cfg, &model, &scheme)?, &panel, Some(&covset));
        let lam = lambda.to_string();
        for (s, r) in scored.all() {
            scatter.row([
                lam.clone(),
                s.sample_index.to_string(),
                opt(r.cte, fmt_cte),
                opt(r.mdrse, |x| fmt_sig(x, 5)),
                (s.is_feasible() as u8).to_string(),
            ]);
        }
        let best = scored.ranked.best().map(|_| 0);
        let pick = scored.best_by_score();
        enhanced_row(&mut by_energy, &lam, best.map(|p| &scored.reports[p]));
        enhanced_row(&mut by_score, &lam, pick.map(|p| &scored.reports[p]));
        match scored.ranked.best() {
            Some(s) => {
                for (i, id) in panel.asset_ids().iter().enumerate() {
                    holdings.row([
                        lam.clone(),
                        id.clone(),
                        fmt_sig(s.weights[i], 5),
                        s.units[i].to_string(),
                        (s.selected[i] as u8).to_string(),
                    ]);
                }
            }
            None => {
                warn!("lambda {lam}: {}", scored.violation_summary());
                missing.push(format!("lambda {lam}: {}", scored.violation_summary()));
            }
        }
        let mut run = scored.json(json!({ "lambda": lambda }));
        run["best_by_score"] = json!(scored.sample_index(pick));
        runs.push(run);
    }

    let doc = json!({ "meta": meta(cfg, &scheme), "runs": runs });
    write(cfg, "solutions.json", &to_json(&doc))?;
    write(cfg, "enhanced.csv", &by_energy.into_bytes())?;
    write(cfg, "enhanced_best_score.csv", &by_score.into_bytes())?;
    write(cfg, "sharpe_vs_tracking.csv", &scatter.into_bytes())?;
    write(cfg, "weights.csv", &holdings.into_bytes())?;
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::NoFeasible(missing.join("; ")))
    }
}

fn score_text(s: EnhancementScore) -> String {
    match s {
        EnhancementScore::Finite(x) => fmt_sig(x, 5),
        EnhancementScore::Infinite => "inf".into(),
    }
}

fn skip_reason(c: u32, k: u32, n: usize, max_holding: f64) -> Option<String> {
    if k < c {
        return Some("K/C < 1".into());
    }
    match build_scheme(k, c, max_holding, n) {
        Ok(_) => None,
        Err(e) => Some(e.to_string()),
    }
}

fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    let n = panel.n_assets();
    let header = ["C", "K", "n_vars", "success_rate", "e_cte", "mre", "mdre", "vol_error"];
    let mut summary = Table::new(&header);
    let mut boxplot = Table::new(&["C", "K", "sample_index", "e_cte", "feasible"]);
    let mut skipped = String::new();
    let mut runs = Vec::new();
    for &(c, k) in &cfg.grid {
        if let Some(reason) = skip_reason(c, k, n, cfg.max_holding) {
            warn!("skipping C={c} K={k}: {reason}");
            skipped.push_str(&format!("C={c} K={k}: {reason}\n"));
            continue;
        }
        let scheme = scheme_for(cfg, c, k, n)?;
        info!("C={c} K={k}: {} variables", scheme.n_vars());
        let model = build_tracking(&panel, &scheme, &objective(cfg, Mode::Tracking, 0.0))?;
        let scored = Scored::new(solve(cfg, &model, &scheme)?, &panel, None);
        let mut by_index: Vec<(&Solution, &TrackingReport)> = scored.all().collect();
        by_index.sort_by_key(|(s, _)| s.sample_index);
        for (s, r) in by_index {
            boxplot.row([
                c.to_string(),
                k.to_string(),
                s.sample_index.to_string(),
                opt(r.cte, fmt_cte),
                (s.is_feasible() as u8).to_string(),
            ]);
        }
        let best = scored.ranked.best().map(|_| &scored.reports[0]);
        let sig = |x| fmt_sig(x, 5);
        summary.row([
            c.to_string(),
            k.to_string(),
            scheme.n_vars().to_string(),
            sig(scored.ranked.success_rate),
            opt(best.and_then(|r| r.cte), fmt_cte),
            opt(best.and_then(|r| r.mre), sig),
            opt(best.and_then(|r| r.mdre), sig),
            opt(best.and_then(|r| r.vol_error), sig),
        ]);
        if best.is_none() {
            warn!("C={c} K={k}: {}", scored.violation_summary());
        }
        runs.push(scored.json(meta(cfg, &scheme)));
    }
    write(cfg, "summary.csv", &summary.into_bytes())?;
    write(cfg, "boxplot.csv", &boxplot.into_bytes())?;
    write(cfg, "skipped.txt", skipped.as_bytes())?;
    write(cfg, "solutions.json", &to_json(&json!({ "runs": runs })))?;
    Ok(())
}

fn markowitz(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    let scheme = scheme_for(cfg, cfg.cardinality, cfg.resolution, panel.n_assets())?;
    let model = build_cardinality_markowitz(&panel, &scheme, &objective(cfg, Mode::Markowitz, 0.0))?;
    dump_model(cfg, &model)?;
    let scored = Scored::new(solve(cfg, &model, &scheme)?, &panel, None);
    write(cfg, "solutions.json", &to_json(&scored.json(meta(cfg, &scheme))))?;
    write(cfg, "success.txt", &success_txt(&scored.ranked))?;
    let Some(best) = scored.ranked.best() else {
        return Err(CliError::NoFeasible(scored.violation_summary()));
    };
    write(cfg, "weights.csv", &weights_csv(&panel, best))?;
    Ok(())
}

/// Reads `asset,weight` rows; assets absent from the file get weight 0.
fn read_weights(path: &Path, panel: &ReturnsPanel) -> Result<Vec<f64>, CliError> {
    let bad = |row: u64, message: String| DataError::Csv { row, message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(1, format!("missing `{name}` column")))
    };
    let (asset_col, weight_col) = (col("asset")?, col("weight")?);
    let mut weights = vec![0.0; panel.n_assets()];
    for (i, record) in reader.records().enumerate() {
        let row = i as u64 + 2;
        let record = record.map_err(|e| bad(row, e.to_string()))?;
        let id = record.get(asset_col).unwrap_or("").trim();
        let slot = panel
            .asset_ids()
            .iter()
            .position(|a| a == id)
            .ok_or_else(|| bad(row, format!("unknown asset `{id}`")))?;
        let raw = record.get(weight_col).unwrap_or("").trim();
        weights[slot] = raw
            .parse::<f64>()
            .ok()
            .filter(|w| w.is_finite())
            .ok_or_else(|| bad(row, format!("bad weight `{raw}`")))?;
    }
    Ok(weights)
}

fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = load_panel(cfg)?;
    let covset = load_covariances(cfg, &panel)?;
    let weights = read_weights(cfg.weights.as_deref().expect("validated"), &panel)?;
    let report = TrackingReport::evaluate(&weights, &panel, Some(&covset), 1.0);
    let mut value = serde_json::to_value(&report).expect("serializable");
    if let Some(map) = value.as_object_mut() {
        map.remove("success_rate");
        map.insert("weight_sum".into(), json!(weights.iter().sum::<f64>()));
    }
    write(cfg, "report.json", &to_json(&value))
}

fn synth_prices(cfg: &RunConfig) -> Result<(), CliError> {
    let panel = synth::synthetic_panel(cfg.assets, cfg.periods, cfg.seed);
    let prices = synth::to_prices(&panel, &cfg.index_col);
    let mut bytes = Vec::new();
    synth::write_prices_csv(&prices, &mut bytes).map_err(|e| CliError::Io {
        path: cfg.out.join("prices.csv").display().to_string(),
        source: std::io::Error::other(e),
    })?;
    write(cfg, "prices.csv", &bytes)
}
