//! Command-line flags, the key=value config file, and the resolved
//! [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Cardinality-constrained index tracking.
    Track,
    /// Enhanced tracking over a grid of risk ratios.
    Enhance,
    /// Tracking over a grid of (cardinality, resolution) pairs.
    Sweep,
    /// Cardinality-constrained mean-variance portfolio.
    Markowitz,
    /// Score an existing weights file against the data.
    Report,
    /// Write a synthetic price CSV.
    Synth,
}

/// Build cardinality-constrained tracking portfolios by QUBO annealing.
///
/// Every option may also be given in a `key=value` config file (keys are
/// the long flag names, with `-` or `_`); flags override the file.
#[derive(Debug, Parser)]
#[command(name = "idxtrack", version)]
pub struct Args {
    pub command: Command,

    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Wide price CSV: date,<tickers...>,<index>.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Name of the index column.
    #[arg(long)]
    pub index_col: Option<String>,
    /// Resolution K (investment units).
    #[arg(long = "resolution", short = 'K')]
    pub resolution: Option<u32>,
    /// Cardinality C (assets held).
    #[arg(long = "cardinality", short = 'C')]
    pub cardinality: Option<u32>,
    /// Largest fraction of the portfolio in one asset.
    #[arg(long)]
    pub max_holding: Option<f64>,
    /// Risk aversion γ.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Risk ratio λ for a single enhanced run.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated risk ratios for `enhance`.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Comma-separated C:K pairs for `sweep`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Annealing samples per run.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sweeps per annealing sample.
    #[arg(long)]
    pub sweeps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (for `synth`, the CSV is written inside it).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rolling covariance window in periods.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub penalty_tracking: Option<f64>,
    #[arg(long)]
    pub penalty_budget: Option<f64>,
    #[arg(long)]
    pub penalty_card: Option<f64>,
    #[arg(long)]
    pub penalty_indicator: Option<f64>,
    /// Set every constraint weight to twice the largest objective coefficient.
    #[arg(long)]
    pub auto_scale_penalties: bool,
    /// Also write the compiled model in text form.
    #[arg(long)]
    pub dump_qubo: Option<PathBuf>,
    /// Weights CSV (asset,weight) for `report`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Number of assets for `synth`.
    #[arg(long)]
    pub assets: Option<usize>,
    /// Number of return periods for `synth`.
    #[arg(long)]
    pub periods: Option<usize>,
    /// Log progress to stderr (repeat for per-sample lines).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0, 0.05, 0.1, 0.2, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub data: Option<PathBuf>,
    pub index_col: String,
    pub resolution: u32,
    pub cardinality: u32,
    pub max_holding: f64,
    pub gamma: f64,
    pub lambda_grid: Vec<f64>,
    pub grid: Vec<(u32, u32)>,
    pub samples: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub window: usize,
    pub penalty_tracking: f64,
    pub penalty_budget: f64,
    pub penalty_card: f64,
    pub penalty_indicator: f64,
    pub auto_scale: bool,
    pub dump_qubo: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub assets: usize,
    pub periods: usize,
}

/// Parses a `key=value` file. Blank lines and `#` comments are ignored.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key=value", no + 1))
        })?;
        map.insert(key.trim().replace('-', "_"), value.trim().to_owned());
    }
    Ok(map)
}

struct Layered {
    file: BTreeMap<String, String>,
}

impl Layered {
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{raw}`"))),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "data", "index_col", "resolution", "cardinality", "max_holding", "gamma", "lambda",
    "lambda_grid", "grid", "samples", "sweeps", "seed", "out", "window", "penalty_tracking",
    "penalty_budget", "penalty_card", "penalty_indicator", "auto_scale_penalties", "dump_qubo",
    "weights", "assets", "periods",
];

pub fn parse_f64_list(raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Usage(format!("not a number in list: `{s}`")))
        })
        .collect()
}

/// `C:K` pairs separated by commas.
pub fn parse_grid(raw: &str) -> Result<Vec<(u32, u32)>, CliError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (c, k) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("grid entry `{pair}` is not C:K")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|_| CliError::Usage(format!("grid entry `{pair}` is not C:K")))
            };
            Ok((parse(c)?, parse(k)?))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(args: Args) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        if let Some(unknown) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("unknown config key `{unknown}`")));
        }
        let l = Layered { file };

        let lambda_grid = match l.get(args.lambda_grid, "lambda_grid")? {
            Some(raw) => parse_f64_list(&raw)?,
            None => match l.get(args.lambda, "lambda")? {
                Some(v) => vec![v],
                None => DEFAULT_LAMBDA_GRID.to_vec(),
            },
        };
        let grid = match l.get(args.grid, "grid")? {
            Some(raw) => parse_grid(&raw)?,
            None => Vec::new(),
        };
        let default_samples = if args.command == Command::Enhance { 10 } else { 20 };
        let auto_scale = args.auto_scale_penalties
            || l.get::<bool>(None, "auto_scale_penalties")?.unwrap_or(false);

        let cfg = RunConfig {
            command: args.command,
            data: l.get(args.data, "data")?,
            index_col: l.get(args.index_col, "index_col")?.unwrap_or_else(|| "INDEX".into()),
            resolution: l.get(args.resolution, "resolution")?.unwrap_or(31),
            cardinality: l.get(args.cardinality, "cardinality")?.unwrap_or(5),
            max_holding: l.get(args.max_holding, "max_holding")?.unwrap_or(1.0),
            gamma: l.get(args.gamma, "gamma")?.unwrap_or(1.0),
            lambda_grid,
            grid,
            samples: l.get(args.samples, "samples")?.unwrap_or(default_samples),
            sweeps: l.get(args.sweeps, "sweeps")?.unwrap_or(5000),
            seed: l.get(args.seed, "seed")?.unwrap_or(0),
            out: l.get(args.out, "out")?.unwrap_or_else(|| PathBuf::from("out")),
            window: l.get(args.window, "window")?.unwrap_or(90),
            penalty_tracking: l.get(args.penalty_tracking, "penalty_tracking")?.unwrap_or(1.0),
            penalty_budget: l.get(args.penalty_budget, "penalty_budget")?.unwrap_or(1.0),
            penalty_card: l.get(args.penalty_card, "penalty_card")?.unwrap_or(1.0),
            penalty_indicator: l.get(args.penalty_indicator, "penalty_indicator")?.unwrap_or(1.0),
            auto_scale,
            dump_qubo: l.get(args.dump_qubo, "dump_qubo")?,
            weights: l.get(args.weights, "weights")?,
            assets: l.get(args.assets, "assets")?.unwrap_or(20),
            periods: l.get(args.periods, "periods")?.unwrap_or(250),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every numeric field before any data is touched.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        if self.command != Command::Synth && self.data.is_none() {
            return bad("--data is required".into());
        }
        if self.resolution == 0 {
            return bad("resolution K must be positive".into());
        }
        if self.cardinality == 0 {
            return bad("cardinality C must be positive".into());
        }
        if !(self.max_holding > 0.0 && self.max_holding <= 1.0) {
            return bad(format!("max holding {} must lie in (0, 1]", self.max_holding));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma {} must be nonnegative", self.gamma));
        }
        if self.command == Command::Enhance {
            if self.lambda_grid.is_empty() {
                return bad("lambda grid is empty".into());
            }
            if let Some(l) = self.lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return bad(format!("lambda {l} must lie in [0, 1]"));
            }
        }
        if self.command == Command::Sweep && self.grid.is_empty() {
            return bad("sweep needs a non-empty --grid of C:K pairs".into());
        }
        if self.command == Command::Report && self.weights.is_none() {
            return bad("report needs --weights".into());
        }
        if self.samples == 0 || self.sweeps == 0 {
            return bad("samples and sweeps must be positive".into());
        }
        if self.window < 2 {
            return bad(format!("window {} must be at least 2", self.window));
        }
        for (name, v) in [
            ("penalty-tracking", self.penalty_tracking),
            ("penalty-budget", self.penalty_budget),
            ("penalty-card", self.penalty_card),
            ("penalty-indicator", self.penalty_indicator),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} {v} must be nonnegative"));
            }
        }
        if self.command == Command::Synth && (self.assets == 0 || self.periods < 2) {
            return bad("synth needs at least 1 asset and 2 periods".into());
        }
        Ok(())
    }

    pub fn data_path(&self) -> &Path {
        self.data.as_deref().expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Args {
        Args::try_parse_from(std::iter::once("idxtrack").chain(list.iter().copied())).unwrap()
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(args(&["track", "--data", "x.csv"])).unwrap();
        assert_eq!(c.resolution, 31);
        assert_eq!(c.samples, 20);
        assert_eq!(c.index_col, "INDEX");
        let c = RunConfig::resolve(args(&["enhance", "--data", "x.csv"])).unwrap();
        assert_eq!(c.samples, 10);
        assert_eq!(c.lambda_grid, DEFAULT_LAMBDA_GRID.to_vec());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# demo\ndata = a.csv\nresolution=63\ncardinality = 7\nauto-scale-penalties=true\n",
        )
        .unwrap();
        let c = RunConfig::resolve(args(&[
            "track",
            "--config",
            path.to_str().unwrap(),
            "-K",
            "127",
        ]))
        .unwrap();
        assert_eq!(c.resolution, 127);
        assert_eq!(c.cardinality, 7);
        assert!(c.auto_scale);
        assert_eq!(c.data, Some(PathBuf::from("a.csv")));
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "resolutoin=3\n").unwrap();
        let err = RunConfig::resolve(args(&["track", "--config", path.to_str().unwrap()]));
        assert!(matches!(err, Err(CliError::Usage(_))));
    }

    #[test]
    fn lambda_range_checked() {
        let err = RunConfig::resolve(args(&["enhance", "--data", "x", "--lambda-grid", "0,1.5"]));
        assert!(matches!(err, Err(CliError::Validation(_))));
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("25:31, 50:63").unwrap(), vec![(25, 31), (50, 63)]);
        assert!(parse_grid("25-31").is_err());
        assert_eq!(parse_f64_list("0,0.5").unwrap(), vec![0.0, 0.5]);
        let err = RunConfig::resolve(args(&["sweep", "--data", "x"]));
        assert!(matches!(err, Err(CliError::Validation(_))));
    }
}
