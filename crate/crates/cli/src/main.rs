//! `sparse-bbp`: run one campaign per invocation.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};
use sparse_bbp::config::merge_overrides;
use sparse_bbp::theory::Prediction;
use sparse_bbp::{run_campaign, CampaignConfig, CampaignResult, Error, Experiment, Result};

/// Default parent directory for campaigns run without `--out`.
const DEFAULT_RUNS: &str = "sparse-bbp-runs";

#[derive(Parser, Debug)]
#[command(
    name = "sparse-bbp",
    version,
    about = "Monte Carlo campaigns and closed-form predictions for the doubly sparse spiked Wigner model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Top eigenpairs, overlaps and deviations per trial
    Simulate(Flags),
    /// Paired planted/null trials classified by λ₁ > 2 + ε
    Detect(Flags),
    /// Self- and cross-overlaps for distinct signal strengths
    Recover(Flags),
    /// Block overlaps for repeated signal strengths
    Subspace(Flags),
    /// Full spectrum of one instance against the semicircle law
    Esd(Flags),
    /// Diagonal resolvent entries against m(z)
    Locallaw(Flags),
    /// Spike support sizes against the concentration window
    Support(Flags),
    /// Scaled spike-matrix norm against its concentration bound
    Norm(Flags),
    /// Single-spike recovery over a grid of signal strengths
    Sweep(Flags),
    /// Print predicted outlier location and overlap for each θ (JSON lines)
    Theory(Flags),
}

impl Command {
    fn split(self) -> (Experiment, Flags) {
        match self {
            Command::Simulate(f) => (Experiment::Simulate, f),
            Command::Detect(f) => (Experiment::Detect, f),
            Command::Recover(f) => (Experiment::Recover, f),
            Command::Subspace(f) => (Experiment::Subspace, f),
            Command::Esd(f) => (Experiment::Esd, f),
            Command::Locallaw(f) => (Experiment::LocalLaw, f),
            Command::Support(f) => (Experiment::Support, f),
            Command::Norm(f) => (Experiment::Norm, f),
            Command::Sweep(f) => (Experiment::Sweep, f),
            Command::Theory(f) => (Experiment::Theory, f),
        }
    }
}

/// Every flag overrides the key of the same name in `--config`.
#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat JSON configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Matrix dimension
    #[arg(long)]
    n: Option<usize>,
    /// Spike sparsity: one probability, or a comma-separated list (one per spike)
    #[arg(long)]
    p: Option<String>,
    /// Noise sparsity
    #[arg(long)]
    q: Option<f64>,
    /// Number of spikes (defaults to the number of thetas)
    #[arg(long)]
    r: Option<usize>,
    /// Signal strengths, non-increasing
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    thetas: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Detection margin above the bulk edge
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, env = "SPARSE_BBP_WORKERS")]
    workers: Option<usize>,
    /// Output directory (default: sparse-bbp-runs/<experiment>-<config hash>)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of top eigenpairs
    #[arg(long)]
    k: Option<usize>,
    /// Lanczos residual tolerance
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Keep eigenvectors in records.jsonl
    #[arg(long)]
    store_vectors: bool,
    #[arg(long, value_name = "PATH")]
    tolerance_file: Option<PathBuf>,
    /// Sweep grid of signal strengths
    #[arg(long, value_delimiter = ',')]
    theta_grid: Option<Vec<f64>>,
    /// Spectral parameter for the local-law check
    #[arg(long, allow_negative_numbers = true)]
    z: Option<f64>,
    /// Number of sampled diagonal resolvent entries
    #[arg(long)]
    indices: Option<usize>,
    /// Histogram bins for the spectral density
    #[arg(long)]
    bins: Option<usize>,
    /// gaussian | rademacher
    #[arg(long)]
    spike_prior: Option<String>,
    /// gaussian | rademacher
    #[arg(long)]
    wigner_prior: Option<String>,
}

fn number(x: f64) -> Result<Value> {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| Error::Config(vec![format!("{x} is not a finite number")]))
}

fn numbers(xs: &[f64]) -> Result<Value> {
    Ok(Value::Array(xs.iter().map(|&x| number(x)).collect::<Result<_>>()?))
}

fn parse_p(s: &str) -> Result<Value> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(vec![format!("--p: cannot parse {s:?} as a probability or list")]))?;
    if parts.len() == 1 {
        number(parts[0])
    } else {
        numbers(&parts)
    }
}

impl Flags {
    fn overrides(&self) -> Result<BTreeMap<String, Value>> {
        let mut o = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            o.insert(k.to_string(), v);
        };
        if let Some(v) = self.n {
            put("n", v.into());
        }
        if let Some(v) = &self.p {
            put("p", parse_p(v)?);
        }
        if let Some(v) = self.q {
            put("q", number(v)?);
        }
        if let Some(v) = self.r {
            put("r", v.into());
        }
        if let Some(v) = &self.thetas {
            put("thetas", numbers(v)?);
        }
        if let Some(v) = self.trials {
            put("trials", v.into());
        }
        if let Some(v) = self.seed {
            put("seed", v.into());
        }
        if let Some(v) = self.epsilon {
            put("epsilon", number(v)?);
        }
        if let Some(v) = self.workers {
            put("workers", v.into());
        }
        if let Some(v) = &self.out {
            put("output_dir", v.to_string_lossy().into_owned().into());
        }
        if let Some(v) = self.k {
            put("k", v.into());
        }
        if let Some(v) = self.tol {
            put("tol", number(v)?);
        }
        if let Some(v) = self.max_iter {
            put("max_iter", v.into());
        }
        if self.store_vectors {
            put("store_vectors", true.into());
        }
        if let Some(v) = &self.tolerance_file {
            put("tolerance_file", v.to_string_lossy().into_owned().into());
        }
        if let Some(v) = &self.theta_grid {
            put("theta_grid", numbers(v)?);
        }
        if let Some(v) = self.z {
            put("z", number(v)?);
        }
        if let Some(v) = self.indices {
            put("indices", v.into());
        }
        if let Some(v) = self.bins {
            put("bins", v.into());
        }
        if let Some(v) = &self.spike_prior {
            put("spike_prior", v.to_lowercase().into());
        }
        if let Some(v) = &self.wigner_prior {
            put("wigner_prior", v.to_lowercase().into());
        }
        Ok(o)
    }
}

fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::Config(vec![format!("{}: configuration must be a JSON object", path.display())])),
        Err(e) => Err(Error::Config(vec![format!("{}: {e}", path.display())])),
    }
}

/// File values, then flags, then the subcommand's experiment.
fn resolve(experiment: Experiment, flags: &Flags) -> Result<CampaignConfig> {
    let mut map = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => Map::new(),
    };
    let mut overrides = flags.overrides()?;
    overrides.insert("experiment".into(), experiment.name().into());
    merge_overrides(&mut map, overrides);
    let mut cfg = CampaignConfig::from_value(&Value::Object(map))?;
    if cfg.output_dir.is_none() && experiment != Experiment::Theory {
        let hash = cfg.config_hash();
        cfg.output_dir = Some(PathBuf::from(DEFAULT_RUNS).join(format!("{}-{}", experiment.name(), &hash[..12])));
    }
    Ok(cfg)
}

fn theory(cfg: &CampaignConfig) -> Result<()> {
    for &theta in &cfg.model.thetas {
        println!("{}", serde_json::to_string(&Prediction::for_theta(theta)?)?);
    }
    Ok(())
}

fn report(res: &CampaignResult, dir: &Path) {
    for (key, value) in &res.summary {
        eprintln!("  {key} = {value}");
    }
    for c in &res.checks {
        eprintln!(
            "  check {}: {} {} (limit {})",
            c.name,
            c.observed,
            if c.passed { "ok" } else { "EXCEEDED" },
            c.limit
        );
    }
    eprintln!("sparse-bbp: wrote {}", dir.display());
}

fn run(experiment: Experiment, flags: &Flags) -> Result<()> {
    let cfg = resolve(experiment, flags)?;
    if experiment == Experiment::Theory {
        return theory(&cfg);
    }
    for w in cfg.validate_regime()? {
        eprintln!("warning: {w}");
    }
    let dir = cfg.output_dir.clone().expect("resolved above");
    eprintln!(
        "sparse-bbp: {} n={} r={} trials={} workers={} -> {}",
        experiment.name(),
        cfg.model.n,
        cfg.model.r,
        cfg.trials,
        cfg.workers,
        dir.display()
    );
    let res = run_campaign(&cfg)?;
    report(&res, &dir);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_solver_failure() {
        2
    } else if e.is_io() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; usage errors are
            // configuration errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (experiment, flags) = cli.command.split();
    match run(experiment, &flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(exit_code(&Error::Config(vec!["x".into()])), 1);
        assert_eq!(exit_code(&Error::TiedSignals(vec![3.0, 3.0])), 1);
        assert_eq!(
            exit_code(&Error::NonConvergence {
                iterations: 1,
                residuals: vec![1.0]
            }),
            2
        );
        assert_eq!(
            exit_code(&Error::CgNonConvergence {
                index: 0,
                iterations: 3,
                residual: 0.1
            }),
            2
        );
        let io = Error::Io(std::io::Error::other("disk"));
        assert_eq!(exit_code(&io), 3);
        let wrapped = Error::Trial {
            trial: 4,
            source: Box::new(Error::NonConvergence {
                iterations: 1,
                residuals: vec![],
            }),
        };
        assert_eq!(exit_code(&wrapped), 2);
    }

    #[test]
    fn p_accepts_scalar_or_list() {
        assert_eq!(parse_p("0.5").unwrap(), serde_json::json!(0.5));
        assert_eq!(parse_p("0.1,0.2").unwrap(), serde_json::json!([0.1, 0.2]));
        assert!(parse_p("half").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"n":1000,"p":0.5,"q":0.05,"r":1,"thetas":[3],"experiment":"recover","trials":5,"seed":1}"#,
        )
        .unwrap();
        let flags = Flags {
            config: Some(path),
            trials: Some(10),
            ..Flags::default()
        };
        let cfg = resolve(Experiment::Recover, &flags).unwrap();
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.model.seed, 1);
        assert!(cfg.output_dir.unwrap().starts_with(DEFAULT_RUNS));
    }
}
