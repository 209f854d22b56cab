//! `crl`: train contrastive learners, evaluate their generalization bounds,
//! sweep depth/width/k, and run the verification suites.

pub mod config;
pub mod experiment;
pub mod record;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde_json::{json, Value};

use crl_core::capacity::maurey_sparsify;
use crl_core::net::NetworkParams;
use crl_core::verify::Suite;

use config::{parse_override, ExperimentConfig};
use experiment::{Axis, Split};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    Usage(String),
    /// A verification check failed; exit code 1.
    Verification(String),
    /// Anything else that went wrong while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Usage(_) => ExitCode::from(2),
            Self::Verification(_) | Self::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Verification(m) => write!(f, "verification failed: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crl_core::Error> for CliError {
    fn from(e: crl_core::Error) -> Self {
        match e {
            crl_core::Error::InvalidInput(m) => Self::Usage(m),
            other => Self::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "crl", version, about = "Contrastive representation learning bounds toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write the model file and per-iteration risk CSV.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "model.crln")]
        model: PathBuf,
        #[arg(long, default_value = "train_log.csv")]
        log: PathBuf,
    },
    /// Evaluate every bound for a trained model.
    Bounds {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// Seed the model was trained with; selects the matching tuples.
        #[arg(long)]
        seed: Option<u64>,
        /// Report JSON destination; stdout when omitted.
        #[arg(long)]
        json: Option<PathBuf>,
        /// CSV destination for the report rows.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep one axis, training a network per value and seed.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run verification suites; exits 1 if any check fails.
    Verify {
        /// A suite name or "all".
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sparsify a vector onto the scaled l1-ball lattice and check the certificate.
    MaureyCheck {
        /// Comma-separated entries.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        vector: Vec<f64>,
        /// Radius; defaults to the vector's l1 norm.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        max_tries: usize,
    },
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set data.sigma=0.3`; repeatable.
    #[arg(long = "set", value_name = "FIELD=JSON")]
    pub set: Vec<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut overrides = self.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
        let mut flag = |name: &str, v: Option<Value>| {
            if let Some(v) = v {
                overrides.push((name.to_string(), v));
            }
        };
        flag("n", self.n.map(Value::from));
        flag("k", self.k.map(Value::from));
        flag("width", self.width.map(Value::from));
        flag("depth", self.depth.map(Value::from));
        flag("max_iters", self.max_iters.map(Value::from));
        flag("delta", self.delta.map(Value::from));
        flag("seeds", self.seeds.clone().map(Value::from));
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_train(cfg: &ExperimentConfig, seed: u64, model: &Path, log: &Path) -> Result<(), CliError> {
    let split = Split::load(cfg)?;
    let (train_ds, _) = experiment::datasets(cfg, &split, seed)?;
    let (params, tlog) = experiment::train_network(cfg, &train_ds, seed)?;
    params.save(model)?;
    let mut w = csv::Writer::from_writer(create(log)?);
    w.write_record(["iteration", "risk"])?;
    for (i, r) in tlog.risks.iter().enumerate() {
        w.write_record([i.to_string(), r.to_string()])?;
    }
    w.flush()?;
    eprintln!(
        "trained depth {} width {}: {} steps, final risk {}, target {}",
        params.depth(),
        cfg.width,
        tlog.steps,
        tlog.final_risk,
        if tlog.reached_target { "reached" } else { "not reached" }
    );
    Ok(())
}

fn cmd_bounds(cfg: &ExperimentConfig, model: &Path, seed: u64, json_out: Option<&Path>, csv_out: Option<&Path>) -> Result<(), CliError> {
    let params = NetworkParams::load(model)?;
    let split = Split::load(cfg)?;
    let (train_ds, test_ds) = experiment::datasets(cfg, &split, seed)?;
    let ev = experiment::evaluate(cfg, &params, &train_ds, &test_ds)?;
    let mut out = output(json_out)?;
    serde_json::to_writer_pretty(&mut out, &ev.report)?;
    writeln!(out)?;
    out.flush()?;
    if let Some(p) = csv_out {
        let rows = experiment::rows("depth", params.depth(), cfg, &params, seed, &ev);
        record::write_rows(create(p)?, &rows)?;
    }
    Ok(())
}

fn cmd_verify(suite: &str, seed: u64) -> Result<(), CliError> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::from_str(suite).map_err(|e| CliError::Usage(e.to_string()))?]
    };
    let mut failed = Vec::new();
    for s in suites {
        let report = s.run(seed);
        println!("{report}");
        if !report.passed() {
            failed.push(s.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("suites {} failed", failed.join(", "))))
    }
}

fn cmd_maurey(vector: &[f64], beta: Option<f64>, k: usize, seed: u64, max_tries: usize) -> Result<(), CliError> {
    let beta = beta.unwrap_or_else(|| vector.iter().map(|x| x.abs()).sum());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let bound = beta * beta / k as f64;
    match maurey_sparsify(vector, beta, k, &mut rng, max_tries) {
        Ok(r) => {
            let doc = json!({
                "approx": r.approx,
                "counts": r.counts,
                "certificate": r.certificate,
                "bound": bound,
                "tries": r.tries,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
        Err(crl_core::Error::RetryExhausted { tries }) => Err(CliError::Verification(format!(
            "no draw within {tries} tries met the certificate {bound}"
        ))),
        Err(e) => Err(e.into()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { cfg, seed, model, log } => {
            let c = cfg.load()?;
            cmd_train(&c, seed.unwrap_or(c.seeds[0]), &model, &log)
        }
        Command::Bounds {
            cfg,
            model,
            seed,
            json,
            csv,
        } => {
            let c = cfg.load()?;
            cmd_bounds(&c, &model, seed.unwrap_or(c.seeds[0]), json.as_deref(), csv.as_deref())
        }
        Command::Ablate { cfg, axis, values, out } => {
            let c = cfg.load()?;
            let values = if values.is_empty() { axis.default_values() } else { values };
            let rows = experiment::ablate(&c, axis, &values)?;
            record::write_rows(output(out.as_deref())?, &rows)
        }
        Command::Verify { suite, seed } => cmd_verify(&suite, seed),
        Command::MaureyCheck {
            vector,
            beta,
            k,
            seed,
            max_tries,
        } => cmd_maurey(&vector, beta, k, seed, max_tries),
    }
}
