//! One training run and its bound evaluation.

use crl_core::bounds::{bound_report, BoundMode, BoundReport, ReportInputs};
use crl_core::data::{build_dataset_with, train_test_split, LatentClassModel, TupleDataset};
use crl_core::loss::empirical_risk;
use crl_core::net::{init, train, NetworkParams, TrainLog};

use crate::config::{stream_seed, ExperimentConfig, ProfileSamples};
use crate::record::Row;
use crate::CliError;

/// Train and test halves of the latent-class model.
pub struct Split {
    pub train: LatentClassModel,
    pub test: LatentClassModel,
}

impl Split {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let model = cfg.load_model()?;
        let (train, test) = train_test_split(&model, cfg.split, cfg.split_seed)?;
        Ok(Self { train, test })
    }
}

/// Tuple datasets for one seed; the test set has the train set's `n` and `k`.
pub fn datasets(cfg: &ExperimentConfig, split: &Split, seed: u64) -> Result<(TupleDataset, TupleDataset), CliError> {
    let train = build_dataset_with(&split.train, cfg.n, cfg.k, cfg.sampling(), stream_seed(seed, 1))?;
    let test = build_dataset_with(&split.test, cfg.n, cfg.k, cfg.sampling(), stream_seed(seed, 2))?;
    Ok((train, test))
}

pub fn train_network(cfg: &ExperimentConfig, train_ds: &TupleDataset, seed: u64) -> Result<(NetworkParams, TrainLog), CliError> {
    let widths = cfg.widths(train_ds.dim());
    let mut params = init(&widths, cfg.activation, cfg.init, cfg.reference, stream_seed(seed, 3))?;
    let log = train(&mut params, train_ds, &cfg.train_config(seed))?;
    Ok((params, log))
}

pub struct Evaluation {
    pub report: BoundReport,
    pub train_risk: f64,
    pub test_risk: f64,
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    params: &NetworkParams,
    train_ds: &TupleDataset,
    test_ds: &TupleDataset,
) -> Result<Evaluation, CliError> {
    if params.input_dim() != train_ds.dim() {
        return Err(CliError::Usage(format!(
            "model input dimension {} does not match the data dimension {}",
            params.input_dim(),
            train_ds.dim()
        )));
    }
    let extra = match cfg.profile_samples {
        ProfileSamples::Train => None,
        ProfileSamples::TrainTest => Some(test_ds),
    };
    let mut report = bound_report(&ReportInputs {
        params,
        train: train_ds,
        extra,
        loss: cfg.loss,
        delta: cfg.delta,
        chain: cfg.chain,
        thresholds: cfg.thresholds.clone(),
        spectral_tol: cfg.spectral_tol,
    })?;
    report.entries.retain(|e| cfg.modes.contains(&e.mode));
    let train_risk = empirical_risk(params, train_ds, &cfg.loss)?;
    let test_risk = empirical_risk(params, test_ds, &cfg.loss)?;
    report.gap_estimate = Some(test_risk - train_risk);
    Ok(Evaluation {
        report,
        train_risk,
        test_risk,
    })
}

/// One CSV row per report entry.
pub fn rows(axis: &str, axis_value: usize, cfg: &ExperimentConfig, params: &NetworkParams, seed: u64, ev: &Evaluation) -> Vec<Row> {
    ev.report
        .entries
        .iter()
        .map(|e| Row {
            axis: axis.to_string(),
            axis_value,
            k: e.params.k,
            n: e.params.n,
            depth: params.depth(),
            width: cfg.width,
            bound: e.bound.clone(),
            mode: e.mode,
            value: e.value,
            train_risk: ev.train_risk,
            test_risk: ev.test_risk,
            gap: ev.test_risk - ev.train_risk,
            eta: e.params.eta,
            delta: e.params.delta,
            seed,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Depth,
    Width,
    K,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Depth => "depth",
            Self::Width => "width",
            Self::K => "k",
        }
    }

    pub fn default_values(&self) -> Vec<usize> {
        match self {
            Self::Depth => vec![2, 4, 6, 8, 10],
            Self::Width => vec![32, 64, 96, 128],
            Self::K => vec![10, 64],
        }
    }

    pub fn apply(&self, cfg: &ExperimentConfig, value: usize) -> Result<ExperimentConfig, CliError> {
        let mut c = cfg.clone();
        match self {
            Self::Depth => c.depth = value,
            Self::Width => c.width = value,
            Self::K => c.k = value,
        }
        c.validate()?;
        Ok(c)
    }
}

/// Rows for every axis value and seed, in that order.
pub fn ablate(cfg: &ExperimentConfig, axis: Axis, values: &[usize]) -> Result<Vec<Row>, CliError> {
    let split = Split::load(cfg)?;
    let mut out = Vec::new();
    for &v in values {
        let c = axis.apply(cfg, v)?;
        for &seed in &c.seeds {
            let (train_ds, test_ds) = datasets(&c, &split, seed)?;
            let (params, _) = train_network(&c, &train_ds, seed)?;
            let ev = evaluate(&c, &params, &train_ds, &test_ds)?;
            out.extend(rows(axis.name(), v, &c, &params, seed, &ev));
        }
    }
    Ok(out)
}

/// Number of rows a sweep emits per setting and seed.
pub fn rows_per_run(modes: &[BoundMode]) -> usize {
    modes
        .iter()
        .map(|m| match m {
            BoundMode::Truncated => 6,
            BoundMode::Full => 4,
        })
        .sum()
}
