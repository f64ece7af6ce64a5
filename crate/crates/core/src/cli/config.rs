use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::families::{Family, Task};
use crate::gan::{Architecture, GeneratorKind, LossWeights, TrainConfig};
use crate::qstate::FidelityConvention;

/// Training-set sizes accepted by `train_size`.
pub const TRAIN_SIZES: [usize; 3] = [500, 1000, 2000];

/// Splits flat `key = value` text. Blank lines and `#` comments are skipped;
/// duplicate keys and lines without `=` are errors.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", no + 1)));
        }
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {raw:?}: {e}")))
}

fn list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|s| value(key, s.trim())).collect()
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Flat run configuration for `train`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub task: Task,
    pub generator: GeneratorKind,
    pub train_size: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub fidelity: FidelityConvention,
    pub residual: bool,
    pub lambda_psd: f64,
    pub lambda_trace: f64,
    pub lambda_herm: f64,
    pub lambda_task: f64,
    pub lambda_div: f64,
    pub div_margin: f64,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let w = LossWeights::for_task(t.task);
        RunConfig {
            family: t.family,
            task: t.task,
            generator: t.kind,
            train_size: t.train_size,
            steps: t.steps,
            batch: t.batch,
            lr: t.lr,
            decay: t.decay,
            eps: t.eps,
            seed: t.seed,
            eval_every: t.eval_every,
            eval_samples: t.eval_samples,
            fidelity: t.fidelity,
            residual: t.arch.residual,
            lambda_psd: w.lambda_psd,
            lambda_trace: w.lambda_trace,
            lambda_herm: w.lambda_herm,
            lambda_task: w.lambda_task_base,
            lambda_div: w.lambda_div,
            div_margin: w.div_margin,
            dataset: PathBuf::from("dataset.jsonl"),
            out_dir: PathBuf::from("runs/train"),
        }
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 22] = [
        "family",
        "task",
        "generator",
        "train_size",
        "steps",
        "batch",
        "lr",
        "decay",
        "eps",
        "seed",
        "eval_every",
        "eval_samples",
        "fidelity",
        "residual",
        "lambda_psd",
        "lambda_trace",
        "lambda_herm",
        "lambda_task",
        "lambda_div",
        "div_margin",
        "dataset",
        "out_dir",
    ];

    /// Defaults overridden by the keys present in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (k, v) in parse_flat(text)? {
            let v = v.as_str();
            match k.as_str() {
                "family" => c.family = value(&k, v)?,
                "task" => c.task = value(&k, v)?,
                "generator" => c.generator = value(&k, v)?,
                "train_size" => c.train_size = value(&k, v)?,
                "steps" => c.steps = value(&k, v)?,
                "batch" => c.batch = value(&k, v)?,
                "lr" => c.lr = value(&k, v)?,
                "decay" => c.decay = value(&k, v)?,
                "eps" => c.eps = value(&k, v)?,
                "seed" => c.seed = value(&k, v)?,
                "eval_every" => c.eval_every = value(&k, v)?,
                "eval_samples" => c.eval_samples = value(&k, v)?,
                "fidelity" => c.fidelity = value(&k, v)?,
                "residual" => c.residual = value(&k, v)?,
                "lambda_psd" => c.lambda_psd = value(&k, v)?,
                "lambda_trace" => c.lambda_trace = value(&k, v)?,
                "lambda_herm" => c.lambda_herm = value(&k, v)?,
                "lambda_task" => c.lambda_task = value(&k, v)?,
                "lambda_div" => c.lambda_div = value(&k, v)?,
                "div_margin" => c.div_margin = value(&k, v)?,
                "dataset" => c.dataset = PathBuf::from(v),
                "out_dir" => c.out_dir = PathBuf::from(v),
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !TRAIN_SIZES.contains(&self.train_size) {
            return Err(Error::Config(format!(
                "train_size must be one of {TRAIN_SIZES:?}, got {}",
                self.train_size
            )));
        }
        self.train_config().validate()?;
        self.weights().validate()
    }

    /// Every key with its resolved value, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let vals: [String; 22] = [
            self.family.to_string(),
            self.task.to_string(),
            self.generator.to_string(),
            self.train_size.to_string(),
            self.steps.to_string(),
            self.batch.to_string(),
            self.lr.to_string(),
            self.decay.to_string(),
            self.eps.to_string(),
            self.seed.to_string(),
            self.eval_every.to_string(),
            self.eval_samples.to_string(),
            match self.fidelity {
                FidelityConvention::Squared => "squared".into(),
                FidelityConvention::Root => "root".into(),
            },
            self.residual.to_string(),
            self.lambda_psd.to_string(),
            self.lambda_trace.to_string(),
            self.lambda_herm.to_string(),
            self.lambda_task.to_string(),
            self.lambda_div.to_string(),
            self.div_margin.to_string(),
            self.dataset.display().to_string(),
            self.out_dir.display().to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(vals)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            kind: self.generator,
            family: self.family,
            task: self.task,
            train_size: self.train_size,
            batch: self.batch,
            steps: self.steps,
            lr: self.lr,
            decay: self.decay,
            eps: self.eps,
            seed: self.seed,
            eval_every: self.eval_every,
            eval_samples: self.eval_samples,
            fidelity: self.fidelity,
            arch: Architecture {
                residual: self.residual,
                ..Architecture::default()
            },
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_psd: self.lambda_psd,
            lambda_trace: self.lambda_trace,
            lambda_herm: self.lambda_herm,
            lambda_task_base: self.lambda_task,
            lambda_div: self.lambda_div,
            m_task: self.task.m_task(),
            div_margin: self.div_margin,
        }
    }
}

pub const BENCH_KEYS: [&str; 8] = [
    "dims",
    "batch_sizes",
    "check_batch",
    "repeats",
    "thread_cap",
    "include_ppt_up_to",
    "seed",
    "hidden",
];

/// Flat `key = value` bench configuration; lists are comma-separated.
pub fn parse_bench_config(text: &str) -> Result<BenchConfig> {
    let mut c = BenchConfig::default();
    for (k, v) in parse_flat(text)? {
        let v = v.as_str();
        match k.as_str() {
            "dims" => c.dims = list(&k, v)?,
            "batch_sizes" => c.batch_sizes = list(&k, v)?,
            "check_batch" => c.check_batch = value(&k, v)?,
            "repeats" => c.repeats = value(&k, v)?,
            "thread_cap" => c.thread_cap = value(&k, v)?,
            "include_ppt_up_to" => c.include_ppt_up_to = value(&k, v)?,
            "seed" => c.seed = value(&k, v)?,
            "hidden" => c.hidden = value(&k, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn bench_config_text(c: &BenchConfig) -> String {
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let vals = [
        join(&c.dims),
        join(&c.batch_sizes),
        c.check_batch.to_string(),
        c.repeats.to_string(),
        c.thread_cap.to_string(),
        c.include_ppt_up_to.to_string(),
        c.seed.to_string(),
        c.hidden.to_string(),
    ];
    BENCH_KEYS
        .iter()
        .zip(vals)
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}
