use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::loss::{discriminator_loss, generator_loss, LossBreakdown, LossWeights};
use super::metrics::{evaluate, EvalMetrics};
use super::{latent_batch, Architecture, Checkpoint, Discriminator, Generator, GeneratorKind};
use crate::autodiff::{rmsprop_step, Rng, Tape};
use crate::error::{Error, Result};
use crate::families::{Family, Task};
use crate::qstate::{DensityCandidate, FidelityConvention};

pub const METRICS_HEADER: &str =
    "step,d_loss,g_loss,l_adv,l_trace,l_psd,l_herm,l_task,l_div,accuracy,cross_fidelity,fid,offfamily_residual";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: GeneratorKind,
    pub family: Family,
    pub task: Task,
    pub train_size: usize,
    pub batch: usize,
    /// One step is one discriminator update followed by one generator update.
    pub steps: usize,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub fidelity: FidelityConvention,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: GeneratorKind::Cholesky,
            family: Family::BellDiagonal,
            task: Task::Teleportation,
            train_size: 500,
            batch: 512,
            steps: 10_000,
            lr: 1e-5,
            decay: 0.99,
            eps: 1e-8,
            seed: 0,
            eval_every: 500,
            eval_samples: 1000,
            fidelity: FidelityConvention::Squared,
            arch: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be ≥ 1".into()));
        }
        if self.eval_samples < 2 {
            return Err(Error::Config("eval_samples must be ≥ 2".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be ≥ 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.decay) || !(self.eps > 0.0) {
            return Err(Error::Config("decay must lie in [0, 1) and eps be positive".into()));
        }
        if !(0.0..1.0).contains(&self.arch.dropout) || self.arch.hidden == 0 {
            return Err(Error::Config("invalid architecture".into()));
        }
        Ok(())
    }
}

/// One metric-log row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub losses: LossBreakdown,
    pub eval: EvalMetrics,
}

impl Metrics {
    pub fn csv_row(&self) -> String {
        let l = &self.losses;
        let e = &self.eval;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.d_loss,
            self.g_loss,
            l.l_adv,
            l.l_trace,
            l.l_psd,
            l.l_herm,
            l.l_task,
            l.l_div,
            e.accuracy,
            e.cross_fidelity,
            e.fid,
            e.offfamily_residual
        )
    }
}

pub struct TrainOutcome {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub log: Vec<Metrics>,
    pub rng: Rng,
}

fn abort(step: usize, what: &str, losses: &LossBreakdown, d_loss: f64, g: &Generator, d: &Discriminator) -> Error {
    let norms: Vec<String> = g
        .params
        .norms()
        .into_iter()
        .chain(d.params.norms())
        .map(|(n, v)| format!("{n}={v:.6e}"))
        .collect();
    Error::NumericAbort(format!(
        "non-finite {what} at step {step}: d_loss={d_loss}, l_adv={}, l_trace={}, l_psd={}, l_herm={}, l_task={}, l_div={}; parameter norms: {}",
        losses.l_adv,
        losses.l_trace,
        losses.l_psd,
        losses.l_herm,
        losses.l_task,
        losses.l_div,
        norms.join(" ")
    ))
}

/// Stream for evaluation at `step`, independent of the training stream.
fn eval_rng(seed: u64, step: usize) -> Rng {
    Rng::seed_from_u64(seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Sink {
    dir: PathBuf,
    csv: fs::File,
}

impl Sink {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.csv");
        let mut csv = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(csv, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(Sink { dir: dir.to_path_buf(), csv })
    }

    fn row(&mut self, m: &Metrics) -> Result<()> {
        writeln!(self.csv, "{}", m.csv_row()).map_err(|e| Error::io(self.dir.join("metrics.csv"), e))
    }

    fn checkpoint(&self, ckpt: &Checkpoint) -> Result<()> {
        ckpt.write(&self.dir.join(checkpoint_file_name(ckpt.step)))
    }
}

/// File name of the checkpoint written at `step`.
pub fn checkpoint_file_name(step: usize) -> String {
    format!("checkpoint-{step:06}.json")
}

/// Hyperparameters recorded in every checkpoint.
pub fn hyperparameters(config: &TrainConfig, weights: &LossWeights) -> serde_json::Value {
    serde_json::json!({
        "config": config,
        "weights": weights,
        "arch": config.arch,
        "optimizer": {"name": "rmsprop", "lr": config.lr, "decay": config.decay, "eps": config.eps},
    })
}

/// Adversarial training.
///
/// Per step the random stream is consumed in a fixed order: real-batch
/// indices, the discriminator's latent batch, its dropout masks, then a fresh
/// latent batch for the generator update. Evaluation draws from a separate
/// stream derived from the seed and step. When `out_dir` is given, metric
/// rows go to `metrics.csv` and a checkpoint is written at every evaluation.
pub fn train(
    config: &TrainConfig,
    weights: &LossWeights,
    dataset: &[DensityCandidate],
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    weights.validate()?;
    if dataset.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut generator = Generator::new(config.kind, config.arch, &mut rng)?;
    let mut discriminator = Discriminator::new(config.arch, &mut rng)?;
    let mut sink = out_dir.map(Sink::open).transpose()?;
    let hyper = hyperparameters(config, weights);
    let flats: Vec<[f64; 32]> = dataset.iter().map(|s| s.flatten()).collect();
    let b = config.batch;
    let mut log = Vec::new();

    for step in 1..=config.steps {
        let mut losses = LossBreakdown::default();

        // Discriminator update on real and generated states.
        let real: Vec<f64> = (0..b).flat_map(|_| flats[rng.index(flats.len())]).collect();
        let z = latent_batch(b, &mut rng);
        let mut tape = Tape::new();
        let d_loss = (|| -> Result<f64> {
            let real = tape.leaf(b, 32, real, false)?;
            let zv = tape.constant(&z);
            let fake = generator.forward_on(&mut tape, zv, false)?.rho;
            let x = tape.concat_rows(real, fake)?;
            let scores = discriminator.forward_on(&mut tape, x, true, &mut rng, true)?;
            let rs = tape.slice_rows(scores, 0, b)?;
            let fs = tape.slice_rows(scores, b, 2 * b)?;
            let loss = discriminator_loss(&mut tape, rs, fs)?;
            let v = tape.scalar(loss);
            if !v.is_finite() {
                return Err(Error::NonFinite("discriminator loss"));
            }
            tape.backward(loss, &mut discriminator.params)?;
            Ok(v)
        })()
        .map_err(|e| match e {
            Error::NonFinite(w) => abort(step, w, &losses, f64::NAN, &generator, &discriminator),
            other => other,
        })?;
        rmsprop_step(&mut discriminator.params, config.lr, config.decay, config.eps);

        // Generator update against the dropout-free discriminator.
        let z = latent_batch(b, &mut rng);
        let mut tape = Tape::new();
        let g_loss = (|| -> Result<f64> {
            let zv = tape.constant(&z);
            let gen = generator.forward_on(&mut tape, zv, true)?;
            let scores = discriminator.forward_on(&mut tape, gen.rho, false, &mut rng, false)?;
            let vars = generator_loss(&mut tape, gen, config.kind, scores, weights, config.family, config.task)?;
            losses = vars.breakdown(&tape);
            let v = tape.scalar(vars.total);
            if !v.is_finite() {
                return Err(Error::NonFinite("generator loss"));
            }
            tape.backward(vars.total, &mut generator.params)?;
            Ok(v)
        })()
        .map_err(|e| match e {
            Error::NonFinite(w) => abort(step, w, &losses, d_loss, &generator, &discriminator),
            other => other,
        })?;
        rmsprop_step(&mut generator.params, config.lr, config.decay, config.eps);

        let last = step == config.steps;
        if step % config.eval_every == 0 || last {
            let generated = generator.sample(config.eval_samples, &mut eval_rng(config.seed, step))?;
            let eval = evaluate(&generated, dataset, config.family, config.task, config.fidelity)?;
            let row = Metrics {
                step,
                d_loss,
                g_loss,
                losses,
                eval,
            };
            if let Some(s) = sink.as_mut() {
                s.row(&row)?;
                let ckpt = Checkpoint::capture(
                    &generator,
                    &discriminator,
                    config.family,
                    config.task,
                    step,
                    &rng,
                    hyper.clone(),
                );
                s.checkpoint(&ckpt)?;
            }
            log.push(row);
        }
    }
    Ok(TrainOutcome {
        generator,
        discriminator,
        log,
        rng,
    })
}
