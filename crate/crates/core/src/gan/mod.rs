//! Generators, discriminator, physics-informed losses, training and metrics.

mod checkpoint;
mod loss;
mod metrics;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, forward_on, init_params, normal_fill, LayerSpec, ParamStore, Rng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::qstate::DensityCandidate;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use loss::{
    discriminator_loss, discriminator_loss_value, generator_loss, task_hinge, GenLossVars, LossBreakdown, LossWeights,
    LOG_FLOOR, WERNER_BROADCAST_THETA,
};
pub use metrics::{evaluate, fid, self_fidelity_baseline, EvalMetrics, FID_RIDGE};
pub use train::{checkpoint_file_name, hyperparameters, train, Metrics, TrainConfig, TrainOutcome, METRICS_HEADER};

/// Width of the latent vector.
pub const LATENT_DIM: usize = 100;

/// The three output parameterizations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Cholesky,
    Ldl,
    Direct,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [GeneratorKind::Cholesky, GeneratorKind::Ldl, GeneratorKind::Direct];

    /// Number of reals the head emits for 4×4 states.
    pub fn head_width(self) -> usize {
        match self {
            GeneratorKind::Cholesky | GeneratorKind::Ldl => 16,
            GeneratorKind::Direct => 32,
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Cholesky => "cholesky",
            GeneratorKind::Ldl => "ldl",
            GeneratorKind::Direct => "direct",
        })
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cholesky" => Ok(GeneratorKind::Cholesky),
            "ldl" => Ok(GeneratorKind::Ldl),
            "direct" => Ok(GeneratorKind::Direct),
            other => Err(Error::Config(format!("unknown generator kind {other:?}"))),
        }
    }
}

/// Network shape shared by generator and discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: usize,
    pub leaky_slope: f64,
    pub dropout: f64,
    /// Skip connection across the two equal-width generator layers.
    pub residual: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: 256,
            leaky_slope: 0.2,
            dropout: 0.3,
            residual: true,
        }
    }
}

impl Architecture {
    fn trunk_in(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Affine { inputs: LATENT_DIM, outputs: self.hidden },
            LayerSpec::LayerNorm { size: self.hidden },
            LayerSpec::LeakyRelu { slope: self.leaky_slope },
        ]
    }

    fn trunk_hidden(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Affine { inputs: self.hidden, outputs: self.hidden },
            LayerSpec::LayerNorm { size: self.hidden },
            LayerSpec::LeakyRelu { slope: self.leaky_slope },
        ]
    }

    fn head(&self, kind: GeneratorKind) -> Vec<LayerSpec> {
        vec![LayerSpec::Affine { inputs: self.hidden, outputs: kind.head_width() }]
    }

    /// `32 → 256 → 512 → 256 → 128 → 1`, LeakyReLU and dropout after every
    /// hidden affine, LayerNorm after the first.
    pub fn discriminator(&self) -> Vec<LayerSpec> {
        let s = self.leaky_slope;
        let r = self.dropout;
        let mut net = vec![
            LayerSpec::Affine { inputs: 32, outputs: 256 },
            LayerSpec::LeakyRelu { slope: s },
            LayerSpec::LayerNorm { size: 256 },
            LayerSpec::Dropout { rate: r },
        ];
        for (i, o) in [(256, 512), (512, 256), (256, 128)] {
            net.push(LayerSpec::Affine { inputs: i, outputs: o });
            net.push(LayerSpec::LeakyRelu { slope: s });
            net.push(LayerSpec::Dropout { rate: r });
        }
        net.push(LayerSpec::Affine { inputs: 128, outputs: 1 });
        net.push(LayerSpec::Sigmoid);
        net
    }
}

const GEN_IN: &str = "gen.in";
const GEN_HIDDEN: &str = "gen.hidden";
const GEN_HEAD: &str = "gen.head";
const DISC: &str = "disc";

/// A generator: latent `(B, 100)` → states `(B, 32)`.
#[derive(Clone, Debug)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub arch: Architecture,
    pub params: ParamStore,
}

/// Nodes produced by one generator pass.
#[derive(Clone, Copy, Debug)]
pub struct GeneratedVars {
    /// Raw head output.
    pub head: Var,
    /// Flattened candidates.
    pub rho: Var,
}

impl Generator {
    pub fn new(kind: GeneratorKind, arch: Architecture, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        init_params(&mut params, GEN_IN, &arch.trunk_in(), rng)?;
        init_params(&mut params, GEN_HIDDEN, &arch.trunk_hidden(), rng)?;
        init_params(&mut params, GEN_HEAD, &arch.head(kind), rng)?;
        Ok(Generator { kind, arch, params })
    }

    /// Records the generator on `tape`; `track` decides whether its
    /// parameters receive gradients.
    pub fn forward_on(&self, tape: &mut Tape, z: Var, track: bool) -> Result<GeneratedVars> {
        if tape.shape(z).1 != LATENT_DIM {
            return Err(Error::DimensionMismatch(format!(
                "latent batch must have {LATENT_DIM} columns, got {}",
                tape.shape(z).1
            )));
        }
        // The generator has no dropout, so the stream is never touched.
        let mut unused = Rng::seed_from_u64(0);
        let h1 = forward_on(tape, &self.arch.trunk_in(), &self.params, GEN_IN, z, false, &mut unused, track)?;
        let mut h2 = forward_on(tape, &self.arch.trunk_hidden(), &self.params, GEN_HIDDEN, h1, false, &mut unused, track)?;
        if self.arch.residual {
            h2 = tape.add(h2, h1)?;
        }
        let head = forward_on(tape, &self.arch.head(self.kind), &self.params, GEN_HEAD, h2, false, &mut unused, track)?;
        let rho = match self.kind {
            GeneratorKind::Cholesky => autodiff::cholesky_assemble(tape, head)?,
            GeneratorKind::Ldl => autodiff::ldl_assemble(tape, head)?,
            GeneratorKind::Direct => autodiff::direct_assemble(tape, head)?,
        };
        Ok(GeneratedVars { head, rho })
    }

    /// Candidates for a latent batch.
    pub fn generate(&self, z: &Tensor) -> Result<Vec<DensityCandidate>> {
        let mut tape = Tape::new();
        let zv = tape.constant(z);
        let out = self.forward_on(&mut tape, zv, false)?;
        tape.value(out.rho).chunks(32).map(DensityCandidate::from_flat).collect()
    }

    /// `n` fresh candidates with latents drawn from `rng`, in batches.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<DensityCandidate>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let b = (n - out.len()).min(1024);
            let z = latent_batch(b, rng);
            out.extend(self.generate(&z)?);
        }
        Ok(out)
    }
}

/// The state discriminator: `(B, 32)` → `(B, 1)` in `(0, 1)`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub arch: Architecture,
    pub params: ParamStore,
}

impl Discriminator {
    pub fn new(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        let mut params = ParamStore::new();
        init_params(&mut params, DISC, &arch.discriminator(), rng)?;
        Ok(Discriminator { arch, params })
    }

    pub fn forward_on(&self, tape: &mut Tape, x: Var, train_mode: bool, rng: &mut Rng, track: bool) -> Result<Var> {
        if tape.shape(x).1 != 32 {
            return Err(Error::DimensionMismatch(format!(
                "discriminator expects 32 columns, got {}",
                tape.shape(x).1
            )));
        }
        forward_on(tape, &self.arch.discriminator(), &self.params, DISC, x, train_mode, rng, track)
    }

    /// Eval-mode scores of a batch of flattened states.
    pub fn discriminate(&self, states: &[DensityCandidate]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.leaf(states.len(), 32, flatten_batch(states), false)?;
        let y = self.forward_on(&mut tape, x, false, &mut Rng::seed_from_u64(0), false)?;
        Ok(tape.value(y).to_vec())
    }
}

/// `(B, 100)` standard-normal latents.
pub fn latent_batch(b: usize, rng: &mut Rng) -> Tensor {
    let mut v = vec![0.0; b * LATENT_DIM];
    normal_fill(rng, &mut v);
    Tensor::matrix(b, LATENT_DIM, v).expect("consistent latent shape")
}

/// Concatenated flat layouts of `states`.
pub fn flatten_batch(states: &[DensityCandidate]) -> Vec<f64> {
    states.iter().flat_map(|s| s.flatten()).collect()
}
