use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Discriminator, Generator, GeneratorKind};
use crate::autodiff::{ParamStore, Rng, Tensor};
use crate::error::{Error, Result};
use crate::families::{Family, Task};

pub const CHECKPOINT_FORMAT: &str = "pigan-ckpt/1";

const ACC_PREFIX: &str = "rmsprop.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Serialized training state: both networks, their RMSprop accumulators
/// (as `rmsprop.<name>` tensors) and the run's random stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: GeneratorKind,
    pub family: Family,
    pub task: Task,
    pub step: usize,
    pub rng_state: Rng,
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

fn dump(store: &ParamStore, out: &mut Vec<NamedTensor>) {
    for id in store.ids() {
        let t = store.get(id);
        out.push(NamedTensor {
            name: store.name(id).to_string(),
            shape: t.shape.clone(),
            values: t.values.clone(),
        });
    }
    for id in store.ids() {
        out.push(NamedTensor {
            name: format!("{ACC_PREFIX}{}", store.name(id)),
            shape: store.get(id).shape.clone(),
            values: store.accumulator(id).to_vec(),
        });
    }
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn capture(
        generator: &Generator,
        discriminator: &Discriminator,
        family: Family,
        task: Task,
        step: usize,
        rng: &Rng,
        hyperparameters: serde_json::Value,
    ) -> Self {
        let mut tensors = Vec::new();
        dump(&generator.params, &mut tensors);
        dump(&discriminator.params, &mut tensors);
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: generator.kind,
            family,
            task,
            step,
            rng_state: rng.clone(),
            hyperparameters,
            tensors,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!(
                "{}: unsupported checkpoint format {:?}",
                path.display(),
                ckpt.format
            )));
        }
        Ok(ckpt)
    }

    /// Architecture recorded in the hyperparameters, or the default.
    pub fn architecture(&self) -> Result<Architecture> {
        match self.hyperparameters.get("arch") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Data(format!("checkpoint arch: {e}"))),
            None => Ok(Architecture::default()),
        }
    }

    fn fill(&self, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let find = |n: &str| {
                self.tensors
                    .iter()
                    .find(|t| t.name == n)
                    .ok_or_else(|| Error::Data(format!("checkpoint lacks tensor {n}")))
            };
            let t = find(&name)?;
            if t.shape != store.get(id).shape {
                return Err(Error::Data(format!("checkpoint tensor {name} has shape {:?}", t.shape)));
            }
            store.insert(name.clone(), Tensor::new(t.shape.clone(), t.values.clone())?);
            if let Ok(acc) = find(&format!("{ACC_PREFIX}{name}")) {
                store.set_accumulator(id, acc.values.clone())?;
            }
        }
        Ok(())
    }

    /// Rebuilds both networks.
    pub fn restore(&self) -> Result<(Generator, Discriminator)> {
        let arch = self.architecture()?;
        let mut scratch = Rng::seed_from_u64(0);
        let mut g = Generator::new(self.kind, arch, &mut scratch)?;
        let mut d = Discriminator::new(arch, &mut scratch)?;
        self.fill(&mut g.params)?;
        self.fill(&mut d.params)?;
        Ok((g, d))
    }
}
