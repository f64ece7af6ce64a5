use serde::{Deserialize, Serialize};

use super::{ParamStore, Rng, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Variance floor inside LayerNorm.
pub const LAYER_NORM_VAR_FLOOR: f64 = 1e-5;

/// One layer of a feed-forward stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Affine { inputs: usize, outputs: usize },
    LeakyRelu { slope: f64 },
    LayerNorm { size: usize },
    Dropout { rate: f64 },
    Sigmoid,
    Softplus,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Affine { inputs, outputs } if inputs == 0 || outputs == 0 => {
                Err(Error::InvalidParameter("affine sizes must be positive".into()))
            }
            LayerSpec::LayerNorm { size: 0 } => Err(Error::InvalidParameter("layer norm size must be positive".into())),
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                Err(Error::InvalidParameter(format!("dropout rate {rate} outside [0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

fn name(prefix: &str, k: usize, field: &str) -> String {
    format!("{prefix}.{k}.{field}")
}

/// Registers the parameters of `net` under `prefix`.
///
/// Affine weights and biases are drawn from `U(±1/√fan_in)`; LayerNorm starts
/// at unit scale and zero shift.
pub fn init_params(store: &mut ParamStore, prefix: &str, net: &[LayerSpec], rng: &mut Rng) -> Result<()> {
    for (k, layer) in net.iter().enumerate() {
        layer.validate()?;
        match *layer {
            LayerSpec::Affine { inputs, outputs } => {
                let bound = 1.0 / (inputs as f64).sqrt();
                let w = (0..inputs * outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
                let b = (0..outputs).map(|_| rng.uniform_range(-bound, bound)).collect();
                store.insert(name(prefix, k, "weight"), Tensor::matrix(inputs, outputs, w)?);
                store.insert(name(prefix, k, "bias"), Tensor::matrix(1, outputs, b)?);
            }
            LayerSpec::LayerNorm { size } => {
                store.insert(name(prefix, k, "gamma"), Tensor::matrix(1, size, vec![1.0; size])?);
                store.insert(name(prefix, k, "beta"), Tensor::matrix(1, size, vec![0.0; size])?);
            }
            _ => {}
        }
    }
    Ok(())
}

fn lookup(store: &ParamStore, n: String) -> Result<super::ParamId> {
    store.id(&n).ok_or_else(|| Error::Config(format!("missing parameter {n}")))
}

/// Records `net` on `tape`.
///
/// Dropout masks are drawn from `rng` only when `train_mode` is set and the
/// rate is positive. With `track = false` the parameters are constants.
#[allow(clippy::too_many_arguments)]
pub fn forward_on(
    tape: &mut Tape,
    net: &[LayerSpec],
    store: &ParamStore,
    prefix: &str,
    mut x: Var,
    train_mode: bool,
    rng: &mut Rng,
    track: bool,
) -> Result<Var> {
    for (k, layer) in net.iter().enumerate() {
        x = match *layer {
            LayerSpec::Affine { inputs, outputs } => {
                let w = tape.param(store, lookup(store, name(prefix, k, "weight"))?, track);
                let b = tape.param(store, lookup(store, name(prefix, k, "bias"))?, track);
                if tape.shape(w) != (inputs, outputs) {
                    return Err(Error::DimensionMismatch(format!("{prefix}.{k}: weight shape")));
                }
                tape.affine(x, w, b)?
            }
            LayerSpec::LeakyRelu { slope } => tape.leaky_relu(x, slope)?,
            LayerSpec::LayerNorm { .. } => {
                let g = tape.param(store, lookup(store, name(prefix, k, "gamma"))?, track);
                let b = tape.param(store, lookup(store, name(prefix, k, "beta"))?, track);
                tape.layer_norm(x, g, b, LAYER_NORM_VAR_FLOOR)?
            }
            LayerSpec::Dropout { rate } => {
                if train_mode && rate > 0.0 {
                    let (r, c) = tape.shape(x);
                    let keep: Vec<bool> = (0..r * c).map(|_| rng.uniform() >= rate).collect();
                    tape.dropout(x, rate, &keep)?
                } else {
                    x
                }
            }
            LayerSpec::Sigmoid => tape.sigmoid(x)?,
            LayerSpec::Softplus => tape.softplus(x)?,
        };
    }
    Ok(x)
}

/// Batched forward pass of `net` on `input`.
pub fn forward(
    net: &[LayerSpec],
    prefix: &str,
    params: &ParamStore,
    input: &Tensor,
    train_mode: bool,
    rng: &mut Rng,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(input);
    let y = forward_on(&mut tape, net, params, prefix, x, train_mode, rng, false)?;
    Ok(tape.tensor(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_affine() {
        let mut store = ParamStore::new();
        let eye: Vec<f64> = (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
        store.insert("n.0.weight", Tensor::matrix(3, 3, eye).unwrap());
        store.insert("n.0.bias", Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
        let net = [LayerSpec::Affine { inputs: 3, outputs: 3 }];
        let input = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 7.0, -0.25]).unwrap();
        let out = forward(&net, "n", &store, &input, false, &mut Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.values, input.values);
    }

    #[test]
    fn leaky_relu_values() {
        let s = 0.2;
        let net = [LayerSpec::LeakyRelu { slope: s }];
        let input = Tensor::matrix(1, 2, vec![-1.0, 2.0]).unwrap();
        let out = forward(&net, "n", &ParamStore::new(), &input, false, &mut Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.values, vec![-s, 2.0]);
    }

    #[test]
    fn zero_rate_dropout_matches_eval() {
        let net = [
            LayerSpec::Affine { inputs: 4, outputs: 6 },
            LayerSpec::Dropout { rate: 0.0 },
            LayerSpec::LeakyRelu { slope: 0.2 },
        ];
        let mut store = ParamStore::new();
        init_params(&mut store, "n", &net, &mut Rng::seed_from_u64(1)).unwrap();
        let input = Tensor::matrix(2, 4, (0..8).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let a = forward(&net, "n", &store, &input, true, &mut Rng::seed_from_u64(2)).unwrap();
        let b = forward(&net, "n", &store, &input, false, &mut Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::Affine { inputs: 0, outputs: 2 }.validate().is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = [LayerSpec::Affine { inputs: 3, outputs: 2 }];
        let mut store = ParamStore::new();
        init_params(&mut store, "n", &net, &mut Rng::seed_from_u64(1)).unwrap();
        let input = Tensor::matrix(1, 4, vec![0.0; 4]).unwrap();
        assert!(forward(&net, "n", &store, &input, false, &mut Rng::seed_from_u64(0)).is_err());
    }
}
