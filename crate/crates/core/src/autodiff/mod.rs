//! Minimal define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of one step as a node holding its value
//! and a closure computing vector-Jacobian products for its parents. Nodes are
//! appended in evaluation order, so a reverse scan is a valid topological
//! order. All tensors are 2-D `(rows, cols)` row-major; a scalar is `(1, 1)`.
//! The tape is rebuilt every step.

mod layers;
mod nodes;
mod optim;
mod rng;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layers::{forward, forward_on, init_params, LayerSpec, LAYER_NORM_VAR_FLOOR};
pub use nodes::*;
pub use optim::{rmsprop_step, RmsProp};
pub use rng::{normal_fill, Rng};

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub requires_grad: bool,
    #[serde(skip)]
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            values: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(rows, cols)` view of the shape; 1-D tensors are a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => (s[0], s[1..].iter().product()),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = self.dims2();
        &self.values[i * c..(i + 1) * c]
    }
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named parameters plus their RMSprop accumulators.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    accumulators: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        let name = name.into();
        tensor.requires_grad = true;
        tensor.grad = None;
        if let Some(&i) = self.index.get(&name) {
            self.accumulators[i] = vec![0.0; tensor.len()];
            self.tensors[i] = tensor;
            return ParamId(i);
        }
        let id = self.tensors.len();
        self.accumulators.push(vec![0.0; tensor.len()]);
        self.tensors.push(tensor);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.ids().filter(move |id| self.names[id.0].starts_with(prefix))
    }

    pub fn accumulator(&self, id: ParamId) -> &[f64] {
        &self.accumulators[id.0]
    }

    pub fn set_accumulator(&mut self, id: ParamId, values: Vec<f64>) -> Result<()> {
        if values.len() != self.tensors[id.0].len() {
            return Err(Error::DimensionMismatch(format!(
                "accumulator for {} has {} values, expected {}",
                self.names[id.0],
                values.len(),
                self.tensors[id.0].len()
            )));
        }
        self.accumulators[id.0] = values;
        Ok(())
    }

    pub fn has_pending_grads(&self) -> bool {
        self.tensors.iter().any(|t| t.grad.is_some())
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Total parameter count.
    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// L2 norm of every parameter tensor, by name.
    pub fn norms(&self) -> Vec<(String, f64)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| (n.clone(), t.values.iter().map(|x| x * x).sum::<f64>().sqrt()))
            .collect()
    }

    pub(crate) fn parts_mut(&mut self, id: ParamId) -> (&mut Tensor, &mut Vec<f64>) {
        (&mut self.tensors[id.0], &mut self.accumulators[id.0])
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Arguments handed to a node's vector-Jacobian product.
pub struct VjpArgs<'a> {
    pub out_grad: &'a [f64],
    pub out_value: &'a [f64],
    pub inputs: Vec<&'a [f64]>,
    /// Whether each parent wants a gradient.
    pub needs: Vec<bool>,
}

/// Returns one gradient (or `None`) per parent.
pub type VjpFn = Box<dyn Fn(&VjpArgs) -> Vec<Option<Vec<f64>>>>;

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    parents: Vec<usize>,
    vjp: Option<VjpFn>,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Gradients of the root with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    finished: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            shape: vec![n.rows, n.cols],
            values: n.value.clone(),
            requires_grad: n.requires_grad,
            grad: None,
        }
    }

    /// Constant or differentiable leaf.
    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "leaf {rows}x{cols} with {} values",
                value.len()
            )));
        }
        Ok(self.push(Node {
            rows,
            cols,
            value,
            parents: vec![],
            vjp: None,
            param: None,
            requires_grad,
        }))
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        let (r, c) = t.dims2();
        self.leaf(r, c, t.values.clone(), false).expect("consistent tensor")
    }

    /// Parameter leaf. With `track = false` the parameter is a constant and
    /// receives no gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId, track: bool) -> Var {
        let t = store.get(id);
        let (r, c) = t.dims2();
        self.push(Node {
            rows: r,
            cols: c,
            value: t.values.clone(),
            parents: vec![],
            vjp: None,
            param: Some(id),
            requires_grad: track,
        })
    }

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Appends a node with an arbitrary value and vector-Jacobian product.
    pub fn custom(&mut self, parents: &[Var], rows: usize, cols: usize, value: Vec<f64>, vjp: VjpFn) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "custom node {rows}x{cols} with {} values",
                value.len()
            )));
        }
        if value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tape forward"));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(Node {
            rows,
            cols,
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            vjp: requires_grad.then_some(vjp),
            param: None,
            requires_grad,
        }))
    }

    /// Row-wise map `(B, k) -> (B, m)` with a per-row vector-Jacobian product
    /// `vjp(input_row, output_row, grad_output_row, grad_input_row)`.
    pub fn rowwise<F, G>(&mut self, x: Var, out_cols: usize, f: F, vjp: G) -> Result<Var>
    where
        F: Fn(&[f64], &mut [f64]),
        G: Fn(&[f64], &[f64], &[f64], &mut [f64]) + 'static,
    {
        let (rows, cols) = self.shape(x);
        let mut out = vec![0.0; rows * out_cols];
        {
            let xv = self.value(x);
            for r in 0..rows {
                f(&xv[r * cols..(r + 1) * cols], &mut out[r * out_cols..(r + 1) * out_cols]);
            }
        }
        self.custom(
            &[x],
            rows,
            out_cols,
            out,
            Box::new(move |a: &VjpArgs| {
                let mut g = vec![0.0; rows * cols];
                for r in 0..rows {
                    vjp(
                        &a.inputs[0][r * cols..(r + 1) * cols],
                        &a.out_value[r * out_cols..(r + 1) * out_cols],
                        &a.out_grad[r * out_cols..(r + 1) * out_cols],
                        &mut g[r * cols..(r + 1) * cols],
                    );
                }
                vec![Some(g)]
            }),
        )
    }

    /// Elementwise map with derivative `df(x, y)`.
    pub fn map<F, D>(&mut self, x: Var, f: F, df: D) -> Result<Var>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let (rows, cols) = self.shape(x);
        let value: Vec<f64> = self.value(x).iter().map(|&v| f(v)).collect();
        self.custom(
            &[x],
            rows,
            cols,
            value,
            Box::new(move |a: &VjpArgs| {
                let g = a
                    .out_grad
                    .iter()
                    .zip(a.inputs[0])
                    .zip(a.out_value)
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    /// `y = x·W + b` for `x: (B, in)`, `W: (in, out)`, `b: (1, out)`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, fan_in) = self.shape(x);
        let (wr, fan_out) = self.shape(w);
        if wr != fan_in || self.shape(b) != (1, fan_out) {
            return Err(Error::DimensionMismatch(format!(
                "affine: x {:?}, W {:?}, b {:?}",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            )));
        }
        let mut y = vec![0.0; batch * fan_out];
        for r in 0..batch {
            y[r * fan_out..(r + 1) * fan_out].copy_from_slice(self.value(b));
        }
        gemm(batch, fan_in, fan_out, self.value(x), Layout::N, self.value(w), Layout::N, 1.0, &mut y);
        self.custom(
            &[x, w, b],
            batch,
            fan_out,
            y,
            Box::new(move |a: &VjpArgs| {
                let (xv, wv, gy) = (a.inputs[0], a.inputs[1], a.out_grad);
                let gx = a.needs[0].then(|| {
                    let mut gx = vec![0.0; batch * fan_in];
                    gemm(batch, fan_out, fan_in, gy, Layout::N, wv, Layout::T, 0.0, &mut gx);
                    gx
                });
                let gw = a.needs[1].then(|| {
                    let mut gw = vec![0.0; fan_in * fan_out];
                    gemm(fan_in, batch, fan_out, xv, Layout::T, gy, Layout::N, 0.0, &mut gw);
                    gw
                });
                let gb = a.needs[2].then(|| {
                    let mut gb = vec![0.0; fan_out];
                    for r in 0..batch {
                        for (acc, g) in gb.iter_mut().zip(&gy[r * fan_out..(r + 1) * fan_out]) {
                            *acc += g;
                        }
                    }
                    gb
                });
                vec![gx, gw, gb]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::DimensionMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (rows, cols) = self.shape(a);
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.custom(
            &[a, b],
            rows,
            cols,
            value,
            Box::new(|a: &VjpArgs| vec![Some(a.out_grad.to_vec()), Some(a.out_grad.to_vec())]),
        )
    }

    /// `Σ wᵢ xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        for &(_, v) in terms {
            if self.shape(v) != (1, 1) {
                return Err(Error::DimensionMismatch("weighted_sum expects scalars".into()));
            }
        }
        let value = terms.iter().map(|&(w, v)| w * self.scalar(v)).sum();
        let weights: Vec<f64> = terms.iter().map(|t| t.0).collect();
        let parents: Vec<Var> = terms.iter().map(|t| t.1).collect();
        self.custom(
            &parents,
            1,
            1,
            vec![value],
            Box::new(move |a: &VjpArgs| weights.iter().map(|w| Some(vec![w * a.out_grad[0]])).collect()),
        )
    }

    /// Mean over all entries.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        let n = (rows * cols) as f64;
        let value = self.value(x).iter().sum::<f64>() / n;
        self.custom(
            &[x],
            1,
            1,
            vec![value],
            Box::new(move |a: &VjpArgs| vec![Some(vec![a.out_grad[0] / n; rows * cols])]),
        )
    }

    /// Stacks `a` on top of `b`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((ra, ca), (rb, cb)) = (self.shape(a), self.shape(b));
        if ca != cb {
            return Err(Error::DimensionMismatch(format!("concat_rows: {ca} vs {cb} columns")));
        }
        let mut value = self.value(a).to_vec();
        value.extend_from_slice(self.value(b));
        let split = ra * ca;
        self.custom(
            &[a, b],
            ra + rb,
            ca,
            value,
            Box::new(move |a: &VjpArgs| vec![Some(a.out_grad[..split].to_vec()), Some(a.out_grad[split..].to_vec())]),
        )
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start > end || end > rows {
            return Err(Error::DimensionMismatch(format!("rows {start}..{end} of {rows}")));
        }
        let value = self.value(x)[start * cols..end * cols].to_vec();
        self.custom(
            &[x],
            end - start,
            cols,
            value,
            Box::new(move |a: &VjpArgs| {
                let mut g = vec![0.0; rows * cols];
                g[start * cols..end * cols].copy_from_slice(a.out_grad);
                vec![Some(g)]
            }),
        )
    }

    /// Column `j` of `x` as a `(B, 1)` node.
    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        let (_, cols) = self.shape(x);
        if j >= cols {
            return Err(Error::DimensionMismatch(format!("column {j} of {cols}")));
        }
        self.rowwise(x, 1, move |r, o| o[0] = r[j], move |_, _, g, gi| gi[j] += g[0])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.map(
            x,
            move |v| if v > 0.0 { v } else { slope * v },
            move |v, _| if v > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| v.max(0.0), |v, _| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.map(x, f64::abs, |v, _| v.signum() * (v != 0.0) as u8 as f64)
    }

    pub fn affine_scalar(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.map(x, move |v| scale * v + shift, move |_, _| scale)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.map(x, softplus, |v, _| sigmoid(v))
    }

    /// `ln(max(x, floor))`; zero derivative below the floor.
    pub fn log_clamped(&mut self, x: Var, floor: f64) -> Result<Var> {
        self.map(
            x,
            move |v| v.max(floor).ln(),
            move |v, _| if v > floor { 1.0 / v } else { 0.0 },
        )
    }

    /// Inverted dropout with a precomputed keep mask.
    pub fn dropout(&mut self, x: Var, rate: f64, keep: &[bool]) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if keep.len() != rows * cols {
            return Err(Error::DimensionMismatch("dropout mask".into()));
        }
        let scale = 1.0 / (1.0 - rate);
        let factors: Vec<f64> = keep.iter().map(|&k| if k { scale } else { 0.0 }).collect();
        let value = self.value(x).iter().zip(&factors).map(|(v, f)| v * f).collect();
        self.custom(
            &[x],
            rows,
            cols,
            value,
            Box::new(move |a: &VjpArgs| {
                vec![Some(a.out_grad.iter().zip(&factors).map(|(g, f)| g * f).collect())]
            }),
        )
    }

    /// Per-row normalization with learned scale and shift.
    ///
    /// `y = γ ⊙ (x − μ)/s + β` with `s = √max(var, floor)`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, var_floor: f64) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(gamma) != (1, cols) || self.shape(beta) != (1, cols) {
            return Err(Error::DimensionMismatch("layer_norm scale/shift".into()));
        }
        let n = cols as f64;
        let xv = self.value(x);
        let g = self.value(gamma);
        let bt = self.value(beta);
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut floored = vec![false; rows];
        let mut y = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            floored[r] = var < var_floor;
            let is = 1.0 / var.max(var_floor).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mu) * is;
                xhat[r * cols + c] = h;
                y[r * cols + c] = g[c] * h + bt[c];
            }
        }
        self.custom(
            &[x, gamma, beta],
            rows,
            cols,
            y,
            Box::new(move |a: &VjpArgs| {
                let (gv, gy) = (a.inputs[1], a.out_grad);
                let gx = a.needs[0].then(|| {
                    let mut gx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let is = inv_std[r];
                        let dh: Vec<f64> = (0..cols).map(|c| gy[r * cols + c] * gv[c]).collect();
                        let mean_dh = dh.iter().sum::<f64>() / n;
                        let mean_dh_h = if floored[r] {
                            0.0
                        } else {
                            (0..cols).map(|c| dh[c] * xhat[r * cols + c]).sum::<f64>() / n
                        };
                        for c in 0..cols {
                            gx[r * cols + c] = is * (dh[c] - mean_dh - xhat[r * cols + c] * mean_dh_h);
                        }
                    }
                    gx
                });
                let ggamma = a.needs[1].then(|| {
                    let mut out = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            out[c] += gy[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                    out
                });
                let gbeta = a.needs[2].then(|| {
                    let mut out = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            out[c] += gy[r * cols + c];
                        }
                    }
                    out
                });
                vec![gx, ggamma, gbeta]
            }),
        )
    }

    /// Runs reverse mode from a scalar root.
    ///
    /// Parameter gradients are written into `store`; it is an error to call
    /// this while `store` still holds gradients from a previous pass, or to
    /// run it twice on the same tape.
    pub fn backward(&mut self, root: Var, store: &mut ParamStore) -> Result<Gradients> {
        if self.shape(root) != (1, 1) {
            return Err(Error::Backward(format!(
                "root must be a scalar, got {:?}",
                self.shape(root)
            )));
        }
        if self.finished {
            return Err(Error::Backward("tape already differentiated".into()));
        }
        if store.has_pending_grads() {
            return Err(Error::Backward(
                "parameter gradients not cleared since the last backward pass".into(),
            ));
        }
        self.finished = true;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(vec![1.0]);
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("backward"));
            }
            let node = &self.nodes[i];
            if let Some(vjp) = &node.vjp {
                let args = VjpArgs {
                    out_grad: &g,
                    out_value: &node.value,
                    inputs: node.parents.iter().map(|&p| self.nodes[p].value.as_slice()).collect(),
                    needs: node.parents.iter().map(|&p| self.nodes[p].requires_grad).collect(),
                };
                let parent_grads = vjp(&args);
                for (&p, pg) in node.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !self.nodes[p].requires_grad {
                        continue;
                    }
                    match &mut grads[p] {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            grads[i] = Some(g);
        }
        // Parameters that never reached the root get zero gradients.
        for node_idx in 0..self.nodes.len() {
            let node = &self.nodes[node_idx];
            if let (Some(pid), true) = (node.param, node.requires_grad) {
                let g = grads[node_idx].clone().unwrap_or_else(|| vec![0.0; node.value.len()]);
                let t = store.get_mut(pid);
                match &mut t.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Clone, Copy)]
enum Layout {
    N,
    T,
}

/// `c = beta·c + op(a)·op(b)` for row-major operands, where `op(a)` is `m×k`
/// and `op(b)` is `k×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match la {
        Layout::N => (k as isize, 1),
        Layout::T => (1, m as isize),
    };
    let (rsb, csb) = match lb {
        Layout::N => (n as isize, 1),
        Layout::T => (1, k as isize),
    };
    // SAFETY: slice lengths are checked above against the m/k/n extents and
    // the strides describe those same row-major buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
