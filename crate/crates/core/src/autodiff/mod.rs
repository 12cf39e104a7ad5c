//! Reverse-mode automatic differentiation over `N×C×H×W` tensors.
//!
//! A [`Tape`] records every operation in evaluation order. [`Var`] is a
//! handle to a recorded value. Leaves created with [`Tape::leaf`] track
//! gradients; leaves created with [`Tape::constant`] do not, and nor does
//! anything computed only from constants.
//!
//! [`Tape::backward`] walks the tape once in reverse from a scalar loss and
//! *adds* the resulting gradients into each tracked leaf, so calling it twice
//! doubles them. [`Tape::zero_grad`] clears the accumulated gradients.

mod conv;
mod ops;
mod tensor;

use alloc::vec::Vec;

pub use conv::{conv2d_forward, param_count, ConvGeometry, Kernel, KernelKind};
pub use tensor::{Shape, Tensor};

use crate::error::{bail, Result};
use crate::training::loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Conv { x: Var, w: Var, kind: KernelKind, geometry: ConvGeometry },
    LeakyRelu { x: Var, slope: f64 },
    InstanceNorm { x: Var, inv_std: Vec<f64> },
    ChannelAffine { x: Var, gamma: Var, beta: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    Upsample { x: Var },
    Concat { a: Var, b: Var },
    Softmax { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Sum { x: Var },
    CrossEntropy { logits: Var, target: Vec<u8>, probs: Tensor },
    Dice { logits: Var, target: Vec<u8>, probs: Tensor, smooth: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    /// A gradient-tracked input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.record(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.record(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Accumulated gradient of a tracked leaf; `None` before any backward
    /// pass reached it, and always `None` for constants and interior nodes.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub(crate) fn record(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    pub fn conv2d(&mut self, x: Var, kernel: &Kernel) -> Result<Var> {
        let value = conv2d_forward(self.value(x), self.value(kernel.weight), kernel.kind, kernel.geometry)?;
        let tracked = self.tracked(&[x, kernel.weight]);
        let op = Op::Conv { x, w: kernel.weight, kind: kernel.kind, geometry: kernel.geometry };
        Ok(self.record(value, op, tracked))
    }

    fn conv_of_kind(&mut self, x: Var, kernel: &Kernel, kind: KernelKind) -> Result<Var> {
        if kernel.kind != kind {
            bail!(Argument, "expected a {:?} kernel, got {:?}", kind, kernel.kind);
        }
        self.conv2d(x, kernel)
    }

    pub fn conv2d_standard(&mut self, x: Var, kernel: &Kernel) -> Result<Var> {
        self.conv_of_kind(x, kernel, KernelKind::Standard)
    }

    pub fn conv2d_depthwise(&mut self, x: Var, kernel: &Kernel) -> Result<Var> {
        self.conv_of_kind(x, kernel, KernelKind::Depthwise)
    }

    pub fn conv2d_pointwise(&mut self, x: Var, kernel: &Kernel) -> Result<Var> {
        self.conv_of_kind(x, kernel, KernelKind::Pointwise)
    }

    /// Depthwise convolution followed by a pointwise one.
    pub fn depthwise_separable(&mut self, x: Var, depthwise: &Kernel, pointwise: &Kernel) -> Result<Var> {
        let h = self.conv2d_depthwise(x, depthwise)?;
        self.conv2d_pointwise(h, pointwise)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = ops::leaky_relu(self.value(x), slope);
        let tracked = self.tracked(&[x]);
        self.record(value, Op::LeakyRelu { x, slope }, tracked)
    }

    /// Zero-mean, unit-variance normalization of every `H×W` plane, with
    /// `eps` added to the variance.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (value, inv_std) = ops::instance_norm(self.value(x), eps);
        let tracked = self.tracked(&[x]);
        self.record(value, Op::InstanceNorm { x, inv_std }, tracked)
    }

    /// `gamma[c]·x + beta[c]` with `1×C×1×1` parameters.
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        ops::check_channel_param(xs, self.value(gamma).shape(), "gamma")?;
        ops::check_channel_param(xs, self.value(beta).shape(), "beta")?;
        let value = ops::channel_affine(self.value(x), self.value(gamma), self.value(beta));
        let tracked = self.tracked(&[x, gamma, beta]);
        Ok(self.record(value, Op::ChannelAffine { x, gamma, beta }, tracked))
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let (value, argmax) = ops::maxpool2x2(self.value(x))?;
        let tracked = self.tracked(&[x]);
        Ok(self.record(value, Op::MaxPool { x, argmax }, tracked))
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let value = ops::upsample2x(self.value(x));
        let tracked = self.tracked(&[x]);
        self.record(value, Op::Upsample { x }, tracked)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::concat_channels(self.value(a), self.value(b))?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.record(value, Op::Concat { a, b }, tracked))
    }

    pub fn softmax_channels(&mut self, x: Var) -> Var {
        let value = ops::softmax_channels(self.value(x));
        let tracked = self.tracked(&[x]);
        self.record(value, Op::Softmax { x }, tracked)
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            bail!(Shape, "elementwise op on {:?} and {:?}", sa, sb);
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.record(value, Op::Add { a, b }, tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.record(value, Op::Mul { a, b }, tracked))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let tracked = self.tracked(&[x]);
        self.record(value, Op::Scale { x, factor }, tracked)
    }

    /// Sum of all elements as a `1×1×1×1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        let tracked = self.tracked(&[x]);
        self.record(value, Op::Sum { x }, tracked)
    }

    pub(crate) fn record_loss(&mut self, value: f64, op: Op, logits: Var) -> Var {
        let tracked = self.tracked(&[logits]);
        self.record(Tensor::scalar(value), op, tracked)
    }

    /// Backpropagates from a scalar `loss`, adding into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).item().is_none() {
            bail!(Argument, "backward needs a scalar loss, got {:?}", self.value(loss).shape());
        }
        let mut pending: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        pending[loss.0] = Some(alloc::vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = pending[idx].take() else { continue };
            if !self.nodes[idx].tracked {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                match &mut self.grads[idx] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
                continue;
            }
            self.propagate(idx, &g, &mut pending)?;
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], pending: &mut [Option<Vec<f64>>]) -> Result<()> {
        let nodes = &self.nodes;
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Conv { x, w, kind, geometry } => {
                let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                if let Some(mut gx) = self.take(pending, *x) {
                    conv::conv2d_backward(xv, wv, *kind, *geometry, g, Some(&mut gx), None)?;
                    self.put(pending, *x, Some(gx));
                }
                if let Some(mut gw) = self.take(pending, *w) {
                    conv::conv2d_backward(xv, wv, *kind, *geometry, g, None, Some(&mut gw))?;
                    self.put(pending, *w, Some(gw));
                }
            }
            Op::LeakyRelu { x, slope } => {
                if let Some(mut gx) = self.take(pending, *x) {
                    ops::leaky_relu_backward(&nodes[x.0].value, *slope, g, &mut gx);
                    self.put(pending, *x, Some(gx));
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                if let Some(mut gx) = self.take(pending, *x) {
                    ops::instance_norm_backward(&nodes[idx].value, inv_std, g, &mut gx);
                    self.put(pending, *x, Some(gx));
                }
            }
            Op::ChannelAffine { x, gamma, beta } => {
                let (xv, gv) = (&nodes[x.0].value, &nodes[gamma.0].value);
                if let Some(mut gx) = self.take(pending, *x) {
                    ops::channel_affine_backward(xv, gv, g, Some(&mut gx), None, None);
                    self.put(pending, *x, Some(gx));
                }
                if let Some(mut gg) = self.take(pending, *gamma) {
                    ops::channel_affine_backward(xv, gv, g, None, Some(&mut gg), None);
                    self.put(pending, *gamma, Some(gg));
                }
                if let Some(mut gb) = self.take(pending, *beta) {
                    ops::channel_affine_backward(xv, gv, g, None, None, Some(&mut gb));
                    self.put(pending, *beta, Some(gb));
                }
            }
            Op::MaxPool { x, argmax } => {
                if let Some(mut gx) = self.take(pending, *x) {
                    for (&src, &go) in argmax.iter().zip(g) {
                        gx[src] += go;
                    }
                    self.put(pending, *x, Some(gx));
                }
            }
            Op::Upsample { x } => {
                if let Some(mut gx) = self.take(pending, *x) {
                    ops::upsample2x_backward(nodes[x.0].value.shape(), g, &mut gx);
                    self.put(pending, *x, Some(gx));
                }
            }
            Op::Concat { a, b } => {
                let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                if let Some(mut ga) = self.take(pending, *a) {
                    ops::concat_backward(sa, sb, g, Some(&mut ga), None);
                    self.put(pending, *a, Some(ga));
                }
                if let Some(mut gb) = self.take(pending, *b) {
                    ops::concat_backward(sa, sb, g, None, Some(&mut gb));
                    self.put(pending, *b, Some(gb));
                }
            }
            Op::Softmax { x } => {
                if let Some(mut gx) = self.take(pending, *x) {
                    ops::softmax_backward(&nodes[idx].value, g, &mut gx);
                    self.put(pending, *x, Some(gx));
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(mut gv) = self.take(pending, v) {
                        gv.iter_mut().zip(g).for_each(|(s, d)| *s += d);
                        self.put(pending, v, Some(gv));
                    }
                }
            }
            Op::Mul { a, b } => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if let Some(mut gv) = self.take(pending, v) {
                        let o = nodes[other.0].value.data();
                        gv.iter_mut().zip(g).zip(o).for_each(|((s, d), ov)| *s += d * ov);
                        self.put(pending, v, Some(gv));
                    }
                }
            }
            Op::Scale { x, factor } => {
                if let Some(mut gx) = self.take(pending, *x) {
                    gx.iter_mut().zip(g).for_each(|(s, d)| *s += d * factor);
                    self.put(pending, *x, Some(gx));
                }
            }
            Op::Sum { x } => {
                if let Some(mut gx) = self.take(pending, *x) {
                    gx.iter_mut().for_each(|s| *s += g[0]);
                    self.put(pending, *x, Some(gx));
                }
            }
            Op::CrossEntropy { logits, target, probs } => {
                if let Some(mut gx) = self.take(pending, *logits) {
                    loss::cross_entropy_backward(probs, target, g[0], &mut gx);
                    self.put(pending, *logits, Some(gx));
                }
            }
            Op::Dice { logits, target, probs, smooth } => {
                if let Some(mut gx) = self.take(pending, *logits) {
                    loss::dice_backward(probs, target, *smooth, g[0], &mut gx);
                    self.put(pending, *logits, Some(gx));
                }
            }
        }
        Ok(())
    }

    /// Removes (or allocates) the pending gradient of `v` if it is tracked.
    fn take(&self, pending: &mut [Option<Vec<f64>>], v: Var) -> Option<Vec<f64>> {
        if !self.nodes[v.0].tracked {
            return None;
        }
        Some(pending[v.0].take().unwrap_or_else(|| alloc::vec![0.0; self.nodes[v.0].value.shape().len()]))
    }

    fn put(&self, pending: &mut [Option<Vec<f64>>], v: Var, g: Option<Vec<f64>>) {
        if let Some(g) = g {
            pending[v.0] = Some(g);
        }
    }
}
