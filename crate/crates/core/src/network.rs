//! U-Net style encoder-decoder over `T`-channel slice stacks.
//!
//! Every resolution stage is two `conv → instance norm → leaky ReLU` blocks.
//! The encoder halves the resolution with 2×2 max pooling between stages.
//! Each decoder step maps the deeper features to the skip width with a 1×1
//! convolution, upsamples ×2 (nearest), concatenates the skip connection and
//! runs a stage. A final 1×1 convolution produces per-pixel class logits.
//!
//! In the depthwise-separable variant every 3×3 convolution is replaced by a
//! depthwise 3×3 convolution followed by a pointwise 1×1 convolution. The 1×1
//! up-projection and classifier convolutions are the same in both variants.

use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::autodiff::{param_count, ConvGeometry, Kernel, KernelKind, Shape, Tape, Tensor, Var};
use crate::error::{bail, Result};
use crate::rng;

pub const NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ConvVariant {
    Standard,
    #[default]
    DepthwiseSeparable,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NetworkConfig {
    /// Number of resolution stages, at least 2.
    pub depth: usize,
    pub base_channels: usize,
    /// Input channels, one per slice of the stack.
    pub thickness: usize,
    pub num_classes: usize,
    pub variant: ConvVariant,
    pub growth: usize,
    pub channel_cap: usize,
    pub kernel_size: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_channels: 8,
            thickness: 3,
            num_classes: 3,
            variant: ConvVariant::DepthwiseSeparable,
            growth: 2,
            channel_cap: 256,
            kernel_size: 3,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            bail!(Config, "depth must be >= 2, got {}", self.depth);
        }
        if self.base_channels == 0 || self.channel_cap == 0 || self.growth == 0 {
            bail!(Config, "base_channels, growth and channel_cap must be >= 1");
        }
        if self.thickness.is_multiple_of(2) {
            bail!(Config, "thickness must be odd, got {}", self.thickness);
        }
        if self.num_classes < 2 {
            bail!(Config, "num_classes must be >= 2, got {}", self.num_classes);
        }
        if self.kernel_size.is_multiple_of(2) {
            bail!(Config, "kernel_size must be odd, got {}", self.kernel_size);
        }
        Ok(())
    }

    /// Feature width of stage `k` (0 = full resolution).
    pub fn channels(&self, stage: usize) -> usize {
        let mut c = self.base_channels;
        for _ in 0..stage {
            c = c.saturating_mul(self.growth);
            if c >= self.channel_cap {
                break;
            }
        }
        c.min(self.channel_cap)
    }

    /// Spatial dims must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << (self.depth - 1)
    }

    /// Learnable scalar count computed from the topology alone, without
    /// allocating weights. Equals [`Network::total_params`] of a built network.
    pub fn param_count(&self) -> usize {
        let k = self.kernel_size;
        let block = |c_in: usize, c_out: usize| param_count(self.variant, k, c_in, c_out) + 2 * c_out;
        let stage = |c_in: usize, c_out: usize| block(c_in, c_out) + block(c_out, c_out);
        let mut total = 0;
        let mut c_in = self.thickness;
        for s in 0..self.depth {
            let c = self.channels(s);
            total += stage(c_in, c);
            c_in = c;
        }
        for s in (0..self.depth - 1).rev() {
            let (c, deeper) = (self.channels(s), self.channels(s + 1));
            total += deeper * c + stage(2 * c, c);
        }
        total + self.base_channels * self.num_classes
    }

    pub fn with_variant(&self, variant: ConvVariant) -> Self {
        Self { variant, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConvUnit {
    Standard { weight: usize },
    Separable { depthwise: usize, pointwise: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    conv: ConvUnit,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Stage {
    blocks: [Block; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct UpStep {
    project: usize,
    stage: Stage,
}

/// Parameter handles of one network on one tape, in build order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    params: Vec<Tensor>,
    encoder: Vec<Stage>,
    decoder: Vec<UpStep>,
    head: usize,
}

#[derive(Debug, Clone, Copy)]
enum Init {
    He { fan_in: usize },
    Ones,
    Zeros,
}

/// Parameter shapes and initializers in build order.
struct Layout {
    shapes: Vec<(Shape, Init)>,
}

impl Layout {
    fn push(&mut self, shape: Shape, init: Init) -> usize {
        self.shapes.push((shape, init));
        self.shapes.len() - 1
    }

    fn weight(&mut self, shape: Shape, fan_in: usize) -> usize {
        self.push(shape, Init::He { fan_in })
    }

    fn conv(&mut self, variant: ConvVariant, k: usize, c_in: usize, c_out: usize) -> ConvUnit {
        match variant {
            ConvVariant::Standard => {
                ConvUnit::Standard { weight: self.weight(Shape::new(c_out, c_in, k, k), c_in * k * k) }
            }
            ConvVariant::DepthwiseSeparable => ConvUnit::Separable {
                depthwise: self.weight(Shape::new(c_in, 1, k, k), k * k),
                pointwise: self.weight(Shape::new(c_out, c_in, 1, 1), c_in),
            },
        }
    }

    fn block(&mut self, variant: ConvVariant, k: usize, c_in: usize, c_out: usize) -> Block {
        let conv = self.conv(variant, k, c_in, c_out);
        let gamma = self.push(Shape::new(1, c_out, 1, 1), Init::Ones);
        let beta = self.push(Shape::new(1, c_out, 1, 1), Init::Zeros);
        Block { conv, gamma, beta }
    }

    fn stage(&mut self, variant: ConvVariant, k: usize, c_in: usize, c_out: usize) -> Stage {
        Stage { blocks: [self.block(variant, k, c_in, c_out), self.block(variant, k, c_out, c_out)] }
    }
}

fn layout(config: &NetworkConfig) -> (Layout, Vec<Stage>, Vec<UpStep>, usize) {
    let mut l = Layout { shapes: Vec::new() };
    let (v, k) = (config.variant, config.kernel_size);
    let mut encoder = Vec::with_capacity(config.depth);
    let mut c_in = config.thickness;
    for s in 0..config.depth {
        let c = config.channels(s);
        encoder.push(l.stage(v, k, c_in, c));
        c_in = c;
    }
    let mut decoder = Vec::with_capacity(config.depth - 1);
    for s in (0..config.depth - 1).rev() {
        let (c, deeper) = (config.channels(s), config.channels(s + 1));
        let project = l.weight(Shape::new(c, deeper, 1, 1), deeper);
        decoder.push(UpStep { project, stage: l.stage(v, k, 2 * c, c) });
    }
    let head = l.weight(Shape::new(config.num_classes, config.base_channels, 1, 1), config.base_channels);
    (l, encoder, decoder, head)
}

impl Network {
    /// Builds a network with He-normal convolution weights (`σ² = 2/fan_in`),
    /// unit norm scales and zero norm shifts. Deterministic for a given seed.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, encoder, decoder, head) = layout(config);
        let mut rng = rng::seeded(seed);
        let mut params = Vec::with_capacity(layout.shapes.len());
        for &(shape, init) in &layout.shapes {
            let tensor = match init {
                Init::Ones => Tensor::full(shape, 1.0),
                Init::Zeros => Tensor::zeros(shape),
                Init::He { fan_in } => {
                    let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in as f64)).expect("positive std");
                    let data = (0..shape.len()).map(|_| normal.sample(&mut rng)).collect();
                    Tensor::new(shape, data)?
                }
            };
            params.push(tensor);
        }
        Ok(Self { config: config.clone(), params, encoder, decoder, head })
    }

    /// Reassembles a network from parameters in build order.
    pub fn from_params(config: &NetworkConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let (layout, encoder, decoder, head) = layout(config);
        if params.len() != layout.shapes.len() {
            bail!(Shape, "expected {} parameter tensors, got {}", layout.shapes.len(), params.len());
        }
        for (i, (p, &(shape, _))) in params.iter().zip(&layout.shapes).enumerate() {
            if p.shape() != shape {
                bail!(Shape, "parameter {} has shape {:?}, expected {:?}", i, p.shape(), shape);
            }
        }
        Ok(Self { config: config.clone(), params, encoder, decoder, head })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Exact number of learnable scalars (convolution weights plus norm
    /// scales and shifts).
    pub fn total_params(&self) -> usize {
        self.params.iter().map(|p| p.shape().len()).sum()
    }

    /// Places every parameter on `tape`, tracked when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { tape.leaf(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        BoundParams { vars }
    }

    /// Logits `N × num_classes × H × W` for an `N × T × H × W` input.
    pub fn forward(&self, tape: &mut Tape, params: &BoundParams, input: Var) -> Result<Var> {
        if params.vars.len() != self.params.len() {
            bail!(Argument, "bound parameters belong to a different network");
        }
        let s = tape.value(input).shape();
        if s.c != self.config.thickness {
            bail!(Shape, "input has {} channels, network expects {}", s.c, self.config.thickness);
        }
        let m = self.config.spatial_multiple();
        if !s.h.is_multiple_of(m) || !s.w.is_multiple_of(m) || s.h == 0 || s.w == 0 {
            bail!(Shape, "input {}x{} is not a multiple of {}", s.h, s.w, m);
        }
        let p = &params.vars;
        let mut x = input;
        let mut skips = Vec::with_capacity(self.encoder.len());
        for (k, stage) in self.encoder.iter().enumerate() {
            if k > 0 {
                x = tape.maxpool2x2(x)?;
            }
            x = self.stage(tape, p, stage, x)?;
            skips.push(x);
        }
        skips.pop();
        for up in &self.decoder {
            let skip = skips.pop().expect("one skip per decoder step");
            // 1×1 projection commutes with nearest upsampling; projecting first is cheaper.
            let proj = Kernel::pointwise(tape, p[up.project])?;
            x = tape.conv2d(x, &proj)?;
            x = tape.upsample2x(x);
            x = tape.concat_channels(skip, x)?;
            x = self.stage(tape, p, &up.stage, x)?;
        }
        let head = Kernel::pointwise(tape, p[self.head])?;
        tape.conv2d(x, &head)
    }

    fn stage(&self, tape: &mut Tape, p: &[Var], stage: &Stage, mut x: Var) -> Result<Var> {
        let geometry = ConvGeometry::same(self.config.kernel_size);
        for block in &stage.blocks {
            x = match block.conv {
                ConvUnit::Standard { weight } => {
                    let k = Kernel::new(tape, KernelKind::Standard, p[weight], geometry)?;
                    tape.conv2d_standard(x, &k)?
                }
                ConvUnit::Separable { depthwise, pointwise } => {
                    let kd = Kernel::new(tape, KernelKind::Depthwise, p[depthwise], geometry)?;
                    let kp = Kernel::pointwise(tape, p[pointwise])?;
                    tape.depthwise_separable(x, &kd, &kp)?
                }
            };
            x = tape.instance_norm(x, NORM_EPS);
            x = tape.channel_affine(x, p[block.gamma], p[block.beta])?;
            x = tape.leaky_relu(x, LEAKY_SLOPE);
        }
        Ok(x)
    }

    /// Forward pass without gradient tracking.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let out = self.forward(&mut tape, &params, x)?;
        Ok(tape.value(out).clone())
    }
}
