//! Standard, depthwise and pointwise 2D convolution.
//!
//! All three are cross-correlations sharing one grouped loop:
//!
//! ```text
//! out[n, co, oh, ow] = Σ_{ci ∈ group(co), kh, kw} K[co, ci, kh, kw] · X[n, ci, oh·s + kh − p, ow·s + kw − p]
//! ```
//!
//! with zero padding `p` and stride `s`. Weight layouts (as [`Shape`]s):
//!
//! | kind      | weight shape          | groups |
//! |-----------|-----------------------|--------|
//! | standard  | `C_O × C_I × KH × KW` | 1      |
//! | depthwise | `C_I × 1 × KH × KW`   | `C_I`  |
//! | pointwise | `C_O × C_I × 1 × 1`   | 1      |
//!
//! No bias term is used; each convolution in the network is followed by a
//! normalization layer.

use super::tensor::{Shape, Tensor};
use super::{Tape, Var};
use crate::error::{bail, Result};
use crate::network::ConvVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum KernelKind {
    Standard,
    Depthwise,
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// Stride 1 with "same" padding for an odd kernel size.
    pub const fn same(kernel: usize) -> Self {
        Self { stride: 1, padding: kernel / 2 }
    }
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self { stride: 1, padding: 0 }
    }
}

/// A convolution kernel whose weights live on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub weight: Var,
    pub geometry: ConvGeometry,
}

impl Kernel {
    /// Checks the weight layout against `kind`.
    pub fn new(tape: &Tape, kind: KernelKind, weight: Var, geometry: ConvGeometry) -> Result<Self> {
        check_weight(kind, tape.value(weight).shape())?;
        if geometry.stride == 0 {
            bail!(Argument, "convolution stride must be >= 1");
        }
        Ok(Self { kind, weight, geometry })
    }

    pub fn standard(tape: &Tape, weight: Var) -> Result<Self> {
        let k = tape.value(weight).shape().h;
        Self::new(tape, KernelKind::Standard, weight, ConvGeometry::same(k))
    }

    pub fn depthwise(tape: &Tape, weight: Var) -> Result<Self> {
        let k = tape.value(weight).shape().h;
        Self::new(tape, KernelKind::Depthwise, weight, ConvGeometry::same(k))
    }

    pub fn pointwise(tape: &Tape, weight: Var) -> Result<Self> {
        Self::new(tape, KernelKind::Pointwise, weight, ConvGeometry::default())
    }
}

fn check_weight(kind: KernelKind, w: Shape) -> Result<()> {
    if w.is_empty() {
        bail!(Shape, "empty kernel {:?}", w);
    }
    match kind {
        KernelKind::Standard => {}
        KernelKind::Depthwise if w.c != 1 => {
            bail!(Shape, "depthwise kernel must be C×1×KH×KW, got {:?}", w)
        }
        KernelKind::Pointwise if w.h != 1 || w.w != 1 => {
            bail!(Shape, "pointwise kernel must be C_O×C_I×1×1, got {:?}", w)
        }
        _ => {}
    }
    Ok(())
}

/// Learnable scalars of one convolution, bias excluded: `k²·c_in·c_out` for
/// a standard convolution, `k²·c_in + c_in·c_out` for a depthwise
/// convolution followed by a pointwise one.
pub fn param_count(variant: ConvVariant, kernel: usize, c_in: usize, c_out: usize) -> usize {
    match variant {
        ConvVariant::Standard => kernel * kernel * c_in * c_out,
        ConvVariant::DepthwiseSeparable => kernel * kernel * c_in + c_in * c_out,
    }
}

struct Plan {
    x: Shape,
    w: Shape,
    out: Shape,
    groups: usize,
    cin_per_group: usize,
    cout_per_group: usize,
    geometry: ConvGeometry,
}

fn out_extent(input: usize, k: usize, g: ConvGeometry) -> Option<usize> {
    let padded = input + 2 * g.padding;
    (padded >= k).then(|| (padded - k) / g.stride + 1)
}

/// Output positions `o` with `0 <= o·s + off − p < len`.
fn valid_range(out_len: usize, in_len: usize, off: usize, g: ConvGeometry) -> (usize, usize) {
    let (s, p) = (g.stride, g.padding);
    let lo = if off >= p { 0 } else { (p - off).div_ceil(s) };
    let hi = if in_len + p > off { ((in_len - 1 + p - off) / s + 1).min(out_len) } else { 0 };
    (lo, hi.max(lo))
}

fn plan(x: Shape, w: Shape, kind: KernelKind, geometry: ConvGeometry) -> Result<Plan> {
    check_weight(kind, w)?;
    let (groups, cin_per_group, c_out) = match kind {
        KernelKind::Standard | KernelKind::Pointwise => {
            if x.c != w.c {
                bail!(Shape, "input has {} channels, {:?} kernel expects {}", x.c, kind, w.c);
            }
            (1, w.c, w.n)
        }
        KernelKind::Depthwise => {
            if x.c != w.n {
                bail!(Shape, "input has {} channels, depthwise kernel has {}", x.c, w.n);
            }
            (x.c, 1, x.c)
        }
    };
    let (Some(oh), Some(ow)) = (out_extent(x.h, w.h, geometry), out_extent(x.w, w.w, geometry)) else {
        bail!(Shape, "kernel {:?} larger than padded input {:?}", w, x);
    };
    Ok(Plan {
        x,
        w,
        out: Shape::new(x.n, c_out, oh, ow),
        groups,
        cin_per_group,
        cout_per_group: c_out / groups,
        geometry,
    })
}

impl Plan {
    /// Visits every (input plane, output plane, weight index, kh, kw).
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        for n in 0..self.x.n {
            for co in 0..self.out.c {
                let g = co / self.cout_per_group;
                for cil in 0..self.cin_per_group {
                    let ci = g * self.cin_per_group + cil;
                    let x_plane = (n * self.x.c + ci) * self.x.plane();
                    let o_plane = (n * self.out.c + co) * self.out.plane();
                    for kh in 0..self.w.h {
                        for kw in 0..self.w.w {
                            let widx = ((co * self.cin_per_group + cil) * self.w.h + kh) * self.w.w + kw;
                            f(x_plane, o_plane, widx, kh, kw);
                        }
                    }
                }
            }
        }
        debug_assert_eq!(self.groups * self.cout_per_group, self.out.c);
    }

    /// Calls `f(out_offset, in_offset, len, in_step)` for each output row
    /// segment touched by tap `(kh, kw)`.
    #[inline]
    fn for_each_row(&self, kh: usize, kw: usize, mut f: impl FnMut(usize, usize, usize)) {
        let g = self.geometry;
        let (oh_lo, oh_hi) = valid_range(self.out.h, self.x.h, kh, g);
        let (ow_lo, ow_hi) = valid_range(self.out.w, self.x.w, kw, g);
        if ow_lo >= ow_hi {
            return;
        }
        for oh in oh_lo..oh_hi {
            let ih = oh * g.stride + kh - g.padding;
            let iw0 = ow_lo * g.stride + kw - g.padding;
            f(oh * self.out.w + ow_lo, ih * self.x.w + iw0, ow_hi - ow_lo);
        }
    }
}

pub fn conv2d_forward(x: &Tensor, w: &Tensor, kind: KernelKind, geometry: ConvGeometry) -> Result<Tensor> {
    let plan = plan(x.shape(), w.shape(), kind, geometry)?;
    let mut out = Tensor::zeros(plan.out);
    let (xd, wd) = (x.data(), w.data());
    let s = geometry.stride;
    let od = out.data_mut();
    plan.for_each_tap(|xp, op, widx, kh, kw| {
        let wv = wd[widx];
        plan.for_each_row(kh, kw, |o, i, len| {
            let orow = &mut od[op + o..op + o + len];
            if s == 1 {
                for (ov, iv) in orow.iter_mut().zip(&xd[xp + i..xp + i + len]) {
                    *ov += wv * iv;
                }
            } else {
                for (j, ov) in orow.iter_mut().enumerate() {
                    *ov += wv * xd[xp + i + j * s];
                }
            }
        });
    });
    Ok(out)
}

/// Accumulates input and weight gradients for upstream gradient `gout`.
pub(crate) fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    kind: KernelKind,
    geometry: ConvGeometry,
    gout: &[f64],
    mut gx: Option<&mut [f64]>,
    mut gw: Option<&mut [f64]>,
) -> Result<()> {
    let plan = plan(x.shape(), w.shape(), kind, geometry)?;
    let (xd, wd) = (x.data(), w.data());
    let s = geometry.stride;
    plan.for_each_tap(|xp, op, widx, kh, kw| {
        let wv = wd[widx];
        let mut wacc = 0.0;
        plan.for_each_row(kh, kw, |o, i, len| {
            let grow = &gout[op + o..op + o + len];
            if let Some(gx) = gx.as_deref_mut() {
                if s == 1 {
                    for (gxv, gv) in gx[xp + i..xp + i + len].iter_mut().zip(grow) {
                        *gxv += wv * gv;
                    }
                } else {
                    for (j, gv) in grow.iter().enumerate() {
                        gx[xp + i + j * s] += wv * gv;
                    }
                }
            }
            if gw.is_some() {
                if s == 1 {
                    wacc += grow.iter().zip(&xd[xp + i..xp + i + len]).map(|(g, v)| g * v).sum::<f64>();
                } else {
                    wacc += grow.iter().enumerate().map(|(j, g)| g * xd[xp + i + j * s]).sum::<f64>();
                }
            }
        });
        if let Some(gw) = gw.as_deref_mut() {
            gw[widx] += wacc;
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn valid_ranges() {
        let g = ConvGeometry::same(3);
        assert_eq!(valid_range(4, 4, 0, g), (1, 4));
        assert_eq!(valid_range(4, 4, 1, g), (0, 4));
        assert_eq!(valid_range(4, 4, 2, g), (0, 3));
        let g2 = ConvGeometry { stride: 2, padding: 1 };
        // out = (5 + 2 - 3)/2 + 1 = 3, inputs 2o + k - 1.
        assert_eq!(valid_range(3, 5, 0, g2), (1, 3));
        assert_eq!(valid_range(3, 5, 2, g2), (0, 2));
    }

    #[test]
    fn one_by_one_scales_pixel() {
        let x = Tensor::new(Shape::new(1, 1, 1, 2), vec![3.0, -2.0]).unwrap();
        let w = Tensor::scalar(0.5);
        let y = conv2d_forward(&x, &w, KernelKind::Standard, ConvGeometry::default()).unwrap();
        assert_eq!(y.data(), &[1.5, -1.0]);
    }

    #[test]
    fn strided_output_extent() {
        let x = Tensor::full(Shape::new(1, 1, 5, 6), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let y = conv2d_forward(&x, &w, KernelKind::Standard, ConvGeometry { stride: 2, padding: 1 }).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 3, 3));
        assert_eq!(y.at(0, 0, 0, 0), 4.0);
        assert_eq!(y.at(0, 0, 1, 1), 9.0);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::zeros(Shape::new(1, 3, 3, 3));
        assert!(conv2d_forward(&x, &w, KernelKind::Standard, ConvGeometry::same(3)).is_err());
        let dw = Tensor::zeros(Shape::new(3, 1, 3, 3));
        assert!(conv2d_forward(&x, &dw, KernelKind::Depthwise, ConvGeometry::same(3)).is_err());
        let pw = Tensor::zeros(Shape::new(2, 2, 3, 3));
        assert!(conv2d_forward(&x, &pw, KernelKind::Pointwise, ConvGeometry::default()).is_err());
    }
}
