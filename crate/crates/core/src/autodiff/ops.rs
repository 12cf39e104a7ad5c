//! Forward and backward kernels for the non-convolution tape ops.

use alloc::vec::Vec;

use super::tensor::{Shape, Tensor};
use crate::error::{bail, Result};

pub(crate) fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub(crate) fn leaky_relu_backward(x: &Tensor, slope: f64, gout: &[f64], gx: &mut [f64]) {
    for ((g, &v), &go) in gx.iter_mut().zip(x.data()).zip(gout) {
        *g += if v > 0.0 { go } else { slope * go };
    }
}

/// Per-(sample, channel) normalization; returns the output and `1/σ` per plane.
pub(crate) fn instance_norm(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let shape = x.shape();
    let m = shape.plane();
    let mut out = Tensor::zeros(shape);
    let mut inv_std = Vec::with_capacity(shape.n * shape.c);
    for (src, dst) in x.data().chunks(m).zip(out.data_mut().chunks_mut(m)) {
        let mean = src.iter().sum::<f64>() / m as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        let istd = 1.0 / libm::sqrt(var + eps);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - mean) * istd;
        }
        inv_std.push(istd);
    }
    (out, inv_std)
}

pub(crate) fn instance_norm_backward(y: &Tensor, inv_std: &[f64], gout: &[f64], gx: &mut [f64]) {
    let m = y.shape().plane();
    for (((yp, gp), gxp), &istd) in y.data().chunks(m).zip(gout.chunks(m)).zip(gx.chunks_mut(m)).zip(inv_std) {
        let mean_g = gp.iter().sum::<f64>() / m as f64;
        let mean_gy = gp.iter().zip(yp).map(|(g, y)| g * y).sum::<f64>() / m as f64;
        for ((gxv, &g), &yv) in gxp.iter_mut().zip(gp).zip(yp) {
            *gxv += istd * (g - mean_g - yv * mean_gy);
        }
    }
}

pub(crate) fn check_channel_param(x: Shape, p: Shape, what: &str) -> Result<()> {
    if p != Shape::new(1, x.c, 1, 1) {
        bail!(Shape, "{} must be 1x{}x1x1, got {:?}", what, x.c, p);
    }
    Ok(())
}

pub(crate) fn channel_affine(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Tensor {
    let shape = x.shape();
    let m = shape.plane();
    let mut out = Tensor::zeros(shape);
    for (plane, (src, dst)) in x.data().chunks(m).zip(out.data_mut().chunks_mut(m)).enumerate() {
        let c = plane % shape.c;
        let (g, b) = (gamma.data()[c], beta.data()[c]);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = g * s + b;
        }
    }
    out
}

pub(crate) fn channel_affine_backward(
    x: &Tensor,
    gamma: &Tensor,
    gout: &[f64],
    gx: Option<&mut [f64]>,
    ggamma: Option<&mut [f64]>,
    gbeta: Option<&mut [f64]>,
) {
    let shape = x.shape();
    let m = shape.plane();
    if let Some(gx) = gx {
        for (plane, (gxp, gp)) in gx.chunks_mut(m).zip(gout.chunks(m)).enumerate() {
            let g = gamma.data()[plane % shape.c];
            for (a, b) in gxp.iter_mut().zip(gp) {
                *a += g * b;
            }
        }
    }
    if let Some(gg) = ggamma {
        for (plane, (xp, gp)) in x.data().chunks(m).zip(gout.chunks(m)).enumerate() {
            gg[plane % shape.c] += xp.iter().zip(gp).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    if let Some(gb) = gbeta {
        for (plane, gp) in gout.chunks(m).enumerate() {
            gb[plane % shape.c] += gp.iter().sum::<f64>();
        }
    }
}

/// 2×2 max pooling with stride 2; ties resolve to the first element in
/// row-major window order. Returns the output and the winning input index
/// for each output element.
pub(crate) fn maxpool2x2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let s = x.shape();
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        bail!(Shape, "max pooling needs even spatial dims, got {:?}", s);
    }
    let os = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Tensor::zeros(os);
    let mut argmax = Vec::with_capacity(os.len());
    let xd = x.data();
    let od = out.data_mut();
    let mut o = 0;
    for plane in 0..s.n * s.c {
        let base = plane * s.plane();
        for oh in 0..os.h {
            for ow in 0..os.w {
                let first = base + 2 * oh * s.w + 2 * ow;
                let mut best = first;
                for idx in [first + 1, first + s.w, first + s.w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                od[o] = xd[best];
                argmax.push(best);
                o += 1;
            }
        }
    }
    Ok((out, argmax))
}

pub(crate) fn upsample2x(x: &Tensor) -> Tensor {
    let s = x.shape();
    let os = Shape::new(s.n, s.c, s.h * 2, s.w * 2);
    let xd = x.data();
    let mut out = Tensor::zeros(os);
    let od = out.data_mut();
    for plane in 0..s.n * s.c {
        for oh in 0..os.h {
            let src = plane * s.plane() + (oh / 2) * s.w;
            let dst = plane * os.plane() + oh * os.w;
            for ow in 0..os.w {
                od[dst + ow] = xd[src + ow / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward(x: Shape, gout: &[f64], gx: &mut [f64]) {
    let (oh_n, ow_n) = (x.h * 2, x.w * 2);
    for plane in 0..x.n * x.c {
        for oh in 0..oh_n {
            let src = plane * oh_n * ow_n + oh * ow_n;
            let dst = plane * x.plane() + (oh / 2) * x.w;
            for ow in 0..ow_n {
                gx[dst + ow / 2] += gout[src + ow];
            }
        }
    }
}

pub(crate) fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        bail!(Shape, "cannot concatenate {:?} and {:?} along channels", sa, sb);
    }
    let os = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(os.len());
    let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
        data.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
    }
    Tensor::new(os, data)
}

pub(crate) fn concat_backward(sa: Shape, sb: Shape, gout: &[f64], ga: Option<&mut [f64]>, gb: Option<&mut [f64]>) {
    let (la, lb) = (sa.c * sa.plane(), sb.c * sb.plane());
    if let Some(ga) = ga {
        for n in 0..sa.n {
            for (g, o) in ga[n * la..(n + 1) * la].iter_mut().zip(&gout[n * (la + lb)..]) {
                *g += o;
            }
        }
    }
    if let Some(gb) = gb {
        for n in 0..sa.n {
            for (g, o) in gb[n * lb..(n + 1) * lb].iter_mut().zip(&gout[n * (la + lb) + la..]) {
                *g += o;
            }
        }
    }
}

/// Softmax across channels at every pixel, max-shifted.
pub(crate) fn softmax_channels(x: &Tensor) -> Tensor {
    let s = x.shape();
    let m = s.plane();
    let mut out = Tensor::zeros(s);
    let xd = x.data();
    let od = out.data_mut();
    for n in 0..s.n {
        let base = n * s.c * m;
        for p in 0..m {
            let mut max = f64::NEG_INFINITY;
            for c in 0..s.c {
                max = max.max(xd[base + c * m + p]);
            }
            let mut total = 0.0;
            for c in 0..s.c {
                let e = libm::exp(xd[base + c * m + p] - max);
                od[base + c * m + p] = e;
                total += e;
            }
            for c in 0..s.c {
                od[base + c * m + p] /= total;
            }
        }
    }
    out
}

/// `gx_k += p_k (g_k − Σ_j p_j g_j)` per pixel.
pub(crate) fn softmax_backward(probs: &Tensor, gout: &[f64], gx: &mut [f64]) {
    let s = probs.shape();
    let m = s.plane();
    let pd = probs.data();
    for n in 0..s.n {
        let base = n * s.c * m;
        for p in 0..m {
            let mut dot = 0.0;
            for c in 0..s.c {
                dot += pd[base + c * m + p] * gout[base + c * m + p];
            }
            for c in 0..s.c {
                let i = base + c * m + p;
                gx[i] += pd[i] * (gout[i] - dot);
            }
        }
    }
}
