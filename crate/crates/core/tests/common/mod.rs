#![allow(dead_code, clippy::needless_range_loop)]

use dsseg_core::rng::{seeded, SeededRng};
use dsseg_core::{ConvGeometry, KernelKind, Network, Shape, Tape, Tensor, Var};
use rand::Rng;

pub mod suites;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so gradients that are zero
/// up to rounding are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> SeededRng {
    seeded(seed)
}

pub fn random_tensor(rng: &mut SeededRng, shape: Shape) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Direct-summation cross-correlation over explicit index loops, zero
/// padded. `Depthwise` weights are `C×1×K×K`.
pub fn conv_oracle(x: &Tensor, w: &Tensor, kind: KernelKind, g: ConvGeometry) -> Tensor {
    let (xs, ws) = (x.shape(), w.shape());
    let c_out = match kind {
        KernelKind::Depthwise => xs.c,
        _ => ws.n,
    };
    let oh = (xs.h + 2 * g.padding - ws.h) / g.stride + 1;
    let ow = (xs.w + 2 * g.padding - ws.w) / g.stride + 1;
    let mut out = vec![0.0; xs.n * c_out * oh * ow];
    for n in 0..xs.n {
        for o in 0..c_out {
            for y in 0..oh {
                for x_ in 0..ow {
                    let mut acc = 0.0;
                    let channels: Vec<(usize, usize)> = match kind {
                        KernelKind::Depthwise => vec![(o, 0)],
                        _ => (0..xs.c).map(|c| (c, c)).collect(),
                    };
                    for (cx, cw) in channels {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let iy = (y * g.stride + ky) as isize - g.padding as isize;
                                let ix = (x_ * g.stride + kx) as isize - g.padding as isize;
                                if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                    continue;
                                }
                                acc += w.at(o, cw, ky, kx) * x.at(n, cx, iy as usize, ix as usize);
                            }
                        }
                    }
                    out[((n * c_out + o) * oh + y) * ow + x_] = acc;
                }
            }
        }
    }
    Tensor::new(Shape::new(xs.n, c_out, oh, ow), out).unwrap()
}

/// Reduces `out` to a scalar by a fixed random projection, so every output
/// element contributes a distinct weight to the checked gradient.
pub fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape();
    let r = tape.constant(random_tensor(&mut rng(seed), shape));
    let prod = tape.mul(out, r).unwrap();
    tape.sum(prod)
}

/// Largest relative error between backward and central differences over
/// every element of every input. `f` builds a scalar on a fresh tape.
pub fn grad_check(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad(v).unwrap().to_vec()).collect();

    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item().unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].data().len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work);
            work[i].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;
            worst = worst.max(rel_error(analytic[i][j], (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Finite-difference check of every network weight and every input voxel
/// under `loss(logits)`.
pub fn network_grad_check(net: &Network, input: &Tensor, loss: impl Fn(&mut Tape, Var) -> Var) -> f64 {
    let run = |net: &Network, input: &Tensor, trainable: bool| {
        let mut tape = Tape::new();
        let params = net.bind(&mut tape, trainable);
        let x = if trainable { tape.leaf(input.clone()) } else { tape.constant(input.clone()) };
        let logits = net.forward(&mut tape, &params, x).unwrap();
        let l = loss(&mut tape, logits);
        (tape, params, x, l)
    };
    let (mut tape, params, x, l) = run(net, input, true);
    tape.backward(l).unwrap();
    let grads: Vec<Vec<f64>> = params.vars().iter().map(|&v| tape.grad(v).unwrap().to_vec()).collect();
    let gx = tape.grad(x).unwrap().to_vec();
    let value = |net: &Network, input: &Tensor| {
        let (tape, _, _, l) = run(net, input, false);
        tape.value(l).item().unwrap()
    };

    let mut worst: f64 = 0.0;
    let mut work = net.clone();
    for (p, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let orig = net.params()[p].data()[j];
            work.params_mut()[p].data_mut()[j] = orig + FD_STEP;
            let plus = value(&work, input);
            work.params_mut()[p].data_mut()[j] = orig - FD_STEP;
            let minus = value(&work, input);
            work.params_mut()[p].data_mut()[j] = orig;
            worst = worst.max(rel_error(g[j], (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    let mut xin = input.clone();
    for j in 0..gx.len() {
        let orig = input.data()[j];
        xin.data_mut()[j] = orig + FD_STEP;
        let plus = value(net, &xin);
        xin.data_mut()[j] = orig - FD_STEP;
        let minus = value(net, &xin);
        xin.data_mut()[j] = orig;
        worst = worst.max(rel_error(gx[j], (plus - minus) / (2.0 * FD_STEP)));
    }
    worst
}

/// Brute-force stack indices: walks every offset and clamps by comparison.
pub fn sample_oracle(center: usize, thickness: usize, stride: usize, depth: usize) -> Vec<usize> {
    let half = (thickness / 2) as i64;
    let mut out = Vec::new();
    let mut k = -half;
    while k <= half {
        let mut idx = center as i64 + k * stride as i64;
        if idx < 1 {
            idx = 1;
        }
        if idx > depth as i64 {
            idx = depth as i64;
        }
        out.push(idx as usize);
        k += 1;
    }
    out
}

/// Dice by explicit counting with the same empty-mask conventions.
pub fn dice_oracle(pred: &[u8], gt: &[u8], class: u8) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for i in 0..pred.len() {
        match (pred[i] == class, gt[i] == class) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    if tp + fp + fn_ == 0.0 {
        1.0
    } else if tp + fp == 0.0 || tp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

pub fn tiny_network_config(variant: dsseg_core::ConvVariant) -> dsseg_core::NetworkConfig {
    dsseg_core::NetworkConfig { depth: 2, base_channels: 4, variant, ..Default::default() }
}

pub struct Case {
    pub x: Tensor,
    pub w: Tensor,
    pub kind: KernelKind,
    pub geometry: ConvGeometry,
}

pub fn random_case(seed: u64, kind: KernelKind) -> Case {
    let mut r = rng(seed);
    let n = r.random_range(1..=2);
    let c_in = r.random_range(1..=4);
    let c_out = r.random_range(1..=4);
    let k = match kind {
        KernelKind::Pointwise => 1,
        _ => [1, 3, 5][r.random_range(0..3)],
    };
    let stride = r.random_range(1..=2);
    let padding = r.random_range(0..=k / 2 + 1);
    let h = r.random_range(k.max(2)..=8);
    let w = r.random_range(k.max(2)..=8);
    let ws = match kind {
        KernelKind::Depthwise => Shape::new(c_in, 1, k, k),
        _ => Shape::new(c_out, c_in, k, k),
    };
    Case {
        x: random_tensor(&mut r, Shape::new(n, c_in, h, w)),
        w: random_tensor(&mut r, ws),
        kind,
        geometry: ConvGeometry { stride, padding },
    }
}
