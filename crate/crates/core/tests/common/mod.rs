//! Shared test machinery: binary64 reference forwards, central finite
//! differences, and gradient-check drivers kept independent of the f32
//! implementation they verify.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use splitfhe_core::nn::ops;
use splitfhe_core::tensor::Tensor;

pub const FD_EPS: f64 = 1e-4;

/// `max |a - o| / max(max |o|, floor)` over paired slices.
pub fn rel_err(analytic: &[f32], oracle: &[f64]) -> f64 {
    assert_eq!(analytic.len(), oracle.len());
    let scale = oracle.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-6);
    analytic
        .iter()
        .zip(oracle)
        .fold(0.0f64, |m, (&a, &o)| m.max((a as f64 - o).abs()))
        / scale
}

pub fn uniform_vec(rng: &mut ChaCha20Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound)
        .collect()
}

pub fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Central finite differences of a scalar function over a parameter vector.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64]) -> Vec<f64> {
    let mut grads = Vec::with_capacity(point.len());
    let mut p = point.to_vec();
    for i in 0..point.len() {
        p[i] = point[i] + FD_EPS;
        let up = f(&p);
        p[i] = point[i] - FD_EPS;
        let down = f(&p);
        p[i] = point[i];
        grads.push((up - down) / (2.0 * FD_EPS));
    }
    grads
}

// ---- binary64 reference forwards ------------------------------------------

pub fn conv1d_f64(
    x: &[f64],
    (n, c_in, t): (usize, usize, usize),
    w: &[f64],
    (c_out, m): (usize, usize),
    b: &[f64],
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let t_out = (t + 2 * pad - m) / stride + 1;
    let mut out = vec![0.0; n * c_out * t_out];
    for bi in 0..n {
        for co in 0..c_out {
            for to in 0..t_out {
                let mut acc = b[co];
                for ci in 0..c_in {
                    for k in 0..m {
                        let pos = to * stride + k;
                        if pos >= pad && pos - pad < t {
                            acc +=
                                w[(co * c_in + ci) * m + k] * x[(bi * c_in + ci) * t + pos - pad];
                        }
                    }
                }
                out[(bi * c_out + co) * t_out + to] = acc;
            }
        }
    }
    out
}

pub fn leaky_relu_f64(x: &[f64], alpha: f64) -> Vec<f64> {
    x.iter()
        .map(|&v| if v < 0.0 { alpha * v } else { v })
        .collect()
}

pub fn maxpool1d_f64(x: &[f64], groups: usize, t: usize, width: usize, stride: usize) -> Vec<f64> {
    let t_out = (t - width) / stride + 1;
    let mut out = vec![0.0; groups * t_out];
    for g in 0..groups {
        for to in 0..t_out {
            let start = g * t + to * stride;
            out[g * t_out + to] = x[start..start + width]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}

pub fn linear_f64(
    a: &[f64],
    (n, fin): (usize, usize),
    w: &[f64],
    fout: usize,
    b: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; n * fout];
    for bi in 0..n {
        for j in 0..fout {
            let mut acc = b[j];
            for i in 0..fin {
                acc += a[bi * fin + i] * w[j * fin + i];
            }
            out[bi * fout + j] = acc;
        }
    }
    out
}

pub fn softmax_xent_f64(logits: &[f64], (n, classes): (usize, usize), labels: &[u8]) -> f64 {
    let mut loss = 0.0;
    for bi in 0..n {
        let row = &logits[bi * classes..(bi + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|&l| (l - max).exp()).sum();
        loss -= (logits[bi * classes + labels[bi] as usize] - max) - denom.ln();
    }
    loss / n as f64
}

// ---- gradient-check drivers ------------------------------------------------
//
// Each driver runs `trials` random small instances and returns the worst
// relative error between the f32 analytic backward and binary64 central
// finite differences through the f64 reference forward. The loss is a fixed
// random linear functional of the layer output, so the upstream gradient is
// its coefficient vector.

pub fn gradcheck_conv1d(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.gen_range(1..=2);
        let c_in = rng.gen_range(1..=2);
        let c_out = rng.gen_range(1..=2);
        let t = rng.gen_range(6..=16);
        let m = rng.gen_range(1..=4).min(t);
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..=2);
        let t_out = (t + 2 * pad - m) / stride + 1;
        let x = uniform_vec(&mut rng, n * c_in * t, 1.0);
        let w = uniform_vec(&mut rng, c_out * c_in * m, 1.0);
        let b = uniform_vec(&mut rng, c_out, 1.0);
        let c = uniform_vec(&mut rng, n * c_out * t_out, 1.0);
        let loss_x = |xv: &[f64]| {
            conv1d_f64(xv, (n, c_in, t), &w, (c_out, m), &b, stride, pad)
                .iter()
                .zip(&c)
                .map(|(o, ci)| o * ci)
                .sum::<f64>()
        };
        let fd_x = central_diff(loss_x, &x);
        let loss_w = |wv: &[f64]| {
            conv1d_f64(&x, (n, c_in, t), wv, (c_out, m), &b, stride, pad)
                .iter()
                .zip(&c)
                .map(|(o, ci)| o * ci)
                .sum::<f64>()
        };
        let fd_w = central_diff(loss_w, &w);
        let loss_b = |bv: &[f64]| {
            conv1d_f64(&x, (n, c_in, t), &w, (c_out, m), bv, stride, pad)
                .iter()
                .zip(&c)
                .map(|(o, ci)| o * ci)
                .sum::<f64>()
        };
        let fd_b = central_diff(loss_b, &b);

        let xt = Tensor::from_vec(&[n, c_in, t], to_f32(&x)).unwrap();
        let wt = Tensor::from_vec(&[c_out, c_in, m], to_f32(&w)).unwrap();
        let grad_out = Tensor::from_vec(&[n, c_out, t_out], to_f32(&c)).unwrap();
        let (gx, gw, gb) = ops::conv1d_backward(&grad_out, &xt, &wt, stride, pad).unwrap();
        worst = worst
            .max(rel_err(gx.data(), &fd_x))
            .max(rel_err(gw.data(), &fd_w))
            .max(rel_err(gb.data(), &fd_b));
    }
    worst
}

pub fn gradcheck_leaky_relu(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let alpha = 0.01;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let len = rng.gen_range(4..=32);
        // keep inputs away from the kink at zero
        let x: Vec<f64> = uniform_vec(&mut rng, len, 1.0)
            .into_iter()
            .map(|v| if v.abs() < 10.0 * FD_EPS { v + 0.01 } else { v })
            .collect();
        let c = uniform_vec(&mut rng, len, 1.0);
        let loss = |xv: &[f64]| {
            leaky_relu_f64(xv, alpha)
                .iter()
                .zip(&c)
                .map(|(o, ci)| o * ci)
                .sum::<f64>()
        };
        let fd = central_diff(loss, &x);
        let xt = Tensor::from_vec(&[len], to_f32(&x)).unwrap();
        let g = Tensor::from_vec(&[len], to_f32(&c)).unwrap();
        let gx = ops::leaky_relu_backward(&g, &xt, alpha as f32);
        worst = worst.max(rel_err(gx.data(), &fd));
    }
    worst
}

pub fn gradcheck_maxpool(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=2);
        let t = rng.gen_range(4..=16);
        let width = rng.gen_range(2..=3).min(t);
        let stride = width;
        let t_out = (t - width) / stride + 1;
        let x = uniform_vec(&mut rng, n * c * t, 1.0);
        let cf = uniform_vec(&mut rng, n * c * t_out, 1.0);
        let loss = |xv: &[f64]| {
            maxpool1d_f64(xv, n * c, t, width, stride)
                .iter()
                .zip(&cf)
                .map(|(o, ci)| o * ci)
                .sum::<f64>()
        };
        let fd = central_diff(loss, &x);
        let xt = Tensor::from_vec(&[n, c, t], to_f32(&x)).unwrap();
        let (_, arg) = ops::maxpool1d_forward(&xt, width, stride).unwrap();
        let g = Tensor::from_vec(&[n, c, t_out], to_f32(&cf)).unwrap();
        let gx = ops::maxpool1d_backward(&g, &arg, xt.shape());
        worst = worst.max(rel_err(gx.data(), &fd));
    }
    worst
}

pub fn gradcheck_linear(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.gen_range(1..=2);
        let fin = rng.gen_range(3..=16);
        let fout = rng.gen_range(2..=5);
        let a = uniform_vec(&mut rng, n * fin, 1.0);
        let w = uniform_vec(&mut rng, fout * fin, 1.0);
        let b = uniform_vec(&mut rng, fout, 1.0);
        let c = uniform_vec(&mut rng, n * fout, 1.0);
        let fd_a = central_diff(
            |av| {
                linear_f64(av, (n, fin), &w, fout, &b)
                    .iter()
                    .zip(&c)
                    .map(|(o, ci)| o * ci)
                    .sum::<f64>()
            },
            &a,
        );
        let fd_w = central_diff(
            |wv| {
                linear_f64(&a, (n, fin), wv, fout, &b)
                    .iter()
                    .zip(&c)
                    .map(|(o, ci)| o * ci)
                    .sum::<f64>()
            },
            &w,
        );
        let fd_b = central_diff(
            |bv| {
                linear_f64(&a, (n, fin), &w, fout, bv)
                    .iter()
                    .zip(&c)
                    .map(|(o, ci)| o * ci)
                    .sum::<f64>()
            },
            &b,
        );
        let at = Tensor::from_vec(&[n, fin], to_f32(&a)).unwrap();
        let wt = Tensor::from_vec(&[fout, fin], to_f32(&w)).unwrap();
        let g = Tensor::from_vec(&[n, fout], to_f32(&c)).unwrap();
        let (gw, gb, ga) = ops::linear_backward(&g, &at, &wt).unwrap();
        worst = worst
            .max(rel_err(ga.data(), &fd_a))
            .max(rel_err(gw.data(), &fd_w))
            .max(rel_err(gb.data(), &fd_b));
    }
    worst
}

pub fn gradcheck_softmax_xent(seed: u64, trials: usize) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.gen_range(1..=2);
        let classes = 5;
        let logits = uniform_vec(&mut rng, n * classes, 3.0);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..classes as u8)).collect();
        let fd = central_diff(|lv| softmax_xent_f64(lv, (n, classes), &labels), &logits);
        let lt = Tensor::from_vec(&[n, classes], to_f32(&logits)).unwrap();
        let (_, _, grad) = ops::softmax_cross_entropy(&lt, &labels).unwrap();
        worst = worst.max(rel_err(grad.data(), &fd));
    }
    worst
}
