//! Pure layer operations: forward maps and their analytic gradients.
//!
//! Every function is deterministic in its inputs; the stateful model in
//! [`super::model`] wires these together and owns the caches.

use super::NnError;
use crate::tensor::{ShapeError, Tensor};

fn conv_out_len(t: usize, m: usize, stride: usize, padding: usize) -> usize {
    (t + 2 * padding - m) / stride + 1
}

/// Cross-correlation of a batched signal `x: [n, c_in, t]` with kernels
/// `w: [c_out, c_in, m]` plus per-channel bias, output `[n, c_out, t']`
/// with `t' = floor((t + 2*padding - m) / stride) + 1`.
pub fn conv1d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor, NnError> {
    if x.shape().len() != 3 {
        return Err(ShapeError::Rank {
            op: "conv1d_forward",
            expected: 3,
            got: x.shape().to_vec(),
        }
        .into());
    }
    if w.shape().len() != 3 {
        return Err(ShapeError::Rank {
            op: "conv1d_forward(weight)",
            expected: 3,
            got: w.shape().to_vec(),
        }
        .into());
    }
    let (n, c_in, t) = (x.dim(0), x.dim(1), x.dim(2));
    let (c_out, wc_in, m) = (w.dim(0), w.dim(1), w.dim(2));
    if wc_in != c_in {
        return Err(ShapeError::Axis {
            op: "conv1d_forward",
            axis: 1,
            name: "in_channels",
            expected: wc_in,
            got: c_in,
        }
        .into());
    }
    if b.len() != c_out {
        return Err(ShapeError::Axis {
            op: "conv1d_forward",
            axis: 0,
            name: "bias",
            expected: c_out,
            got: b.len(),
        }
        .into());
    }
    if m > t + 2 * padding {
        return Err(ShapeError::Window {
            op: "conv1d_forward",
            width: m,
            len: t + 2 * padding,
        }
        .into());
    }
    let t_out = conv_out_len(t, m, stride, padding);
    let mut out = Tensor::zeros(&[n, c_out, t_out]);
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let od = out.data_mut();
    for bi in 0..n {
        for co in 0..c_out {
            let o_base = (bi * c_out + co) * t_out;
            for to in 0..t_out {
                let mut acc = bd[co];
                // input position = to*stride + k - padding
                let start = to * stride;
                for ci in 0..c_in {
                    let x_base = (bi * c_in + ci) * t;
                    let w_base = (co * c_in + ci) * m;
                    for k in 0..m {
                        let pos = start + k;
                        if pos >= padding && pos - padding < t {
                            acc += wd[w_base + k] * xd[x_base + pos - padding];
                        }
                    }
                }
                od[o_base + to] = acc;
            }
        }
    }
    out.debug_assert_finite("conv1d_forward");
    Ok(out)
}

/// Gradients of [`conv1d_forward`]: returns `(grad_input, grad_w, grad_b)`.
pub fn conv1d_backward(
    grad_out: &Tensor,
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (n, c_in, t) = (x.dim(0), x.dim(1), x.dim(2));
    let (c_out, _, m) = (w.dim(0), w.dim(1), w.dim(2));
    let t_out = conv_out_len(t, m, stride, padding);
    if grad_out.shape() != [n, c_out, t_out] {
        return Err(ShapeError::Axis {
            op: "conv1d_backward",
            axis: 2,
            name: "time",
            expected: t_out,
            got: grad_out.shape().last().copied().unwrap_or(0),
        }
        .into());
    }
    let mut gx = Tensor::zeros(&[n, c_in, t]);
    let mut gw = Tensor::zeros(&[c_out, c_in, m]);
    let mut gb = Tensor::zeros(&[c_out]);
    let god = grad_out.data();
    let xd = x.data();
    let wd = w.data();
    {
        let gxd = gx.data_mut();
        for bi in 0..n {
            for co in 0..c_out {
                let o_base = (bi * c_out + co) * t_out;
                for to in 0..t_out {
                    let g = god[o_base + to];
                    let start = to * stride;
                    for ci in 0..c_in {
                        let x_base = (bi * c_in + ci) * t;
                        let w_base = (co * c_in + ci) * m;
                        for k in 0..m {
                            let pos = start + k;
                            if pos >= padding && pos - padding < t {
                                gxd[x_base + pos - padding] += g * wd[w_base + k];
                            }
                        }
                    }
                }
            }
        }
    }
    {
        let gwd = gw.data_mut();
        let gbd = gb.data_mut();
        for bi in 0..n {
            for co in 0..c_out {
                let o_base = (bi * c_out + co) * t_out;
                for to in 0..t_out {
                    let g = god[o_base + to];
                    gbd[co] += g;
                    let start = to * stride;
                    for ci in 0..c_in {
                        let x_base = (bi * c_in + ci) * t;
                        let w_base = (co * c_in + ci) * m;
                        for k in 0..m {
                            let pos = start + k;
                            if pos >= padding && pos - padding < t {
                                gwd[w_base + k] += g * xd[x_base + pos - padding];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((gx, gw, gb))
}

pub fn leaky_relu_forward(x: &Tensor, alpha: f32) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v *= alpha;
        }
    }
    out
}

/// Elementwise chain rule: the slope is 1 for non-negative inputs, `alpha`
/// otherwise, judged on the cached forward input.
pub fn leaky_relu_backward(grad_out: &Tensor, x: &Tensor, alpha: f32) -> Tensor {
    let mut gx = grad_out.clone();
    for (g, &xv) in gx.data_mut().iter_mut().zip(x.data()) {
        if xv < 0.0 {
            *g *= alpha;
        }
    }
    gx
}

/// Windowed maxima over the time axis of `x: [n, c, t]`.
///
/// Returns the pooled tensor and the flat argmax index (into `x`'s data) per
/// output element. Ties resolve to the first maximal position so backward is
/// deterministic.
pub fn maxpool1d_forward(
    x: &Tensor,
    width: usize,
    stride: usize,
) -> Result<(Tensor, Vec<u32>), NnError> {
    let (n, c, t) = (x.dim(0), x.dim(1), x.dim(2));
    if width == 0 || width > t {
        return Err(ShapeError::Window {
            op: "maxpool1d_forward",
            width,
            len: t,
        }
        .into());
    }
    let t_out = (t - width) / stride + 1;
    let mut out = Tensor::zeros(&[n, c, t_out]);
    let mut arg = vec![0u32; n * c * t_out];
    let xd = x.data();
    let od = out.data_mut();
    for bi in 0..n {
        for ci in 0..c {
            let x_base = (bi * c + ci) * t;
            let o_base = (bi * c + ci) * t_out;
            for to in 0..t_out {
                let start = x_base + to * stride;
                let mut best = xd[start];
                let mut best_at = start;
                for k in 1..width {
                    let v = xd[start + k];
                    if v > best {
                        best = v;
                        best_at = start + k;
                    }
                }
                od[o_base + to] = best;
                arg[o_base + to] = best_at as u32;
            }
        }
    }
    Ok((out, arg))
}

/// Routes each upstream gradient entirely to its cached argmax position.
pub fn maxpool1d_backward(grad_out: &Tensor, argmax: &[u32], input_shape: &[usize]) -> Tensor {
    let mut gx = Tensor::zeros(input_shape);
    let gxd = gx.data_mut();
    for (g, &at) in grad_out.data().iter().zip(argmax) {
        gxd[at as usize] += g;
    }
    gx
}

/// Affine map `a · wᵀ + b` for `a: [n, in]`, `w: [out, in]`, `b: [out]`.
pub fn linear_forward(a: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    let (n, fin) = (a.dim(0), a.dim(1));
    let (fout, w_in) = (w.dim(0), w.dim(1));
    if w_in != fin {
        return Err(ShapeError::Axis {
            op: "linear_forward",
            axis: 1,
            name: "in_features",
            expected: w_in,
            got: fin,
        }
        .into());
    }
    if b.len() != fout {
        return Err(ShapeError::Axis {
            op: "linear_forward",
            axis: 0,
            name: "bias",
            expected: fout,
            got: b.len(),
        }
        .into());
    }
    let mut out = Tensor::zeros(&[n, fout]);
    let ad = a.data();
    let wd = w.data();
    let bd = b.data();
    let od = out.data_mut();
    for bi in 0..n {
        for j in 0..fout {
            let mut acc = bd[j];
            let a_base = bi * fin;
            let w_base = j * fin;
            for i in 0..fin {
                acc += ad[a_base + i] * wd[w_base + i];
            }
            od[bi * fout + j] = acc;
        }
    }
    out.debug_assert_finite("linear_forward");
    Ok(out)
}

/// Gradients of the affine map: `(grad_w, grad_b, grad_input)` where
/// `grad_w = gᵀ·a`, `grad_b` is the batch sum of `g`, `grad_input = g·w`.
pub fn linear_backward(
    grad_out: &Tensor,
    a: &Tensor,
    w: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (n, fin) = (a.dim(0), a.dim(1));
    let (fout, _) = (w.dim(0), w.dim(1));
    if grad_out.shape() != [n, fout] {
        return Err(ShapeError::Axis {
            op: "linear_backward",
            axis: 1,
            name: "out_features",
            expected: fout,
            got: grad_out.shape().last().copied().unwrap_or(0),
        }
        .into());
    }
    let gd = grad_out.data();
    let ad = a.data();
    let wd = w.data();
    let mut gw = Tensor::zeros(&[fout, fin]);
    let mut gb = Tensor::zeros(&[fout]);
    let mut ga = Tensor::zeros(&[n, fin]);
    {
        let gwd = gw.data_mut();
        let gbd = gb.data_mut();
        for bi in 0..n {
            for j in 0..fout {
                let g = gd[bi * fout + j];
                gbd[j] += g;
                let a_base = bi * fin;
                let w_base = j * fin;
                for i in 0..fin {
                    gwd[w_base + i] += g * ad[a_base + i];
                }
            }
        }
    }
    {
        let gad = ga.data_mut();
        for bi in 0..n {
            for j in 0..fout {
                let g = gd[bi * fout + j];
                let w_base = j * fin;
                let a_base = bi * fin;
                for i in 0..fin {
                    gad[a_base + i] += g * wd[w_base + i];
                }
            }
        }
    }
    Ok((gw, gb, ga))
}

/// The weight-gradient half of the linear backward pass, `gᵀ·a`, computable
/// without the weights themselves.
pub fn weight_grad(grad_out: &Tensor, a: &Tensor) -> Result<Tensor, NnError> {
    let (n, fin) = (a.dim(0), a.dim(1));
    let fout = grad_out.dim(1);
    if grad_out.dim(0) != n {
        return Err(ShapeError::Axis {
            op: "weight_grad",
            axis: 0,
            name: "batch",
            expected: n,
            got: grad_out.dim(0),
        }
        .into());
    }
    let mut gw = Tensor::zeros(&[fout, fin]);
    let gd = grad_out.data();
    let ad = a.data();
    let gwd = gw.data_mut();
    for bi in 0..n {
        for j in 0..fout {
            let g = gd[bi * fout + j];
            for i in 0..fin {
                gwd[j * fin + i] += g * ad[bi * fin + i];
            }
        }
    }
    Ok(gw)
}

/// Softmax over the class axis followed by mean-reduced cross-entropy.
///
/// Returns `(probabilities, loss, grad_logits)` with
/// `grad_logits = (ŷ − onehot(y)) / n`.
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[u8],
) -> Result<(Tensor, f32, Tensor), NnError> {
    let (n, classes) = (logits.dim(0), logits.dim(1));
    if labels.len() != n {
        return Err(ShapeError::Axis {
            op: "softmax_cross_entropy",
            axis: 0,
            name: "batch",
            expected: n,
            got: labels.len(),
        }
        .into());
    }
    for (i, &y) in labels.iter().enumerate() {
        if y as usize >= classes {
            return Err(NnError::LabelOutOfRange {
                index: i,
                label: y as usize,
                classes,
            });
        }
    }
    let ld = logits.data();
    let mut probs = Tensor::zeros(&[n, classes]);
    let mut grad = Tensor::zeros(&[n, classes]);
    let mut loss = 0.0f32;
    let inv_n = 1.0 / n as f32;
    {
        let pd = probs.data_mut();
        let gd = grad.data_mut();
        for bi in 0..n {
            let row = &ld[bi * classes..(bi + 1) * classes];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut denom = 0.0f32;
            for j in 0..classes {
                let e = (row[j] - max).exp();
                pd[bi * classes + j] = e;
                denom += e;
            }
            for j in 0..classes {
                pd[bi * classes + j] /= denom;
            }
            let y = labels[bi] as usize;
            // -log softmax_y in log-sum-exp form; NaN logits propagate
            loss += (denom.ln() + max - row[y]) * inv_n;
            for j in 0..classes {
                let delta = if j == y { 1.0 } else { 0.0 };
                gd[bi * classes + j] = (pd[bi * classes + j] - delta) * inv_n;
            }
        }
    }
    Ok((probs, loss, grad))
}
