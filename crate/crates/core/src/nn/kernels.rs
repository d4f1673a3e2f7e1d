//! Per-layer forward/backward kernels.
//!
//! All loops run in fixed ascending index order; nothing here reassociates a
//! float reduction.

use crate::mathfn;
use crate::tensor::{Tensor, TensorError};

/// Activation snapshot a layer keeps for its backward pass.
#[derive(Debug)]
pub(crate) enum Cache {
    Linear { input: Tensor },
    Conv { input: Tensor },
    BatchNorm { x_hat: Tensor, inv_std: Vec<f64> },
    Relu { active: Vec<bool> },
    Flatten { input_shape: Vec<usize> },
}

// ---------------------------------------------------------------------------
// Linear (weights stored in×out so the forward pass is a plain row-major GEMM)
// ---------------------------------------------------------------------------

pub(crate) fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let mut y = crate::tensor::matmul(x, w)?;
    let (n, _) = y.dims2()?;
    for i in 0..n {
        for (v, &bias) in y.row_mut(i).iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    Ok(y)
}

/// Returns `(dx, dw, db)`.
pub(crate) fn linear_backward(
    dy: &Tensor,
    x: &Tensor,
    w: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), TensorError> {
    let dw = matmul_at_b(x, dy)?;
    let dx = matmul_a_bt(dy, w)?;
    let (n, out) = dy.dims2()?;
    let mut db = vec![0.0; out];
    for i in 0..n {
        for (d, &g) in db.iter_mut().zip(dy.row(i)) {
            *d += g;
        }
    }
    Ok((dx, dw, Tensor::from_parts(vec![out], db)))
}

/// `c[t,j] = Σ_i a[i,t]·b[i,j]`, i ascending (aᵀ·b).
fn matmul_at_b(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let (na, k) = a.dims2()?;
    let (nb, j) = b.dims2()?;
    if na != nb {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_at_b",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; k * j];
    for i in 0..na {
        let a_row = a.row(i);
        let b_row = b.row(i);
        for (t, &a_it) in a_row.iter().enumerate() {
            let o_row = &mut out[t * j..(t + 1) * j];
            for (o, &b_ij) in o_row.iter_mut().zip(b_row) {
                *o += a_it * b_ij;
            }
        }
    }
    Ok(Tensor::from_parts(vec![k, j], out))
}

/// `c[i,t] = Σ_j a[i,j]·b[t,j]`, j ascending (a·bᵀ).
fn matmul_a_bt(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let (n, ja) = a.dims2()?;
    let (t, jb) = b.dims2()?;
    if ja != jb {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_a_bt",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; n * t];
    for i in 0..n {
        let a_row = a.row(i);
        for tt in 0..t {
            let b_row = b.row(tt);
            let mut sum = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                sum += av * bv;
            }
            out[i * t + tt] = sum;
        }
    }
    Ok(Tensor::from_parts(vec![n, t], out))
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

pub(crate) fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn dims4(t: &Tensor, what: &'static str) -> Result<(usize, usize, usize, usize), TensorError> {
    match t.shape() {
        &[a, b, c, d] => Ok((a, b, c, d)),
        _ => Err(TensorError::BadShape {
            shape: t.shape().to_vec(),
            reason: format!("expected 4-d tensor for {what}"),
        }),
    }
}

pub(crate) fn conv_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, TensorError> {
    let (n, ic, h, wd) = dims4(x, "conv input")?;
    let (oc, wic, kh, kw) = dims4(w, "conv weight")?;
    if ic != wic {
        return Err(TensorError::ShapeMismatch {
            op: "conv_forward",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    let oh = conv_out_extent(h, kh, stride, pad).ok_or(TensorError::BadShape {
        shape: x.shape().to_vec(),
        reason: "spatial extent smaller than kernel".into(),
    })?;
    let ow = conv_out_extent(wd, kw, stride, pad).ok_or(TensorError::BadShape {
        shape: x.shape().to_vec(),
        reason: "spatial extent smaller than kernel".into(),
    })?;

    let xd = x.data();
    let wdat = w.data();
    let bd = b.data();
    let mut out = vec![0.0; n * oc * oh * ow];
    for i in 0..n {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bd[o];
                    for c in 0..ic {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let xi = ((i * ic + c) * h + iy as usize) * wd + ix as usize;
                                let wi = ((o * ic + c) * kh + ky) * kw + kx;
                                acc += xd[xi] * wdat[wi];
                            }
                        }
                    }
                    out[((i * oc + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, oc, oh, ow], out))
}

/// Returns `(dx, dw, db)`.
pub(crate) fn conv_backward(
    dy: &Tensor,
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor), TensorError> {
    let (n, ic, h, wd) = dims4(x, "conv input")?;
    let (oc, _, kh, kw) = dims4(w, "conv weight")?;
    let (_, _, oh, ow) = dims4(dy, "conv grad")?;

    let xd = x.data();
    let wdat = w.data();
    let dyd = dy.data();
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wdat.len()];
    let mut db = vec![0.0; oc];
    for i in 0..n {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dyd[((i * oc + o) * oh + oy) * ow + ox];
                    db[o] += g;
                    for c in 0..ic {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let xi = ((i * ic + c) * h + iy as usize) * wd + ix as usize;
                                let wi = ((o * ic + c) * kh + ky) * kw + kx;
                                dw[wi] += g * xd[xi];
                                dx[xi] += g * wdat[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(w.shape().to_vec(), dw),
        Tensor::from_parts(vec![oc], db),
    ))
}

// ---------------------------------------------------------------------------
// Batch normalization
//
// Inputs are viewed as (n, features, spatial): a 2-d batch has spatial 1, a
// 4-d batch normalizes per channel over n·h·w elements. Batch statistics use
// the population variance (divisor n·spatial) both for normalization and for
// the running estimates.
// ---------------------------------------------------------------------------

pub(crate) fn bn_view(shape: &[usize]) -> Result<(usize, usize, usize), TensorError> {
    match shape {
        &[n, f] => Ok((n, f, 1)),
        &[n, c, h, w] => Ok((n, c, h * w)),
        _ => Err(TensorError::BadShape {
            shape: shape.to_vec(),
            reason: "batch norm expects a 2-d or 4-d batch".into(),
        }),
    }
}

pub(crate) struct BnTrainOut {
    pub y: Tensor,
    pub x_hat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

pub(crate) fn bn_forward_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<BnTrainOut, TensorError> {
    let (n, f, s) = bn_view(x.shape())?;
    let count = (n * s) as f64;
    let xd = x.data();
    let mut mean = vec![0.0; f];
    for i in 0..n {
        for c in 0..f {
            let base = (i * f + c) * s;
            let mut acc = 0.0;
            for j in 0..s {
                acc += xd[base + j];
            }
            mean[c] += acc;
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    let mut var = vec![0.0; f];
    for i in 0..n {
        for c in 0..f {
            let base = (i * f + c) * s;
            let m = mean[c];
            let mut acc = 0.0;
            for j in 0..s {
                let d = xd[base + j] - m;
                acc += d * d;
            }
            var[c] += acc;
        }
    }
    for v in var.iter_mut() {
        *v /= count;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();

    let gd = gamma.data();
    let bd = beta.data();
    let mut x_hat = vec![0.0; xd.len()];
    let mut y = vec![0.0; xd.len()];
    for i in 0..n {
        for c in 0..f {
            let base = (i * f + c) * s;
            let (m, is, g, b) = (mean[c], inv_std[c], gd[c], bd[c]);
            for j in 0..s {
                let xh = (xd[base + j] - m) * is;
                x_hat[base + j] = xh;
                y[base + j] = g * xh + b;
            }
        }
    }
    Ok(BnTrainOut {
        y: Tensor::from_parts(x.shape().to_vec(), y),
        x_hat: Tensor::from_parts(x.shape().to_vec(), x_hat),
        inv_std,
        batch_mean: mean,
        batch_var: var,
    })
}

pub(crate) fn bn_forward_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<Tensor, TensorError> {
    let (n, f, s) = bn_view(x.shape())?;
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    let rm = running_mean.data();
    let rv = running_var.data();
    let mut y = vec![0.0; xd.len()];
    for i in 0..n {
        for c in 0..f {
            let base = (i * f + c) * s;
            let is = 1.0 / (rv[c] + eps).sqrt();
            let (m, g, b) = (rm[c], gd[c], bd[c]);
            for j in 0..s {
                y[base + j] = g * (xd[base + j] - m) * is + b;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), y))
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn bn_backward(
    dy: &Tensor,
    x_hat: &Tensor,
    inv_std: &[f64],
    gamma: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), TensorError> {
    let (n, f, s) = bn_view(dy.shape())?;
    let count = (n * s) as f64;
    let dyd = dy.data();
    let xh = x_hat.data();
    let gd = gamma.data();

    let mut sum_dy = vec![0.0; f];
    let mut sum_dy_xhat = vec![0.0; f];
    for i in 0..n {
        for c in 0..f {
            let base = (i * f + c) * s;
            let mut a0 = 0.0;
            let mut a1 = 0.0;
            for j in 0..s {
                a0 += dyd[base + j];
                a1 += dyd[base + j] * xh[base + j];
            }
            sum_dy[c] += a0;
            sum_dy_xhat[c] += a1;
        }
    }

    let mut dx = vec![0.0; dyd.len()];
    for i in 0..n {
        for c in 0..f {
            let base = (i * f + c) * s;
            let scale = gd[c] * inv_std[c] / count;
            for j in 0..s {
                dx[base + j] = scale
                    * (count * dyd[base + j] - sum_dy[c] - xh[base + j] * sum_dy_xhat[c]);
            }
        }
    }
    Ok((
        Tensor::from_parts(dy.shape().to_vec(), dx),
        Tensor::from_parts(vec![f], sum_dy_xhat),
        Tensor::from_parts(vec![f], sum_dy),
    ))
}

// ---------------------------------------------------------------------------
// ReLU / Flatten
// ---------------------------------------------------------------------------

pub(crate) fn relu_forward(x: &Tensor) -> (Tensor, Vec<bool>) {
    let mut y = x.clone();
    let mut active = vec![false; x.len()];
    for (v, a) in y.data_mut().iter_mut().zip(active.iter_mut()) {
        if *v > 0.0 {
            *a = true;
        } else {
            *v = 0.0;
        }
    }
    (y, active)
}

pub(crate) fn relu_backward(dy: &Tensor, active: &[bool]) -> Tensor {
    let mut dx = dy.clone();
    for (v, &a) in dx.data_mut().iter_mut().zip(active) {
        if !a {
            *v = 0.0;
        }
    }
    dx
}

pub(crate) fn flatten_forward(x: &Tensor) -> Result<Tensor, TensorError> {
    let n = x.shape()[0];
    let rest: usize = x.shape()[1..].iter().product();
    x.reshape(&[n, rest])
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy (fused)
// ---------------------------------------------------------------------------

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits
/// (already divided by the batch size).
pub(crate) fn softmax_ce(logits: &Tensor, one_hot: &Tensor) -> Result<(f64, Tensor), TensorError> {
    let (n, c) = logits.dims2()?;
    if one_hot.shape() != logits.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "softmax_ce",
            left: logits.shape().to_vec(),
            right: one_hot.shape().to_vec(),
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut dz = vec![0.0; n * c];
    for i in 0..n {
        let z = logits.row(i);
        let y = one_hot.row(i);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in z {
            sum += mathfn::exp(v - m);
        }
        let log_sum = m + mathfn::ln(sum);
        let mut dot = 0.0;
        for (&zv, &yv) in z.iter().zip(y) {
            dot += zv * yv;
        }
        loss += log_sum - dot;
        let drow = &mut dz[i * c..(i + 1) * c];
        for ((d, &zv), &yv) in drow.iter_mut().zip(z).zip(y) {
            *d = (mathfn::exp(zv - m) / sum - yv) * inv_n;
        }
    }
    Ok((loss * inv_n, Tensor::from_parts(vec![n, c], dz)))
}
