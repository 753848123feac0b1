//! Forward and backward kernels on raw slices.
//!
//! These are the numerical cores behind the [`Tape`](crate::Tape) methods.
//! Layout is always row-major `[C, H, W]`.

/// Same-padded 2-D cross-correlation with an odd square kernel.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    k: usize,
    bias: &[f64],
) -> Vec<f64> {
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; cout * hw];
    for co in 0..cout {
        let o = &mut out[co * hw..(co + 1) * hw];
        o.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let xi = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let wv = weight[((co * cin + ci) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let sx0 = (x0 as isize + dx) as usize;
                        let irow = &xi[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        for (ov, iv) in orow.iter_mut().zip(irow) {
                            *ov += wv * iv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    cout: usize,
    k: usize,
    grad: &[f64],
    want_x: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let hw = h * w;
    let pad = (k / 2) as isize;
    let mut gx = if want_x { Some(vec![0.0; cin * hw]) } else { None };
    let mut gw = vec![0.0; weight.len()];
    let gb: Vec<f64> = grad.chunks(hw).map(|c| c.iter().sum()).collect();
    for co in 0..cout {
        let g = &grad[co * hw..(co + 1) * hw];
        for ci in 0..cin {
            let xi = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..k {
                    let widx = ((co * cin + ci) * k + ky) * k + kx;
                    let wv = weight[widx];
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let sx0 = (x0 as isize + dx) as usize;
                    let n = x1 - x0;
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let grow = &g[y * w + x0..y * w + x1];
                        let irow = &xi[sy * w + sx0..sy * w + sx0 + n];
                        acc += grow.iter().zip(irow).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gx) = gx.as_mut() {
                            if wv != 0.0 {
                                let base = ci * hw + sy * w + sx0;
                                let xrow = &mut gx[base..base + n];
                                for (xv, gv) in xrow.iter_mut().zip(grow) {
                                    *xv += wv * gv;
                                }
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

/// Output rows/cols `[lo, hi)` whose source index `i + d` lies in `[0, n)`.
fn valid_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    (lo.min(hi), hi)
}

/// 2×2 max pooling with stride 2. Returns the pooled values and the flat
/// input index of each maximum (first maximum wins ties).
pub fn maxpool2x2_forward(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + 2 * y * w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Per-channel normalization over spatial positions. Returns output,
/// normalized activations and inverse standard deviations.
pub fn channel_norm_forward(
    x: &[f64],
    c: usize,
    hw: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let xs = &x[ch * hw..(ch + 1) * hw];
        let mean = xs.iter().sum::<f64>() / hw as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        for i in 0..hw {
            let n = (xs[i] - mean) * is;
            xhat[ch * hw + i] = n;
            out[ch * hw + i] = gamma[ch] * n + beta[ch];
        }
    }
    (out, xhat, inv_std)
}

pub fn channel_norm_backward(
    grad: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    hw: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = inv_std.len();
    let mut gx = vec![0.0; grad.len()];
    let mut gg = vec![0.0; c];
    let mut gb = vec![0.0; c];
    let n = hw as f64;
    for ch in 0..c {
        let g = &grad[ch * hw..(ch + 1) * hw];
        let xh = &xhat[ch * hw..(ch + 1) * hw];
        let sum_g: f64 = g.iter().sum();
        let sum_gx: f64 = g.iter().zip(xh).map(|(a, b)| a * b).sum();
        gg[ch] = sum_gx;
        gb[ch] = sum_g;
        let k = gamma[ch] * inv_std[ch] / n;
        for i in 0..hw {
            gx[ch * hw + i] = k * (n * g[i] - sum_g - xh[i] * sum_gx);
        }
    }
    (gx, gg, gb)
}

pub fn upsample2x_forward(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                out[(ch * oh + y) * ow + xx] = x[(ch * h + y / 2) * w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample2x_backward(grad: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut gx = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                gx[(ch * h + y / 2) * w + xx / 2] += grad[(ch * oh + y) * ow + xx];
            }
        }
    }
    gx
}

/// Softmax over every element jointly.
pub fn softmax_forward(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

pub fn softmax_backward(p: &[f64], grad: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad).map(|(a, b)| a * b).sum();
    p.iter().zip(grad).map(|(pv, gv)| pv * (gv - dot)).collect()
}

/// Angle in degrees between `a` and a fixed target, with its gradient
/// with respect to `a`. The gradient is zero when the vectors are parallel.
pub fn angle_deg_with_grad(a: [f64; 3], b: [f64; 3]) -> (f64, [f64; 3]) {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let theta = cn.atan2(dot);
    let deg = 180.0 / std::f64::consts::PI;

    let na2 = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    let na = na2.sqrt();
    if cn == 0.0 || na == 0.0 || nb == 0.0 {
        return (theta * deg, [0.0; 3]);
    }
    let c = dot / (na * nb);
    let s = cn / (na * nb);
    let mut g = [0.0; 3];
    for i in 0..3 {
        let dc = b[i] / (na * nb) - c * a[i] / na2;
        g[i] = -dc / s * deg;
    }
    (theta * deg, g)
}
