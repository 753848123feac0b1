//! Recording tape for reverse-mode differentiation.
//!
//! Each method on [`Tape`] evaluates an operation eagerly, stores the
//! result together with whatever the backward pass needs, and returns a
//! [`Var`] handle. [`Tape::backward`] walks the record in reverse once;
//! a consumed tape refuses a second pass.

use std::collections::HashMap;

use crate::error::{shape_err, Result, TensorError};
use crate::fft;
use crate::ops;
use crate::store::ParameterStore;
use crate::tensor::Tensor;

pub const CHANNEL_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Input,
    Param(String),
    Conv2d { x: Var, w: Var, b: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    LeakyRelu { x: Var, slope: f64 },
    ChannelNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Linear { x: Var, w: Var, b: Var },
    Upsample { x: Var },
    Concat { parts: Vec<Var> },
    Softmax { x: Var },
    CircConv { n: Var, f: Var },
    Add { a: Var, b: Var },
    AddN { parts: Vec<Var> },
    Scale { x: Var, k: f64 },
    Sum { x: Var },
    WeightedSum { x: Var, weights: Vec<f64> },
    Exp { x: Var },
    Stack { parts: Vec<Var> },
    Angle { v: Var, target: [f64; 3] },
    Tile { f: Var },
    Reshape { x: Var },
    Channel { x: Var, index: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of differentiable inputs created with [`Tape::input`].
#[derive(Debug, Default)]
pub struct Gradients {
    inputs: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.inputs.get(&v)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    consumed: bool,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// A differentiable leaf whose gradient is returned by [`Tape::backward`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, true)
    }

    /// Records parameter `name`. Repeated calls on one tape share a node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Param(name.to_string()), true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Same-padded convolution, `x: [C_in, H, W]`, `w: [C_out, C_in, k, k]`
    /// with odd `k`, `b: [C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (cin, h, wd) = self.value(x).chw()?;
        let ws = self.value(w).shape().to_vec();
        let [cout, wcin, k, k2] = ws[..] else {
            return shape_err(format!("conv weight must be rank 4, got {ws:?}"));
        };
        if wcin != cin || k != k2 || k % 2 == 0 {
            return shape_err(format!(
                "conv weight {ws:?} incompatible with input [{cin}, {h}, {wd}]"
            ));
        }
        if self.value(b).shape() != [cout] {
            return shape_err(format!(
                "conv bias {:?}, expected [{cout}]",
                self.value(b).shape()
            ));
        }
        let out = ops::conv2d_forward(
            self.value(x).data(),
            cin,
            h,
            wd,
            self.value(w).data(),
            cout,
            k,
            self.value(b).data(),
        );
        let t = Tensor::new(&[cout, h, wd], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(t, Op::Conv2d { x, w, b }, rg))
    }

    pub fn conv2d_3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let ws = self.value(w).shape();
        if ws.len() != 4 || ws[2] != 3 || ws[3] != 3 {
            return shape_err(format!("expected a 3x3 kernel, got {ws:?}"));
        }
        self.conv2d(x, w, b)
    }

    pub fn max_pool2x2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err(format!("max pool needs even spatial dims, got {h}x{w}"));
        }
        let (out, argmax) = ops::maxpool2x2_forward(self.value(x).data(), c, h, w);
        let t = Tensor::new(&[c, h / 2, w / 2], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::MaxPool { x, argmax }, rg))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let t = self.value(x).map(|v| if v >= 0.0 { v } else { slope * v });
        let rg = self.rg(&[x]);
        self.push(t, Op::LeakyRelu { x, slope }, rg)
    }

    /// Per-channel spatial normalization with learned affine `gamma`, `beta`.
    pub fn channel_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return shape_err(format!("channel norm affine must be [{c}]"));
        }
        let (out, xhat, inv_std) = ops::channel_norm_forward(
            self.value(x).data(),
            c,
            h * w,
            self.value(gamma).data(),
            self.value(beta).data(),
            CHANNEL_NORM_EPS,
        );
        let t = Tensor::new(&[c, h, w], out)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            t,
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// `W · flatten(x) + b` with `W: [N, K]`, `b: [N]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let ws = self.value(w).shape().to_vec();
        let [n, k] = ws[..] else {
            return shape_err(format!("linear weight must be rank 2, got {ws:?}"));
        };
        if self.value(x).len() != k || self.value(b).shape() != [n] {
            return shape_err(format!(
                "linear {ws:?} with input of {} values and bias {:?}",
                self.value(x).len(),
                self.value(b).shape()
            ));
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let out: Vec<f64> = (0..n)
            .map(|i| {
                bv[i]
                    + wv[i * k..(i + 1) * k]
                        .iter()
                        .zip(xv)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(Tensor::from_vec(out), Op::Linear { x, w, b }, rg))
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        let out = ops::upsample2x_forward(self.value(x).data(), c, h, w);
        let t = Tensor::new(&[c, 2 * h, 2 * w], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Upsample { x }, rg))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat of zero tensors");
        }
        let (_, h, w) = self.value(parts[0]).chw()?;
        let mut c_total = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (c, ph, pw) = self.value(p).chw()?;
            if (ph, pw) != (h, w) {
                return shape_err(format!(
                    "concat spatial mismatch: {h}x{w} vs {ph}x{pw}"
                ));
            }
            c_total += c;
            data.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::new(&[c_total, h, w], data)?;
        let rg = self.rg(parts);
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Softmax over all elements jointly (e.g. every uv bin of a map).
    pub fn softmax2d(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = ops::softmax_forward(xv.data());
        let t = Tensor::new(xv.shape(), out).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(t, Op::Softmax { x }, rg)
    }

    /// Wrap-around 2-D convolution of two `[H, W]` maps via FFT.
    pub fn circular_conv(&mut self, n: Var, f: Var) -> Result<Var> {
        let ns = self.value(n).shape().to_vec();
        if ns.len() != 2 || self.value(f).shape() != ns.as_slice() {
            return shape_err(format!(
                "circular convolution needs equal [H, W] maps, got {ns:?} and {:?}",
                self.value(f).shape()
            ));
        }
        let out = fft::circular_convolve(self.value(n).data(), self.value(f).data(), ns[0], ns[1])?;
        let t = Tensor::new(&ns, out)?;
        let rg = self.rg(&[n, f]);
        Ok(self.push(t, Op::CircConv { n, f }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return shape_err(format!(
                "add of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let mut t = self.value(a).clone();
        t.add_assign(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = parts.split_first() else {
            return shape_err("sum of zero tensors");
        };
        let mut t = self.value(first).clone();
        for &p in rest {
            if self.value(p).shape() != t.shape() {
                return shape_err(format!(
                    "add_n of {:?} and {:?}",
                    t.shape(),
                    self.value(p).shape()
                ));
            }
            t.add_assign(self.value(p));
        }
        let rg = self.rg(parts);
        Ok(self.push(
            t,
            Op::AddN {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let t = self.value(x).map(|v| v * k);
        let rg = self.rg(&[x]);
        self.push(t, Op::Scale { x, k }, rg)
    }

    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let s = self.add_n(parts)?;
        Ok(self.scale(s, 1.0 / parts.len() as f64))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(t, Op::Sum { x }, rg)
    }

    /// `Σ weights[i] · x[i]` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return shape_err(format!(
                "{} weights for {} values",
                weights.len(),
                self.value(x).len()
            ));
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(&weights)
            .map(|(a, b)| a * b)
            .sum();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }, rg))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::exp);
        let rg = self.rg(&[x]);
        self.push(t, Op::Exp { x }, rg)
    }

    /// Stacks single-element values into a vector.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.value(p).len() != 1 {
                return shape_err(format!("stack of non-scalar {:?}", self.value(p).shape()));
            }
            out.push(self.value(p).item());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_vec(out),
            Op::Stack {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Angle in degrees between a 3-vector and a fixed target.
    pub fn angle_deg(&mut self, v: Var, target: [f64; 3]) -> Result<Var> {
        if self.value(v).len() != 3 {
            return shape_err(format!("angle of {:?}, expected 3 values", self.value(v).shape()));
        }
        let d = self.value(v).data();
        let (a, _) = ops::angle_deg_with_grad([d[0], d[1], d[2]], target);
        let rg = self.rg(&[v]);
        Ok(self.push(Tensor::scalar(a), Op::Angle { v, target }, rg))
    }

    /// Repeats a `[C]` vector over an `h × w` grid, giving `[C, h, w]`.
    pub fn tile_spatial(&mut self, f: Var, h: usize, w: usize) -> Result<Var> {
        let fv = self.value(f);
        if fv.rank() != 1 {
            return shape_err(format!("tile expects a vector, got {:?}", fv.shape()));
        }
        let c = fv.len();
        let mut data = Vec::with_capacity(c * h * w);
        for &v in fv.data() {
            data.extend(std::iter::repeat(v).take(h * w));
        }
        let t = Tensor::new(&[c, h, w], data)?;
        let rg = self.rg(&[f]);
        Ok(self.push(t, Op::Tile { f }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// Channel `index` of a `[C, H, W]` tensor as an `[H, W]` map.
    pub fn channel(&mut self, x: Var, index: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if index >= c {
            return shape_err(format!("channel {index} of {c}"));
        }
        let data = self.value(x).data()[index * h * w..(index + 1) * h * w].to_vec();
        let t = Tensor::new(&[h, w], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Channel { x, index }, rg))
    }

    /// Back-propagates from a single-element `loss`. Parameter gradients are
    /// accumulated into `store`; input gradients are returned. Every
    /// parameter recorded on the tape receives a gradient (possibly zero).
    pub fn backward(&mut self, loss: Var, store: &mut ParameterStore) -> Result<Gradients> {
        if self.consumed {
            return Err(TensorError::State("tape already consumed by a backward pass".into()));
        }
        self.consumed = true;
        if self.value(loss).len() != 1 {
            return shape_err(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            ));
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape(), vec![1.0])?);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => match &self.nodes[i].op {
                    Op::Param(_) | Op::Input => Tensor::zeros(self.nodes[i].value.shape()),
                    _ => continue,
                },
            };
            self.backward_node(i, g, &mut grads, store, &mut out)?;
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(
        &self,
        i: usize,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        store: &mut ParameterStore,
        out: &mut Gradients,
    ) -> Result<()> {
        let node = &self.nodes[i];
        let shaped = |v: Var, data: Vec<f64>| Tensor::new(self.value(v).shape(), data);
        match &node.op {
            Op::Constant => {}
            Op::Input => {
                out.inputs.insert(Var(i), g);
            }
            Op::Param(name) => store.accumulate_grad(name, &g)?,
            Op::Conv2d { x, w, b } => {
                let (cin, h, wd) = self.value(*x).chw()?;
                let ws = self.value(*w).shape();
                let (cout, k) = (ws[0], ws[2]);
                let want_x = self.nodes[x.0].requires_grad;
                let (gx, gw, gb) = ops::conv2d_backward(
                    self.value(*x).data(),
                    cin,
                    h,
                    wd,
                    self.value(*w).data(),
                    cout,
                    k,
                    g.data(),
                    want_x,
                );
                if let Some(gx) = gx {
                    self.accumulate(grads, *x, shaped(*x, gx)?);
                }
                self.accumulate(grads, *w, shaped(*w, gw)?);
                self.accumulate(grads, *b, shaped(*b, gb)?);
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![0.0; self.value(*x).len()];
                for (gv, &idx) in g.data().iter().zip(argmax) {
                    gx[idx] += gv;
                }
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
            Op::LeakyRelu { x, slope } => {
                let gx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| if xv >= 0.0 { gv } else { slope * gv })
                    .collect();
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (_, h, w) = self.value(*x).chw()?;
                let (gx, gg, gb) = ops::channel_norm_backward(
                    g.data(),
                    xhat,
                    inv_std,
                    self.value(*gamma).data(),
                    h * w,
                );
                self.accumulate(grads, *x, shaped(*x, gx)?);
                self.accumulate(grads, *gamma, shaped(*gamma, gg)?);
                self.accumulate(grads, *beta, shaped(*beta, gb)?);
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let k = xv.len();
                let gv = g.data();
                let mut gx = vec![0.0; k];
                let mut gw = vec![0.0; wv.len()];
                for (r, &go) in gv.iter().enumerate() {
                    let wrow = &wv[r * k..(r + 1) * k];
                    for j in 0..k {
                        gx[j] += go * wrow[j];
                        gw[r * k + j] = go * xv[j];
                    }
                }
                self.accumulate(grads, *x, shaped(*x, gx)?);
                self.accumulate(grads, *w, shaped(*w, gw)?);
                self.accumulate(grads, *b, shaped(*b, gv.to_vec())?);
            }
            Op::Upsample { x } => {
                let (c, h, w) = self.value(*x).chw()?;
                let gx = ops::upsample2x_backward(g.data(), c, h, w);
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    let gp = g.data()[offset..offset + n].to_vec();
                    offset += n;
                    self.accumulate(grads, p, shaped(p, gp)?);
                }
            }
            Op::Softmax { x } => {
                let gx = ops::softmax_backward(node.value.data(), g.data());
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
            Op::CircConv { n, f } => {
                let s = self.value(*n).shape();
                let (h, w) = (s[0], s[1]);
                if self.nodes[n.0].requires_grad {
                    let gn = fft::circular_correlate(g.data(), self.value(*f).data(), h, w)?;
                    self.accumulate(grads, *n, shaped(*n, gn)?);
                }
                if self.nodes[f.0].requires_grad {
                    let gf = fft::circular_correlate(g.data(), self.value(*n).data(), h, w)?;
                    self.accumulate(grads, *f, shaped(*f, gf)?);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g);
            }
            Op::AddN { parts } => {
                for &p in parts {
                    self.accumulate(grads, p, g.clone());
                }
            }
            Op::Scale { x, k } => {
                self.accumulate(grads, *x, g.map(|v| v * k));
            }
            Op::Sum { x } => {
                let gv = g.item();
                let t = Tensor::full(self.value(*x).shape(), gv);
                self.accumulate(grads, *x, t);
            }
            Op::WeightedSum { x, weights } => {
                let gv = g.item();
                let gx = weights.iter().map(|w| w * gv).collect();
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
            Op::Exp { x } => {
                let gx = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(e, gv)| e * gv)
                    .collect();
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
            Op::Stack { parts } => {
                for (&p, &gv) in parts.iter().zip(g.data()) {
                    self.accumulate(grads, p, shaped(p, vec![gv])?);
                }
            }
            Op::Angle { v, target } => {
                let d = self.value(*v).data();
                let (_, ga) = ops::angle_deg_with_grad([d[0], d[1], d[2]], *target);
                let gv = g.item();
                let gx = ga.iter().map(|x| x * gv).collect();
                self.accumulate(grads, *v, shaped(*v, gx)?);
            }
            Op::Tile { f } => {
                let c = self.value(*f).len();
                let hw = g.len() / c;
                let gf = g.data().chunks(hw).map(|ch| ch.iter().sum()).collect();
                self.accumulate(grads, *f, shaped(*f, gf)?);
            }
            Op::Reshape { x } => {
                let gx = g.into_data();
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
            Op::Channel { x, index } => {
                let mut gx = vec![0.0; self.value(*x).len()];
                let n = g.len();
                gx[index * n..(index + 1) * n].copy_from_slice(g.data());
                self.accumulate(grads, *x, shaped(*x, gx)?);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let mut store = ParameterStore::new();
        let x = tape.input(Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap());
        let s = tape.sum(x);
        let g = tape.backward(s, &mut store).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn second_backward_is_state_error() {
        let mut tape = Tape::new();
        let mut store = ParameterStore::new();
        let x = tape.input(Tensor::scalar(2.0));
        let s = tape.sum(x);
        tape.backward(s, &mut store).unwrap();
        assert!(matches!(tape.backward(s, &mut store), Err(TensorError::State(_))));
    }

    #[test]
    fn constant_graph_gives_zero_param_grads() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::full(&[3], 2.0)).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let z = tape.scale(w, 0.0);
        let s = tape.sum(z);
        tape.backward(s, &mut store).unwrap();
        assert_eq!(store.get("w").unwrap().grad.as_ref().unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn leaky_relu_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![-1.0, 2.0]));
        let y = tape.leaky_relu(x, 0.01);
        assert_eq!(tape.value(y).data(), &[-0.01, 2.0]);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let mut tape = Tape::new();
        let mut store = ParameterStore::new();
        let x = tape.input(Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let p = tape.max_pool2x2(x).unwrap();
        assert_eq!(tape.value(p).data(), &[4.0]);
        let s = tape.sum(p);
        let g = tape.backward(s, &mut store).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn conv_shape_mismatch_names_dims() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 4, 4]));
        let w = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let err = tape.conv2d(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[1, 3, 3, 3]") && err.contains("[2, 4, 4]"), "{err}");
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[4, 4], 3.5));
        let p = tape.softmax2d(x);
        for &v in tape.value(p).data() {
            assert!((v - 1.0 / 16.0).abs() < 1e-15);
        }
    }
}
