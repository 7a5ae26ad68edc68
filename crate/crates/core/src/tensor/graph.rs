use super::broadcast::{broadcast_offsets, broadcast_shape};
use super::dft::dft2_real_part;
use super::{axis_extents, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Relu { a: Var },
    Softmax { a: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, axis: usize, xhat: Vec<f64>, inv_std: Vec<f64> },
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape { a: Var },
    Transpose { a: Var, axis1: usize, axis2: usize },
    Sum { a: Var },
    Mean { a: Var },
    FourierMix { a: Var },
    CrossEntropy { logits: Var, probs: Vec<f64>, labels: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of executed operations.
///
/// Nodes are appended in execution order, so the backward pass is a single
/// reverse sweep over the node list. Leaf gradients accumulate across
/// [`Graph::backward`] calls until [`Graph::zero_grad`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. It receives gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.push(t, Op::Leaf, requires_grad)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any has been propagated to it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Batched matrix product `[.., n, k] · [.., k, m] → [.., n, m]` with
    /// broadcasting over the leading dimensions.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let geo = MatMulGeometry::new(&sa, &sb)?;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; geo.out_shape.iter().product()];
        let (n, k, m) = (geo.n, geo.k, geo.m);
        for (bi, (&ao, &bo)) in geo.a_offsets.iter().zip(&geo.b_offsets).enumerate() {
            let am = &ad[ao * n * k..(ao + 1) * n * k];
            let bm = &bd[bo * k * m..(bo + 1) * k * m];
            let cm = &mut out[bi * n * m..(bi + 1) * n * m];
            for i in 0..n {
                let crow = &mut cm[i * m..(i + 1) * m];
                for p in 0..k {
                    let av = am[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &bm[p * m..(p + 1) * m];
                    for (c, &bv) in crow.iter_mut().zip(brow) {
                        *c += av * bv;
                    }
                }
            }
        }
        let t = Tensor::new(&geo.out_shape, out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::MatMul { a, b }, rg))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = broadcast_shape("add", self.shape(a), self.shape(b))?;
        let oa = broadcast_offsets(&shape, self.shape(a));
        let ob = broadcast_offsets(&shape, self.shape(b));
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let data = oa.iter().zip(&ob).map(|(&i, &j)| ad[i] + bd[j]).collect();
        let t = Tensor::new(&shape, data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a);
        let t = Tensor::new(v.shape(), v.data().iter().map(|x| x * factor).collect())
            .expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(t, Op::Scale { a, factor }, rg)
    }

    /// `max(x, 0)`, propagating NaN so corrupt inputs surface in the loss.
    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&x| if x > 0.0 || x.is_nan() { x } else { 0.0 }).collect())
            .expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(t, Op::Relu { a }, rg)
    }

    /// Softmax along `axis`; each slice has its maximum subtracted first.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        check_axis("softmax", &shape, axis)?;
        let x = self.value(a).data();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("softmax input contains non-finite values".into()));
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for j in 0..inner {
                let idx = |i: usize| (o * n + i) * inner + j;
                let max = (0..n).map(|i| x[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for i in 0..n {
                    let e = (x[idx(i)] - max).exp();
                    y[idx(i)] = e;
                    total += e;
                }
                for i in 0..n {
                    y[idx(i)] /= total;
                }
            }
        }
        let t = Tensor::new(&shape, y)?;
        let rg = self.needs(&[a]);
        Ok(self.push(t, Op::Softmax { a, axis }, rg))
    }

    /// Normalizes each slice along `axis` to zero mean and unit variance,
    /// then applies `gain * x̂ + bias`. Zero-variance slices map to `bias`.
    pub fn layer_norm(&mut self, x: Var, axis: usize, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_axis("layer_norm", &shape, axis)?;
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Usage(format!("layer_norm eps must be positive, got {eps}")));
        }
        let (outer, n, inner) = axis_extents(&shape, axis);
        for (name, p) in [("gain", gain), ("bias", bias)] {
            if self.value(p).len() != n {
                return Err(Error::shape(
                    "layer_norm",
                    format!("{name} has {} elements, normalized axis has {n}", self.value(p).len()),
                ));
            }
        }
        let xd = self.value(x).data();
        let (gd, bd) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; outer * inner];
        let mut y = vec![0.0; xd.len()];
        for o in 0..outer {
            for j in 0..inner {
                let idx = |i: usize| (o * n + i) * inner + j;
                let mean = (0..n).map(|i| xd[idx(i)]).sum::<f64>() / n as f64;
                let var = (0..n).map(|i| (xd[idx(i)] - mean).powi(2)).sum::<f64>() / n as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std[o * inner + j] = is;
                for i in 0..n {
                    let h = (xd[idx(i)] - mean) * is;
                    xhat[idx(i)] = h;
                    y[idx(i)] = gd[i] * h + bd[i];
                }
            }
        }
        let t = Tensor::new(&shape, y)?;
        let rg = self.needs(&[x, gain, bias]);
        Ok(self.push(t, Op::LayerNorm { x, gain, bias, axis, xhat, inv_std }, rg))
    }

    /// Joins tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        check_axis("concat", &base, axis)?;
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(
                    "concat",
                    format!("cannot concatenate {base:?} with {s:?} along axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_extents(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let t = Tensor::new(&shape, data)?;
        let rg = self.needs(inputs);
        Ok(self.push(t, Op::Concat { inputs: inputs.to_vec(), axis }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(t, Op::Reshape { a }, rg))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, a: Var, axis1: usize, axis2: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        check_axis("transpose", &shape, axis1)?;
        check_axis("transpose", &shape, axis2)?;
        let src = transpose_sources(&shape, axis1, axis2);
        let d = self.value(a).data();
        let data = src.iter().map(|&i| d[i]).collect();
        let mut out_shape = shape;
        out_shape.swap(axis1, axis2);
        let t = Tensor::new(&out_shape, data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(t, Op::Transpose { a, axis1, axis2 }, rg))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum { a }, rg)
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Mean { a }, rg)
    }

    /// FNet token mixing: real part of the 2-D DFT over the last two axes
    /// (feature axis, then token axis), independently for every leading index.
    pub fn fourier_mix(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("fourier_mix", format!("need at least 2 axes, got {shape:?}")));
        }
        let data = fourier_mix_data(self.value(a).data(), &shape);
        let t = Tensor::new(&shape, data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(t, Op::FourierMix { a }, rg))
    }

    /// Mean cross-entropy of `(b, classes)` logits against integer labels,
    /// computed through a log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::shape(
                "cross_entropy",
                format!("logits {shape:?} against {} labels", labels.len()),
            ));
        }
        let (b, c) = (shape[0], shape[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Usage(format!("label {bad} out of range for {c} classes")));
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for i in 0..b {
            let row = &z[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
            for j in 0..c {
                probs[i * c + j] = (row[j] - lse).exp();
            }
        }
        loss /= b as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric("cross-entropy loss is not finite".into()));
        }
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, probs, labels: labels.to_vec() },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`, accumulating into every reachable
    /// leaf that requires gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                self.nodes[id].value.accumulate_grad(&g)?;
                continue;
            }
            for (input, contribution) in self.input_grads(id, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut adj[input.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `id` for upstream gradient `g`.
    fn input_grads(&self, id: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[id];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul { a, b } => {
                let geo = MatMulGeometry::new(self.shape(*a), self.shape(*b))
                    .expect("validated in forward");
                let (n, k, m) = (geo.n, geo.k, geo.m);
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let mut ga = vec![0.0; ad.len()];
                let mut gb = vec![0.0; bd.len()];
                for (bi, (&ao, &bo)) in geo.a_offsets.iter().zip(&geo.b_offsets).enumerate() {
                    let am = &ad[ao * n * k..(ao + 1) * n * k];
                    let bm = &bd[bo * k * m..(bo + 1) * k * m];
                    let gm = &g[bi * n * m..(bi + 1) * n * m];
                    let gam = &mut ga[ao * n * k..(ao + 1) * n * k];
                    for i in 0..n {
                        let grow = &gm[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &bm[p * m..(p + 1) * m];
                            gam[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    let gbm = &mut gb[bo * k * m..(bo + 1) * k * m];
                    for i in 0..n {
                        let grow = &gm[i * m..(i + 1) * m];
                        for p in 0..k {
                            let av = am[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (gbv, &gv) in gbm[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *gbv += av * gv;
                            }
                        }
                    }
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add { a, b } => {
                let shape = node.value.shape();
                let mut res = Vec::with_capacity(2);
                for v in [*a, *b] {
                    let offs = broadcast_offsets(shape, self.shape(v));
                    let mut gv = vec![0.0; self.value(v).len()];
                    for (&o, &x) in offs.iter().zip(g) {
                        gv[o] += x;
                    }
                    res.push((v, gv));
                }
                res
            }
            Op::Scale { a, factor } => vec![(*a, g.iter().map(|x| x * factor).collect())],
            Op::Relu { a } => {
                let x = self.value(*a).data();
                vec![(*a, x.iter().zip(g).map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 }).collect())]
            }
            Op::Softmax { a, axis } => {
                let (outer, n, inner) = axis_extents(node.value.shape(), *axis);
                let mut gx = vec![0.0; out.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let idx = |i: usize| (o * n + i) * inner + j;
                        let dot: f64 = (0..n).map(|i| g[idx(i)] * out[idx(i)]).sum();
                        for i in 0..n {
                            gx[idx(i)] = out[idx(i)] * (g[idx(i)] - dot);
                        }
                    }
                }
                vec![(*a, gx)]
            }
            Op::LayerNorm { x, gain, bias, axis, xhat, inv_std } => {
                let (outer, n, inner) = axis_extents(node.value.shape(), *axis);
                let gd = self.value(*gain).data();
                let mut gx = vec![0.0; out.len()];
                let mut ggain = vec![0.0; n];
                let mut gbias = vec![0.0; n];
                let nf = n as f64;
                for o in 0..outer {
                    for j in 0..inner {
                        let idx = |i: usize| (o * n + i) * inner + j;
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for i in 0..n {
                            let dh = g[idx(i)] * gd[i];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[idx(i)];
                            ggain[i] += g[idx(i)] * xhat[idx(i)];
                            gbias[i] += g[idx(i)];
                        }
                        let is = inv_std[o * inner + j];
                        for i in 0..n {
                            let dh = g[idx(i)] * gd[i];
                            gx[idx(i)] = is / nf * (nf * dh - sum_dh - xhat[idx(i)] * sum_dh_h);
                        }
                    }
                }
                vec![(*x, gx), (*gain, ggain), (*bias, gbias)]
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = axis_extents(node.value.shape(), *axis);
                let mut parts: Vec<Vec<f64>> =
                    inputs.iter().map(|v| Vec::with_capacity(self.value(*v).len())).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (k, v) in inputs.iter().enumerate() {
                        let chunk = self.shape(*v)[*axis] * inner;
                        parts[k].extend_from_slice(&g[pos..pos + chunk]);
                        pos += chunk;
                    }
                }
                inputs.iter().copied().zip(parts).collect()
            }
            Op::Reshape { a } => vec![(*a, g.to_vec())],
            Op::Transpose { a, axis1, axis2 } => {
                let src = transpose_sources(self.shape(*a), *axis1, *axis2);
                let mut ga = vec![0.0; g.len()];
                for (&s, &x) in src.iter().zip(g) {
                    ga[s] += x;
                }
                vec![(*a, ga)]
            }
            Op::Sum { a } => vec![(*a, vec![g[0]; self.value(*a).len()])],
            Op::Mean { a } => {
                let n = self.value(*a).len();
                vec![(*a, vec![g[0] / n as f64; n])]
            }
            // The real-part 2-D DFT is self-adjoint (DFT matrices are symmetric).
            Op::FourierMix { a } => vec![(*a, fourier_mix_data(g, node.value.shape()))],
            Op::CrossEntropy { logits, probs, labels } => {
                let c = probs.len() / labels.len();
                let scale = g[0] / labels.len() as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    gl[i * c + l] -= scale;
                }
                vec![(*logits, gl)]
            }
        }
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::shape(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok(())
}

fn fourier_mix_data(x: &[f64], shape: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let (rows, cols) = (shape[rank - 2], shape[rank - 1]);
    let mut out = Vec::with_capacity(x.len());
    for block in x.chunks(rows * cols) {
        out.extend(dft2_real_part(block, rows, cols));
    }
    out
}

/// For each output element of the transposed tensor, its source offset.
fn transpose_sources(shape: &[usize], axis1: usize, axis2: usize) -> Vec<usize> {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let mut out_shape = shape.to_vec();
    out_shape.swap(axis1, axis2);
    let mut strides = in_strides.clone();
    strides.swap(axis1, axis2);
    let total: usize = shape.iter().product();
    let mut src = Vec::with_capacity(total);
    let mut index = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..total {
        src.push(off);
        for ax in (0..rank).rev() {
            index[ax] += 1;
            off += strides[ax];
            if index[ax] < out_shape[ax] {
                break;
            }
            off -= strides[ax] * index[ax];
            index[ax] = 0;
        }
    }
    src
}

struct MatMulGeometry {
    n: usize,
    k: usize,
    m: usize,
    out_shape: Vec<usize>,
    a_offsets: Vec<usize>,
    b_offsets: Vec<usize>,
}

impl MatMulGeometry {
    fn new(sa: &[usize], sb: &[usize]) -> Result<Self> {
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape(
                "matmul",
                format!("operands need at least 2 axes, got {sa:?} and {sb:?}"),
            ));
        }
        let (n, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, m) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("inner dimensions differ: {sa:?} · {sb:?}"),
            ));
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batch = broadcast_shape("matmul", ba, bb).map_err(|_| {
            Error::shape("matmul", format!("batch dimensions of {sa:?} and {sb:?} do not broadcast"))
        })?;
        let a_offsets = broadcast_offsets(&batch, ba);
        let b_offsets = broadcast_offsets(&batch, bb);
        let mut out_shape = batch;
        out_shape.extend([n, m]);
        Ok(MatMulGeometry { n, k, m, out_shape, a_offsets, b_offsets })
    }
}
