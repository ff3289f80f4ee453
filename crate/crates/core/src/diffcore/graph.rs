use super::params::{Activation, LayerSpec, NetworkParams};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node in one [`Graph`]. Not valid across graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Dense { has_bias: bool },
    Conv2d { stride: usize, pad: usize },
    LeakyRelu { slope: f64 },
    /// x[B×D] minus a row vector c[D], broadcast over rows.
    SubRow,
    /// Per-row squared L2 norm: [B×D] -> [B].
    RowSqNorm,
    /// Mean over all elements -> scalar.
    Mean,
    /// Sum over all elements -> scalar.
    Sum,
    /// Mean of elementwise (pred - target)^2 -> scalar.
    Mse,
    /// coeff * sum_i max(0, x_i - threshold) -> scalar.
    HingeSum { threshold: f64, coeff: f64 },
}

struct Node<F> {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor<F>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
}

/// Spatial bookkeeping for one conv layer application.
struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

/// Unrolls one image [C×H×W] into patch rows [OH·OW × C·K·K]; out-of-bounds
/// (padding) cells become zero.
fn im2col<F: Scalar>(x: &[F], g: &ConvGeometry, col: &mut [F]) {
    let patch = g.c * g.k * g.k;
    for i in 0..g.oh {
        for j in 0..g.ow {
            let row = &mut col[(i * g.ow + j) * patch..(i * g.ow + j + 1) * patch];
            let mut q = 0;
            for ic in 0..g.c {
                for u in 0..g.k {
                    let hi = (i * g.stride + u) as isize - g.pad as isize;
                    if hi < 0 || hi >= g.h as isize {
                        for _ in 0..g.k {
                            row[q] = F::zero();
                            q += 1;
                        }
                        continue;
                    }
                    let base = (ic * g.h + hi as usize) * g.w;
                    for v in 0..g.k {
                        let wi = (j * g.stride + v) as isize - g.pad as isize;
                        row[q] = if wi < 0 || wi >= g.w as isize {
                            F::zero()
                        } else {
                            x[base + wi as usize]
                        };
                        q += 1;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch-row gradients back onto the
/// image; padding cells are dropped.
fn col2im<F: Scalar>(dcol: &[F], g: &ConvGeometry, dx: &mut [F]) {
    let patch = g.c * g.k * g.k;
    for i in 0..g.oh {
        for j in 0..g.ow {
            let row = &dcol[(i * g.ow + j) * patch..(i * g.ow + j + 1) * patch];
            let mut q = 0;
            for ic in 0..g.c {
                for u in 0..g.k {
                    let hi = (i * g.stride + u) as isize - g.pad as isize;
                    if hi < 0 || hi >= g.h as isize {
                        q += g.k;
                        continue;
                    }
                    let base = (ic * g.h + hi as usize) * g.w;
                    for v in 0..g.k {
                        let wi = (j * g.stride + v) as isize - g.pad as isize;
                        if wi >= 0 && wi < g.w as isize {
                            let xi = base + wi as usize;
                            dx[xi] = dx[xi] + row[q];
                        }
                        q += 1;
                    }
                }
            }
        }
    }
}

/// Recorded forward computation; append-only, so node order is topological.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor<F>) -> NodeId {
        let requires_grad = matches!(op, Op::Param)
            || inputs.iter().any(|&i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { op, inputs, value, grad: None, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; gradients do not flow into it.
    pub fn leaf(&mut self, value: Tensor<F>) -> NodeId {
        self.push(Op::Leaf, vec![], value)
    }

    /// Trainable leaf; `backward` accumulates its gradient.
    pub fn param(&mut self, value: Tensor<F>) -> NodeId {
        self.push(Op::Param, vec![], value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[F]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// y = x W (+ bias), x: [B×In], w: [In×Out], bias: [Out].
    pub fn dense(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::Dimension(format!(
                "dense: x {xs:?} incompatible with weight {ws:?}"
            )));
        }
        let (b, input, output) = (xs[0], xs[1], ws[1]);
        if let Some(bid) = bias {
            let bs = self.shape(bid);
            if bs != [output] {
                return Err(Error::Dimension(format!(
                    "dense: bias shape {bs:?} does not match output width {output}"
                )));
            }
        }
        let xd = self.nodes[x.0].value.data();
        let wd = self.nodes[w.0].value.data();
        let mut out = vec![F::zero(); b * output];
        for i in 0..b {
            for k in 0..input {
                let xv = xd[i * input + k];
                let wrow = &wd[k * output..(k + 1) * output];
                let orow = &mut out[i * output..(i + 1) * output];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o = *o + xv * wv;
                }
            }
        }
        if let Some(bid) = bias {
            let bd = self.nodes[bid.0].value.data().to_vec();
            for i in 0..b {
                for (o, &bv) in out[i * output..(i + 1) * output].iter_mut().zip(&bd) {
                    *o = *o + bv;
                }
            }
        }
        let mut inputs = vec![x, w];
        if let Some(bid) = bias {
            inputs.push(bid);
        }
        Ok(self.push(
            Op::Dense { has_bias: bias.is_some() },
            inputs,
            Tensor::new(vec![b, output], out),
        ))
    }

    /// Cross-correlation with zero padding. x: [B×C×H×W], k: [C'×C×k×k].
    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != 4 || ks.len() != 4 || ks[2] != ks[3] {
            return Err(Error::Dimension(format!(
                "conv2d: x {xs:?}, kernel {ks:?}"
            )));
        }
        if xs[1] != ks[1] {
            return Err(Error::Dimension(format!(
                "conv2d: input channels {} != kernel channels {}",
                xs[1], ks[1]
            )));
        }
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (co, k) = (ks[0], ks[2]);
        let out_dim = |d: usize| -> Result<usize> {
            let padded = d + 2 * pad;
            if padded < k {
                return Err(Error::Config(format!(
                    "conv2d: size {d} with kernel {k}, stride {stride}, pad {pad} gives an empty output"
                )));
            }
            // Floor convention: trailing columns that do not fit a full
            // stride step are dropped.
            Ok((padded - k) / stride + 1)
        };
        let (oh, ow) = (out_dim(h)?, out_dim(w)?);
        let xd = self.nodes[x.0].value.data();
        let kd = self.nodes[kernel.0].value.data();
        let geo = ConvGeometry { c, h, w, k, stride, pad, oh, ow };
        let (npix, patch) = (oh * ow, c * k * k);
        let mut out = vec![F::zero(); b * co * npix];
        let mut col = vec![F::zero(); npix * patch];
        for bi in 0..b {
            im2col(&xd[bi * c * h * w..(bi + 1) * c * h * w], &geo, &mut col);
            // out[oc, p] = kernel row oc . patch row p (both contiguous).
            for oc in 0..co {
                let krow = &kd[oc * patch..(oc + 1) * patch];
                let orow = &mut out[(bi * co + oc) * npix..(bi * co + oc + 1) * npix];
                for (p, o) in orow.iter_mut().enumerate() {
                    let prow = &col[p * patch..(p + 1) * patch];
                    let mut acc = F::zero();
                    for (&kv, &xv) in krow.iter().zip(prow) {
                        acc = acc + kv * xv;
                    }
                    *o = acc;
                }
            }
        }
        Ok(self.push(
            Op::Conv2d { stride, pad },
            vec![x, kernel],
            Tensor::new(vec![b, co, oh, ow], out),
        ))
    }

    /// Elementwise max(x, slope * x); slope 0 gives plain ReLU.
    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let s = F::from_f64(slope).unwrap();
        let v = &self.nodes[x.0].value;
        let out = Tensor::new(
            v.shape().to_vec(),
            v.data()
                .iter()
                .map(|&a| if a >= F::zero() { a } else { s * a })
                .collect(),
        );
        self.push(Op::LeakyRelu { slope }, vec![x], out)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.leaky_relu(x, 0.0)
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        if shape.iter().product::<usize>() != v.numel() {
            return Err(Error::Dimension(format!(
                "reshape: {:?} -> {shape:?} changes element count",
                v.shape()
            )));
        }
        // LeakyRelu with slope 1 is the identity; reuse it as a view op.
        let out = Tensor::new(shape, v.data().to_vec());
        Ok(self.push(Op::LeakyRelu { slope: 1.0 }, vec![x], out))
    }

    /// x[B×D] − c[D] broadcast over rows.
    pub fn sub_row(&mut self, x: NodeId, c: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let cs = self.shape(c).to_vec();
        if xs.len() != 2 || cs != [xs[1]] {
            return Err(Error::Dimension(format!("sub_row: x {xs:?}, c {cs:?}")));
        }
        let (b, d) = (xs[0], xs[1]);
        let xd = self.nodes[x.0].value.data();
        let cd = self.nodes[c.0].value.data();
        let mut out = vec![F::zero(); b * d];
        for i in 0..b {
            for j in 0..d {
                out[i * d + j] = xd[i * d + j] - cd[j];
            }
        }
        Ok(self.push(Op::SubRow, vec![x, c], Tensor::new(vec![b, d], out)))
    }

    /// Per-row squared L2 norm: [B×D] -> [B].
    pub fn row_sq_norm(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 {
            return Err(Error::Dimension(format!("row_sq_norm: x {xs:?}")));
        }
        let (b, d) = (xs[0], xs[1]);
        let xd = self.nodes[x.0].value.data();
        let out: Vec<F> = (0..b)
            .map(|i| xd[i * d..(i + 1) * d].iter().map(|&v| v * v).sum())
            .collect();
        Ok(self.push(Op::RowSqNorm, vec![x], Tensor::new(vec![b], out)))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x.0].value;
        let n = F::from_usize(v.numel()).unwrap();
        let m = v.data().iter().copied().sum::<F>() / n;
        self.push(Op::Mean, vec![x], Tensor::scalar(m))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x.0].value.data().iter().copied().sum::<F>();
        self.push(Op::Sum, vec![x], Tensor::scalar(s))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::Dimension(format!(
                "mse: pred {:?} vs target {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let pd = self.nodes[pred.0].value.data();
        let td = self.nodes[target.0].value.data();
        let n = F::from_usize(pd.len()).unwrap();
        let s: F = pd
            .iter()
            .zip(td)
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        Ok(self.push(Op::Mse, vec![pred, target], Tensor::scalar(s / n)))
    }

    /// coeff * Σ max(0, x_i − threshold).
    pub fn hinge_sum(&mut self, x: NodeId, threshold: f64, coeff: f64) -> NodeId {
        let thr = F::from_f64(threshold).unwrap();
        let cf = F::from_f64(coeff).unwrap();
        let s: F = self.nodes[x.0]
            .value
            .data()
            .iter()
            .map(|&v| if v > thr { v - thr } else { F::zero() })
            .sum();
        self.push(Op::HingeSum { threshold, coeff }, vec![x], Tensor::scalar(cf * s))
    }

    /// Runs the layer stack described by `layout` over `x`, drawing weights
    /// from the already-inserted param nodes in `param_ids` (one per entry of
    /// the corresponding [`NetworkParams`]).
    pub fn forward_layout(
        &mut self,
        layout: &[LayerSpec],
        param_ids: &[NodeId],
        x: NodeId,
    ) -> Result<NodeId> {
        let mut cur = x;
        let mut next_param = 0;
        let take = |n: &mut usize| -> Result<NodeId> {
            let id = param_ids.get(*n).copied().ok_or_else(|| {
                Error::Usage("forward_layout: fewer param nodes than the layout needs".into())
            })?;
            *n += 1;
            Ok(id)
        };
        for layer in layout {
            cur = match *layer {
                LayerSpec::Dense { bias, activation, .. } => {
                    let w = take(&mut next_param)?;
                    let b = if bias { Some(take(&mut next_param)?) } else { None };
                    let y = self.dense(cur, w, b)?;
                    self.activate(y, activation)
                }
                LayerSpec::Conv2d { stride, pad, activation, .. } => {
                    let k = take(&mut next_param)?;
                    let y = self.conv2d(cur, k, stride, pad)?;
                    self.activate(y, activation)
                }
                LayerSpec::Flatten => {
                    let s = self.shape(cur).to_vec();
                    let b = s[0];
                    let rest: usize = s[1..].iter().product();
                    self.reshape(cur, vec![b, rest])?
                }
            };
        }
        Ok(cur)
    }

    fn activate(&mut self, x: NodeId, act: Activation) -> NodeId {
        match act {
            Activation::Linear => x,
            Activation::Relu => self.relu(x),
            Activation::LeakyRelu(s) => self.leaky_relu(x, s),
        }
    }

    /// Reverse-mode sweep from a scalar loss node. Populates gradients on
    /// every node that requires them.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage(
                "backward: node was not produced by this recorded computation".into(),
            ));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Usage("backward: loss must be a scalar".into()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![F::one()]);
        for id in (0..=loss.0).rev() {
            if self.nodes[id].grad.is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            self.backprop_node(id);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Vec<F>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let n = self.nodes[id.0].value.numel();
        let g = self.nodes[id.0].grad.get_or_insert_with(|| vec![F::zero(); n]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi = *gi + di;
        }
    }

    fn backprop_node(&mut self, id: usize) {
        let op = self.nodes[id].op.clone();
        let inputs = self.nodes[id].inputs.clone();
        let dy = self.nodes[id].grad.clone().unwrap();
        match op {
            Op::Leaf | Op::Param => {}
            Op::Dense { has_bias } => {
                let (x, w) = (inputs[0], inputs[1]);
                let xs = self.shape(x).to_vec();
                let ws = self.shape(w).to_vec();
                let (b, input, output) = (xs[0], xs[1], ws[1]);
                let xd = self.nodes[x.0].value.data().to_vec();
                let wd = self.nodes[w.0].value.data().to_vec();
                let mut dx = vec![F::zero(); b * input];
                let mut dw = vec![F::zero(); input * output];
                for i in 0..b {
                    let dyr = &dy[i * output..(i + 1) * output];
                    for k in 0..input {
                        let wrow = &wd[k * output..(k + 1) * output];
                        let mut acc = F::zero();
                        for (&d, &wv) in dyr.iter().zip(wrow) {
                            acc = acc + d * wv;
                        }
                        dx[i * input + k] = acc;
                        let xv = xd[i * input + k];
                        let dwrow = &mut dw[k * output..(k + 1) * output];
                        for (dwv, &d) in dwrow.iter_mut().zip(dyr) {
                            *dwv = *dwv + xv * d;
                        }
                    }
                }
                self.accumulate(x, dx);
                self.accumulate(w, dw);
                if has_bias {
                    let mut db = vec![F::zero(); output];
                    for i in 0..b {
                        for (dbv, &d) in db.iter_mut().zip(&dy[i * output..(i + 1) * output]) {
                            *dbv = *dbv + d;
                        }
                    }
                    self.accumulate(inputs[2], db);
                }
            }
            Op::Conv2d { stride, pad } => {
                let (x, kernel) = (inputs[0], inputs[1]);
                let xs = self.shape(x).to_vec();
                let ks = self.shape(kernel).to_vec();
                let ys = self.shape(NodeId(id)).to_vec();
                let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let (co, k) = (ks[0], ks[2]);
                let (oh, ow) = (ys[2], ys[3]);
                let geo = ConvGeometry { c, h, w, k, stride, pad, oh, ow };
                let (npix, patch) = (oh * ow, c * k * k);
                let xd = self.nodes[x.0].value.data().to_vec();
                let kd = self.nodes[kernel.0].value.data().to_vec();
                let mut dx = vec![F::zero(); xd.len()];
                let mut dk = vec![F::zero(); kd.len()];
                let mut col = vec![F::zero(); npix * patch];
                let mut dcol = vec![F::zero(); npix * patch];
                for bi in 0..b {
                    im2col(&xd[bi * c * h * w..(bi + 1) * c * h * w], &geo, &mut col);
                    for v in dcol.iter_mut() {
                        *v = F::zero();
                    }
                    for oc in 0..co {
                        let dyrow = &dy[(bi * co + oc) * npix..(bi * co + oc + 1) * npix];
                        let dkrow = &mut dk[oc * patch..(oc + 1) * patch];
                        let krow = &kd[oc * patch..(oc + 1) * patch];
                        for (p, &d) in dyrow.iter().enumerate() {
                            if d == F::zero() {
                                continue;
                            }
                            let prow = &col[p * patch..(p + 1) * patch];
                            let dprow = &mut dcol[p * patch..(p + 1) * patch];
                            for q in 0..patch {
                                dkrow[q] = dkrow[q] + d * prow[q];
                                dprow[q] = dprow[q] + d * krow[q];
                            }
                        }
                    }
                    col2im(&dcol, &geo, &mut dx[bi * c * h * w..(bi + 1) * c * h * w]);
                }
                self.accumulate(x, dx);
                self.accumulate(kernel, dk);
            }
            Op::LeakyRelu { slope } => {
                let x = inputs[0];
                let s = F::from_f64(slope).unwrap();
                let xd = self.nodes[x.0].value.data();
                let dx: Vec<F> = xd
                    .iter()
                    .zip(&dy)
                    .map(|(&xv, &d)| if xv >= F::zero() { d } else { s * d })
                    .collect();
                self.accumulate(x, dx);
            }
            Op::SubRow => {
                let (x, c) = (inputs[0], inputs[1]);
                let d = self.shape(c).to_vec()[0];
                self.accumulate(x, dy.clone());
                if self.nodes[c.0].requires_grad {
                    let mut dc = vec![F::zero(); d];
                    for (i, &g) in dy.iter().enumerate() {
                        dc[i % d] = dc[i % d] - g;
                    }
                    self.accumulate(c, dc);
                }
            }
            Op::RowSqNorm => {
                let x = inputs[0];
                let xs = self.shape(x).to_vec();
                let (b, d) = (xs[0], xs[1]);
                let xd = self.nodes[x.0].value.data().to_vec();
                let two = F::from_f64(2.0).unwrap();
                let mut dx = vec![F::zero(); b * d];
                for i in 0..b {
                    for j in 0..d {
                        dx[i * d + j] = two * xd[i * d + j] * dy[i];
                    }
                }
                self.accumulate(x, dx);
            }
            Op::Mean => {
                let x = inputs[0];
                let n = F::from_usize(self.nodes[x.0].value.numel()).unwrap();
                let g = dy[0] / n;
                let dx = vec![g; self.nodes[x.0].value.numel()];
                self.accumulate(x, dx);
            }
            Op::Sum => {
                let x = inputs[0];
                let dx = vec![dy[0]; self.nodes[x.0].value.numel()];
                self.accumulate(x, dx);
            }
            Op::Mse => {
                let (p, t) = (inputs[0], inputs[1]);
                let pd = self.nodes[p.0].value.data().to_vec();
                let td = self.nodes[t.0].value.data().to_vec();
                let n = F::from_usize(pd.len()).unwrap();
                let two = F::from_f64(2.0).unwrap();
                let scale = two * dy[0] / n;
                let dp: Vec<F> = pd.iter().zip(&td).map(|(&pv, &tv)| scale * (pv - tv)).collect();
                if self.nodes[t.0].requires_grad {
                    let dt: Vec<F> = dp.iter().map(|&v| -v).collect();
                    self.accumulate(t, dt);
                }
                self.accumulate(p, dp);
            }
            Op::HingeSum { threshold, coeff } => {
                let x = inputs[0];
                let thr = F::from_f64(threshold).unwrap();
                let cf = F::from_f64(coeff).unwrap();
                let xd = self.nodes[x.0].value.data();
                let dx: Vec<F> = xd
                    .iter()
                    .map(|&v| if v > thr { cf * dy[0] } else { F::zero() })
                    .collect();
                self.accumulate(x, dx);
            }
        }
    }

    /// Inserts every parameter tensor as a param node; returns ids aligned
    /// with the entries of `params`.
    pub fn insert_params(&mut self, params: &NetworkParams<F>) -> Vec<NodeId> {
        params
            .entries()
            .iter()
            .map(|(_, t)| {
                let mut clone = t.clone();
                clone.clear_grad();
                self.param(clone)
            })
            .collect()
    }

    /// Copies accumulated node gradients back into the parameter set,
    /// adding to whatever is already there.
    pub fn extract_grads(
        &self,
        param_ids: &[NodeId],
        params: &mut NetworkParams<F>,
    ) -> Result<()> {
        if param_ids.len() != params.len() {
            return Err(Error::Usage("extract_grads: id/param count mismatch".into()));
        }
        for (id, (_, tensor)) in param_ids.iter().zip(params.entries_mut()) {
            let buf = tensor.ensure_grad();
            if let Some(g) = self.nodes[id.0].grad.as_ref() {
                for (b, &gv) in buf.iter_mut().zip(g) {
                    *b = *b + gv;
                }
            }
        }
        Ok(())
    }
}
