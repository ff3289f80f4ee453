//! The two model families and their objectives: dense autoencoder
//! reconstruction, one-class and soft-boundary deep SVDD, and the
//! distance-based anomaly score.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    glorot_uniform, Activation, Graph, LayerSpec, LayoutDescriptor, NetworkParams, Scalar, Tensor,
};
use crate::{Error, Result};

/// Flattened feature length after the SVDD conv stack (16 channels x 4 x 4).
pub const SVDD_FLAT_FEATURES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvddVariant {
    OneClass,
    SoftBoundary,
}

/// Objective hyperparameters for deep SVDD training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvddObjectiveConfig {
    pub variant: SvddVariant,
    /// Weight-decay coefficient of the Frobenius regularizer.
    pub lambda: f64,
    /// Target outlier fraction (soft-boundary only); sets C = 1/(nu * N).
    pub nu: f64,
}

impl SvddObjectiveConfig {
    pub fn one_class(lambda: f64) -> Self {
        SvddObjectiveConfig { variant: SvddVariant::OneClass, lambda, nu: 0.1 }
    }

    pub fn soft_boundary(lambda: f64, nu: f64) -> Self {
        SvddObjectiveConfig { variant: SvddVariant::SoftBoundary, lambda, nu }
    }

    pub fn outlier_tradeoff(&self, n: usize) -> f64 {
        1.0 / (self.nu * n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if self.variant == SvddVariant::SoftBoundary && !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config("nu must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Fully connected 320-64-64-8-64-64-320 autoencoder with biases.
#[derive(Debug, Clone)]
pub struct DenseAeModel {
    pub params: NetworkParams<f32>,
}

/// No-bias conv stack + dense projection, with a fixed hypersphere center.
#[derive(Debug, Clone)]
pub struct DeepSvddModel {
    pub params: NetworkParams<f32>,
    pub subspace_dim: usize,
    pub center: Vec<f32>,
    /// Squared radius; used by the soft-boundary variant only.
    pub radius_sq: f32,
}

pub fn dense_ae_layout() -> LayoutDescriptor {
    let widths = [320usize, 64, 64, 8, 64, 64, 320];
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::Dense {
            input: w[0],
            output: w[1],
            bias: true,
            activation: if i == 5 { Activation::Linear } else { Activation::Relu },
        })
        .collect();
    LayoutDescriptor { version: 1, layers }
}

/// Conv stack 1-8-16-16-16 (k=3, stride 2, pad 1, LeakyReLU 0.2, no bias)
/// over 1x64x64 input, flattened to 256, then a no-bias dense projection.
pub fn svdd_layout(subspace_dim: usize) -> LayoutDescriptor {
    let channels = [1usize, 8, 16, 16, 16];
    let mut layers: Vec<LayerSpec> = channels
        .windows(2)
        .map(|c| LayerSpec::Conv2d {
            in_channels: c[0],
            out_channels: c[1],
            kernel: 3,
            stride: 2,
            pad: 1,
            activation: Activation::LeakyRelu(0.2),
        })
        .collect();
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense {
        input: SVDD_FLAT_FEATURES,
        output: subspace_dim,
        bias: false,
        activation: Activation::Linear,
    });
    LayoutDescriptor { version: 1, layers }
}

/// Glorot-uniform initialization of every tensor a layout needs.
pub fn init_params<F: Scalar>(layout: &LayoutDescriptor, seed: u64) -> NetworkParams<F> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for (i, layer) in layout.layers.iter().enumerate() {
        match *layer {
            LayerSpec::Dense { input, output, bias, .. } => {
                entries.push((
                    format!("layer{i}.weight"),
                    glorot_uniform(vec![input, output], input, output, &mut rng),
                ));
                if bias {
                    entries.push((format!("layer{i}.bias"), Tensor::zeros(vec![output])));
                }
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                let fan_in = in_channels * kernel * kernel;
                let fan_out = out_channels * kernel * kernel;
                entries.push((
                    format!("layer{i}.kernel"),
                    glorot_uniform(
                        vec![out_channels, in_channels, kernel, kernel],
                        fan_in,
                        fan_out,
                        &mut rng,
                    ),
                ));
            }
            LayerSpec::Flatten => {}
        }
    }
    NetworkParams::new(layout.clone(), entries)
}

pub fn build_dense_ae(seed: u64) -> DenseAeModel {
    DenseAeModel { params: init_params(&dense_ae_layout(), seed) }
}

pub fn build_svdd_net(subspace_dim: usize, seed: u64) -> DeepSvddModel {
    let params = init_params(&svdd_layout(subspace_dim), seed);
    debug_assert!(params.bias_tensor_names().is_empty());
    DeepSvddModel { params, subspace_dim, center: vec![0.0; subspace_dim], radius_sq: 0.0 }
}

/// Plain forward pass through a parameter set's layout.
pub fn forward<F: Scalar>(params: &NetworkParams<F>, x: &Tensor<F>) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let xid = g.leaf(x.clone());
    let pids = g.insert_params(params);
    let out = g.forward_layout(&params.layout().layers, &pids, xid)?;
    Ok(g.value(out).clone())
}

/// Per-vector mean squared reconstruction error and its mean over the batch.
pub fn ae_reconstruction_error<F: Scalar>(
    params: &NetworkParams<F>,
    vectors: &Tensor<F>,
) -> Result<(Vec<F>, F)> {
    let shape = vectors.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::Dimension(format!("ae_reconstruction_error: input {shape:?}")));
    }
    let (n, d) = (shape[0], shape[1]);
    let recon = forward(params, vectors)?;
    if recon.shape() != vectors.shape() {
        return Err(Error::Dimension(format!(
            "ae_reconstruction_error: output {:?} vs input {shape:?}",
            recon.shape()
        )));
    }
    let dd = F::from_usize(d).unwrap();
    let per: Vec<F> = (0..n)
        .map(|i| {
            vectors.data()[i * d..(i + 1) * d]
                .iter()
                .zip(&recon.data()[i * d..(i + 1) * d])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<F>()
                / dd
        })
        .collect();
    let mean = per.iter().copied().sum::<F>() / F::from_usize(n.max(1)).unwrap();
    Ok((per, mean))
}

/// Embeddings of a window batch: [B x 1 x 64 x 64] -> [B x dim].
pub fn embed<F: Scalar>(params: &NetworkParams<F>, windows: &Tensor<F>) -> Result<Tensor<F>> {
    forward(params, windows)
}

/// Squared distances of each embedding row from the center.
pub fn sq_distances<F: Scalar>(emb: &Tensor<F>, center: &[F]) -> Result<Vec<F>> {
    let shape = emb.shape();
    if shape.len() != 2 || shape[1] != center.len() {
        return Err(Error::Dimension(format!(
            "sq_distances: embeddings {shape:?} vs center dim {}",
            center.len()
        )));
    }
    let d = center.len();
    Ok((0..shape[0])
        .map(|i| {
            emb.data()[i * d..(i + 1) * d]
                .iter()
                .zip(center)
                .map(|(&e, &c)| (e - c) * (e - c))
                .sum()
        })
        .collect())
}

/// Mean embedding of the training windows, with near-zero coordinates pushed
/// to ±0.1 so the fixed center cannot sit on the trivial collapse point.
pub fn init_center<F: Scalar>(params: &NetworkParams<F>, windows: &Tensor<F>) -> Result<Vec<F>> {
    let shape = windows.shape();
    if shape.is_empty() || shape[0] == 0 {
        return Err(Error::EmptyInput("init_center: no training windows".into()));
    }
    let emb = embed(params, windows)?;
    let (n, d) = (emb.shape()[0], emb.shape()[1]);
    let nn = F::from_usize(n).unwrap();
    let guard = F::from_f64(0.1).unwrap();
    let mut c = vec![F::zero(); d];
    for i in 0..n {
        for j in 0..d {
            c[j] = c[j] + emb.data()[i * d + j];
        }
    }
    for cj in c.iter_mut() {
        *cj = *cj / nn;
        if cj.abs() < guard {
            *cj = if *cj < F::zero() { -guard } else { guard };
        }
    }
    Ok(c)
}

fn svdd_distance_graph<F: Scalar>(
    params: &NetworkParams<F>,
    windows: &Tensor<F>,
    center: &[F],
) -> Result<(Graph<F>, Vec<crate::diffcore::NodeId>, crate::diffcore::NodeId)> {
    let mut g = Graph::new();
    let xid = g.leaf(windows.clone());
    let pids = g.insert_params(params);
    let emb = g.forward_layout(&params.layout().layers, &pids, xid)?;
    let cid = g.leaf(Tensor::new(vec![center.len()], center.to_vec()));
    let diff = g.sub_row(emb, cid)?;
    let dist = g.row_sq_norm(diff)?;
    Ok((g, pids, dist))
}

fn weight_decay_value<F: Scalar>(params: &NetworkParams<F>, lambda: f64) -> F {
    F::from_f64(lambda / 2.0).unwrap() * params.frobenius_sq()
}

fn add_weight_decay_grads<F: Scalar>(params: &mut NetworkParams<F>, lambda: f64) {
    let l = F::from_f64(lambda).unwrap();
    for (_, t) in params.entries_mut() {
        let data = t.data().to_vec();
        let g = t.ensure_grad();
        for (gi, di) in g.iter_mut().zip(data) {
            *gi = *gi + l * di;
        }
    }
}

/// One-class objective: mean squared distance to the center plus weight decay.
pub fn one_class_loss<F: Scalar>(
    params: &NetworkParams<F>,
    windows: &Tensor<F>,
    center: &[F],
    lambda: f64,
) -> Result<F> {
    let (mut g, _, dist) = svdd_distance_graph(params, windows, center)?;
    let loss = g.mean(dist);
    Ok(g.value(loss).item() + weight_decay_value(params, lambda))
}

/// One-class objective with gradients accumulated into `params`.
pub fn one_class_backward<F: Scalar>(
    params: &mut NetworkParams<F>,
    windows: &Tensor<F>,
    center: &[F],
    lambda: f64,
) -> Result<F> {
    let (mut g, pids, dist) = svdd_distance_graph(params, windows, center)?;
    let loss = g.mean(dist);
    g.backward(loss)?;
    params.zero_grads();
    g.extract_grads(&pids, params)?;
    add_weight_decay_grads(params, lambda);
    Ok(g.value(loss).item() + weight_decay_value(params, lambda))
}

/// Soft-boundary objective: R² + C·Σ max(0, dist² − R²) + weight decay.
/// Gradients flow to the network weights only; R is updated separately.
pub fn soft_boundary_loss<F: Scalar>(
    params: &NetworkParams<F>,
    windows: &Tensor<F>,
    center: &[F],
    radius_sq: f64,
    tradeoff: f64,
    lambda: f64,
) -> Result<F> {
    if radius_sq < 0.0 {
        return Err(Error::Config("soft_boundary_loss: R² must be nonnegative".into()));
    }
    let (mut g, _, dist) = svdd_distance_graph(params, windows, center)?;
    let hinge = g.hinge_sum(dist, radius_sq, tradeoff);
    Ok(F::from_f64(radius_sq).unwrap()
        + g.value(hinge).item()
        + weight_decay_value(params, lambda))
}

pub fn soft_boundary_backward<F: Scalar>(
    params: &mut NetworkParams<F>,
    windows: &Tensor<F>,
    center: &[F],
    radius_sq: f64,
    tradeoff: f64,
    lambda: f64,
) -> Result<F> {
    if radius_sq < 0.0 {
        return Err(Error::Config("soft_boundary_loss: R² must be nonnegative".into()));
    }
    let (mut g, pids, dist) = svdd_distance_graph(params, windows, center)?;
    let hinge = g.hinge_sum(dist, radius_sq, tradeoff);
    g.backward(hinge)?;
    params.zero_grads();
    g.extract_grads(&pids, params)?;
    add_weight_decay_grads(params, lambda);
    Ok(F::from_f64(radius_sq).unwrap()
        + g.value(hinge).item()
        + weight_decay_value(params, lambda))
}

/// R² as the (1 − nu) empirical quantile (lower-nearest) of squared distances.
pub fn update_radius<F: Scalar>(distances_sq: &[F], nu: f64) -> Result<F> {
    if distances_sq.is_empty() {
        return Err(Error::EmptyInput("update_radius: no distances".into()));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Config("update_radius: nu must be in (0, 1]".into()));
    }
    let mut sorted = distances_sq.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let idx = (((1.0 - nu) * n as f64).ceil() as usize).max(1) - 1;
    Ok(sorted[idx.min(n - 1)])
}

/// Squared distance to the center per window, and the clip-level mean.
pub fn anomaly_score<F: Scalar>(
    params: &NetworkParams<F>,
    windows: &Tensor<F>,
    center: &[F],
) -> Result<(Vec<F>, F)> {
    let emb = embed(params, windows)?;
    let per = sq_distances(&emb, center)?;
    let mean = per.iter().copied().sum::<F>() / F::from_usize(per.len().max(1)).unwrap();
    Ok((per, mean))
}
