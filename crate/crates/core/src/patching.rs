//! The cold scorer: whole-vector dropout masking, the two patching MLPs and
//! their inner-product score. The simplified DropoutNet baseline reuses the
//! same machinery on raw embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GnpError, Result};
use crate::gwarmer::GWarmerRep;
use crate::linalg::{dot, Matrix};
use crate::rng::GnpRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`, row-major.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Fully-connected network: tanh after every layer except the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpShape {
    pub hidden: usize,
    pub depth: usize,
}

impl Default for MlpShape {
    fn default() -> Self {
        MlpShape {
            hidden: 200,
            depth: 2,
        }
    }
}

/// Forward activations kept for the backward pass; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has the input at least")
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(GnpError::Invalid("MLP needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(GnpError::DimMismatch(format!("layer {k}: bias length")));
            }
            if k > 0 && layers[k - 1].out_dim() != l.in_dim() {
                return Err(GnpError::DimMismatch(format!("layer {k}: input width")));
            }
        }
        Ok(Mlp { layers })
    }

    /// `depth` tanh hidden layers of width `hidden`, then a linear output.
    /// Weights are uniform in `±√(6/(fan_in+fan_out))`, biases zero.
    pub fn new(in_dim: usize, shape: MlpShape, out_dim: usize, rng: &mut GnpRng) -> Self {
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(shape.hidden, shape.depth));
        dims.push(out_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-a..=a))
                    .collect();
                Dense {
                    weight: Matrix::from_vec(fan_out, fan_in, data),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Mlp { layers }
    }

    /// Single linear layer `[I | 0]`: passes the first `dim` inputs through.
    pub fn passthrough(dim: usize, extra_inputs: usize) -> Self {
        let mut w = Matrix::zeros(dim, dim + extra_inputs);
        for k in 0..dim {
            w.row_mut(k)[k] = 1.0;
        }
        Mlp {
            layers: vec![Dense {
                weight: w,
                bias: vec![0.0; dim],
            }],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = input.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.weight.mul_vec(&a);
            z.iter_mut().zip(&l.bias).for_each(|(z, b)| *z += b);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        a
    }

    pub fn forward_traced(&self, input: Vec<f64>) -> MlpTrace {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.weight.mul_vec(acts.last().expect("non-empty"));
            z.iter_mut().zip(&l.bias).for_each(|(z, b)| *z += b);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        MlpTrace { acts }
    }

    /// Reverse-mode pass: accumulates parameter gradients into `grads` and
    /// returns `∂L/∂input`, given `upstream = ∂L/∂output`.
    pub fn backward(&self, trace: &MlpTrace, upstream: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if k < last {
                let out = &trace.acts[k + 1];
                delta
                    .iter_mut()
                    .zip(out)
                    .for_each(|(d, a)| *d *= 1.0 - a * a);
            }
            let input = &trace.acts[k];
            let g = &mut grads.layers[k];
            for (r, &dz) in delta.iter().enumerate() {
                g.bias[r] += dz;
                if dz != 0.0 {
                    g.weight
                        .row_mut(r)
                        .iter_mut()
                        .zip(input)
                        .for_each(|(gw, x)| *gw += dz * x);
                }
            }
            let mut next = vec![0.0; layer.in_dim()];
            for (r, &dz) in delta.iter().enumerate() {
                if dz != 0.0 {
                    next.iter_mut()
                        .zip(layer.weight.row(r))
                        .for_each(|(n, w)| *n += dz * w);
                }
            }
            delta = next;
        }
        delta
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), &l.bias[..]])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), &mut l.bias[..]])
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}

/// Gradients of one forward/backward pass over a fresh zero buffer.
pub fn mlp_backward(mlp: &Mlp, input: &[f64], upstream: &[f64]) -> (Mlp, Vec<f64>) {
    let trace = mlp.forward_traced(input.to_vec());
    let mut grads = mlp.zeros_like();
    let gin = mlp.backward(&trace, upstream, &mut grads);
    (grads, gin)
}

// ---------------------------------------------------------------------------
// Masking and scoring

/// Bernoulli(τ) draw: `true` means the representation is replaced by the
/// zero placeholder.
pub fn draw_mask(tau: f64, rng: &mut GnpRng) -> bool {
    rng.random::<f64>() < tau
}

/// Whole-vector dropout: zero with probability `tau`, else `x` unchanged.
pub fn mask(x: &GWarmerRep, tau: f64, rng: &mut GnpRng) -> GWarmerRep {
    if draw_mask(tau, rng) {
        GWarmerRep::zeros(x.dim())
    } else {
        x.clone()
    }
}

/// `[rep ∥ features]`, the patching network input.
pub fn patch_input(rep: &[f64], features: &[f32]) -> Vec<f64> {
    let mut v = Vec::with_capacity(rep.len() + features.len());
    v.extend_from_slice(rep);
    v.extend(features.iter().map(|&f| f as f64));
    v
}

fn patch(rep: &GWarmerRep, features: &[f32], mlp: &Mlp) -> Result<Vec<f64>> {
    if mlp.in_dim() != rep.dim() + features.len() {
        return Err(GnpError::DimMismatch(format!(
            "patching MLP expects {} inputs, got {} + {}",
            mlp.in_dim(),
            rep.dim(),
            features.len()
        )));
    }
    Ok(mlp.forward(&patch_input(&rep.0, features)))
}

/// `x_uc = f_U(D(x_u) ∥ c_u)`.
pub fn patch_user(masked_rep: &GWarmerRep, features: &[f32], mlp: &Mlp) -> Result<Vec<f64>> {
    patch(masked_rep, features, mlp)
}

/// `x_ic = f_I(D(x_i) ∥ c_i)`.
pub fn patch_item(masked_rep: &GWarmerRep, features: &[f32], mlp: &Mlp) -> Result<Vec<f64>> {
    patch(masked_rep, features, mlp)
}

/// `x_ucᵀ x_ic`.
pub fn cold_score(x_uc: &[f64], x_ic: &[f64]) -> Result<f64> {
    if x_uc.len() != x_ic.len() {
        return Err(GnpError::DimMismatch(format!(
            "{} vs {}",
            x_uc.len(),
            x_ic.len()
        )));
    }
    Ok(dot(x_uc, x_ic))
}

/// The two patching towers.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchingNets {
    pub user: Mlp,
    pub item: Mlp,
}

/// Simplified DropoutNet: the patching pipeline applied to raw (possibly
/// masked) embeddings instead of GWarmer representations.
pub fn dropoutnet_score(
    u_embed_masked: &GWarmerRep,
    c_u: &[f32],
    i_embed_masked: &GWarmerRep,
    c_i: &[f32],
    nets: &PatchingNets,
) -> Result<f64> {
    let xu = patch_user(u_embed_masked, c_u, &nets.user)?;
    let xi = patch_item(i_embed_masked, c_i, &nets.item)?;
    cold_score(&xu, &xi)
}
