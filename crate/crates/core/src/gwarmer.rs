//! The warm scorer: walk pooling, self-adaptive layer weighting and
//! inner-product relevance.
//!
//! Pooling has no trainable parameters, so every warm node's layer stack is
//! computed once (see [`pool_all`]) and cached on disk as a [`RepTable`].
//! At inference a warm score is a single dot product of two combined
//! vectors.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingStore;
use crate::error::{GnpError, Result};
use crate::formats::{self, LeReader, LeWriter};
use crate::graph::{sample_walks, InteractionGraph, NodeRef, Side, WalkSet};
use crate::linalg::{dot, Matrix};
use crate::rng;

/// Layer-wise pooled vectors `x^(0..K)` for one node.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerReps {
    node: NodeRef,
    vectors: Vec<Vec<f64>>,
}

impl LayerReps {
    pub fn new(node: NodeRef, vectors: Vec<Vec<f64>>) -> Self {
        debug_assert!(vectors.windows(2).all(|w| w[0].len() == w[1].len()));
        LayerReps { node, vectors }
    }

    pub fn node(&self) -> NodeRef {
        self.node
    }

    /// Number of layers, `K + 1`.
    pub fn layers(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        &self.vectors[k]
    }
}

/// Global per-side layer weights `w_u^(k)`, `w_i^(k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveWeights {
    pub user: Vec<f64>,
    pub item: Vec<f64>,
}

impl AdaptiveWeights {
    /// `1/(K+1)` on every layer.
    pub fn uniform(layers: usize) -> Self {
        let w = vec![1.0 / layers as f64; layers];
        AdaptiveWeights {
            user: w.clone(),
            item: w,
        }
    }

    /// All weight on layer 0: plain embedding inner product.
    pub fn layer0(layers: usize) -> Self {
        let mut w = vec![0.0; layers];
        w[0] = 1.0;
        AdaptiveWeights {
            user: w.clone(),
            item: w,
        }
    }

    pub fn layers(&self) -> usize {
        self.user.len()
    }

    pub fn for_side(&self, side: Side) -> &[f64] {
        match side {
            Side::User => &self.user,
            Side::Item => &self.item,
        }
    }
}

/// Combined GWarmer representation `x_t = Σ_k w^(k) x_t^(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GWarmerRep(pub Vec<f64>);

impl GWarmerRep {
    pub fn zeros(dim: usize) -> Self {
        GWarmerRep(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Mean over walks of the step-`k` node embedding, for every `k`.
///
/// Per layer, the step nodes are sorted and each distinct node's embedding is
/// added once, scaled by its multiplicity. The result is therefore exactly
/// independent of walk order. Layer 0 is the origin's embedding verbatim.
pub fn walk_pool(walks: &WalkSet, embeddings: &EmbeddingStore) -> LayerReps {
    let s = walks.samples();
    let d = embeddings.dim();
    let mut vectors = Vec::with_capacity(walks.steps() + 1);
    vectors.push(
        embeddings
            .node(walks.origin())
            .iter()
            .map(|&v| v as f64)
            .collect(),
    );
    let mut step_nodes: Vec<NodeRef> = Vec::with_capacity(s);
    for k in 1..=walks.steps() {
        step_nodes.clear();
        step_nodes.extend(walks.walks().map(|w| w[k]));
        step_nodes.sort_unstable();
        let mut acc = vec![0.0f64; d];
        let mut idx = 0;
        while idx < step_nodes.len() {
            let node = step_nodes[idx];
            let run = step_nodes[idx..].iter().take_while(|&&n| n == node).count();
            let e = embeddings.node(node);
            let c = run as f64;
            acc.iter_mut().zip(e).for_each(|(a, &x)| *a += c * x as f64);
            idx += run;
        }
        let inv = s as f64;
        acc.iter_mut().for_each(|a| *a /= inv);
        vectors.push(acc);
    }
    LayerReps::new(walks.origin(), vectors)
}

pub fn combine(reps: &LayerReps, weights: &[f64]) -> Result<GWarmerRep> {
    if reps.layers() != weights.len() {
        return Err(GnpError::DimMismatch(format!(
            "{} layers but {} weights",
            reps.layers(),
            weights.len()
        )));
    }
    let mut v = vec![0.0; reps.dim()];
    for (k, &w) in weights.iter().enumerate() {
        v.iter_mut()
            .zip(reps.layer(k))
            .for_each(|(a, x)| *a += w * x);
    }
    Ok(GWarmerRep(v))
}

/// `x_uᵀ x_i`.
pub fn warm_score(u: &GWarmerRep, i: &GWarmerRep) -> Result<f64> {
    if u.dim() != i.dim() {
        return Err(GnpError::DimMismatch(format!("{} vs {}", u.dim(), i.dim())));
    }
    Ok(dot(&u.0, &i.0))
}

/// One user against every row of `items`.
pub fn warm_score_batch(u: &GWarmerRep, items: &Matrix) -> Result<Vec<f64>> {
    if u.dim() != items.cols() {
        return Err(GnpError::DimMismatch(format!(
            "{} vs {}",
            u.dim(),
            items.cols()
        )));
    }
    Ok(items.par_mul_vec(&u.0))
}

// ---------------------------------------------------------------------------
// Offline pooled-representation table

/// Pooled layer stacks for every node on one side, stored as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct RepTable {
    nodes: usize,
    layers: usize,
    dim: usize,
    data: Vec<f32>,
}

impl RepTable {
    pub fn from_reps(reps: &[LayerReps]) -> Result<Self> {
        let layers = reps.first().map_or(1, LayerReps::layers);
        let dim = reps.first().map_or(0, LayerReps::dim);
        let mut data = Vec::with_capacity(reps.len() * layers * dim);
        for r in reps {
            if r.layers() != layers || r.dim() != dim {
                return Err(GnpError::DimMismatch("ragged layer reps".into()));
            }
            for k in 0..layers {
                data.extend(r.layer(k).iter().map(|&v| v as f32));
            }
        }
        Ok(RepTable {
            nodes: reps.len(),
            layers,
            dim,
            data,
        })
    }

    /// Raw embeddings as a single-layer table (`K = 0`).
    pub fn from_embeddings(matrix: &[f32], dim: usize) -> Self {
        RepTable {
            nodes: matrix.len() / dim,
            layers: 1,
            dim,
            data: matrix.to_vec(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer(&self, node: u32, k: usize) -> &[f32] {
        let base = (node as usize * self.layers + k) * self.dim;
        &self.data[base..base + self.dim]
    }

    pub fn reps(&self, node: NodeRef) -> LayerReps {
        let vectors = (0..self.layers)
            .map(|k| self.layer(node.id, k).iter().map(|&v| v as f64).collect())
            .collect();
        LayerReps::new(node, vectors)
    }

    /// `Σ_k w_k x^(k)` for one node, written into `out`.
    pub fn combine_into(&self, node: u32, weights: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, &w) in weights.iter().enumerate() {
            out.iter_mut()
                .zip(self.layer(node, k))
                .for_each(|(a, &x)| *a += w * x as f64);
        }
    }

    pub fn combine_all(&self, weights: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.nodes, self.dim);
        m.data_mut()
            .par_chunks_mut(self.dim.max(1))
            .enumerate()
            .for_each(|(n, out)| self.combine_into(n as u32, weights, out));
        m
    }

    /// Cache format: `u32 n_nodes, u32 K, u32 dim`, then `K + 1` vectors of
    /// `dim` f32 per node, little-endian.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = LeWriter::default();
        w.u32(formats::to_u32(self.nodes, "n_nodes")?);
        w.u32(formats::to_u32(self.layers - 1, "K")?);
        w.u32(formats::to_u32(self.dim, "dim")?);
        w.f32s(&self.data);
        formats::write_bytes(path, &w.buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = formats::read_bytes(path)?;
        let what = path.display().to_string();
        let mut r = LeReader::new(&bytes, &what);
        let nodes = r.u32()? as usize;
        let layers = r.u32()? as usize + 1;
        let dim = r.u32()? as usize;
        let data = r.f32s(nodes * layers * dim)?;
        r.finish()?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GnpError::Invalid(format!(
                "{what}: non-finite representation"
            )));
        }
        Ok(RepTable {
            nodes,
            layers,
            dim,
            data,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Walks per origin (`S`).
    pub samples: usize,
    /// Steps per walk (`K`).
    pub steps: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            samples: 25,
            steps: 3,
            seed: 0,
        }
    }
}

/// Samples and pools walks from every node of `side`. Each origin draws
/// from its own stream derived from `(seed, side, id)`, so the output does
/// not depend on thread count or scheduling.
pub fn pool_all(
    graph: &InteractionGraph,
    embeddings: &EmbeddingStore,
    side: Side,
    cfg: &WalkConfig,
) -> Result<RepTable> {
    let n = match side {
        Side::User => graph.n_users(),
        Side::Item => graph.n_items(),
    };
    let label = match side {
        Side::User => "walks-user",
        Side::Item => "walks-item",
    };
    let reps: Vec<LayerReps> = (0..n as u32)
        .into_par_iter()
        .map(|id| {
            let origin = NodeRef { side, id };
            let mut r = rng::rng_for_entity(cfg.seed, label, id as u64);
            sample_walks(graph, origin, cfg.samples, cfg.steps, &mut r)
                .map(|w| walk_pool(&w, embeddings))
        })
        .collect::<Result<_>>()?;
    if n == 0 {
        return Ok(RepTable {
            nodes: 0,
            layers: cfg.steps + 1,
            dim: embeddings.dim(),
            data: Vec::new(),
        });
    }
    RepTable::from_reps(&reps)
}
