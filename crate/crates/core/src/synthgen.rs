//! Planted-block synthetic datasets.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{write_interactions, FeatureMatrix, FileFormat, Interaction};
use crate::error::{GnpError, Result};
use crate::formats;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_blocks: usize,
    pub in_block_prob: f64,
    pub cross_block_prob: f64,
    /// At least `n_blocks`; columns past the block indicator are pure noise.
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_users: 200,
            n_items: 300,
            n_blocks: 4,
            in_block_prob: 0.3,
            cross_block_prob: 0.01,
            feature_dim: 4,
            feature_noise: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.in_block_prob) || !unit.contains(&self.cross_block_prob) {
            return Err(GnpError::Config(
                "block probabilities must lie in [0,1]".into(),
            ));
        }
        if self.in_block_prob <= self.cross_block_prob {
            return Err(GnpError::Config(
                "in_block_prob must exceed cross_block_prob".into(),
            ));
        }
        if self.n_blocks == 0 || self.n_users == 0 || self.n_items == 0 {
            return Err(GnpError::Config(
                "n_users, n_items and n_blocks must be >= 1".into(),
            ));
        }
        if self.feature_dim < self.n_blocks {
            return Err(GnpError::Config(format!(
                "feature_dim {} smaller than n_blocks {}",
                self.feature_dim, self.n_blocks
            )));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(GnpError::Config(
                "feature_noise must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    /// Sorted by (user, item); ids are the generator's own indices.
    pub interactions: Vec<Interaction>,
    pub user_features: FeatureMatrix,
    pub item_features: FeatureMatrix,
    pub user_blocks: Vec<u32>,
    pub item_blocks: Vec<u32>,
}

fn features(n: usize, blocks: &[u32], spec: &SynthSpec, label: &str) -> Result<FeatureMatrix> {
    let mut r = rng::rng_for(spec.seed, label);
    let noise = Normal::new(0.0, spec.feature_noise)
        .map_err(|e| GnpError::Config(format!("feature_noise: {e}")))?;
    let mut v = Vec::with_capacity(n * spec.feature_dim);
    for &b in blocks {
        for c in 0..spec.feature_dim {
            let base = if c == b as usize { 1.0 } else { 0.0 };
            v.push((base + noise.sample(&mut r)) as f32);
        }
    }
    FeatureMatrix::new(n, spec.feature_dim, v)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let user_blocks: Vec<u32> = (0..spec.n_users)
        .map(|u| (u % spec.n_blocks) as u32)
        .collect();
    let item_blocks: Vec<u32> = (0..spec.n_items)
        .map(|i| (i % spec.n_blocks) as u32)
        .collect();
    let mut r = rng::rng_for(spec.seed, "synth-edges");
    let mut interactions = Vec::new();
    for (u, ub) in user_blocks.iter().enumerate() {
        for (i, ib) in item_blocks.iter().enumerate() {
            let p = if ub == ib {
                spec.in_block_prob
            } else {
                spec.cross_block_prob
            };
            if r.random::<f64>() < p {
                interactions.push(Interaction::new(u as u32, i as u32));
            }
        }
    }
    Ok(SynthData {
        user_features: features(spec.n_users, &user_blocks, spec, "synth-user-features")?,
        item_features: features(spec.n_items, &item_blocks, spec, "synth-item-features")?,
        interactions,
        user_blocks,
        item_blocks,
    })
}

/// Writes `interactions.tsv`, `user_features.tsv`, `item_features.tsv` and
/// `blocks.tsv` (`side id block`) under `dir`. Ids are written as integers,
/// so feature rows line up with original ids.
pub fn write_synth(data: &SynthData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| GnpError::io(dir, e))?;
    write_interactions(
        &dir.join("interactions.tsv"),
        &data.interactions,
        FileFormat::Tsv,
    )?;
    data.user_features
        .save(&dir.join("user_features.tsv"), FileFormat::Tsv)?;
    data.item_features
        .save(&dir.join("item_features.tsv"), FileFormat::Tsv)?;
    let mut s = String::new();
    for (u, b) in data.user_blocks.iter().enumerate() {
        s.push_str(&format!("user\t{u}\t{b}\n"));
    }
    for (i, b) in data.item_blocks.iter().enumerate() {
        s.push_str(&format!("item\t{i}\t{b}\n"));
    }
    formats::write_bytes(&dir.join("blocks.tsv"), s.as_bytes())
}
