//! Joint optimization of the adaptive layer weights and the patching MLPs.
//!
//! The objective per labeled pair is `(y − W(u,i))² + (y − P(u,i))²`, where
//! `P` consumes the masked GWarmer representation, plus `l2·‖θ‖²`. Raw
//! embeddings are frozen inputs. The DropoutNet baseline runs through the
//! same loop with single-layer (raw embedding) tables, frozen layer
//! weights, and only the `P` term.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    sample_negatives_excluding, DatasetSplit, FeatureMatrix, Interaction, SeenItems,
};
use crate::embedding::EmbeddingStore;
use crate::error::{GnpError, Result};
use crate::eval::{auc, Protocol, Scorer};
use crate::formats::{self, LeReader, LeWriter};
use crate::gwarmer::{AdaptiveWeights, RepTable};
use crate::linalg::dot;
use crate::patching::{draw_mask, patch_input, Dense, Mlp, MlpShape, PatchingNets};
use crate::rng::{self, GnpRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gnp,
    #[value(name = "dropoutnet")]
    DropoutNet,
}

impl Variant {
    fn code(self) -> u32 {
        match self {
            Variant::Gnp => 0,
            Variant::DropoutNet => 1,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Variant::Gnp),
            1 => Ok(Variant::DropoutNet),
            _ => Err(GnpError::Format(format!("unknown model variant code {c}"))),
        }
    }
}

/// Frozen inputs to the scorers: per-side layer tables and features.
#[derive(Clone, Debug)]
pub struct ModelInputs {
    pub user_reps: RepTable,
    pub item_reps: RepTable,
    pub user_features: FeatureMatrix,
    pub item_features: FeatureMatrix,
}

impl ModelInputs {
    /// Inputs for `variant`: pooled tables for GNP, raw embeddings (as
    /// single-layer tables) for DropoutNet.
    pub fn for_variant(
        variant: Variant,
        pooled: (&RepTable, &RepTable),
        embeddings: &EmbeddingStore,
        user_features: &FeatureMatrix,
        item_features: &FeatureMatrix,
    ) -> Self {
        let (user_reps, item_reps) = match variant {
            Variant::Gnp => (pooled.0.clone(), pooled.1.clone()),
            Variant::DropoutNet => (
                RepTable::from_embeddings(embeddings.user_matrix(), embeddings.dim()),
                RepTable::from_embeddings(embeddings.item_matrix(), embeddings.dim()),
            ),
        };
        ModelInputs {
            user_reps,
            item_reps,
            user_features: user_features.clone(),
            item_features: item_features.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.user_reps.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.user_reps.dim() == self.item_reps.dim()
            && self.user_reps.layers() == self.item_reps.layers();
        if !ok {
            return Err(GnpError::DimMismatch(
                "user/item representation tables differ".into(),
            ));
        }
        if self.user_features.rows() < self.user_reps.nodes()
            || self.item_features.rows() < self.item_reps.nodes()
        {
            return Err(GnpError::DimMismatch(format!(
                "features cover {}/{} users and {}/{} items",
                self.user_features.rows(),
                self.user_reps.nodes(),
                self.item_features.rows(),
                self.item_reps.nodes()
            )));
        }
        Ok(())
    }
}

/// All trainable state.
#[derive(Clone, Debug, PartialEq)]
pub struct GnpParams {
    pub variant: Variant,
    pub adaptive: AdaptiveWeights,
    pub user_mlp: Mlp,
    pub item_mlp: Mlp,
}

impl GnpParams {
    pub fn init(variant: Variant, inputs: &ModelInputs, shape: MlpShape, seed: u64) -> Self {
        let layers = inputs.user_reps.layers();
        let d = inputs.dim();
        let mut r = rng::rng_for(seed, "mlp-init");
        let user_mlp = Mlp::new(d + inputs.user_features.dim(), shape, d, &mut r);
        let item_mlp = Mlp::new(d + inputs.item_features.dim(), shape, d, &mut r);
        let adaptive = match variant {
            Variant::Gnp => AdaptiveWeights::uniform(layers),
            Variant::DropoutNet => AdaptiveWeights::layer0(layers),
        };
        GnpParams {
            variant,
            adaptive,
            user_mlp,
            item_mlp,
        }
    }

    pub fn zeros_like(&self) -> Self {
        GnpParams {
            variant: self.variant,
            adaptive: AdaptiveWeights {
                user: vec![0.0; self.adaptive.user.len()],
                item: vec![0.0; self.adaptive.item.len()],
            },
            user_mlp: self.user_mlp.zeros_like(),
            item_mlp: self.item_mlp.zeros_like(),
        }
    }

    pub fn nets(&self) -> PatchingNets {
        PatchingNets {
            user: self.user_mlp.clone(),
            item: self.item_mlp.clone(),
        }
    }

    /// Whether the layer weights are trainable (they are frozen at `e_0`
    /// for DropoutNet).
    fn adaptive_trainable(&self) -> bool {
        self.variant == Variant::Gnp
    }

    /// Parameter groups in a fixed order: user weights, item weights, then
    /// each MLP's (weight, bias) pairs.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.adaptive.user, &self.adaptive.item];
        v.extend(self.user_mlp.param_slices());
        v.extend(self.item_mlp.param_slices());
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.adaptive.user, &mut self.adaptive.item];
        v.extend(self.user_mlp.param_slices_mut());
        v.extend(self.item_mlp.param_slices_mut());
        v
    }

    /// Slices subject to optimization and the ℓ2 penalty.
    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let skip = if self.adaptive_trainable() { 0 } else { 2 };
        self.slices_mut().into_iter().skip(skip).collect()
    }

    fn trainable(&self) -> Vec<&[f64]> {
        let skip = if self.adaptive_trainable() { 0 } else { 2 };
        self.slices().into_iter().skip(skip).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }

    fn add_assign(&mut self, other: &GnpParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

// ---------------------------------------------------------------------------
// Loss

/// A labeled training pair (`y = 1` observed, `y = 0` sampled negative).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Labeled {
    pub user: u32,
    pub item: u32,
    pub label: f64,
}

/// Mask draws for one pair: `true` replaces that side with the placeholder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct PairMask {
    pub user: bool,
    pub item: bool,
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    /// `warm + cold + penalty`.
    pub loss: f64,
    pub warm: f64,
    pub cold: f64,
    pub penalty: f64,
    pub grads: GnpParams,
    /// Gradient reaching the layer weights through the patching term alone.
    pub cold_adaptive_grad: AdaptiveWeights,
}

const LOSS_SHARDS: usize = 8;

struct ShardOut {
    warm: f64,
    cold: f64,
    cold_adaptive: AdaptiveWeights,
}

fn shard_loss(
    batch: &[Labeled],
    masks: &[PairMask],
    params: &GnpParams,
    inputs: &ModelInputs,
    grads: &mut GnpParams,
) -> ShardOut {
    let d = inputs.dim();
    let layers = params.adaptive.layers();
    let gnp = params.variant == Variant::Gnp;
    let mut xu = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut out = ShardOut {
        warm: 0.0,
        cold: 0.0,
        cold_adaptive: AdaptiveWeights {
            user: vec![0.0; layers],
            item: vec![0.0; layers],
        },
    };
    for (ex, m) in batch.iter().zip(masks) {
        inputs
            .user_reps
            .combine_into(ex.user, &params.adaptive.user, &mut xu);
        inputs
            .item_reps
            .combine_into(ex.item, &params.adaptive.item, &mut xi);

        if gnp {
            let r = dot(&xu, &xi) - ex.label;
            out.warm += r * r;
            let g = 2.0 * r;
            for k in 0..layers {
                grads.adaptive.user[k] += g * dot_f32(inputs.user_reps.layer(ex.user, k), &xi);
                grads.adaptive.item[k] += g * dot_f32(inputs.item_reps.layer(ex.item, k), &xu);
            }
        }

        let zeros = vec![0.0; d];
        let mu: &[f64] = if m.user { &zeros } else { &xu };
        let mi: &[f64] = if m.item { &zeros } else { &xi };
        let tu = params
            .user_mlp
            .forward_traced(patch_input(mu, inputs.user_features.row(ex.user as usize)));
        let ti = params
            .item_mlp
            .forward_traced(patch_input(mi, inputs.item_features.row(ex.item as usize)));
        let r = dot(tu.output(), ti.output()) - ex.label;
        out.cold += r * r;
        let g = 2.0 * r;
        let up_u: Vec<f64> = ti.output().iter().map(|v| g * v).collect();
        let up_i: Vec<f64> = tu.output().iter().map(|v| g * v).collect();
        let gin_u = params.user_mlp.backward(&tu, &up_u, &mut grads.user_mlp);
        let gin_i = params.item_mlp.backward(&ti, &up_i, &mut grads.item_mlp);
        if gnp {
            if !m.user {
                for k in 0..layers {
                    let c = dot_f32(inputs.user_reps.layer(ex.user, k), &gin_u[..d]);
                    grads.adaptive.user[k] += c;
                    out.cold_adaptive.user[k] += c;
                }
            }
            if !m.item {
                for k in 0..layers {
                    let c = dot_f32(inputs.item_reps.layer(ex.item, k), &gin_i[..d]);
                    grads.adaptive.item[k] += c;
                    out.cold_adaptive.item[k] += c;
                }
            }
        }
    }
    out
}

fn dot_f32(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, y)| x as f64 * y).sum()
}

/// Reusable per-shard gradient buffers.
struct GradBuffers {
    shards: Vec<GnpParams>,
}

impl GradBuffers {
    fn new(params: &GnpParams) -> Self {
        GradBuffers {
            shards: (0..LOSS_SHARDS).map(|_| params.zeros_like()).collect(),
        }
    }
}

/// Loss and gradients with mask draws supplied by the caller. The batch is
/// cut into a fixed number of contiguous shards whose gradients are summed
/// in shard order, so the result is independent of the thread count.
pub fn gnp_loss_with_masks(
    batch: &[Labeled],
    masks: &[PairMask],
    params: &GnpParams,
    inputs: &ModelInputs,
    l2: f64,
) -> Result<LossOutput> {
    let mut bufs = GradBuffers::new(params);
    loss_into(batch, masks, params, inputs, l2, &mut bufs)
}

fn loss_into(
    batch: &[Labeled],
    masks: &[PairMask],
    params: &GnpParams,
    inputs: &ModelInputs,
    l2: f64,
    bufs: &mut GradBuffers,
) -> Result<LossOutput> {
    if batch.len() != masks.len() {
        return Err(GnpError::Invalid(
            "one mask pair per example required".into(),
        ));
    }
    let shard_len = batch.len().div_ceil(LOSS_SHARDS).max(1);
    let outs: Vec<ShardOut> = bufs
        .shards
        .par_iter_mut()
        .enumerate()
        .map(|(s, g)| {
            g.fill_zero();
            let lo = (s * shard_len).min(batch.len());
            let hi = ((s + 1) * shard_len).min(batch.len());
            shard_loss(&batch[lo..hi], &masks[lo..hi], params, inputs, g)
        })
        .collect();

    let mut grads = params.zeros_like();
    let layers = params.adaptive.layers();
    let mut cold_adaptive = AdaptiveWeights {
        user: vec![0.0; layers],
        item: vec![0.0; layers],
    };
    let (mut warm, mut cold) = (0.0, 0.0);
    for (o, g) in outs.iter().zip(&bufs.shards) {
        warm += o.warm;
        cold += o.cold;
        grads.add_assign(g);
        for k in 0..layers {
            cold_adaptive.user[k] += o.cold_adaptive.user[k];
            cold_adaptive.item[k] += o.cold_adaptive.item[k];
        }
    }

    let mut penalty = 0.0;
    for (p, g) in params.trainable().into_iter().zip(grads.trainable_mut()) {
        for (x, gx) in p.iter().zip(g.iter_mut()) {
            penalty += x * x;
            *gx += 2.0 * l2 * x;
        }
    }
    penalty *= l2;

    let loss = warm + cold + penalty;
    if !loss.is_finite() {
        return Err(GnpError::Numerical(format!(
            "non-finite loss (warm {warm}, cold {cold}, penalty {penalty})"
        )));
    }
    Ok(LossOutput {
        loss,
        warm,
        cold,
        penalty,
        grads,
        cold_adaptive_grad: cold_adaptive,
    })
}

/// Draws Bernoulli(τ) masks for every pair, user side then item side.
pub fn draw_masks(n: usize, tau: f64, rng: &mut GnpRng) -> Vec<PairMask> {
    (0..n)
        .map(|_| PairMask {
            user: draw_mask(tau, rng),
            item: draw_mask(tau, rng),
        })
        .collect()
}

pub fn gnp_loss(
    batch: &[Labeled],
    params: &GnpParams,
    inputs: &ModelInputs,
    tau: f64,
    l2: f64,
    rng: &mut GnpRng,
) -> Result<LossOutput> {
    let masks = draw_masks(batch.len(), tau, rng);
    gnp_loss_with_masks(batch, &masks, params, inputs, l2)
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of one parameter slice at step `t ≥ 1`.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for k in 0..params.len() {
        let g = grads[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[k] / bc1;
        let vhat = v[k] / bc2;
        params[k] -= lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

/// Adam moments shaped like [`GnpParams`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: GnpParams,
    pub v: GnpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &GnpParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

pub fn adam_step(
    params: &mut GnpParams,
    grads: &GnpParams,
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) {
    state.t += 1;
    let t = state.t;
    let ps = params.trainable_mut();
    let gs = grads.trainable();
    let ms = state.m.trainable_mut();
    let vs = state.v.trainable_mut();
    for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
        adam_update(p, g, m, v, t, lr, cfg);
    }
}

// ---------------------------------------------------------------------------
// Fit

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub tau: f64,
    pub n_neg_per_pos: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-AUC improvement before stopping;
    /// 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
    pub mlp: MlpShape,
    pub adam: AdamConfig,
    /// Candidate pool for the early-stopping AUC.
    pub auc_protocol: Protocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 1024,
            l2: 1e-5,
            tau: 0.5,
            n_neg_per_pos: 4,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            mlp: MlpShape::default(),
            adam: AdamConfig::default(),
            auc_protocol: Protocol::Hybrid,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(GnpError::Config(format!(
                "lr {} must be finite and >= 0",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(GnpError::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(GnpError::Config(format!("tau {} outside [0,1]", self.tau)));
        }
        if self.n_neg_per_pos == 0 {
            return Err(GnpError::Config("n_neg_per_pos must be >= 1".into()));
        }
        if self.auc_protocol == Protocol::Cold {
            return Err(GnpError::Config(
                "auc_protocol must be hybrid or warm".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-pair loss over the epoch (both terms, penalty excluded).
    pub loss: f64,
    pub val_auc: f64,
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: GnpParams,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were returned (0 = initialization).
    pub best_epoch: usize,
    /// Largest |∂P/∂w| seen over the run; exactly zero when τ = 1.
    pub max_cold_adaptive_grad: f64,
}

/// Training-log TSV: `epoch loss val_auc elapsed_ms`.
/// Per-epoch TSV without wall times, so that it is reproducible.
pub fn format_log(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch\tloss\tval_auc\n");
    for e in log {
        s.push_str(&format!("{}\t{:.6}\t{:.6}\n", e.epoch, e.loss, e.val_auc));
    }
    s
}

pub fn format_timing(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch\telapsed_ms\n");
    for e in log {
        s.push_str(&format!("{}\t{}\n", e.epoch, e.elapsed_ms));
    }
    s
}

/// Fixed validation pairs for early stopping: every validation positive in
/// the protocol's pool, plus `n_neg_per_pos` negatives per positive.
fn validation_pairs(split: &DatasetSplit, cfg: &TrainConfig) -> Result<Vec<Labeled>> {
    let warm = split.warm_sets();
    let (pool, positives): (Vec<u32>, Vec<Interaction>) = match cfg.auc_protocol {
        Protocol::Warm => (
            split.warm_items.clone(),
            split
                .validation
                .iter()
                .filter(|x| warm.item(x.item))
                .copied()
                .collect(),
        ),
        _ => (
            (0..split.n_items as u32).collect(),
            split.validation.clone(),
        ),
    };
    if positives.is_empty() || pool.is_empty() {
        return Ok(Vec::new());
    }
    let seen_all = SeenItems::from_interactions(
        split.n_users,
        split.train_interactions().chain(&split.validation),
    );
    let mut r = rng::rng_for(cfg.seed, "val-negatives");
    let neg = sample_negatives_excluding(&positives, cfg.n_neg_per_pos, &pool, &seen_all, &mut r)?;
    let mut out: Vec<Labeled> = positives
        .iter()
        .map(|x| Labeled {
            user: x.user,
            item: x.item,
            label: 1.0,
        })
        .collect();
    out.extend(neg.iter().map(|x| Labeled {
        user: x.user,
        item: x.item,
        label: 0.0,
    }));
    Ok(out)
}

fn validation_auc(
    params: &GnpParams,
    inputs: &ModelInputs,
    split: &DatasetSplit,
    pairs: &[Labeled],
) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let scorer = Scorer::build(params, inputs, split.warm_sets())?;
    let scored: Vec<(f64, bool)> = pairs
        .iter()
        .map(|p| scorer.score(p.user, p.item).map(|s| (s, p.label > 0.5)))
        .collect::<Result<_>>()?;
    auc(&scored).or(Ok(f64::NAN))
}

/// Mini-batch Adam over model-train positives and freshly sampled
/// negatives each epoch, with validation-AUC early stopping. Returns the
/// best-AUC parameters.
pub fn fit(
    split: &DatasetSplit,
    inputs: &ModelInputs,
    variant: Variant,
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    inputs.validate()?;
    let warm = split.warm_sets();
    let positives: Vec<Interaction> = split
        .model_train
        .iter()
        .filter(|x| warm.user(x.user) && warm.item(x.item))
        .copied()
        .collect();
    let seen = SeenItems::from_interactions(split.n_users, split.train_interactions());

    let mut params = GnpParams::init(variant, inputs, cfg.mlp, cfg.seed);
    let mut outcome = FitOutcome {
        params: params.clone(),
        log: Vec::new(),
        best_epoch: 0,
        max_cold_adaptive_grad: 0.0,
    };
    if cfg.max_epochs == 0 {
        return Ok(outcome);
    }
    if positives.is_empty() {
        return Err(GnpError::Invalid(
            "no warm model-training interactions".into(),
        ));
    }

    let val = validation_pairs(split, cfg)?;
    let mut adam = AdamState::new(&params);
    let mut bufs = GradBuffers::new(&params);
    let mut rng = rng::rng_for(cfg.seed, "train");
    let mut best_auc = f64::NEG_INFINITY;
    let mut stale = 0;
    let start = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        let neg = sample_negatives_excluding(
            &positives,
            cfg.n_neg_per_pos,
            &split.warm_items,
            &seen,
            &mut rng,
        )?;
        let mut examples: Vec<Labeled> = positives
            .iter()
            .map(|x| Labeled {
                user: x.user,
                item: x.item,
                label: 1.0,
            })
            .chain(neg.iter().map(|x| Labeled {
                user: x.user,
                item: x.item,
                label: 0.0,
            }))
            .collect();
        examples.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            let masks = draw_masks(batch.len(), cfg.tau, &mut rng);
            let out = loss_into(batch, &masks, &params, inputs, cfg.l2, &mut bufs)
                .map_err(|e| GnpError::Numerical(format!("epoch {epoch}: {e}")))?;
            epoch_loss += out.warm + out.cold;
            let cold_max = out
                .cold_adaptive_grad
                .user
                .iter()
                .chain(&out.cold_adaptive_grad.item)
                .fold(0.0f64, |a, b| a.max(b.abs()));
            outcome.max_cold_adaptive_grad = outcome.max_cold_adaptive_grad.max(cold_max);
            adam_step(&mut params, &out.grads, &mut adam, cfg.lr, cfg.adam);
            if !params.all_finite() {
                return Err(GnpError::Numerical(format!(
                    "epoch {epoch}: parameters became non-finite"
                )));
            }
        }

        let val_auc = validation_auc(&params, inputs, split, &val)?;
        outcome.log.push(EpochLog {
            epoch,
            loss: epoch_loss / examples.len() as f64,
            val_auc,
            elapsed_ms: start.elapsed().as_millis(),
        });
        log::debug!(
            "epoch {epoch} loss {:.5} val_auc {val_auc:.5}",
            epoch_loss / examples.len() as f64
        );

        if val_auc.is_nan() {
            outcome.params = params.clone();
            outcome.best_epoch = epoch;
            continue;
        }
        if val_auc > best_auc {
            best_auc = val_auc;
            stale = 0;
            outcome.params = params.clone();
            outcome.best_epoch = epoch;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Checkpoint

const CKPT_MAGIC: &[u8; 8] = b"GNPCKPT\0";
const CKPT_VERSION: u32 = 1;

/// Little-endian checkpoint: magic, `u32 version`, `u32 variant`,
/// `u32 K+1`, user then item layer weights (f32), then the user and item
/// MLPs as `u32 n_layers` followed per layer by `u32 out, u32 in`,
/// row-major f32 weights and f32 biases.
pub fn save_checkpoint(params: &GnpParams, path: &Path) -> Result<()> {
    let mut w = LeWriter::default();
    w.bytes(CKPT_MAGIC);
    w.u32(CKPT_VERSION);
    w.u32(params.variant.code());
    w.u32(formats::to_u32(params.adaptive.layers(), "layers")?);
    for &x in params.adaptive.user.iter().chain(&params.adaptive.item) {
        w.f32(x as f32);
    }
    for mlp in [&params.user_mlp, &params.item_mlp] {
        w.u32(formats::to_u32(mlp.layers().len(), "mlp depth")?);
        for l in mlp.layers() {
            w.u32(formats::to_u32(l.out_dim(), "out")?);
            w.u32(formats::to_u32(l.in_dim(), "in")?);
            for &x in l.weight.data().iter().chain(&l.bias) {
                w.f32(x as f32);
            }
        }
    }
    formats::write_bytes(path, &w.buf)
}

pub fn load_checkpoint(path: &Path) -> Result<GnpParams> {
    let bytes = formats::read_bytes(path)?;
    let what = path.display().to_string();
    let mut r = LeReader::new(&bytes, &what);
    r.magic(CKPT_MAGIC)?;
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(GnpError::Format(format!(
            "{what}: unsupported checkpoint version {version}"
        )));
    }
    let variant = Variant::from_code(r.u32()?)?;
    let layers = r.u32()? as usize;
    let widen = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<f64>>();
    let user = widen(r.f32s(layers)?);
    let item = widen(r.f32s(layers)?);
    let mut mlps = Vec::with_capacity(2);
    for _ in 0..2 {
        let n = r.u32()? as usize;
        let mut dense = Vec::with_capacity(n);
        for _ in 0..n {
            let out = r.u32()? as usize;
            let inp = r.u32()? as usize;
            let weight = crate::linalg::Matrix::from_vec(out, inp, widen(r.f32s(out * inp)?));
            let bias = widen(r.f32s(out)?);
            dense.push(Dense { weight, bias });
        }
        mlps.push(Mlp::from_layers(dense)?);
    }
    r.finish()?;
    let item_mlp = mlps.pop().expect("two MLPs");
    let user_mlp = mlps.pop().expect("two MLPs");
    let params = GnpParams {
        variant,
        adaptive: AdaptiveWeights { user, item },
        user_mlp,
        item_mlp,
    };
    if !params.all_finite() {
        return Err(GnpError::Format(format!("{what}: non-finite parameter")));
    }
    Ok(params)
}
