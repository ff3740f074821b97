//! All-ranking evaluation, the warm/cold dispatch rule, ranking metrics and
//! the inference benchmark.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, FeatureMatrix, SeenItems, WarmSets};
use crate::error::{GnpError, Result};
use crate::gwarmer::{AdaptiveWeights, RepTable};
use crate::linalg::{dot, Matrix};
use crate::patching::{patch_input, Mlp, MlpShape, PatchingNets};
use crate::rng;
use crate::train::{GnpParams, ModelInputs, Variant};

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    Hybrid,
    Warm,
    Cold,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Hybrid => "hybrid",
            Protocol::Warm => "warm",
            Protocol::Cold => "cold",
        }
    }
}

/// Which scorer produced a prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScorePath {
    Warm,
    Cold,
}

// ---------------------------------------------------------------------------
// Scorer

/// Precomputed warm and patched representations for every entity, plus
/// counters of how many pairs each path has scored.
#[derive(Debug)]
pub struct Scorer {
    variant: Variant,
    warm: WarmSets,
    user_warm: Matrix,
    item_warm: Matrix,
    user_cold: Matrix,
    item_cold: Matrix,
    warm_calls: AtomicU64,
    cold_calls: AtomicU64,
}

fn patched_table(reps: &Matrix, warm: &[bool], features: &FeatureMatrix, mlp: &Mlp) -> Matrix {
    let d = mlp.out_dim();
    let mut out = Matrix::zeros(reps.rows(), d);
    let zeros = vec![0.0; reps.cols()];
    out.data_mut()
        .par_chunks_mut(d.max(1))
        .enumerate()
        .for_each(|(n, row)| {
            let x: &[f64] = if warm[n] { reps.row(n) } else { &zeros };
            row.copy_from_slice(&mlp.forward(&patch_input(x, features.row(n))));
        });
    out
}

impl Scorer {
    /// Cold entities get the zero placeholder in place of their
    /// representation; warm ones feed the patching MLP unmasked.
    pub fn build(params: &GnpParams, inputs: &ModelInputs, warm: WarmSets) -> Result<Self> {
        inputs.validate()?;
        let n_users = inputs.user_reps.nodes();
        let n_items = inputs.item_reps.nodes();
        if warm.users.len() != n_users || warm.items.len() != n_items {
            return Err(GnpError::DimMismatch(format!(
                "warm sets cover {}x{} entities, model inputs {n_users}x{n_items}",
                warm.users.len(),
                warm.items.len()
            )));
        }
        let d = inputs.dim();
        let expect_u = d + inputs.user_features.dim();
        let expect_i = d + inputs.item_features.dim();
        if params.user_mlp.in_dim() != expect_u
            || params.item_mlp.in_dim() != expect_i
            || params.user_mlp.out_dim() != params.item_mlp.out_dim()
            || params.adaptive.layers() != inputs.user_reps.layers()
        {
            return Err(GnpError::DimMismatch(format!(
                "model expects inputs {}/{} with {} layers; data provides {expect_u}/{expect_i} with {}",
                params.user_mlp.in_dim(),
                params.item_mlp.in_dim(),
                params.adaptive.layers(),
                inputs.user_reps.layers()
            )));
        }
        let user_warm = inputs.user_reps.combine_all(&params.adaptive.user);
        let item_warm = inputs.item_reps.combine_all(&params.adaptive.item);
        let user_cold = patched_table(
            &user_warm,
            &warm.users,
            &inputs.user_features,
            &params.user_mlp,
        );
        let item_cold = patched_table(
            &item_warm,
            &warm.items,
            &inputs.item_features,
            &params.item_mlp,
        );
        Ok(Scorer {
            variant: params.variant,
            warm,
            user_warm,
            item_warm,
            user_cold,
            item_cold,
            warm_calls: AtomicU64::new(0),
            cold_calls: AtomicU64::new(0),
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_warm.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item_warm.rows()
    }

    pub fn warm_sets(&self) -> &WarmSets {
        &self.warm
    }

    /// `W` only when both endpoints are warm (never for DropoutNet).
    pub fn path(&self, u: u32, i: u32) -> ScorePath {
        if self.variant == Variant::Gnp && self.warm.user(u) && self.warm.item(i) {
            ScorePath::Warm
        } else {
            ScorePath::Cold
        }
    }

    fn check(&self, u: u32, i: u32) -> Result<()> {
        if u as usize >= self.n_users() || i as usize >= self.n_items() {
            return Err(GnpError::Invalid(format!(
                "pair ({u}, {i}) outside {}x{} model",
                self.n_users(),
                self.n_items()
            )));
        }
        Ok(())
    }

    fn raw_score(&self, u: u32, i: u32) -> (f64, ScorePath) {
        match self.path(u, i) {
            ScorePath::Warm => (
                dot(
                    self.user_warm.row(u as usize),
                    self.item_warm.row(i as usize),
                ),
                ScorePath::Warm,
            ),
            ScorePath::Cold => (
                dot(
                    self.user_cold.row(u as usize),
                    self.item_cold.row(i as usize),
                ),
                ScorePath::Cold,
            ),
        }
    }

    pub fn score(&self, u: u32, i: u32) -> Result<f64> {
        self.check(u, i)?;
        let (s, path) = self.raw_score(u, i);
        self.count(path, 1);
        Ok(s)
    }

    /// Scores of `u` against each of `items`, in order.
    pub fn score_items(&self, u: u32, items: &[u32]) -> Result<Vec<f64>> {
        let mut warm = 0;
        let mut out = Vec::with_capacity(items.len());
        for &i in items {
            self.check(u, i)?;
            let (s, path) = self.raw_score(u, i);
            warm += (path == ScorePath::Warm) as u64;
            out.push(s);
        }
        self.count(ScorePath::Warm, warm);
        self.count(ScorePath::Cold, items.len() as u64 - warm);
        Ok(out)
    }

    fn count(&self, path: ScorePath, n: u64) {
        let c = match path {
            ScorePath::Warm => &self.warm_calls,
            ScorePath::Cold => &self.cold_calls,
        };
        c.fetch_add(n, AtomicOrdering::Relaxed);
    }

    /// `(warm, cold)` pairs scored since construction or the last reset.
    pub fn counts(&self) -> (u64, u64) {
        (
            self.warm_calls.load(AtomicOrdering::Relaxed),
            self.cold_calls.load(AtomicOrdering::Relaxed),
        )
    }

    pub fn reset_counts(&self) {
        self.warm_calls.store(0, AtomicOrdering::Relaxed);
        self.cold_calls.store(0, AtomicOrdering::Relaxed);
    }
}

/// Single-pair dispatch.
pub fn dispatch_score(scorer: &Scorer, u: u32, i: u32) -> Result<f64> {
    scorer.score(u, i)
}

// ---------------------------------------------------------------------------
// Metrics

fn by_score_then_id(a: (u32, f64), b: (u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Candidates sorted by descending score, ties by ascending id.
pub fn rank_all(candidates: &[u32], scores: &[f64]) -> Vec<u32> {
    debug_assert_eq!(candidates.len(), scores.len());
    let mut v: Vec<(u32, f64)> = candidates
        .iter()
        .copied()
        .zip(scores.iter().copied())
        .collect();
    v.sort_unstable_by(|&a, &b| by_score_then_id(a, b));
    v.into_iter().map(|(i, _)| i).collect()
}

/// The first `k` entries of [`rank_all`] without sorting the whole list.
pub fn top_k(candidates: &[u32], scores: &[f64], k: usize) -> Vec<u32> {
    let mut v: Vec<(u32, f64)> = candidates
        .iter()
        .copied()
        .zip(scores.iter().copied())
        .collect();
    if k < v.len() {
        v.select_nth_unstable_by(k, |&a, &b| by_score_then_id(a, b));
        v.truncate(k);
    }
    v.sort_unstable_by(|&a, &b| by_score_then_id(a, b));
    v.into_iter().map(|(i, _)| i).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankMetrics {
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
}

/// Recall, precision and NDCG of `ranked` truncated at `k`. `relevant` must
/// be sorted and nonempty; `k ≥ 1`.
pub fn recall_precision_ndcg_at_k(
    ranked: &[u32],
    relevant: &[u32],
    k: usize,
) -> Result<RankMetrics> {
    if k == 0 {
        return Err(GnpError::Invalid("k must be >= 1".into()));
    }
    if relevant.is_empty() {
        return Err(GnpError::Invalid("empty relevant set".into()));
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.binary_search(item).is_ok() {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let idcg: f64 = (0..k.min(relevant.len()))
        .map(|p| 1.0 / ((p + 2) as f64).log2())
        .sum();
    Ok(RankMetrics {
        recall: hits as f64 / relevant.len() as f64,
        precision: hits as f64 / k as f64,
        ndcg: dcg / idcg,
    })
}

/// Rank-sum AUC with tied scores counted as one half.
pub fn auc(scored: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scored.iter().filter(|p| p.1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GnpError::Invalid(
            "AUC needs both positive and negative labels".into(),
        ));
    }
    let mut v: Vec<(f64, bool)> = scored.to_vec();
    v.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    // Midranks (1-based) over tie groups.
    let mut rank_sum = 0.0;
    let mut lo = 0;
    while lo < v.len() {
        let mut hi = lo + 1;
        while hi < v.len() && v[hi].0.total_cmp(&v[lo].0) == Ordering::Equal {
            hi += 1;
        }
        let mid = (lo + 1 + hi) as f64 / 2.0;
        rank_sum += mid * v[lo..hi].iter().filter(|p| p.1).count() as f64;
        lo = hi;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

// ---------------------------------------------------------------------------
// Evaluation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    pub ndcg: f64,
    /// Mean per-user AUC over users with both relevant and irrelevant
    /// candidates.
    pub auc: f64,
    pub n_users_evaluated: usize,
    /// Test users with no relevant item in the pool.
    pub n_users_skipped: usize,
    /// Excluded from persisted reports so that they are reproducible.
    #[serde(skip)]
    pub wall_time_ms: u128,
}

impl EvalReport {
    pub const TSV_HEADER: &'static str =
        "protocol\tk\trecall\tprecision\tndcg\tauc\tn_users_evaluated\tn_users_skipped";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.protocol.name(),
            self.k,
            self.recall,
            self.precision,
            self.ndcg,
            self.auc,
            self.n_users_evaluated,
            self.n_users_skipped
        )
    }

    pub fn to_tsv(reports: &[EvalReport]) -> String {
        let mut s = format!("{}\n", Self::TSV_HEADER);
        for r in reports {
            s.push_str(&r.tsv_row());
            s.push('\n');
        }
        s
    }

    /// JSON object including the wall time.
    pub fn to_json_with_timing(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["wall_time_ms"] = serde_json::json!(self.wall_time_ms as u64);
        v
    }

    pub fn pretty(reports: &[EvalReport]) -> String {
        let mut s = format!(
            "{:<8} {:>4} {:>9} {:>9} {:>9} {:>9} {:>7} {:>9}\n",
            "protocol", "k", "recall", "precision", "ndcg", "auc", "users", "time_ms"
        );
        for r in reports {
            s.push_str(&format!(
                "{:<8} {:>4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>9}\n",
                r.protocol.name(),
                r.k,
                r.recall,
                r.precision,
                r.ndcg,
                r.auc,
                r.n_users_evaluated,
                r.wall_time_ms
            ));
        }
        s
    }
}

struct UserResult {
    metrics: RankMetrics,
    auc: Option<f64>,
}

/// All-ranking evaluation on the test partition. Candidates are the
/// protocol's pool minus the user's training and validation positives;
/// relevant items are the user's test items inside the pool.
pub fn evaluate(
    split: &DatasetSplit,
    scorer: &Scorer,
    protocol: Protocol,
    k: usize,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(GnpError::Config("eval k must be >= 1".into()));
    }
    let start = Instant::now();
    let pool: Vec<u32> = match protocol {
        Protocol::Hybrid => (0..split.n_items as u32).collect(),
        Protocol::Warm => split.warm_items.clone(),
        Protocol::Cold => split.cold_items.clone(),
    };
    let mut in_pool = vec![false; split.n_items];
    pool.iter().for_each(|&i| in_pool[i as usize] = true);
    let seen = SeenItems::from_interactions(
        split.n_users,
        split.train_interactions().chain(&split.validation),
    );
    let test = SeenItems::from_interactions(split.n_users, &split.test);
    let test_users: Vec<u32> = (0..split.n_users as u32)
        .filter(|&u| !test.items(u).is_empty())
        .collect();

    let results: Vec<Option<UserResult>> = test_users
        .par_iter()
        .map(|&u| -> Result<Option<UserResult>> {
            let relevant: Vec<u32> = test
                .items(u)
                .iter()
                .copied()
                .filter(|&i| in_pool[i as usize])
                .collect();
            if relevant.is_empty() {
                return Ok(None);
            }
            let candidates: Vec<u32> = pool
                .iter()
                .copied()
                .filter(|&i| !seen.contains(u, i))
                .collect();
            let scores = scorer.score_items(u, &candidates)?;
            let ranked = top_k(&candidates, &scores, k);
            let metrics = recall_precision_ndcg_at_k(&ranked, &relevant, k)?;
            let labeled: Vec<(f64, bool)> = candidates
                .iter()
                .zip(&scores)
                .map(|(i, &s)| (s, relevant.binary_search(i).is_ok()))
                .collect();
            Ok(Some(UserResult {
                metrics,
                auc: auc(&labeled).ok(),
            }))
        })
        .collect::<Result<_>>()?;

    let (mut recall, mut precision, mut ndcg) = (0.0, 0.0, 0.0);
    let (mut auc_sum, mut auc_n) = (0.0, 0usize);
    let mut n = 0usize;
    for r in results.iter().flatten() {
        recall += r.metrics.recall;
        precision += r.metrics.precision;
        ndcg += r.metrics.ndcg;
        if let Some(a) = r.auc {
            auc_sum += a;
            auc_n += 1;
        }
        n += 1;
    }
    let mean = |x: f64, n: usize| if n == 0 { 0.0 } else { x / n as f64 };
    Ok(EvalReport {
        protocol,
        k,
        recall: mean(recall, n),
        precision: mean(precision, n),
        ndcg: mean(ndcg, n),
        auc: mean(auc_sum, auc_n),
        n_users_evaluated: n,
        n_users_skipped: test_users.len() - n,
        wall_time_ms: start.elapsed().as_millis(),
    })
}

// ---------------------------------------------------------------------------
// Inference benchmark

/// Inputs for the two timed paths: pooled tables with layer weights for
/// the GNP warm path, raw embeddings with patching MLPs for the baseline.
#[derive(Clone, Debug)]
pub struct BenchContext {
    pub user_reps: RepTable,
    pub item_reps: RepTable,
    pub weights: AdaptiveWeights,
    pub user_embeddings: RepTable,
    pub item_embeddings: RepTable,
    pub nets: PatchingNets,
    pub user_features: FeatureMatrix,
    pub item_features: FeatureMatrix,
}

/// Random context of the given shape, for timing only.
pub fn synthetic_bench_context(
    n_users: usize,
    n_items: usize,
    dim: usize,
    steps: usize,
    feature_dim: usize,
    shape: MlpShape,
    seed: u64,
) -> BenchContext {
    use rand::Rng;
    let mut r = rng::rng_for(seed, "bench");
    let mut table = |n: usize, layers: usize| {
        let mut reps = Vec::with_capacity(n);
        for node in 0..n {
            reps.push(crate::gwarmer::LayerReps::new(
                crate::graph::NodeRef::user(node as u32),
                (0..layers)
                    .map(|_| (0..dim).map(|_| r.random_range(-0.1..0.1)).collect())
                    .collect(),
            ));
        }
        RepTable::from_reps(&reps).expect("uniform shapes")
    };
    let user_reps = table(n_users, steps + 1);
    let item_reps = table(n_items, steps + 1);
    let user_embeddings = table(n_users, 1);
    let item_embeddings = table(n_items, 1);
    let mut feats = |n: usize| {
        let v = (0..n * feature_dim)
            .map(|_| r.random_range(0.0..1.0))
            .collect();
        FeatureMatrix::new(n, feature_dim, v).expect("finite features")
    };
    let user_features = feats(n_users);
    let item_features = feats(n_items);
    let nets = PatchingNets {
        user: Mlp::new(dim + feature_dim, shape, dim, &mut r),
        item: Mlp::new(dim + feature_dim, shape, dim, &mut r),
    };
    BenchContext {
        user_reps,
        item_reps,
        weights: AdaptiveWeights::uniform(steps + 1),
        user_embeddings,
        item_embeddings,
        nets,
        user_features,
        item_features,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_users: usize,
    pub n_items: usize,
    pub k: usize,
    pub repeat: usize,
    pub gnp_ms: Vec<f64>,
    pub dropoutnet_ms: Vec<f64>,
    pub gnp_median_ms: f64,
    pub dropoutnet_median_ms: f64,
}

impl BenchReport {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("run\tgnp_ms\tdropoutnet_ms\n");
        for (r, (a, b)) in self.gnp_ms.iter().zip(&self.dropoutnet_ms).enumerate() {
            s.push_str(&format!("{r}\t{a:.3}\t{b:.3}\n"));
        }
        s.push_str(&format!(
            "median\t{:.3}\t{:.3}\n",
            self.gnp_median_ms, self.dropoutnet_median_ms
        ));
        s
    }
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn rank_users(users: &Matrix, items: &Matrix, n_users: usize, k: usize) -> usize {
    let ids: Vec<u32> = (0..items.rows() as u32).collect();
    (0..n_users)
        .into_par_iter()
        .map(|u| {
            let scores = items.mul_vec(users.row(u));
            top_k(&ids, &scores, k).len()
        })
        .sum()
}

fn mlp_table(reps: &RepTable, n: usize, features: &FeatureMatrix, mlp: &Mlp) -> Matrix {
    let d = mlp.out_dim();
    let mut out = Matrix::zeros(n, d);
    out.data_mut()
        .par_chunks_mut(d.max(1))
        .enumerate()
        .for_each(|(node, row)| {
            let x: Vec<f64> = reps
                .layer(node as u32, 0)
                .iter()
                .map(|&v| v as f64)
                .collect();
            row.copy_from_slice(&mlp.forward(&patch_input(&x, features.row(node))));
        });
    out
}

/// Times full top-`k` ranking of all items for the first `n_users` users,
/// `repeat` times per path. The GNP path scores precomputed combined
/// representations; the baseline path runs the patching MLPs for every
/// user and item before the same dot products.
pub fn bench_inference(
    ctx: &BenchContext,
    n_users: usize,
    repeat: usize,
    k: usize,
) -> Result<BenchReport> {
    let n_users = n_users.min(ctx.user_reps.nodes());
    let n_items = ctx.item_reps.nodes();
    let user_warm = ctx.user_reps.combine_all(&ctx.weights.user);
    let item_warm = ctx.item_reps.combine_all(&ctx.weights.item);
    let mut gnp_ms = Vec::with_capacity(repeat);
    let mut dropoutnet_ms = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let t = Instant::now();
        std::hint::black_box(rank_users(&user_warm, &item_warm, n_users, k));
        gnp_ms.push(t.elapsed().as_secs_f64() * 1e3);

        let t = Instant::now();
        let users = mlp_table(
            &ctx.user_embeddings,
            n_users,
            &ctx.user_features,
            &ctx.nets.user,
        );
        let items = mlp_table(
            &ctx.item_embeddings,
            n_items,
            &ctx.item_features,
            &ctx.nets.item,
        );
        std::hint::black_box(rank_users(&users, &items, n_users, k));
        dropoutnet_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(BenchReport {
        n_users,
        n_items,
        k,
        repeat,
        gnp_median_ms: median(&gnp_ms),
        dropoutnet_median_ms: median(&dropoutnet_ms),
        gnp_ms,
        dropoutnet_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interaction, SplitFractions};
    use crate::graph::NodeRef;
    use crate::gwarmer::LayerReps;
    use proptest::prelude::*;

    #[test]
    fn rank_single_candidate() {
        assert_eq!(rank_all(&[7], &[0.3]), vec![7]);
    }

    #[test]
    fn rank_ties_ascending_ids() {
        assert_eq!(rank_all(&[9, 2, 5], &[1.0, 1.0, 1.0]), vec![2, 5, 9]);
    }

    #[test]
    fn rank_distinct_scores() {
        let ids = [10, 11, 12, 13, 14];
        let scores = [0.2, 0.9, -1.0, 0.5, 0.7];
        assert_eq!(rank_all(&ids, &scores), vec![11, 14, 13, 10, 12]);
        assert_eq!(top_k(&ids, &scores, 2), vec![11, 14]);
    }

    #[test]
    fn metrics_ideal_and_empty() {
        let m = recall_precision_ndcg_at_k(&[1, 2, 3, 4], &[1, 2], 3).unwrap();
        assert_eq!((m.recall, m.ndcg), (1.0, 1.0));
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        let m = recall_precision_ndcg_at_k(&[1, 2, 3, 4], &[4], 3).unwrap();
        assert_eq!((m.recall, m.precision, m.ndcg), (0.0, 0.0, 0.0));
        assert!(recall_precision_ndcg_at_k(&[1], &[], 3).is_err());
        assert!(recall_precision_ndcg_at_k(&[1], &[1], 0).is_err());
    }

    #[test]
    fn metrics_hand_example() {
        // ranked a..e = 0..4, relevant {b, e}; only b lands in the top 3.
        let m = recall_precision_ndcg_at_k(&[0, 1, 2, 3, 4], &[1, 4], 3).unwrap();
        assert_eq!(m.recall, 0.5);
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-15);
        let l3 = 1.0 / 3f64.log2();
        assert!((m.ndcg - l3 / (1.0 + l3)).abs() < 1e-15);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[(0.9, true), (0.8, true), (0.1, false)]).unwrap(), 1.0);
        assert_eq!(
            auc(&[(0.5, true), (0.5, false), (0.5, false)]).unwrap(),
            0.5
        );
        // pos {0.9, 0.4, 0.2}, neg {0.5, 0.2, 0.1}: concordant 3 + 2 + 1,
        // one tie (0.2 vs 0.2) → 6.5 / 9.
        let v = [
            (0.9, true),
            (0.4, true),
            (0.2, true),
            (0.5, false),
            (0.2, false),
            (0.1, false),
        ];
        assert!((auc(&v).unwrap() - 6.5 / 9.0).abs() < 1e-15);
        assert!(auc(&[(0.1, true)]).is_err());
        assert!(auc(&[]).is_err());
    }

    proptest! {
        #[test]
        fn metrics_bounded(scores in prop::collection::vec(-5.0f64..5.0, 1..30), rel_mask in prop::collection::vec(any::<bool>(), 30), k in 1usize..12) {
            let ids: Vec<u32> = (0..scores.len() as u32).collect();
            let relevant: Vec<u32> = ids.iter().copied().filter(|&i| rel_mask[i as usize]).collect();
            prop_assume!(!relevant.is_empty());
            let ranked = rank_all(&ids, &scores);
            let m = recall_precision_ndcg_at_k(&ranked, &relevant, k).unwrap();
            for v in [m.recall, m.precision, m.ndcg] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            prop_assert_eq!(top_k(&ids, &scores, k), ranked.iter().copied().take(k).collect::<Vec<_>>());
        }

        #[test]
        fn ndcg_monotone_under_promotion(n in 2usize..12, rel_mask in prop::collection::vec(any::<bool>(), 12), from in 1usize..12, k in 1usize..12) {
            let ranked: Vec<u32> = (0..n as u32).collect();
            let relevant: Vec<u32> = ranked.iter().copied().filter(|&i| rel_mask[i as usize]).collect();
            let from = from % n;
            prop_assume!(!relevant.is_empty() && from > 0 && relevant.contains(&ranked[from]));
            let before = recall_precision_ndcg_at_k(&ranked, &relevant, k).unwrap().ndcg;
            let mut moved = ranked.clone();
            moved.swap(from, from - 1);
            let after = recall_precision_ndcg_at_k(&moved, &relevant, k).unwrap().ndcg;
            prop_assert!(after >= before - 1e-15);
        }
    }

    fn one_hot_table(n: usize, d: usize) -> RepTable {
        let reps: Vec<LayerReps> = (0..n)
            .map(|k| {
                let mut v = vec![0.0; d];
                v[k % d] = 1.0;
                LayerReps::new(NodeRef::user(k as u32), vec![v])
            })
            .collect();
        RepTable::from_reps(&reps).unwrap()
    }

    fn toy(variant: Variant) -> (GnpParams, ModelInputs) {
        let inputs = ModelInputs {
            user_reps: one_hot_table(2, 2),
            item_reps: one_hot_table(2, 2),
            user_features: FeatureMatrix::new(2, 1, vec![1.0, 2.0]).unwrap(),
            item_features: FeatureMatrix::new(2, 1, vec![0.5, -1.0]).unwrap(),
        };
        let mut r = rng::rng_for(3, "toy");
        let params = GnpParams {
            variant,
            adaptive: AdaptiveWeights::layer0(1),
            user_mlp: Mlp::new(
                3,
                MlpShape {
                    hidden: 4,
                    depth: 1,
                },
                2,
                &mut r,
            ),
            item_mlp: Mlp::new(
                3,
                MlpShape {
                    hidden: 4,
                    depth: 1,
                },
                2,
                &mut r,
            ),
        };
        (params, inputs)
    }

    #[test]
    fn dispatch_truth_table() {
        let (params, inputs) = toy(Variant::Gnp);
        // user 0 and item 0 warm; user 1 and item 1 cold.
        let warm = WarmSets::new(2, 2, &[0], &[0]);
        let s = Scorer::build(&params, &inputs, warm).unwrap();
        for (u, i, want) in [
            (0, 0, ScorePath::Warm),
            (0, 1, ScorePath::Cold),
            (1, 0, ScorePath::Cold),
            (1, 1, ScorePath::Cold),
        ] {
            s.reset_counts();
            s.score(u, i).unwrap();
            let expect = if want == ScorePath::Warm {
                (1, 0)
            } else {
                (0, 1)
            };
            assert_eq!(s.counts(), expect, "({u},{i})");
        }
        // Warm pair equals the plain inner product of one-hot reps.
        assert_eq!(s.score(0, 0).unwrap(), 1.0);
        // Warm user with cold item: unmasked user rep, placeholder item rep.
        let xu = params.user_mlp.forward(&[1.0, 0.0, 1.0]);
        let xi = params.item_mlp.forward(&[0.0, 0.0, -1.0]);
        assert!((s.score(0, 1).unwrap() - dot(&xu, &xi)).abs() < 1e-12);
        assert!(s.score(2, 0).is_err());
    }

    #[test]
    fn dropoutnet_never_takes_warm_path() {
        let (params, inputs) = toy(Variant::DropoutNet);
        let s = Scorer::build(&params, &inputs, WarmSets::new(2, 2, &[0, 1], &[0, 1])).unwrap();
        s.score_items(0, &[0, 1]).unwrap();
        assert_eq!(s.counts(), (0, 2));
    }

    fn toy_split(
        n_users: usize,
        n_items: usize,
        cold: &[u32],
        test: &[(u32, u32)],
        train: &[(u32, u32)],
    ) -> DatasetSplit {
        let warm_items: Vec<u32> = (0..n_items as u32).filter(|i| !cold.contains(i)).collect();
        DatasetSplit {
            n_users,
            n_items,
            warm_items,
            cold_items: cold.to_vec(),
            warm_users: (0..n_users as u32).collect(),
            embed_train: train.iter().map(|&(u, i)| Interaction::new(u, i)).collect(),
            model_train: Vec::new(),
            validation: Vec::new(),
            test: test.iter().map(|&(u, i)| Interaction::new(u, i)).collect(),
            fractions: SplitFractions::default(),
            seed: 0,
        }
    }

    /// Scorer whose warm score for (u, i) is `table[u][i]`: user reps are
    /// rows of the table, item reps one-hot.
    fn table_scorer(table: &[Vec<f64>], split: &DatasetSplit) -> Scorer {
        let n_items = table[0].len();
        let ureps: Vec<LayerReps> = table
            .iter()
            .enumerate()
            .map(|(u, row)| LayerReps::new(NodeRef::user(u as u32), vec![row.clone()]))
            .collect();
        let inputs = ModelInputs {
            user_reps: RepTable::from_reps(&ureps).unwrap(),
            item_reps: one_hot_table(n_items, n_items),
            user_features: FeatureMatrix::constant(table.len()),
            item_features: FeatureMatrix::constant(n_items),
        };
        let params = GnpParams {
            variant: Variant::Gnp,
            adaptive: AdaptiveWeights::layer0(1),
            user_mlp: Mlp::passthrough(n_items, 1),
            item_mlp: Mlp::passthrough(n_items, 1),
        };
        Scorer::build(&params, &inputs, split.warm_sets()).unwrap()
    }

    #[test]
    fn single_user_single_item_ranked_first() {
        let split = toy_split(1, 3, &[], &[(0, 1)], &[]);
        let s = table_scorer(&[vec![0.1, 0.9, 0.3]], &split);
        let r = evaluate(&split, &s, Protocol::Hybrid, 2).unwrap();
        assert_eq!((r.recall, r.ndcg, r.auc), (1.0, 1.0, 1.0));
        assert_eq!(r.precision, 0.5);
        let w = evaluate(&split, &s, Protocol::Warm, 2).unwrap();
        assert_eq!(
            EvalReport {
                protocol: Protocol::Hybrid,
                wall_time_ms: 0,
                ..w
            },
            EvalReport {
                wall_time_ms: 0,
                ..r
            }
        );
    }

    #[test]
    fn macro_average_on_three_users() {
        // Items 0..4; user 0 has item 0 in training (filtered).
        let table = vec![
            vec![0.9, 0.8, 0.1, 0.2, 0.3],
            vec![0.1, 0.2, 0.3, 0.4, 0.5],
            vec![0.5, 0.5, 0.5, 0.5, 0.5],
        ];
        let split = toy_split(3, 5, &[], &[(0, 2), (1, 4), (1, 0), (2, 3)], &[(0, 0)]);
        let s = table_scorer(&table, &split);
        let r = evaluate(&split, &s, Protocol::Hybrid, 2).unwrap();
        // user 0: candidates 1..4 ranked [1,4,3,2], relevant {2}: miss.
        // user 1: ranked [4,3,...], relevant {0,4}: recall .5, prec .5, ndcg 1/(1+1/log2 3).
        // user 2: ties → ranked [0,1,...], relevant {3}: miss.
        let l3 = 1.0 / 3f64.log2();
        assert!((r.recall - 0.5 / 3.0).abs() < 1e-15);
        assert!((r.precision - 0.5 / 3.0).abs() < 1e-15);
        assert!((r.ndcg - (1.0 / (1.0 + l3)) / 3.0).abs() < 1e-12);
        // Per-user AUC: u0 item 2 beats none of {1,4,3} → 0; u1: pos {0.5, 0.1}
        // vs neg {0.2,0.3,0.4} → 3/6; u2: all tied → 0.5.
        assert!((r.auc - (0.0 + 0.5 + 0.5) / 3.0).abs() < 1e-12);
        assert_eq!(r.n_users_evaluated, 3);
        let (warm, cold) = s.counts();
        assert_eq!((warm, cold), (4 + 5 + 5, 0));
    }

    #[test]
    fn cold_protocol_skips_users_without_cold_tests() {
        let split = toy_split(2, 3, &[2], &[(0, 2), (1, 0)], &[]);
        let s = table_scorer(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]], &split);
        let r = evaluate(&split, &s, Protocol::Cold, 1).unwrap();
        assert_eq!((r.n_users_evaluated, r.n_users_skipped), (1, 1));
    }

    #[test]
    fn bench_reports_all_samples() {
        let ctx = synthetic_bench_context(
            4,
            20,
            4,
            2,
            3,
            MlpShape {
                hidden: 4,
                depth: 1,
            },
            0,
        );
        let r = bench_inference(&ctx, 4, 5, 3).unwrap();
        assert_eq!((r.gnp_ms.len(), r.dropoutnet_ms.len()), (5, 5));
        let r = bench_inference(&ctx, 0, 1, 3).unwrap();
        assert_eq!(r.n_users, 0);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
