//! In-memory composition of the stages: embeddings → walk pooling →
//! training → evaluation. The CLI persists the same artifacts per stage.

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, FeatureMatrix};
use crate::embedding::{train_bpr_mf, BprConfig, EmbeddingStore};
use crate::error::{GnpError, Result};
use crate::eval::{evaluate, BenchContext, EvalReport, Protocol, Scorer};
use crate::graph::{build_graph, Side};
use crate::gwarmer::{pool_all, RepTable, WalkConfig};
use crate::train::{fit, FitOutcome, GnpParams, ModelInputs, TrainConfig, Variant};

/// Which interactions form the walk graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    /// Embedding-training interactions only.
    #[default]
    EmbedTrain,
    /// Embedding- and model-training interactions.
    AllTrain,
}

/// Pools every user and item over the warm graph.
pub fn pool_reps(
    split: &DatasetSplit,
    embeddings: &EmbeddingStore,
    walks: &WalkConfig,
    source: GraphSource,
) -> Result<(RepTable, RepTable)> {
    let edges: Vec<_> = match source {
        GraphSource::EmbedTrain => split.embed_train.clone(),
        GraphSource::AllTrain => split.train_interactions().copied().collect(),
    };
    let graph = build_graph(&edges, split.n_users, split.n_items)?;
    let users = pool_all(&graph, embeddings, Side::User, walks)?;
    let items = pool_all(&graph, embeddings, Side::Item, walks)?;
    Ok((users, items))
}

/// Everything the trainers and scorers consume.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub split: DatasetSplit,
    pub embeddings: EmbeddingStore,
    pub user_reps: RepTable,
    pub item_reps: RepTable,
    pub user_features: FeatureMatrix,
    pub item_features: FeatureMatrix,
}

impl Artifacts {
    pub fn build(
        split: DatasetSplit,
        user_features: FeatureMatrix,
        item_features: FeatureMatrix,
        bpr: &BprConfig,
        walks: &WalkConfig,
        source: GraphSource,
    ) -> Result<Self> {
        let embeddings = train_bpr_mf(&split.embed_train, split.n_users, split.n_items, bpr)?.store;
        let (user_reps, item_reps) = pool_reps(&split, &embeddings, walks, source)?;
        Ok(Artifacts {
            split,
            embeddings,
            user_reps,
            item_reps,
            user_features,
            item_features,
        })
    }

    pub fn inputs(&self, variant: Variant) -> ModelInputs {
        ModelInputs::for_variant(
            variant,
            (&self.user_reps, &self.item_reps),
            &self.embeddings,
            &self.user_features,
            &self.item_features,
        )
    }

    pub fn fit(&self, variant: Variant, cfg: &TrainConfig) -> Result<FitOutcome> {
        fit(&self.split, &self.inputs(variant), variant, cfg)
    }

    pub fn scorer(&self, params: &GnpParams) -> Result<Scorer> {
        Scorer::build(params, &self.inputs(params.variant), self.split.warm_sets())
    }

    pub fn evaluate(
        &self,
        params: &GnpParams,
        protocols: &[Protocol],
        k: usize,
    ) -> Result<Vec<EvalReport>> {
        let scorer = self.scorer(params)?;
        protocols
            .iter()
            .map(|&p| evaluate(&self.split, &scorer, p, k))
            .collect()
    }

    /// One GNP train+eval per `tau` on the shared split and seed. A failed
    /// run yields a failure row and the sweep continues.
    pub fn sweep_tau(&self, cfg: &TrainConfig, taus: &[f64], k: usize) -> Vec<SweepRow> {
        taus.iter()
            .map(|&tau| {
                let cfg = TrainConfig { tau, ..cfg.clone() };
                let outcome = self
                    .sweep_one(&cfg, k)
                    .map_err(|e| format!("{}: {e}", e.kind()));
                SweepRow { tau, outcome }
            })
            .collect()
    }

    fn sweep_one(&self, cfg: &TrainConfig, k: usize) -> Result<SweepResult> {
        let fit = self.fit(Variant::Gnp, cfg)?;
        let mut reports = self.evaluate(&fit.params, &[Protocol::Hybrid, Protocol::Cold], k)?;
        let cold = reports.pop().expect("two protocols");
        let hybrid = reports.pop().expect("two protocols");
        Ok(SweepResult {
            hybrid,
            cold,
            best_epoch: fit.best_epoch,
            max_cold_adaptive_grad: fit.max_cold_adaptive_grad,
        })
    }

    /// Timing inputs from trained models: the GNP layer weights over the
    /// pooled tables, and the baseline networks over raw embeddings.
    pub fn bench_context(&self, gnp: &GnpParams, baseline: &GnpParams) -> Result<BenchContext> {
        if gnp.variant != Variant::Gnp || baseline.variant != Variant::DropoutNet {
            return Err(GnpError::Invalid(
                "bench needs one GNP and one DropoutNet model".into(),
            ));
        }
        let dim = self.embeddings.dim();
        Ok(BenchContext {
            user_reps: self.user_reps.clone(),
            item_reps: self.item_reps.clone(),
            weights: gnp.adaptive.clone(),
            user_embeddings: RepTable::from_embeddings(self.embeddings.user_matrix(), dim),
            item_embeddings: RepTable::from_embeddings(self.embeddings.item_matrix(), dim),
            nets: baseline.nets(),
            user_features: self.user_features.clone(),
            item_features: self.item_features.clone(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub hybrid: EvalReport,
    pub cold: EvalReport,
    pub best_epoch: usize,
    pub max_cold_adaptive_grad: f64,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub tau: f64,
    /// Error text on failure.
    pub outcome: std::result::Result<SweepResult, String>,
}

pub const SWEEP_HEADER: &str = "tau\tstatus\thybrid_recall\thybrid_precision\thybrid_ndcg\thybrid_auc\tcold_recall\tcold_ndcg\tcold_auc\tbest_epoch\tmax_cold_adaptive_grad";

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        match &r.outcome {
            Ok(x) => s.push_str(&format!(
                "{}\tok\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:e}\n",
                r.tau,
                x.hybrid.recall,
                x.hybrid.precision,
                x.hybrid.ndcg,
                x.hybrid.auc,
                x.cold.recall,
                x.cold.ndcg,
                x.cold.auc,
                x.best_epoch,
                x.max_cold_adaptive_grad
            )),
            Err(e) => {
                let msg: String = e
                    .chars()
                    .map(|c| if c.is_control() { ' ' } else { c })
                    .collect();
                s.push_str(&format!("{}\tfailed: {msg}{}\n", r.tau, "\tNA".repeat(9)));
            }
        }
    }
    s
}
