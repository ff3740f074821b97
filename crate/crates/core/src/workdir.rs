//! On-disk layout of a run directory, per-stage cache records, and a
//! loadable recommender over a finished run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::data::{read_split, FeatureMatrix, FileFormat, IdMap, SeenItems};
use crate::embedding::import_embeddings;
use crate::error::{GnpError, Result};
use crate::eval::{top_k, Scorer};
use crate::formats;
use crate::gwarmer::RepTable;
use crate::pipeline::Artifacts;
use crate::train::{load_checkpoint, Variant};

#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn users_map(&self) -> PathBuf {
        self.root.join("data/users.map")
    }

    pub fn items_map(&self) -> PathBuf {
        self.root.join("data/items.map")
    }

    pub fn user_features(&self) -> PathBuf {
        self.root.join("data/user_features.bin")
    }

    pub fn item_features(&self) -> PathBuf {
        self.root.join("data/item_features.bin")
    }

    pub fn split_dir(&self) -> PathBuf {
        self.root.join("split")
    }

    pub fn user_embeddings(&self) -> PathBuf {
        self.root.join("embeddings/users.bin")
    }

    pub fn item_embeddings(&self) -> PathBuf {
        self.root.join("embeddings/items.bin")
    }

    pub fn embedding_log(&self) -> PathBuf {
        self.root.join("embeddings/bpr_loss.tsv")
    }

    pub fn user_reps(&self) -> PathBuf {
        self.root.join("walks/users.reps")
    }

    pub fn item_reps(&self) -> PathBuf {
        self.root.join("walks/items.reps")
    }

    pub fn checkpoint(&self, variant: Variant) -> PathBuf {
        self.root
            .join(format!("model/{}.ckpt", variant_name(variant)))
    }

    pub fn train_log(&self, variant: Variant) -> PathBuf {
        self.root
            .join(format!("model/{}_log.tsv", variant_name(variant)))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn stage_record(&self, stage: &str) -> PathBuf {
        self.root.join("stages").join(format!("{stage}.json"))
    }

    pub fn create_dirs(&self) -> Result<()> {
        for d in [
            "data",
            "split",
            "embeddings",
            "walks",
            "model",
            "reports",
            "stages",
        ] {
            let p = self.root.join(d);
            std::fs::create_dir_all(&p).map_err(|e| GnpError::io(&p, e))?;
        }
        Ok(())
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.root)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    }

    /// Whether `stage` has a record with this key whose outputs all still
    /// hash to the recorded values.
    pub fn record_valid(&self, stage: &str, key: &str) -> bool {
        let Ok(rec) = self.read_record(stage) else {
            return false;
        };
        rec.key == key
            && rec
                .outputs
                .iter()
                .all(|(rel, sha)| file_sha256(&self.root.join(rel)).is_ok_and(|h| &h == sha))
    }

    pub fn read_record(&self, stage: &str) -> Result<StageRecord> {
        let p = self.stage_record(stage);
        let text = formats::read_text(&p)?;
        serde_json::from_str(&text).map_err(|e| GnpError::Format(format!("{}: {e}", p.display())))
    }

    /// Key of a finished upstream stage, or an error naming the command
    /// that produces it.
    pub fn upstream_key(&self, stage: &str, command: &str) -> Result<String> {
        self.read_record(stage).map(|r| r.key).map_err(|_| {
            GnpError::Invalid(format!(
                "stage `{stage}` has not run in {} (run `{command}` first)",
                self.root.display()
            ))
        })
    }

    pub fn write_record(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> Result<StageRecord> {
        let mut map = BTreeMap::new();
        for p in outputs {
            map.insert(self.rel(p), file_sha256(p)?);
        }
        let rec = StageRecord {
            stage: stage.to_string(),
            key: key.to_string(),
            outputs: map,
        };
        let json = serde_json::to_string_pretty(&rec).expect("record serializes");
        formats::write_bytes(&self.stage_record(stage), format!("{json}\n").as_bytes())?;
        Ok(rec)
    }

    /// Split, features, embeddings and pooled tables of a run.
    pub fn load_artifacts(&self) -> Result<Artifacts> {
        let split = read_split(&self.split_dir())?;
        let user_features = FeatureMatrix::load(&self.user_features(), FileFormat::Binary)?;
        let item_features = FeatureMatrix::load(&self.item_features(), FileFormat::Binary)?;
        let embeddings = import_embeddings(
            &self.user_embeddings(),
            &self.item_embeddings(),
            FileFormat::Binary,
        )?;
        let user_reps = RepTable::load(&self.user_reps())?;
        let item_reps = RepTable::load(&self.item_reps())?;
        if user_reps.nodes() != split.n_users || item_reps.nodes() != split.n_items {
            return Err(GnpError::DimMismatch(format!(
                "cached walks cover {}x{} entities, split has {}x{}",
                user_reps.nodes(),
                item_reps.nodes(),
                split.n_users,
                split.n_items
            )));
        }
        Ok(Artifacts {
            split,
            embeddings,
            user_reps,
            item_reps,
            user_features,
            item_features,
        })
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Gnp => "gnp",
        Variant::DropoutNet => "dropoutnet",
    }
}

/// Cache record for one stage: its input key and output digests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    /// Workdir-relative path → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(formats::read_bytes(path)?)))
}

/// SHA-256 over a sequence of strings, each length-prefixed.
pub fn combine_keys(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex(&h.finalize())
}

/// A trained model over a finished run directory, addressed by the
/// original user and item ids of the input data.
#[derive(Debug)]
pub struct Recommender {
    scorer: Scorer,
    users: IdMap,
    items: IdMap,
    seen: SeenItems,
}

impl Recommender {
    pub fn open(workdir: &Path, variant: Variant) -> Result<Self> {
        let layout = Layout::new(workdir);
        let art = layout.load_artifacts()?;
        let params = load_checkpoint(&layout.checkpoint(variant))?;
        if params.variant != variant {
            return Err(GnpError::Format(format!(
                "checkpoint holds a {} model",
                variant_name(params.variant)
            )));
        }
        let scorer = art.scorer(&params)?;
        let users = IdMap::read(&layout.users_map())?;
        let items = IdMap::read(&layout.items_map())?;
        if users.len() != scorer.n_users() || items.len() != scorer.n_items() {
            return Err(GnpError::DimMismatch(
                "id maps disagree with the model".into(),
            ));
        }
        let seen = SeenItems::from_interactions(
            art.split.n_users,
            art.split.train_interactions().chain(&art.split.validation),
        );
        Ok(Recommender {
            scorer,
            users,
            items,
            seen,
        })
    }

    pub fn n_users(&self) -> usize {
        self.scorer.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.scorer.n_items()
    }

    pub fn user_index(&self, original: &str) -> Option<u32> {
        self.users.get(original)
    }

    pub fn item_index(&self, original: &str) -> Option<u32> {
        self.items.get(original)
    }

    pub fn item_original(&self, dense: u32) -> Option<&str> {
        ((dense as usize) < self.items.len()).then(|| self.items.original(dense))
    }

    pub fn is_item_warm(&self, dense: u32) -> bool {
        self.scorer
            .warm_sets()
            .items
            .get(dense as usize)
            .copied()
            .unwrap_or(false)
    }

    pub fn score(&self, user: u32, item: u32) -> Result<f64> {
        self.scorer.score(user, item)
    }

    /// Top-`k` items for `user` as `(dense item, score)`, optionally
    /// skipping items the user interacted with during training.
    pub fn recommend(&self, user: u32, k: usize, exclude_seen: bool) -> Result<Vec<(u32, f64)>> {
        if user as usize >= self.n_users() {
            return Err(GnpError::Invalid(format!(
                "user {user} outside {} users",
                self.n_users()
            )));
        }
        let candidates: Vec<u32> = (0..self.n_items() as u32)
            .filter(|&i| !(exclude_seen && self.seen.contains(user, i)))
            .collect();
        let scores = self.scorer.score_items(user, &candidates)?;
        let ranked = top_k(&candidates, &scores, k);
        let by_id: BTreeMap<u32, f64> = candidates.iter().copied().zip(scores).collect();
        Ok(ranked.into_iter().map(|i| (i, by_id[&i])).collect())
    }
}
