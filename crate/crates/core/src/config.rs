//! Run configuration: a sectioned TOML file plus `--section.key=value`
//! overrides. Every stage seed is derived from the single master seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{FileFormat, SplitFractions};
use crate::embedding::BprConfig;
use crate::error::{GnpError, Result};
use crate::eval::Protocol;
use crate::formats;
use crate::gwarmer::WalkConfig;
use crate::patching::MlpShape;
use crate::pipeline::GraphSource;
use crate::rng::derive_seed;
use crate::train::{AdamConfig, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// `user<TAB>item` per line (or the binary pair format).
    pub interactions: Option<PathBuf>,
    pub user_features: Option<PathBuf>,
    pub item_features: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub format: Option<FileFormat>,
    /// A precomputed split directory used instead of `make_split`.
    pub split_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// Scale every feature row to unit ℓ2 norm.
    pub normalize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let b = BprConfig::default();
        EmbeddingSection {
            dim: b.dim,
            epochs: b.epochs,
            lr: b.lr,
            l2: b.l2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalksSection {
    pub samples: usize,
    pub steps: usize,
    pub graph_source: GraphSource,
}

impl Default for WalksSection {
    fn default() -> Self {
        let w = WalkConfig::default();
        WalksSection {
            samples: w.samples,
            steps: w.steps,
            graph_source: GraphSource::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub tau: f64,
    pub n_neg_per_pos: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden: usize,
    pub depth: usize,
    pub auc_protocol: Protocol,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lr: t.lr,
            batch_size: t.batch_size,
            l2: t.l2,
            tau: t.tau,
            n_neg_per_pos: t.n_neg_per_pos,
            max_epochs: t.max_epochs,
            patience: t.patience,
            hidden: t.mlp.hidden,
            depth: t.mlp.depth,
            auc_protocol: t.auc_protocol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
    pub protocols: Vec<Protocol>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: 20,
            protocols: vec![Protocol::Hybrid, Protocol::Warm, Protocol::Cold],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsSection,
    pub split: SplitFractions,
    pub features: FeaturesSection,
    pub embedding: EmbeddingSection,
    pub walks: WalksSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

/// Splits `--a.b=v` arguments out of `args`; everything else is returned
/// untouched for the command-line parser.
pub fn extract_overrides(
    args: impl IntoIterator<Item = String>,
) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        let parsed = a.strip_prefix("--").and_then(|body| {
            let (key, value) = body.split_once('=')?;
            key.contains('.')
                .then(|| (key.to_string(), value.to_string()))
        });
        match parsed {
            Some(kv) => overrides.push(kv),
            None => rest.push(a),
        }
    }
    (rest, overrides)
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in path {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| GnpError::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(raw));
    Ok(())
}

impl RunConfig {
    /// Parses TOML text with overrides applied. Relative paths resolve
    /// against `base`.
    pub fn from_toml(text: &str, overrides: &[(String, String)], base: &Path) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| GnpError::Config(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| GnpError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = formats::read_text(p).map_err(|e| GnpError::Config(e.to_string()))?;
                let base = p.parent().unwrap_or(Path::new("."));
                Self::from_toml(&text, overrides, base)
            }
            None => Self::from_toml("", overrides, Path::new(".")),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.paths.interactions);
        fix(&mut self.paths.user_features);
        fix(&mut self.paths.item_features);
        fix(&mut self.paths.workdir);
        fix(&mut self.paths.split_dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.train_config().validate()?;
        if self.eval.k == 0 {
            return Err(GnpError::Config("eval.k must be >= 1".into()));
        }
        if self.embedding.dim == 0 {
            return Err(GnpError::Config("embedding.dim must be >= 1".into()));
        }
        if self.walks.samples == 0 || self.walks.steps == 0 {
            return Err(GnpError::Config(
                "walks.samples and walks.steps must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "stage:split")
    }

    pub fn bpr_config(&self) -> BprConfig {
        BprConfig {
            dim: self.embedding.dim,
            epochs: self.embedding.epochs,
            lr: self.embedding.lr,
            l2: self.embedding.l2,
            seed: derive_seed(self.seed, "stage:embeddings"),
        }
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            samples: self.walks.samples,
            steps: self.walks.steps,
            seed: derive_seed(self.seed, "stage:walks"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            batch_size: t.batch_size,
            l2: t.l2,
            tau: t.tau,
            n_neg_per_pos: t.n_neg_per_pos,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: derive_seed(self.seed, "stage:train"),
            mlp: MlpShape {
                hidden: t.hidden,
                depth: t.depth,
            },
            adam: AdamConfig::default(),
            auc_protocol: t.auc_protocol,
        }
    }

    pub fn workdir(&self) -> Result<PathBuf> {
        self.paths
            .workdir
            .clone()
            .ok_or_else(|| GnpError::Config("no workdir (set paths.workdir or GNP_WORKDIR)".into()))
    }

    /// Stable hash of the named sections (as canonical JSON), used as a
    /// stage cache key.
    pub fn section_hash(&self, sections: &[&str]) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for s in sections {
            h.update(s.as_bytes());
            h.update(v[*s].to_string().as_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
