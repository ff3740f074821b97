//! Warm user/item embeddings: a BPR matrix-factorization trainer and
//! import/export of externally trained matrices.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FileFormat, Interaction, SeenItems};
use crate::error::{GnpError, Result};
use crate::formats::{self, LeReader, LeWriter};
use crate::graph::{NodeRef, Side};
use crate::rng::{self, GnpRng};

/// Dense `E_U`, `E_I` with a per-row "trained" flag.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    users: Vec<f32>,
    items: Vec<f32>,
    user_trained: Vec<bool>,
    item_trained: Vec<bool>,
}

impl EmbeddingStore {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        EmbeddingStore {
            dim,
            users: vec![0.0; n_users * dim],
            items: vec![0.0; n_items * dim],
            user_trained: vec![false; n_users],
            item_trained: vec![false; n_items],
        }
    }

    /// Builds a store from row-major matrices; every row is flagged trained.
    pub fn from_matrices(dim: usize, users: Vec<f32>, items: Vec<f32>) -> Result<Self> {
        if dim == 0 || !users.len().is_multiple_of(dim) || !items.len().is_multiple_of(dim) {
            return Err(GnpError::DimMismatch(format!(
                "matrices of {} and {} values do not split into rows of {dim}",
                users.len(),
                items.len()
            )));
        }
        if users.iter().chain(&items).any(|v| !v.is_finite()) {
            return Err(GnpError::Invalid("non-finite embedding value".into()));
        }
        let (nu, ni) = (users.len() / dim, items.len() / dim);
        Ok(EmbeddingStore {
            dim,
            users,
            items,
            user_trained: vec![true; nu],
            item_trained: vec![true; ni],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_users(&self) -> usize {
        self.user_trained.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_trained.len()
    }

    pub fn user(&self, u: u32) -> &[f32] {
        let d = self.dim;
        &self.users[u as usize * d..(u as usize + 1) * d]
    }

    pub fn item(&self, i: u32) -> &[f32] {
        let d = self.dim;
        &self.items[i as usize * d..(i as usize + 1) * d]
    }

    pub fn node(&self, n: NodeRef) -> &[f32] {
        match n.side {
            Side::User => self.user(n.id),
            Side::Item => self.item(n.id),
        }
    }

    pub fn user_matrix(&self) -> &[f32] {
        &self.users
    }

    pub fn item_matrix(&self) -> &[f32] {
        &self.items
    }

    pub fn is_user_trained(&self, u: u32) -> bool {
        self.user_trained[u as usize]
    }

    pub fn is_item_trained(&self, i: u32) -> bool {
        self.item_trained[i as usize]
    }

    pub fn export(&self, user_path: &Path, item_path: &Path, format: FileFormat) -> Result<()> {
        write_matrix(user_path, &self.users, self.dim, format)?;
        write_matrix(item_path, &self.items, self.dim, format)
    }
}

/// Reads user and item matrices. Text rows absent from a file are zero and
/// flagged untrained.
pub fn import_embeddings(
    user_path: &Path,
    item_path: &Path,
    format: FileFormat,
) -> Result<EmbeddingStore> {
    let (ud, users, user_trained) = read_matrix(user_path, format)?;
    let (id, items, item_trained) = read_matrix(item_path, format)?;
    if ud != id {
        return Err(GnpError::DimMismatch(format!(
            "user embeddings have dim {ud}, item embeddings dim {id}"
        )));
    }
    Ok(EmbeddingStore {
        dim: ud,
        users,
        items,
        user_trained,
        item_trained,
    })
}

fn write_matrix(path: &Path, values: &[f32], dim: usize, format: FileFormat) -> Result<()> {
    let rows = values.len() / dim;
    match format {
        FileFormat::Tsv => {
            let mut s = format!("{rows} {dim}\n");
            for (r, row) in values.chunks_exact(dim).enumerate() {
                let _ = write!(s, "{r}");
                for v in row {
                    let _ = write!(s, " {v:?}");
                }
                s.push('\n');
            }
            formats::write_bytes(path, s.as_bytes())
        }
        FileFormat::Binary => {
            let mut w = LeWriter::default();
            w.u32(formats::to_u32(rows, "rows")?);
            w.u32(0);
            w.u32(formats::to_u32(dim, "dim")?);
            w.f32s(values);
            formats::write_bytes(path, &w.buf)
        }
    }
}

fn read_matrix(path: &Path, format: FileFormat) -> Result<(usize, Vec<f32>, Vec<bool>)> {
    match format {
        FileFormat::Binary => {
            let bytes = formats::read_bytes(path)?;
            let what = path.display().to_string();
            let mut r = LeReader::new(&bytes, &what);
            let rows = r.u32()? as usize;
            let layers = r.u32()? as usize;
            let dim = r.u32()? as usize;
            if layers != 0 {
                return Err(GnpError::Format(format!(
                    "{what}: embedding file must have K=0, found {layers}"
                )));
            }
            if dim == 0 {
                return Err(GnpError::Format(format!("{what}: dim is 0")));
            }
            let values = r.f32s(rows * dim)?;
            r.finish()?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(GnpError::Invalid(format!("{what}: non-finite value")));
            }
            Ok((dim, values, vec![true; rows]))
        }
        FileFormat::Tsv => {
            let text = formats::read_text(path)?;
            let perr = |line: usize, msg: String| GnpError::Parse {
                path: path.to_owned(),
                line,
                msg,
            };
            let mut lines = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty());
            let (hl, header) = lines
                .next()
                .ok_or_else(|| GnpError::EmptyDataset(path.to_owned()))?;
            let hdr: Vec<usize> = header
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(hl + 1, "header must be `rows dim`".into()))?;
            let [rows, dim] = hdr[..] else {
                return Err(perr(hl + 1, "header must be `rows dim`".into()));
            };
            if dim == 0 {
                return Err(perr(hl + 1, "dim is 0".into()));
            }
            let mut values = vec![0.0f32; rows * dim];
            let mut trained = vec![false; rows];
            for (ln, line) in lines {
                let mut toks = line.split_whitespace();
                let idx: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| perr(ln + 1, "missing row index".into()))?;
                if idx >= rows {
                    return Err(perr(ln + 1, format!("row index {idx} >= {rows}")));
                }
                if trained[idx] {
                    return Err(perr(ln + 1, format!("duplicate row index {idx}")));
                }
                let row = &mut values[idx * dim..(idx + 1) * dim];
                let mut n = 0;
                for tok in toks {
                    if n == dim {
                        return Err(perr(ln + 1, format!("more than {dim} values")));
                    }
                    let v: f32 = tok
                        .parse()
                        .map_err(|_| perr(ln + 1, format!("bad real `{tok}`")))?;
                    if !v.is_finite() {
                        return Err(perr(ln + 1, "non-finite value".into()));
                    }
                    row[n] = v;
                    n += 1;
                }
                if n != dim {
                    return Err(perr(ln + 1, format!("expected {dim} values, got {n}")));
                }
                trained[idx] = true;
            }
            Ok((dim, values, trained))
        }
    }
}

// ---------------------------------------------------------------------------
// BPR-MF

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BprConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        BprConfig {
            dim: 200,
            epochs: 200,
            lr: 0.05,
            l2: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BprOutcome {
    pub store: EmbeddingStore,
    /// Mean `-ln σ(e_u·e_i − e_u·e_j)` per epoch.
    pub epoch_losses: Vec<f64>,
}

/// `softplus(-x) = -ln σ(x)`, stable for large |x|.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One stochastic BPR update on a `(u, i, j)` triple; returns the pre-update
/// loss `-ln σ(x)`, `x = e_u·(e_i − e_j)`.
///
/// All three rows take their gradient from the pre-update values.
pub fn bpr_step(eu: &mut [f64], ei: &mut [f64], ej: &mut [f64], lr: f64, l2: f64) -> f64 {
    let x: f64 = eu
        .iter()
        .zip(ei.iter().zip(ej.iter()))
        .map(|(u, (i, j))| u * (i - j))
        .sum();
    let g = sigmoid(-x);
    for k in 0..eu.len() {
        let (u, i, j) = (eu[k], ei[k], ej[k]);
        eu[k] = u + lr * (g * (i - j) - l2 * u);
        ei[k] = i + lr * (g * u - l2 * i);
        ej[k] = j + lr * (-g * u - l2 * j);
    }
    neg_log_sigmoid(x)
}

fn uniform_init(n: usize, dim: usize, rng: &mut GnpRng) -> Vec<f64> {
    let a = 1.0 / (dim as f64).sqrt();
    (0..n * dim).map(|_| rng.random_range(-a..=a)).collect()
}

/// Trains BPR-MF on `embed_train`. Negatives are drawn from the items that
/// occur in `embed_train`, rejecting the user's own positives. Rows of
/// entities absent from `embed_train` stay at their initial values and are
/// flagged untrained.
pub fn train_bpr_mf(
    embed_train: &[Interaction],
    n_users: usize,
    n_items: usize,
    cfg: &BprConfig,
) -> Result<BprOutcome> {
    let d = cfg.dim;
    if d == 0 {
        return Err(GnpError::Config("embedding dim must be >= 1".into()));
    }
    if let Some(x) = embed_train
        .iter()
        .find(|x| x.user as usize >= n_users || x.item as usize >= n_items)
    {
        return Err(GnpError::Invalid(format!(
            "interaction ({}, {}) outside {n_users}x{n_items}",
            x.user, x.item
        )));
    }
    let mut init_rng = rng::rng_for(cfg.seed, "bpr-init");
    let mut users = uniform_init(n_users, d, &mut init_rng);
    let mut items = uniform_init(n_items, d, &mut init_rng);

    let mut user_trained = vec![false; n_users];
    let mut item_trained = vec![false; n_items];
    for x in embed_train {
        user_trained[x.user as usize] = true;
        item_trained[x.item as usize] = true;
    }
    let pool: Vec<u32> = (0..n_items as u32)
        .filter(|&i| item_trained[i as usize])
        .collect();
    let seen = SeenItems::from_interactions(n_users, embed_train);

    let mut order: Vec<Interaction> = embed_train.to_vec();
    let mut rng = rng::rng_for(cfg.seed, "bpr-train");
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for x in &order {
            let mut j = pool[rng.random_range(0..pool.len())];
            for _ in 0..64 {
                if !seen.contains(x.user, j) {
                    break;
                }
                j = pool[rng.random_range(0..pool.len())];
            }
            if j == x.item {
                continue;
            }
            let (u, i, j) = (x.user as usize, x.item as usize, j as usize);
            let eu = &mut users[u * d..(u + 1) * d];
            let (ei, ej) = if i < j {
                let (lo, hi) = items.split_at_mut(j * d);
                (&mut lo[i * d..(i + 1) * d], &mut hi[..d])
            } else {
                let (lo, hi) = items.split_at_mut(i * d);
                (&mut hi[..d], &mut lo[j * d..(j + 1) * d])
            };
            total += bpr_step(eu, ei, ej, cfg.lr, cfg.l2);
        }
        let mean = if order.is_empty() {
            0.0
        } else {
            total / order.len() as f64
        };
        if !mean.is_finite() || users.iter().chain(&items).any(|v| !v.is_finite()) {
            return Err(GnpError::Numerical(format!(
                "BPR training diverged at epoch {epoch} (lr {} too high?)",
                cfg.lr
            )));
        }
        epoch_losses.push(mean);
    }

    Ok(BprOutcome {
        store: EmbeddingStore {
            dim: d,
            users: users.iter().map(|&v| v as f32).collect(),
            items: items.iter().map(|&v| v as f32).collect(),
            user_trained,
            item_trained,
        },
        epoch_losses,
    })
}
