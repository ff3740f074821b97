//! Interaction ingestion, cold/warm splitting and negative sampling.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GnpError, Result};
use crate::formats::{self, LeReader, LeWriter};
use crate::rng::GnpRng;

/// One implicit-feedback event between a dense user index and a dense item index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
}

impl Interaction {
    pub fn new(user: u32, item: u32) -> Self {
        Interaction { user, item }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    #[value(alias = "text")]
    Tsv,
    Binary,
}

impl FileFormat {
    /// Guess from the extension: `.bin` is binary, everything else text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => FileFormat::Binary,
            _ => FileFormat::Tsv,
        }
    }
}

/// Dense-index ↔ original-id table. Dense ids are assigned in order of first
/// appearance in the input.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    originals: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn identity(n: usize) -> Self {
        let mut m = IdMap::default();
        for i in 0..n {
            m.intern(&i.to_string());
        }
        m
    }

    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&id) = self.index.get(raw) {
            return id;
        }
        let id = self.originals.len() as u32;
        self.originals.push(raw.to_owned());
        self.index.insert(raw.to_owned(), id);
        id
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn original(&self, dense: u32) -> &str {
        &self.originals[dense as usize]
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    /// Sidecar format: `dense<TAB>original` per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (i, o) in self.originals.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{o}");
        }
        formats::write_bytes(path, s.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = formats::read_text(path)?;
        let mut m = IdMap::default();
        for (ln, line) in text.lines().enumerate() {
            let (dense, orig) = line.split_once('\t').ok_or_else(|| GnpError::Parse {
                path: path.to_owned(),
                line: ln + 1,
                msg: "expected `dense<TAB>original`".into(),
            })?;
            if dense.parse::<usize>().ok() != Some(m.len()) {
                return Err(GnpError::Parse {
                    path: path.to_owned(),
                    line: ln + 1,
                    msg: format!("dense ids must be consecutive, got `{dense}`"),
                });
            }
            m.intern(orig);
        }
        Ok(m)
    }
}

/// Deduplicated interactions plus the id tables that produced them.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub interactions: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Remaps raw `(user, item)` token pairs, dropping exact duplicates.
    pub fn from_raw_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let mut seen = HashSet::new();
        let mut interactions = Vec::new();
        for (u, i) in pairs {
            let x = Interaction::new(users.intern(u), items.intern(i));
            if seen.insert(x) {
                interactions.push(x);
            }
        }
        Dataset {
            interactions,
            users,
            items,
        }
    }
}

pub fn load_interactions(path: &Path, format: FileFormat) -> Result<Dataset> {
    let ds = match format {
        FileFormat::Tsv => parse_tsv(&formats::read_text(path)?, path)?,
        FileFormat::Binary => {
            let raw = read_pairs_binary(&formats::read_bytes(path)?, path)?;
            let owned: Vec<(String, String)> = raw
                .into_iter()
                .map(|(u, i)| (u.to_string(), i.to_string()))
                .collect();
            Dataset::from_raw_pairs(owned.iter().map(|(u, i)| (u.as_str(), i.as_str())))
        }
    };
    if ds.interactions.is_empty() {
        return Err(GnpError::EmptyDataset(path.to_owned()));
    }
    Ok(ds)
}

pub fn parse_tsv(text: &str, path: &Path) -> Result<Dataset> {
    let mut pairs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(i), None) if !u.is_empty() && !i.is_empty() => pairs.push((u, i)),
            _ => {
                return Err(GnpError::Parse {
                    path: path.to_owned(),
                    line: ln + 1,
                    msg: format!("expected `user<TAB>item`, got `{line}`"),
                })
            }
        }
    }
    Ok(Dataset::from_raw_pairs(pairs))
}

fn read_pairs_binary(bytes: &[u8], path: &Path) -> Result<Vec<(u32, u32)>> {
    let what = path.display().to_string();
    let mut r = LeReader::new(bytes, &what);
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push((r.u32()?, r.u32()?));
    }
    r.finish()?;
    Ok(out)
}

pub fn write_interactions(path: &Path, xs: &[Interaction], format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Tsv => {
            let mut s = String::with_capacity(xs.len() * 12);
            for x in xs {
                let _ = writeln!(s, "{}\t{}", x.user, x.item);
            }
            formats::write_bytes(path, s.as_bytes())
        }
        FileFormat::Binary => {
            let mut w = LeWriter::default();
            w.u32(formats::to_u32(xs.len(), "interaction count")?);
            for x in xs {
                w.u32(x.user);
                w.u32(x.item);
            }
            formats::write_bytes(path, &w.buf)
        }
    }
}

/// Reads a partition file written by [`write_interactions`]; ids are taken
/// as already-dense indices (no remapping).
pub fn read_dense_interactions(path: &Path) -> Result<Vec<Interaction>> {
    match FileFormat::from_path(path) {
        FileFormat::Binary => Ok(read_pairs_binary(&formats::read_bytes(path)?, path)?
            .into_iter()
            .map(|(u, i)| Interaction::new(u, i))
            .collect()),
        FileFormat::Tsv => {
            let text = formats::read_text(path)?;
            let mut out = Vec::new();
            for (ln, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = line
                    .split_once('\t')
                    .and_then(|(u, i)| Some((u.parse().ok()?, i.trim_end().parse().ok()?)));
                let (u, i) = parsed.ok_or_else(|| GnpError::Parse {
                    path: path.to_owned(),
                    line: ln + 1,
                    msg: format!("expected dense `user<TAB>item`, got `{line}`"),
                })?;
                out.push(Interaction::new(u, i));
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Features

/// Dense row-major auxiliary features (one row per entity).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(GnpError::DimMismatch("feature dim must be > 0".into()));
        }
        if values.len() != rows * dim {
            return Err(GnpError::DimMismatch(format!(
                "feature payload has {} values, expected {rows}x{dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(GnpError::Invalid(format!(
                "non-finite feature at row {}",
                pos / dim
            )));
        }
        Ok(FeatureMatrix { rows, dim, values })
    }

    /// Single constant column, used when a side has no auxiliary data.
    pub fn constant(rows: usize) -> Self {
        FeatureMatrix {
            rows,
            dim: 1,
            values: vec![1.0; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn l2_normalize_rows(&mut self) {
        for row in self.values.chunks_exact_mut(self.dim) {
            let n = row.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v = (*v as f64 / n) as f32);
            }
        }
    }

    /// Reorders rows so row `d` holds the features of the entity whose
    /// original id (an integer row index into `self`) maps to dense id `d`.
    pub fn align(&self, ids: &IdMap) -> Result<Self> {
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for d in 0..ids.len() {
            let orig = ids.original(d as u32);
            let r: usize = orig.parse().map_err(|_| {
                GnpError::Invalid(format!(
                    "cannot align features: id `{orig}` is not a row index"
                ))
            })?;
            if r >= self.rows {
                return Err(GnpError::Invalid(format!(
                    "cannot align features: id {r} beyond {} feature rows",
                    self.rows
                )));
            }
            values.extend_from_slice(self.row(r));
        }
        Ok(FeatureMatrix {
            rows: ids.len(),
            dim: self.dim,
            values,
        })
    }

    pub fn load(path: &Path, format: FileFormat) -> Result<Self> {
        match format {
            FileFormat::Tsv => Self::parse_text(&formats::read_text(path)?, path),
            FileFormat::Binary => {
                let bytes = formats::read_bytes(path)?;
                let what = path.display().to_string();
                let mut r = LeReader::new(&bytes, &what);
                let rows = r.u32()? as usize;
                let dim = r.u32()? as usize;
                let values = r.f32s(rows * dim)?;
                r.finish()?;
                Self::new(rows, dim, values)
            }
        }
    }

    fn parse_text(text: &str, path: &Path) -> Result<Self> {
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
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(hl + 1, "header must be `rows dim`".into()))?;
        let [rows, dim] = hdr[..] else {
            return Err(perr(hl + 1, "header must be `rows dim`".into()));
        };
        let mut values = Vec::with_capacity(rows * dim);
        let mut seen = 0;
        for (ln, line) in lines {
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f32>()
                        .map_err(|_| perr(ln + 1, format!("bad real `{tok}`")))?,
                );
            }
            if values.len() - before != dim {
                return Err(perr(
                    ln + 1,
                    format!("expected {dim} values, got {}", values.len() - before),
                ));
            }
            seen += 1;
        }
        if seen != rows {
            return Err(perr(0, format!("header says {rows} rows, found {seen}")));
        }
        Self::new(rows, dim, values)
    }

    pub fn save(&self, path: &Path, format: FileFormat) -> Result<()> {
        match format {
            FileFormat::Tsv => {
                let mut s = format!("{} {}\n", self.rows, self.dim);
                for r in 0..self.rows {
                    let row: Vec<String> = self.row(r).iter().map(|v| format!("{v:?}")).collect();
                    s.push_str(&row.join(" "));
                    s.push('\n');
                }
                formats::write_bytes(path, s.as_bytes())
            }
            FileFormat::Binary => {
                let mut w = LeWriter::default();
                w.u32(formats::to_u32(self.rows, "feature rows")?);
                w.u32(formats::to_u32(self.dim, "feature dim")?);
                w.f32s(&self.values);
                formats::write_bytes(path, &w.buf)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Splitting

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub cold_item_frac: f64,
    pub embed_frac: f64,
    pub model_frac: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            cold_item_frac: 0.2,
            embed_frac: 0.65,
            model_frac: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let c = self.cold_item_frac;
        if !(0.0..=1.0).contains(&c) {
            return Err(GnpError::Config(format!(
                "cold_item_frac {c} outside [0,1]"
            )));
        }
        if !(self.embed_frac > 0.0 && self.model_frac > 0.0) {
            return Err(GnpError::Config(
                "embed/model fractions must be positive".into(),
            ));
        }
        if self.embed_frac + self.model_frac >= 1.0 {
            return Err(GnpError::Config(
                "embed_frac + model_frac must be < 1 to leave validation/test data".into(),
            ));
        }
        Ok(())
    }
}

/// Warm/cold partition of entities and four-way partition of interactions.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub n_users: usize,
    pub n_items: usize,
    pub warm_items: Vec<u32>,
    pub cold_items: Vec<u32>,
    /// Users with at least one embedding-training interaction; only these
    /// have a trained embedding and a presence in the walk graph.
    pub warm_users: Vec<u32>,
    pub embed_train: Vec<Interaction>,
    pub model_train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub fractions: SplitFractions,
    pub seed: u64,
}

/// Membership bitmaps for fast warm/cold checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WarmSets {
    pub users: Vec<bool>,
    pub items: Vec<bool>,
}

impl WarmSets {
    pub fn new(n_users: usize, n_items: usize, warm_users: &[u32], warm_items: &[u32]) -> Self {
        let mut users = vec![false; n_users];
        let mut items = vec![false; n_items];
        warm_users.iter().for_each(|&u| users[u as usize] = true);
        warm_items.iter().for_each(|&i| items[i as usize] = true);
        WarmSets { users, items }
    }

    pub fn user(&self, u: u32) -> bool {
        self.users[u as usize]
    }

    pub fn item(&self, i: u32) -> bool {
        self.items[i as usize]
    }
}

impl DatasetSplit {
    pub fn warm_sets(&self) -> WarmSets {
        WarmSets::new(
            self.n_users,
            self.n_items,
            &self.warm_users,
            &self.warm_items,
        )
    }

    /// Interactions known at training time (embedding + model partitions).
    pub fn train_interactions(&self) -> impl Iterator<Item = &Interaction> {
        self.embed_train.iter().chain(self.model_train.iter())
    }

    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            users: self.n_users,
            items: self.n_items,
            warm_users: self.warm_users.len(),
            warm_items: self.warm_items.len(),
            cold_items: self.cold_items.len(),
            embed_train: self.embed_train.len(),
            model_train: self.model_train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
        }
    }
}

fn round_count(n: usize, frac: f64) -> usize {
    ((n as f64) * frac).round().min(n as f64) as usize
}

/// Deterministic cold/warm split.
///
/// `round(cold_item_frac·n_items)` items are drawn uniformly without
/// replacement as cold. Warm-item interactions are shuffled and cut into
/// embed/model/rest by the given fractions, the rest halved into
/// validation/test. Cold-item interactions go only to validation/test,
/// halved the same way.
pub fn make_split(
    interactions: &[Interaction],
    n_users: usize,
    n_items: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit> {
    fractions.validate()?;
    for x in interactions {
        if x.user as usize >= n_users || x.item as usize >= n_items {
            return Err(GnpError::Invalid(format!(
                "interaction ({}, {}) outside {n_users}x{n_items}",
                x.user, x.item
            )));
        }
    }
    let mut rng = crate::rng::rng_for(seed, "split");

    let n_cold = round_count(n_items, fractions.cold_item_frac);
    let mut cold_items: Vec<u32> = index::sample(&mut rng, n_items, n_cold)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    cold_items.sort_unstable();
    let mut is_cold = vec![false; n_items];
    cold_items.iter().for_each(|&i| is_cold[i as usize] = true);
    let warm_items: Vec<u32> = (0..n_items as u32)
        .filter(|&i| !is_cold[i as usize])
        .collect();

    let (mut warm, mut cold): (Vec<Interaction>, Vec<Interaction>) =
        interactions.iter().partition(|x| !is_cold[x.item as usize]);
    warm.shuffle(&mut rng);
    cold.shuffle(&mut rng);

    let n = warm.len();
    let n_embed = round_count(n, fractions.embed_frac);
    let n_model = round_count(n, fractions.model_frac).min(n - n_embed);
    let rest = n - n_embed - n_model;
    let n_val = rest / 2;
    let mut it = warm.into_iter();
    let embed_train: Vec<_> = it.by_ref().take(n_embed).collect();
    let model_train: Vec<_> = it.by_ref().take(n_model).collect();
    let mut validation: Vec<_> = it.by_ref().take(n_val).collect();
    let mut test: Vec<_> = it.collect();

    let n_cold_val = cold.len() / 2;
    let cold_test = cold.split_off(n_cold_val);
    validation.extend(cold);
    test.extend(cold_test);

    let mut is_warm_user = vec![false; n_users];
    embed_train
        .iter()
        .for_each(|x| is_warm_user[x.user as usize] = true);
    let warm_users: Vec<u32> = (0..n_users as u32)
        .filter(|&u| is_warm_user[u as usize])
        .collect();

    let mut active = vec![false; n_users];
    interactions
        .iter()
        .for_each(|x| active[x.user as usize] = true);
    let stranded = (0..n_users)
        .filter(|&u| active[u] && !is_warm_user[u])
        .count();
    if stranded > 0 {
        log::warn!(
            "{stranded} users have no embedding-training interactions and are treated as cold"
        );
    }

    Ok(DatasetSplit {
        n_users,
        n_items,
        warm_items,
        cold_items,
        warm_users,
        embed_train,
        model_train,
        validation,
        test,
        fractions,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Split manifest

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub users: usize,
    pub items: usize,
    pub warm_users: usize,
    pub warm_items: usize,
    pub cold_items: usize,
    pub embed_train: usize,
    pub model_train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub embed_train: PathBuf,
    pub model_train: PathBuf,
    pub validation: PathBuf,
    pub test: PathBuf,
    pub cold_items: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fractions: SplitFractions,
    pub counts: SplitCounts,
    /// Paths relative to the manifest's directory.
    pub files: SplitFiles,
}

pub const SPLIT_MANIFEST: &str = "split.json";

/// Writes partition files plus `split.json` into `dir`.
pub fn write_split(split: &DatasetSplit, dir: &Path) -> Result<SplitManifest> {
    let files = SplitFiles {
        embed_train: "embed_train.tsv".into(),
        model_train: "model_train.tsv".into(),
        validation: "validation.tsv".into(),
        test: "test.tsv".into(),
        cold_items: "cold_items.txt".into(),
    };
    write_interactions(
        &dir.join(&files.embed_train),
        &split.embed_train,
        FileFormat::Tsv,
    )?;
    write_interactions(
        &dir.join(&files.model_train),
        &split.model_train,
        FileFormat::Tsv,
    )?;
    write_interactions(
        &dir.join(&files.validation),
        &split.validation,
        FileFormat::Tsv,
    )?;
    write_interactions(&dir.join(&files.test), &split.test, FileFormat::Tsv)?;
    let cold: String = split.cold_items.iter().map(|i| format!("{i}\n")).collect();
    formats::write_bytes(&dir.join(&files.cold_items), cold.as_bytes())?;

    let manifest = SplitManifest {
        seed: split.seed,
        fractions: split.fractions,
        counts: split.counts(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    formats::write_bytes(&dir.join(SPLIT_MANIFEST), format!("{json}\n").as_bytes())?;
    Ok(manifest)
}

/// Loads a split previously written by [`write_split`], or a user-supplied
/// precomputed split laid out the same way.
pub fn read_split(dir: &Path) -> Result<DatasetSplit> {
    let mpath = dir.join(SPLIT_MANIFEST);
    let manifest: SplitManifest = serde_json::from_str(&formats::read_text(&mpath)?)
        .map_err(|e| GnpError::Format(format!("{}: {e}", mpath.display())))?;
    let c = &manifest.counts;
    let f = &manifest.files;
    let cpath = dir.join(&f.cold_items);
    let mut cold_items = Vec::new();
    for (ln, line) in formats::read_text(&cpath)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        cold_items.push(line.trim().parse::<u32>().map_err(|_| GnpError::Parse {
            path: cpath.clone(),
            line: ln + 1,
            msg: format!("bad item id `{line}`"),
        })?);
    }
    cold_items.sort_unstable();
    cold_items.dedup();
    let mut is_cold = vec![false; c.items];
    for &i in &cold_items {
        *is_cold
            .get_mut(i as usize)
            .ok_or_else(|| GnpError::Invalid(format!("cold item {i} out of range")))? = true;
    }
    let embed_train = read_dense_interactions(&dir.join(&f.embed_train))?;
    let model_train = read_dense_interactions(&dir.join(&f.model_train))?;
    let validation = read_dense_interactions(&dir.join(&f.validation))?;
    let test = read_dense_interactions(&dir.join(&f.test))?;
    for x in embed_train
        .iter()
        .chain(&model_train)
        .chain(&validation)
        .chain(&test)
    {
        if x.user as usize >= c.users || x.item as usize >= c.items {
            return Err(GnpError::Invalid(format!(
                "split interaction ({}, {}) outside {}x{}",
                x.user, x.item, c.users, c.items
            )));
        }
    }
    if let Some(x) = embed_train
        .iter()
        .chain(&model_train)
        .find(|x| is_cold[x.item as usize])
    {
        return Err(GnpError::Invalid(format!(
            "training partition touches cold item {}",
            x.item
        )));
    }
    let mut warm_u = vec![false; c.users];
    embed_train
        .iter()
        .for_each(|x| warm_u[x.user as usize] = true);
    Ok(DatasetSplit {
        n_users: c.users,
        n_items: c.items,
        warm_items: (0..c.items as u32)
            .filter(|&i| !is_cold[i as usize])
            .collect(),
        cold_items,
        warm_users: (0..c.users as u32)
            .filter(|&u| warm_u[u as usize])
            .collect(),
        embed_train,
        model_train,
        validation,
        test,
        fractions: manifest.fractions,
        seed: manifest.seed,
    })
}

// ---------------------------------------------------------------------------
// Negative sampling

const MAX_NEGATIVE_RETRIES: usize = 64;

/// Per-user sorted item lists used to reject observed positives.
#[derive(Clone, Debug, Default)]
pub struct SeenItems {
    per_user: Vec<Vec<u32>>,
}

impl SeenItems {
    pub fn from_interactions<'a>(
        n_users: usize,
        xs: impl IntoIterator<Item = &'a Interaction>,
    ) -> Self {
        let mut per_user = vec![Vec::new(); n_users];
        for x in xs {
            if let Some(v) = per_user.get_mut(x.user as usize) {
                v.push(x.item);
            }
        }
        for v in &mut per_user {
            v.sort_unstable();
            v.dedup();
        }
        SeenItems { per_user }
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.per_user
            .get(user as usize)
            .is_some_and(|v| v.binary_search(&item).is_ok())
    }

    pub fn items(&self, user: u32) -> &[u32] {
        self.per_user.get(user as usize).map_or(&[], |v| v)
    }
}

/// `n_neg_per_pos` uniform draws from `pool` per positive, rejecting the
/// user's own positives from `positives`.
pub fn sample_negatives(
    positives: &[Interaction],
    n_neg_per_pos: usize,
    pool: &[u32],
    rng: &mut GnpRng,
) -> Result<Vec<Interaction>> {
    let n_users = positives
        .iter()
        .map(|x| x.user as usize + 1)
        .max()
        .unwrap_or(0);
    let seen = SeenItems::from_interactions(n_users, positives);
    sample_negatives_excluding(positives, n_neg_per_pos, pool, &seen, rng)
}

/// As [`sample_negatives`] but rejecting against an explicit `seen` table.
/// After a bounded number of rejections the last draw is accepted, which
/// covers users whose positives span the whole pool.
pub fn sample_negatives_excluding(
    positives: &[Interaction],
    n_neg_per_pos: usize,
    pool: &[u32],
    seen: &SeenItems,
    rng: &mut GnpRng,
) -> Result<Vec<Interaction>> {
    if pool.is_empty() {
        return Err(GnpError::Invalid("negative item pool is empty".into()));
    }
    if n_neg_per_pos == 0 {
        return Err(GnpError::Invalid("n_neg_per_pos must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(positives.len() * n_neg_per_pos);
    for x in positives {
        for _ in 0..n_neg_per_pos {
            let mut item = pool[rng.random_range(0..pool.len())];
            for _ in 0..MAX_NEGATIVE_RETRIES {
                if !seen.contains(x.user, item) {
                    break;
                }
                item = pool[rng.random_range(0..pool.len())];
            }
            out.push(Interaction::new(x.user, item));
        }
    }
    Ok(out)
}
