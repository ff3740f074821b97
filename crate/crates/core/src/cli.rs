//! Command-line surface. Each stage persists its outputs under the workdir
//! and writes a record under `stages/`; `full-run` skips stages whose
//! record still matches.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;

use crate::config::{extract_overrides, RunConfig};
use crate::data::{
    load_interactions, make_split, read_split, write_split, FeatureMatrix, FileFormat, IdMap,
    SplitFiles, SPLIT_MANIFEST,
};
use crate::embedding::{import_embeddings, train_bpr_mf};
use crate::error::{GnpError, Result};
use crate::eval::{bench_inference, synthetic_bench_context, EvalReport};
use crate::formats;
use crate::patching::MlpShape;
use crate::pipeline::{pool_reps, sweep_tsv};
use crate::synthgen::{generate, write_synth, SynthSpec};
use crate::train::{format_log, format_timing, load_checkpoint, save_checkpoint, Variant};
use crate::workdir::{combine_keys, file_sha256, variant_name, Layout};

#[derive(Debug, Parser)]
#[command(
    name = "gnp",
    version,
    about = "Warm/cold hybrid recommender: prepare, train, evaluate, benchmark"
)]
pub struct Cli {
    /// TOML run configuration. Sections may be overridden with
    /// `--section.key=value`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; takes precedence over `paths.workdir`.
    #[arg(long, global = true, env = "GNP_WORKDIR")]
    pub workdir: Option<PathBuf>,
    /// Worker threads (1 = sequential).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read interactions and features, split, and write them to the workdir.
    Prepare,
    /// Train BPR-MF embeddings on the embedding-train partition.
    TrainEmbeddings,
    /// Use externally trained embeddings instead of BPR-MF.
    ImportEmbeddings {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        items: PathBuf,
        /// Defaults to the extension (`.bin` binary, else text).
        #[arg(long, value_enum)]
        format: Option<FileFormat>,
    },
    /// Pool random-walk layer means for every user and item.
    PrecomputeWalks,
    /// Train a model.
    Train {
        #[arg(long, value_enum, default_value = "gnp")]
        variant: Variant,
    },
    /// Evaluate a trained model on the test partition.
    Eval {
        #[arg(long, value_enum, default_value = "gnp")]
        variant: Variant,
        /// One JSON object per protocol instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Time full ranking on the GNP warm path and the MLP baseline path.
    Bench {
        /// Random inputs instead of the trained models in the workdir.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 1000)]
        users: usize,
        /// Item count of the synthetic context.
        #[arg(long, default_value_t = 10_000)]
        items: usize,
        /// Embedding dimension of the synthetic context.
        #[arg(long, default_value_t = 200)]
        dim: usize,
        /// Feature dimension of the synthetic context.
        #[arg(long, default_value_t = 32)]
        feature_dim: usize,
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        #[arg(long, default_value_t = 20)]
        k: usize,
    },
    /// Train and evaluate GNP once per dropout ratio.
    SweepTau {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
        taus: Vec<f64>,
    },
    /// All stages for both variants, reusing cached stages.
    FullRun,
    /// Write a planted-block synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 0.3)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_cross: f64,
        #[arg(long, default_value_t = 4)]
        feature_dim: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Errors go to stderr as
/// `error[<kind>]: <message>` on one line.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let (rest, overrides) = extract_overrides(args);
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match run(&cli, &overrides) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            e.exit_code()
        }
    }
}

fn run(cli: &Cli, overrides: &[(String, String)]) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(GnpError::Config("--threads must be >= 1".into()));
        }
        // Fails only if a pool already exists, as in repeated in-process calls.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    if let Command::Synth {
        out,
        users,
        items,
        blocks,
        p_in,
        p_cross,
        feature_dim,
        noise,
        seed,
    } = &cli.command
    {
        let spec = SynthSpec {
            n_users: *users,
            n_items: *items,
            n_blocks: *blocks,
            in_block_prob: *p_in,
            cross_block_prob: *p_cross,
            feature_dim: *feature_dim,
            feature_noise: *noise,
            seed: *seed,
        };
        let data = generate(&spec)?;
        write_synth(&data, out)?;
        println!(
            "wrote {} interactions to {}",
            data.interactions.len(),
            out.display()
        );
        return Ok(());
    }
    if let Command::Bench {
        synthetic: true,
        users,
        items,
        dim,
        feature_dim,
        repeat,
        k,
    } = &cli.command
    {
        let shape = MlpShape::default();
        let ctx = synthetic_bench_context(*users, *items, *dim, 3, *feature_dim, shape, 0);
        let report = bench_inference(&ctx, *users, *repeat, *k)?;
        print!("{}", report.to_tsv());
        if let Ok(ctx) = Stages::new(cli, overrides) {
            formats::write_bytes(&ctx.layout.report("bench.tsv"), report.to_tsv().as_bytes())?;
        }
        return Ok(());
    }

    let st = Stages::new(cli, overrides)?;
    st.layout.create_dirs()?;
    match &cli.command {
        Command::Prepare => st.prepare(true).map(drop),
        Command::TrainEmbeddings => st.train_embeddings(true).map(drop),
        Command::ImportEmbeddings {
            users,
            items,
            format,
        } => st.import(users, items, *format),
        Command::PrecomputeWalks => st.walks(true).map(drop),
        Command::Train { variant } => st.train(*variant, true).map(drop),
        Command::Eval { variant, json } => {
            st.eval(*variant, true)?;
            let reports = st.last_reports(*variant)?;
            if *json {
                for r in &reports {
                    println!("{}", r.to_json_with_timing());
                }
            } else {
                print!("{}", EvalReport::to_tsv(&reports));
                print!("{}", EvalReport::pretty(&reports));
            }
            Ok(())
        }
        Command::Bench {
            repeat, users, k, ..
        } => st.bench(*users, *repeat, *k),
        Command::SweepTau { taus } => st.sweep(taus),
        Command::FullRun => st.full_run(),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

struct Stages {
    cfg: RunConfig,
    layout: Layout,
}

const PREPARE: &str = "prepare";
const EMBEDDINGS: &str = "embeddings";
const WALKS: &str = "walks";

fn train_stage(v: Variant) -> String {
    format!("train_{}", variant_name(v))
}

fn eval_stage(v: Variant) -> String {
    format!("eval_{}", variant_name(v))
}

fn require_file(p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = p
        .clone()
        .ok_or_else(|| GnpError::Config(format!("{key} is not set")))?;
    if !p.is_file() {
        return Err(GnpError::io(
            &p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    Ok(p)
}

fn format_for(p: &Path, explicit: Option<FileFormat>) -> FileFormat {
    explicit.unwrap_or_else(|| FileFormat::from_path(p))
}

impl Stages {
    fn new(cli: &Cli, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::load(cli.config.as_deref(), overrides)?;
        if let Some(w) = &cli.workdir {
            cfg.paths.workdir = Some(w.clone());
        }
        let layout = Layout::new(cfg.workdir()?);
        Ok(Stages { cfg, layout })
    }

    /// Runs `body` unless `stage` has a valid record for `key` and `force`
    /// is unset. Returns whether it ran.
    fn cached(
        &self,
        stage: &str,
        key: &str,
        force: bool,
        body: impl FnOnce() -> Result<Vec<PathBuf>>,
    ) -> Result<bool> {
        if !force && self.layout.record_valid(stage, key) {
            info!("{stage}: cached");
            eprintln!("stage {stage}: cached");
            return Ok(false);
        }
        let start = Instant::now();
        let outputs = body().map_err(|e| stage_error(stage, e))?;
        self.layout.write_record(stage, key, &outputs)?;
        let ms = start.elapsed().as_millis();
        eprintln!("stage {stage}: done");
        self.append_timing(stage, ms)?;
        Ok(true)
    }

    fn append_timing(&self, stage: &str, ms: u128) -> Result<()> {
        let p = self.layout.report("timings.tsv");
        let mut text = formats::read_text(&p).unwrap_or_else(|_| "stage\telapsed_ms\n".into());
        text.push_str(&format!("{stage}\t{ms}\n"));
        formats::write_bytes(&p, text.as_bytes())
    }

    fn prepare_key(&self) -> Result<String> {
        let p = &self.cfg.paths;
        let mut parts = vec![self.cfg.section_hash(&["split", "features"])];
        let fmt = p.format.map_or("auto", |f| match f {
            FileFormat::Tsv => "tsv",
            FileFormat::Binary => "binary",
        });
        parts.push(fmt.into());
        if let Some(dir) = &p.split_dir {
            parts.push("split_dir".into());
            parts.push(file_sha256(&dir.join(SPLIT_MANIFEST))?);
        } else {
            parts.push(file_sha256(&require_file(
                &p.interactions,
                "paths.interactions",
            )?)?);
        }
        parts.push(file_sha256(&require_file(
            &p.item_features,
            "paths.item_features",
        )?)?);
        match &p.user_features {
            Some(_) => parts.push(file_sha256(&require_file(
                &p.user_features,
                "paths.user_features",
            )?)?),
            None => parts.push("constant".into()),
        }
        Ok(combine_keys(
            &parts.iter().map(String::as_str).collect::<Vec<_>>(),
        ))
    }

    fn prepare(&self, force: bool) -> Result<bool> {
        let key = self.prepare_key()?;
        self.cached(PREPARE, &key, force, || {
            let p = &self.cfg.paths;
            let (split, users, items) = match &p.split_dir {
                Some(dir) => {
                    let s = read_split(dir)?;
                    let (nu, ni) = (s.n_users, s.n_items);
                    (s, IdMap::identity(nu), IdMap::identity(ni))
                }
                None => {
                    let path = require_file(&p.interactions, "paths.interactions")?;
                    let ds = load_interactions(&path, format_for(&path, p.format))?;
                    let s = make_split(
                        &ds.interactions,
                        ds.n_users(),
                        ds.n_items(),
                        self.cfg.split,
                        self.cfg.split_seed(),
                    )?;
                    (s, ds.users, ds.items)
                }
            };
            let ipath = require_file(&p.item_features, "paths.item_features")?;
            let mut item_features =
                FeatureMatrix::load(&ipath, format_for(&ipath, p.format))?.align(&items)?;
            let mut user_features = match &p.user_features {
                Some(up) => FeatureMatrix::load(up, format_for(up, p.format))?.align(&users)?,
                None => FeatureMatrix::constant(users.len()),
            };
            if self.cfg.features.normalize {
                item_features.l2_normalize_rows();
                user_features.l2_normalize_rows();
            }
            let l = &self.layout;
            users.write(&l.users_map())?;
            items.write(&l.items_map())?;
            user_features.save(&l.user_features(), FileFormat::Binary)?;
            item_features.save(&l.item_features(), FileFormat::Binary)?;
            let manifest = write_split(&split, &l.split_dir())?;
            let c = &manifest.counts;
            info!(
                "split: {} users, {} items ({} cold), {}/{}/{}/{} interactions",
                c.users, c.items, c.cold_items, c.embed_train, c.model_train, c.validation, c.test
            );
            let SplitFiles {
                embed_train,
                model_train,
                validation,
                test,
                cold_items,
            } = manifest.files;
            let mut out = vec![
                l.users_map(),
                l.items_map(),
                l.user_features(),
                l.item_features(),
            ];
            for f in [
                PathBuf::from(SPLIT_MANIFEST),
                embed_train,
                model_train,
                validation,
                test,
                cold_items,
            ] {
                out.push(l.split_dir().join(f));
            }
            Ok(out)
        })
    }

    fn embeddings_key(&self) -> Result<String> {
        let up = self.layout.upstream_key(PREPARE, "prepare")?;
        Ok(combine_keys(&[
            &up,
            "bpr",
            &self.cfg.section_hash(&["embedding"]),
        ]))
    }

    fn train_embeddings(&self, force: bool) -> Result<bool> {
        let key = self.embeddings_key()?;
        self.cached(EMBEDDINGS, &key, force, || {
            let split = read_split(&self.layout.split_dir())?;
            let out = train_bpr_mf(
                &split.embed_train,
                split.n_users,
                split.n_items,
                &self.cfg.bpr_config(),
            )?;
            let l = &self.layout;
            out.store.export(
                &l.user_embeddings(),
                &l.item_embeddings(),
                FileFormat::Binary,
            )?;
            let mut log = String::from("epoch\tloss\n");
            for (e, loss) in out.epoch_losses.iter().enumerate() {
                log.push_str(&format!("{}\t{loss:.6}\n", e + 1));
            }
            formats::write_bytes(&l.embedding_log(), log.as_bytes())?;
            Ok(vec![
                l.user_embeddings(),
                l.item_embeddings(),
                l.embedding_log(),
            ])
        })
    }

    fn import(&self, users: &Path, items: &Path, format: Option<FileFormat>) -> Result<()> {
        let up = self.layout.upstream_key(PREPARE, "prepare")?;
        let key = combine_keys(&[&up, "import", &file_sha256(users)?, &file_sha256(items)?]);
        self.cached(EMBEDDINGS, &key, true, || {
            let store = import_embeddings(users, items, format_for(users, format))?;
            let split = read_split(&self.layout.split_dir())?;
            if store.n_users() != split.n_users || store.n_items() != split.n_items {
                return Err(GnpError::DimMismatch(format!(
                    "embeddings cover {}x{} entities, split has {}x{}",
                    store.n_users(),
                    store.n_items(),
                    split.n_users,
                    split.n_items
                )));
            }
            let l = &self.layout;
            store.export(
                &l.user_embeddings(),
                &l.item_embeddings(),
                FileFormat::Binary,
            )?;
            Ok(vec![l.user_embeddings(), l.item_embeddings()])
        })
        .map(drop)
    }

    fn walks(&self, force: bool) -> Result<bool> {
        let up = self.layout.upstream_key(EMBEDDINGS, "train-embeddings")?;
        let key = combine_keys(&[&up, &self.cfg.section_hash(&["walks"])]);
        self.cached(WALKS, &key, force, || {
            let l = &self.layout;
            let split = read_split(&l.split_dir())?;
            let emb = import_embeddings(
                &l.user_embeddings(),
                &l.item_embeddings(),
                FileFormat::Binary,
            )?;
            let (users, items) = pool_reps(
                &split,
                &emb,
                &self.cfg.walk_config(),
                self.cfg.walks.graph_source,
            )?;
            users.save(&l.user_reps())?;
            items.save(&l.item_reps())?;
            Ok(vec![l.user_reps(), l.item_reps()])
        })
    }

    fn train_key(&self, v: Variant) -> Result<String> {
        let up = self.layout.upstream_key(WALKS, "precompute-walks")?;
        Ok(combine_keys(&[
            &up,
            variant_name(v),
            &self.cfg.section_hash(&["train"]),
        ]))
    }

    fn train(&self, v: Variant, force: bool) -> Result<bool> {
        let key = self.train_key(v)?;
        self.cached(&train_stage(v), &key, force, || {
            let l = &self.layout;
            let art = l.load_artifacts()?;
            let fit = art.fit(v, &self.cfg.train_config())?;
            info!(
                "{}: best epoch {} of {}",
                variant_name(v),
                fit.best_epoch,
                fit.log.len()
            );
            save_checkpoint(&fit.params, &l.checkpoint(v))?;
            formats::write_bytes(&l.train_log(v), format_log(&fit.log).as_bytes())?;
            let timing = l.report(&format!("train_{}_timing.tsv", variant_name(v)));
            formats::write_bytes(&timing, format_timing(&fit.log).as_bytes())?;
            Ok(vec![l.checkpoint(v), l.train_log(v)])
        })
    }

    fn eval_paths(&self, v: Variant) -> (PathBuf, PathBuf) {
        let n = variant_name(v);
        (
            self.layout.report(&format!("eval_{n}.tsv")),
            self.layout.report(&format!("eval_{n}.json")),
        )
    }

    fn eval(&self, v: Variant, force: bool) -> Result<bool> {
        let up = self.layout.upstream_key(
            &train_stage(v),
            &format!("train --variant {}", variant_name(v)),
        )?;
        let key = combine_keys(&[&up, &self.cfg.section_hash(&["eval"])]);
        self.cached(&eval_stage(v), &key, force, || {
            let art = self.layout.load_artifacts()?;
            let params = load_checkpoint(&self.layout.checkpoint(v))?;
            let reports = art.evaluate(&params, &self.cfg.eval.protocols, self.cfg.eval.k)?;
            let (tsv, json) = self.eval_paths(v);
            formats::write_bytes(&tsv, EvalReport::to_tsv(&reports).as_bytes())?;
            let text = serde_json::to_string_pretty(&reports).expect("reports serialize");
            formats::write_bytes(&json, format!("{text}\n").as_bytes())?;
            let mut timing = String::from("protocol\twall_time_ms\n");
            for r in &reports {
                timing.push_str(&format!("{}\t{}\n", r.protocol.name(), r.wall_time_ms));
            }
            let n = variant_name(v);
            formats::write_bytes(
                &self.layout.report(&format!("eval_{n}_timing.tsv")),
                timing.as_bytes(),
            )?;
            Ok(vec![tsv, json])
        })
    }

    /// Reports of the latest eval, with wall times when available.
    fn last_reports(&self, v: Variant) -> Result<Vec<EvalReport>> {
        let (_, json) = self.eval_paths(v);
        let mut reports: Vec<EvalReport> = serde_json::from_str(&formats::read_text(&json)?)
            .map_err(|e| GnpError::Format(format!("{}: {e}", json.display())))?;
        let n = variant_name(v);
        if let Ok(t) = formats::read_text(&self.layout.report(&format!("eval_{n}_timing.tsv"))) {
            for (r, line) in reports.iter_mut().zip(t.lines().skip(1)) {
                if let Some(ms) = line.split('\t').nth(1).and_then(|x| x.parse().ok()) {
                    r.wall_time_ms = ms;
                }
            }
        }
        Ok(reports)
    }

    fn bench(&self, users: usize, repeat: usize, k: usize) -> Result<()> {
        let l = &self.layout;
        let art = l.load_artifacts()?;
        let gnp = load_checkpoint(&l.checkpoint(Variant::Gnp))?;
        let dn = load_checkpoint(&l.checkpoint(Variant::DropoutNet))?;
        let ctx = art.bench_context(&gnp, &dn)?;
        let report = bench_inference(&ctx, users, repeat, k)?;
        formats::write_bytes(&l.report("bench.tsv"), report.to_tsv().as_bytes())?;
        print!("{}", report.to_tsv());
        Ok(())
    }

    fn sweep(&self, taus: &[f64]) -> Result<()> {
        self.layout.upstream_key(WALKS, "precompute-walks")?;
        let art = self.layout.load_artifacts()?;
        let rows = art.sweep_tau(&self.cfg.train_config(), taus, self.cfg.eval.k);
        let tsv = sweep_tsv(&rows);
        formats::write_bytes(&self.layout.report("sweep_tau.tsv"), tsv.as_bytes())?;
        print!("{tsv}");
        Ok(())
    }

    /// Every stage in order. Once a stage runs, all later stages run too.
    fn full_run(&self) -> Result<()> {
        let mut dirty = self.prepare(false)?;
        dirty |= self.train_embeddings(dirty)?;
        dirty |= self.walks(dirty)?;
        let variants = [Variant::Gnp, Variant::DropoutNet];
        let mut trained = [false; 2];
        for (t, &v) in trained.iter_mut().zip(&variants) {
            *t = self.train(v, dirty)?;
        }
        for (&t, &v) in trained.iter().zip(&variants) {
            self.eval(v, dirty || t)?;
        }
        let mut text = format!("variant\t{}\n", EvalReport::TSV_HEADER);
        let mut all = Vec::new();
        for v in variants {
            let reports = self.last_reports(v)?;
            for r in &reports {
                text.push_str(&format!("{}\t{}\n", variant_name(v), r.tsv_row()));
            }
            all.push((v, reports));
        }
        formats::write_bytes(&self.layout.report("full_run.tsv"), text.as_bytes())?;
        print!("{text}");
        for (v, reports) in all {
            println!("\n{}", variant_name(v));
            print!("{}", EvalReport::pretty(&reports));
        }
        Ok(())
    }
}

fn stage_error(stage: &str, e: GnpError) -> GnpError {
    let wrap = |m: String| format!("stage {stage}: {m}");
    match e {
        GnpError::Config(m) => GnpError::Config(wrap(m)),
        GnpError::Format(m) => GnpError::Format(wrap(m)),
        GnpError::DimMismatch(m) => GnpError::DimMismatch(wrap(m)),
        GnpError::Invalid(m) => GnpError::Invalid(wrap(m)),
        GnpError::Numerical(m) => GnpError::Numerical(wrap(m)),
        other => GnpError::Invalid(wrap(other.to_string())),
    }
}
