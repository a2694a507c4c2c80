//! The four experiment commands.
//!
//! Each command is a pure function of its config file and the datasets on
//! disk. Folds may run in parallel, but every file is written by the calling
//! thread after all folds have finished.
//!
//! Dataset root layout, as written by [`gen_data`]:
//!
//! ```text
//! <data_dir>/source/        manifest.tsv + images/
//! <data_dir>/target-train/
//! <data_dir>/target-test/
//! ```
//!
//! If any fold fails, nothing is written to the regular output files;
//! completed results and the error messages go to `<out>/quarantine/` and
//! the command returns an error.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use xdomain_core::data::{synth_domain_shift, Benchmark};
use xdomain_core::protocol::{
    ablation_variants, run_folds, Method, sweep_variants, FoldOutcome, ProtocolConfig, ProtocolRun,
};
use xdomain_core::stats::FoldReport;
use xdomain_core::train::{LossMask, TrainConfig};

use crate::config::{ExperimentConfig, GenerateConfig};
use crate::parallel::Threads;
use crate::{checkpoint, manifest, records};

pub const SOURCE_DIR: &str = "source";
pub const TARGET_TRAIN_DIR: &str = "target-train";
pub const TARGET_TEST_DIR: &str = "target-test";
pub const QUARANTINE_DIR: &str = "quarantine";

#[derive(Debug, Clone)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub smoke: bool,
    pub jobs: usize,
}

impl Options {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            out: None,
            force: false,
            smoke: false,
            jobs: 1,
        }
    }
}

fn is_nonempty_dir(dir: &Path) -> anyhow::Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut entries) => Ok(entries.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(e).with_context(|| format!("reading {}", dir.display())),
    }
}

fn claim_output(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() && !dir.is_dir() {
        bail!("{} exists and is not a directory", dir.display());
    }
    if !force && is_nonempty_dir(dir)? {
        bail!("{} is not empty; pass --force to overwrite", dir.display());
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn config_echo(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config always serializes");
    s.push('\n');
    s
}

/// Generates the synthetic benchmark and writes the three dataset
/// directories. Returns a human-readable summary of the sample counts.
pub fn gen_data(opts: &Options) -> anyhow::Result<String> {
    let cfg = ExperimentConfig::load(&opts.config)?;
    let out = opts.out.clone().unwrap_or_else(|| cfg.data_dir.clone());
    let (n_source, n_tt, n_test) = if opts.smoke {
        GenerateConfig::SMOKE_COUNTS
    } else {
        let g = &cfg.generate;
        (g.n_source, g.n_target_train, g.n_target_test)
    };
    claim_output(&out, opts.force)?;
    let bench = synth_domain_shift(&cfg.generate.shift, n_source, n_tt, n_test, cfg.seed)?;
    let mut summary = String::new();
    for (name, data) in [
        (SOURCE_DIR, &bench.source),
        (TARGET_TRAIN_DIR, &bench.target_train),
        (TARGET_TEST_DIR, &bench.target_test),
    ] {
        let dir = out.join(name);
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("clearing {}", dir.display()))?;
        }
        manifest::write_dataset(&dir, data)?;
        summary.push_str(&format!("{name}: {}\n", manifest::describe(data)));
    }
    Ok(summary)
}

/// Reads the three dataset directories under `root`.
pub fn load_benchmark(root: &Path) -> anyhow::Result<Benchmark> {
    for name in [SOURCE_DIR, TARGET_TRAIN_DIR, TARGET_TEST_DIR] {
        let m = root.join(name).join(manifest::MANIFEST_FILE);
        if !m.is_file() {
            bail!("missing dataset manifest {}", m.display());
        }
    }
    Ok(Benchmark {
        source: manifest::read_dataset(&root.join(SOURCE_DIR))?,
        target_train: manifest::read_dataset(&root.join(TARGET_TRAIN_DIR))?,
        target_test: manifest::read_dataset(&root.join(TARGET_TEST_DIR))?,
    })
}

struct Prepared {
    cfg: ExperimentConfig,
    out: PathBuf,
    bench: Benchmark,
    exec: Threads,
}

fn prepare(opts: &Options) -> anyhow::Result<Prepared> {
    let mut cfg = ExperimentConfig::load(&opts.config)?;
    if opts.smoke {
        cfg.smoke();
    }
    let out = opts.out.clone().unwrap_or_else(|| cfg.output.clone());
    let bench = load_benchmark(&cfg.data_dir)?;
    for (name, data) in [
        (SOURCE_DIR, &bench.source),
        (TARGET_TRAIN_DIR, &bench.target_train),
        (TARGET_TEST_DIR, &bench.target_test),
    ] {
        if data.input_dim() != Some(cfg.model.input_dim) {
            bail!(
                "{name} images have {:?} pixels but model.input_dim is {}",
                data.input_dim(),
                cfg.model.input_dim
            );
        }
    }
    claim_output(&out, opts.force)?;
    Ok(Prepared {
        cfg,
        out,
        bench,
        exec: Threads::new(opts.jobs),
    })
}

/// One protocol to run, with the id it carries in the output files.
struct Variant {
    id: String,
    train: TrainConfig,
    proto: ProtocolConfig,
}

struct Finished {
    id: String,
    run: ProtocolRun,
}

/// Runs every variant; on any fold failure, writes the quarantine directory
/// and returns the error.
fn run_variants(p: &Prepared, variants: Vec<Variant>) -> anyhow::Result<Vec<Finished>> {
    let mut done = Vec::new();
    let mut partial: Vec<(String, Vec<FoldOutcome>)> = Vec::new();
    let mut errors = Vec::new();
    for v in variants {
        let results = run_folds(&p.bench, &p.cfg.model, &v.train, &v.proto, &p.exec)
            .with_context(|| format!("{}: invalid setup", v.id))?;
        let mut folds = Vec::new();
        for r in results {
            match r {
                Ok(f) => folds.push(f),
                Err(e) => errors.push(format!("{}: {e}", v.id)),
            }
        }
        if folds.len() == v.proto.k {
            done.push(Finished {
                id: v.id,
                run: ProtocolRun::from_folds(folds)?,
            });
        } else {
            partial.push((v.id, folds));
        }
    }
    if errors.is_empty() {
        return Ok(done);
    }
    let q = p.out.join(QUARANTINE_DIR);
    fs::create_dir_all(&q).with_context(|| format!("creating {}", q.display()))?;
    write(&q.join("config.json"), config_echo(&p.cfg))?;
    write(&q.join("errors.txt"), errors.join("\n") + "\n")?;
    let mut history = String::from(records::HISTORY_HEADER);
    let mut folds = String::from(records::FOLDS_HEADER);
    let completed = done.iter().map(|f| (&f.id, f.run.folds.as_slice()));
    let incomplete = partial.iter().map(|(id, f)| (id, f.as_slice()));
    for (id, outcomes) in completed.chain(incomplete) {
        records::history_lines(&mut history, id, outcomes);
        records::fold_lines(&mut folds, id, outcomes);
    }
    write(&q.join("history.tsv"), history)?;
    write(&q.join("folds.csv"), folds)?;
    bail!(
        "{} fold(s) failed; partial results in {}:\n{}",
        errors.len(),
        q.display(),
        errors.join("\n")
    )
}

fn write_common(p: &Prepared, finished: &[Finished]) -> anyhow::Result<()> {
    let mut history = String::from(records::HISTORY_HEADER);
    let mut folds = String::from(records::FOLDS_HEADER);
    for f in finished {
        records::history_lines(&mut history, &f.id, &f.run.folds);
        records::fold_lines(&mut folds, &f.id, &f.run.folds);
    }
    write(&p.out.join("config.json"), config_echo(&p.cfg))?;
    write(&p.out.join("history.tsv"), history)?;
    write(&p.out.join("folds.csv"), folds)
}

fn method_id(proto: &ProtocolConfig) -> String {
    match proto.method {
        Method::Ours => format!("ours-n{}", proto.n),
        Method::SourceOnly => "source-only".into(),
    }
}

/// k-fold protocol for the configured method. Writes `summary.csv`,
/// `folds.csv`, `history.tsv`, `config.json` and one checkpoint per fold.
pub fn run(opts: &Options) -> anyhow::Result<String> {
    let p = prepare(opts)?;
    let proto = p.cfg.protocol_config();
    let variant = Variant {
        id: method_id(&proto),
        train: p.cfg.train.clone(),
        proto,
    };
    let finished = run_variants(&p, vec![variant])?;
    write_common(&p, &finished)?;
    let run = &finished[0].run;
    write(&p.out.join("summary.csv"), records::summary_table(&run.report))?;
    let ckpt = p.out.join("checkpoints");
    fs::create_dir_all(&ckpt).with_context(|| format!("creating {}", ckpt.display()))?;
    for f in &run.folds {
        checkpoint::save(&ckpt.join(format!("fold-{:02}.xdck", f.fold)), &f.model)?;
    }
    Ok(format!(
        "{}: accuracy {}, f1 {}\n",
        finished[0].id,
        run.report.accuracy_summary(),
        run.report.f1_summary()
    ))
}

/// Full loss against each single cross-domain term, paired fold seeds.
/// Writes `ablate.csv` plus the shared files.
pub fn ablate(opts: &Options) -> anyhow::Result<String> {
    let p = prepare(opts)?;
    let (masks, variants): (Vec<LossMask>, Vec<Variant>) =
        ablation_variants(&p.cfg.train, &p.cfg.protocol_config())
            .into_iter()
            .map(|(mask, train, proto)| {
                let id = mask.label().to_string();
                (mask, Variant { id, train, proto })
            })
            .unzip();
    let finished = run_variants(&p, variants)?;
    write_common(&p, &finished)?;
    let rows: Vec<(LossMask, FoldReport)> = masks
        .into_iter()
        .zip(&finished)
        .map(|(mask, f)| (mask, f.run.report.clone()))
        .collect();
    let table = records::ablate_table(&rows);
    write(&p.out.join("ablate.csv"), &table)?;
    Ok(table)
}

/// Accuracy against shot count. Writes `sweep.csv` plus the shared files.
pub fn sweep(opts: &Options) -> anyhow::Result<String> {
    let p = prepare(opts)?;
    let variants = sweep_variants(&p.cfg.protocol_config(), &p.cfg.protocol.ns)
        .into_iter()
        .map(|proto| Variant {
            id: format!("n{}", proto.n),
            train: p.cfg.train.clone(),
            proto,
        })
        .collect();
    let finished = run_variants(&p, variants)?;
    write_common(&p, &finished)?;
    let rows: Vec<(usize, FoldReport)> = finished
        .iter()
        .zip(&p.cfg.protocol.ns)
        .map(|(f, &n)| (n, f.run.report.clone()))
        .collect();
    let table = records::sweep_table(&rows);
    write(&p.out.join("sweep.csv"), &table)?;
    Ok(table)
}
