//! Command-line entry point: `rpo pretrain | adapt | eval | study <kind>`.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 divergence, 4 checksum mismatch, 5 failed directional check under
//! `--strict`.

mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::checkpoint::{load_backbone, load_prompts, save_backbone, save_prompts};
use crate::encoder::BackboneWeights;
use crate::error::{Result, RpoError};
use crate::experiments::{
    ablation_grid, domain_study, generate_task, reports_csv, reports_table, shot_sweep,
    text_rpo_comparison, variance_study, zero_shot_study, Bench, EvalReport, FewShotTask,
    fingerprint, SeedResult, Split, StudyOutput, SyntheticWorld, TaskSource,
};
use crate::rpo::Modality;
use crate::training::{adapt_rpo, contrastive_pretrain, evaluate, AdaptConfig, PretrainCorpus};

pub use config::{run_root, PathsConfig, RunConfig, StudyConfig, DEFAULT_RUN_ROOT, RUN_ROOT_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_CHECKSUM: i32 = 4;
pub const EXIT_STRICT: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "rpo", version, about = "Train read-only prompts on a frozen synthetic dual encoder")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Contrastively pre-train a backbone and write `backbone.ckpt`.
    Pretrain(RunArgs),
    /// Train prompts on the base classes, then evaluate base and novel.
    Adapt(RunArgs),
    /// Evaluate a saved prompt checkpoint.
    Eval(RunArgs),
    /// Run one of the study harnesses.
    Study {
        kind: StudyKind,
        #[command(flatten)]
        args: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Ablation,
    Variance,
    Shots,
    TextRpo,
    Zeroshot,
    Domain,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration; every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory (default `$RPO_RUN_ROOT/<command>-seed<N>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail with exit code 5 when a directional check does not hold.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub no_mask: bool,
    #[arg(long)]
    pub no_st_init: bool,
    #[arg(long)]
    pub modality: Option<Modality>,
    /// Shot count; studies that sweep shots accept a comma list.
    #[arg(long, value_delimiter = ',')]
    pub shots: Vec<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Study seeds as a comma list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub backbone: Option<PathBuf>,
    #[arg(long)]
    pub prompts: Option<PathBuf>,
}

/// A resolved invocation: effective config, its verbatim source and
/// the run directory.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub source: String,
    pub dir: PathBuf,
}

impl RunArgs {
    /// Loads the config file and layers the flags over it.
    pub fn resolve(&self, command: &str) -> Result<Resolved> {
        let (mut cfg, source) = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => (RunConfig::default(), String::new()),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.apply_seed();
        if self.no_mask {
            cfg.adapt.use_mask = false;
        }
        if self.no_st_init {
            cfg.adapt.use_st_init = false;
        }
        if let Some(m) = self.modality {
            cfg.adapt.modality = m;
        }
        if let Some(k) = self.k {
            cfg.adapt.k = k;
        }
        if let Some(e) = self.epochs {
            cfg.adapt.epochs = e;
        }
        if let Some(&last) = self.shots.last() {
            cfg.task.shots = last;
            cfg.study.shots = self.shots.clone();
        }
        if !self.seeds.is_empty() {
            cfg.study.seeds = self.seeds.clone();
        }
        if self.backbone.is_some() {
            cfg.paths.backbone = self.backbone.clone();
        }
        if self.prompts.is_some() {
            cfg.paths.prompts = self.prompts.clone();
        }
        if self.out.is_some() {
            cfg.paths.out = self.out.clone();
        }
        cfg.validate()?;
        let dir = cfg
            .paths
            .out
            .clone()
            .unwrap_or_else(|| run_root().join(format!("{command}-seed{}", cfg.seed)));
        Ok(Resolved {
            config: cfg,
            source,
            dir,
        })
    }
}

/// Maps an error to its exit code.
pub fn exit_code(err: &RpoError) -> i32 {
    match err {
        RpoError::InvalidConfig(_) => EXIT_CONFIG,
        RpoError::Divergence { .. } => EXIT_DIVERGENCE,
        RpoError::ChecksumMismatch { .. } => EXIT_CHECKSUM,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            if outcome.strict && !outcome.checks_hold {
                eprintln!("error: directional check failed under --strict");
                EXIT_STRICT
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// What a successful command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub checks_hold: bool,
    pub strict: bool,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let (name, args) = match &cli.command {
        Command::Pretrain(a) => ("pretrain", a),
        Command::Adapt(a) => ("adapt", a),
        Command::Eval(a) => ("eval", a),
        Command::Study { kind, args } => (study_name(*kind), args),
    };
    let r = args.resolve(name)?;
    check_paths(&cli.command, &r)?;
    std::fs::create_dir_all(&r.dir)?;
    std::fs::write(r.dir.join("config.toml"), &r.source)?;
    std::fs::write(r.dir.join("resolved.toml"), r.config.to_toml())?;
    let checks_hold = match &cli.command {
        Command::Pretrain(_) => cmd_pretrain(&r).map(|_| true)?,
        Command::Adapt(_) => cmd_adapt(&r)?,
        Command::Eval(_) => cmd_eval(&r)?,
        Command::Study { kind, .. } => cmd_study(*kind, &r)?,
    };
    println!("run directory: {}", r.dir.display());
    Ok(Outcome {
        dir: r.dir,
        checks_hold,
        strict: args.strict,
    })
}

fn study_name(kind: StudyKind) -> &'static str {
    match kind {
        StudyKind::Ablation => "study-ablation",
        StudyKind::Variance => "study-variance",
        StudyKind::Shots => "study-shots",
        StudyKind::TextRpo => "study-text-rpo",
        StudyKind::Zeroshot => "study-zeroshot",
        StudyKind::Domain => "study-domain",
    }
}

/// Files `command` writes into the run directory.
fn written_files(command: &Command, p: &PathsConfig) -> Vec<&'static str> {
    let mut out = vec!["config.toml", "resolved.toml"];
    let pretrains = match command {
        Command::Pretrain(_) => true,
        Command::Eval(_) => false,
        _ => p.backbone.is_none(),
    };
    if pretrains {
        out.extend(["backbone.ckpt", "pretrain_log.ndjson"]);
    }
    if matches!(command, Command::Adapt(_)) {
        out.extend(["prompts.ckpt", "train_log.ndjson"]);
    }
    if !matches!(command, Command::Pretrain(_)) {
        out.extend(["report.txt", "report.csv", "report.json"]);
    }
    out
}

/// Input files must exist and must not be among the files this run
/// writes.
fn check_paths(command: &Command, r: &Resolved) -> Result<()> {
    let p = &r.config.paths;
    if matches!(command, Command::Eval(_)) {
        if p.backbone.is_none() {
            return Err(RpoError::config("eval needs a backbone checkpoint (--backbone)"));
        }
        if p.prompts.is_none() {
            return Err(RpoError::config("eval needs a prompt checkpoint (--prompts)"));
        }
    }
    let inputs: Vec<&PathBuf> = match command {
        Command::Pretrain(_) => Vec::new(),
        Command::Eval(_) => p.backbone.iter().chain(p.prompts.iter()).collect(),
        _ => p.backbone.iter().collect(),
    };
    let written = written_files(command, p);
    for input in inputs {
        if !input.is_file() {
            return Err(RpoError::config(format!("no such file: {}", input.display())));
        }
        let canon = input.canonicalize()?;
        for f in &written {
            let out = r.dir.join(f);
            if out.canonicalize().map(|o| o == canon).unwrap_or(false) {
                return Err(RpoError::config(format!(
                    "run directory {} would overwrite input {}",
                    r.dir.display(),
                    input.display()
                )));
            }
        }
    }
    Ok(())
}

fn world(cfg: &RunConfig) -> Result<SyntheticWorld> {
    SyntheticWorld::new(&cfg.encoder, &cfg.world)
}

/// Pre-trains, writes the checkpoint and loss log into the run
/// directory and prints the checksum.
fn cmd_pretrain(r: &Resolved) -> Result<BackboneWeights> {
    let cfg = &r.config;
    let world = world(cfg)?;
    let corpus = PretrainCorpus::generate(&world, cfg.pretrain.pairs, cfg.pretrain.seed)?;
    let out = contrastive_pretrain(&cfg.pretrain, &cfg.encoder, &world, &corpus)?;
    let path = r.dir.join("backbone.ckpt");
    save_backbone(&out.weights, &path)?;
    let log: String = out
        .log
        .iter()
        .map(|rec| serde_json::to_string(rec).expect("record serializes") + "\n")
        .collect();
    std::fs::write(r.dir.join("pretrain_log.ndjson"), log)?;
    let last = out.log.last().map(|l| l.loss).unwrap_or(f64::NAN);
    println!("final loss: {last:.6}");
    println!("backbone checksum: {}", out.weights.checksum());
    Ok(out.weights)
}

/// Loads the configured backbone, or pre-trains one into the run
/// directory.
fn backbone(r: &Resolved) -> Result<BackboneWeights> {
    match &r.config.paths.backbone {
        Some(p) => {
            let w = load_backbone(p)?.frozen();
            println!("backbone checksum: {}", w.checksum());
            Ok(w)
        }
        None => cmd_pretrain(r),
    }
}

fn write_reports(dir: &Path, text: &str, csv: &str, json: serde_json::Value) -> Result<()> {
    std::fs::write(dir.join("report.txt"), text)?;
    std::fs::write(dir.join("report.csv"), csv)?;
    let body = serde_json::to_string_pretty(&json).expect("report serializes");
    std::fs::write(dir.join("report.json"), body + "\n")?;
    print!("{text}");
    Ok(())
}

fn single_report(label: &str, fp: String, seed: u64, base: f64, novel: f64) -> Result<EvalReport> {
    EvalReport::from_seeds(label, fp, vec![SeedResult::new(seed, base, novel)?])
}

fn write_single(dir: &Path, report: &EvalReport) -> Result<()> {
    let reports = [report.clone()];
    write_reports(
        dir,
        &reports_table("Base-to-novel (percent)", &reports),
        &reports_csv(&reports),
        json!({ "reports": reports, "checks": [] }),
    )
}

fn task(cfg: &RunConfig, world: &SyntheticWorld) -> Result<FewShotTask> {
    generate_task(world, &cfg.task, cfg.seed)
}

fn cmd_adapt(r: &Resolved) -> Result<bool> {
    let cfg = &r.config;
    let w = backbone(r)?;
    let world = world(cfg)?;
    let task = task(cfg, &world)?;
    let adapted = adapt_rpo(&w, world.tokenizer(), &task, &cfg.adapt)?;
    save_prompts(&adapted.checkpoint(), &r.dir.join("prompts.ckpt"))?;
    adapted.log.write_ndjson(&r.dir.join("train_log.ndjson"))?;
    let mode = cfg.adapt.attention_mode();
    let base = evaluate(&w, world.tokenizer(), &adapted.prompts, &task, Split::Base, mode)?;
    let novel = evaluate(&w, world.tokenizer(), &adapted.prompts, &task, Split::Novel, mode)?;
    let fp = fingerprint(&cfg.adapt, cfg.task.shots);
    write_single(&r.dir, &single_report("RPO", fp, cfg.seed, base, novel)?)?;
    Ok(true)
}

fn cmd_eval(r: &Resolved) -> Result<bool> {
    let cfg = &r.config;
    let paths = &cfg.paths;
    let w = load_backbone(paths.backbone.as_deref().expect("checked"))?.frozen();
    let ckpt = load_prompts(paths.prompts.as_deref().expect("checked"), &w)?;
    let world = world(cfg)?;
    let task = task(cfg, &world)?;
    let mode = ckpt.meta.attention;
    let base = evaluate(&w, world.tokenizer(), &ckpt.prompts, &task, Split::Base, mode)?;
    let novel = evaluate(&w, world.tokenizer(), &ckpt.prompts, &task, Split::Novel, mode)?;
    let fp = format!(
        "k={};modality={};attention={};shots={}",
        ckpt.meta.k,
        ckpt.meta.modality,
        serde_json::to_value(mode).expect("mode serializes").as_str().unwrap_or_default(),
        cfg.task.shots
    );
    write_single(&r.dir, &single_report("RPO (eval)", fp, cfg.seed, base, novel)?)?;
    Ok(true)
}

fn cmd_study(kind: StudyKind, r: &Resolved) -> Result<bool> {
    let cfg = &r.config;
    let w = backbone(r)?;
    let world = world(cfg)?;
    let bench = Bench {
        weights: &w,
        tokenizer: world.tokenizer(),
    };
    let source = TaskSource {
        world: &world,
        config: &cfg.task,
        seed: cfg.seed,
    };
    let seeds = &cfg.study.seeds;
    let invert = cfg.study.invert_checks;
    let (out, json) = match kind {
        StudyKind::Ablation => {
            let g = ablation_grid(bench, &source.task()?, &cfg.adapt, seeds, invert)?;
            let j = json!({ "kind": "ablation", "reports": g.reports, "checks": g.checks });
            (g.output(), j)
        }
        StudyKind::Variance => {
            let adapt = AdaptConfig {
                k: cfg.study.variance_k,
                ..cfg.adapt.clone()
            };
            let v = variance_study(bench, source, &adapt, seeds, &cfg.study.shots, invert)?;
            let j = json!({ "kind": "variance", "rows": v.rows, "checks": v.checks });
            (v.output(), j)
        }
        StudyKind::Shots => {
            let reports = shot_sweep(bench, source, &cfg.adapt, seeds, &cfg.study.shots)?;
            let out = plain_output("Shot sweep (percent)", &reports);
            (out, json!({ "kind": "shots", "reports": reports, "checks": [] }))
        }
        StudyKind::TextRpo => {
            let c = text_rpo_comparison(bench, &source.task()?, &cfg.adapt, seeds, invert)?;
            let j = json!({
                "kind": "text-rpo",
                "reports": [c.dual, c.text_only],
                "checks": c.checks,
            });
            (c.output(), j)
        }
        StudyKind::Zeroshot => {
            let out = zero_shot_study(bench, &source.task()?, invert)?;
            let j = json!({ "kind": "zeroshot", "checks": out.checks });
            (out, j)
        }
        StudyKind::Domain => {
            let reports = domain_study(bench, source, &cfg.adapt, seeds)?;
            let out = plain_output("Domain shift (percent)", &reports);
            (out, json!({ "kind": "domain", "reports": reports, "checks": [] }))
        }
    };
    write_reports(&r.dir, &out.text(), &out.csv, json)?;
    for c in out.checks.iter().filter(|c| !c.holds) {
        eprintln!("warning: {}", c.line());
    }
    Ok(out.all_checks_hold())
}

fn plain_output(title: &str, reports: &[EvalReport]) -> StudyOutput {
    StudyOutput {
        table: reports_table(title, reports),
        csv: reports_csv(reports),
        checks: Vec::new(),
    }
}
