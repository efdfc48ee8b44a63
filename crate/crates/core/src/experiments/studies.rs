//! Study harnesses: ablation grid, seed variance, shot sweep, text-only
//! prompts, zero-shot baseline and domain shift.

use rayon::prelude::*;

use crate::encoder::{BackboneWeights, Tokenizer};
use crate::error::{Result, RpoError};
use crate::rpo::Modality;
use crate::training::{adapt_rpo, evaluate, zero_shot_accuracy, AdaptConfig};

use super::data::{generate_task, DomainTransform, FewShotTask, Split, SyntheticWorld, TaskConfig};
use super::report::{
    checks_text, fingerprint, reports_csv, reports_table, variance_csv, variance_table,
    DirectionalCheck, EvalReport, SeedResult, VarianceRow,
};

/// Frozen backbone plus the tokenizer its captions use.
#[derive(Clone, Copy)]
pub struct Bench<'a> {
    pub weights: &'a BackboneWeights,
    pub tokenizer: &'a Tokenizer,
}

/// A task recipe, so studies can regenerate it at other shot counts or
/// domains.
#[derive(Clone, Copy)]
pub struct TaskSource<'a> {
    pub world: &'a SyntheticWorld,
    pub config: &'a TaskConfig,
    pub seed: u64,
}

impl TaskSource<'_> {
    pub fn task(&self) -> Result<FewShotTask> {
        generate_task(self.world, self.config, self.seed)
    }

    pub fn with(&self, shots: usize, domain: DomainTransform) -> Result<FewShotTask> {
        let cfg = TaskConfig {
            shots,
            domain,
            ..self.config.clone()
        };
        generate_task(self.world, &cfg, self.seed)
    }
}

/// Rendered study output.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub table: String,
    pub csv: String,
    pub checks: Vec<DirectionalCheck>,
}

impl StudyOutput {
    /// Table followed by the directional-check lines.
    pub fn text(&self) -> String {
        if self.checks.is_empty() {
            self.table.clone()
        } else {
            format!("{}\n{}", self.table, checks_text(&self.checks))
        }
    }

    pub fn all_checks_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Adapts with `cfg` (using `cfg.seed`) and evaluates both splits.
pub fn run_seed(bench: Bench<'_>, task: &FewShotTask, cfg: &AdaptConfig) -> Result<SeedResult> {
    let adapted = adapt_rpo(bench.weights, bench.tokenizer, task, cfg)?;
    let mode = cfg.attention_mode();
    let base = evaluate(bench.weights, bench.tokenizer, &adapted.prompts, task, Split::Base, mode)?;
    let novel = evaluate(bench.weights, bench.tokenizer, &adapted.prompts, task, Split::Novel, mode)?;
    SeedResult::new(cfg.seed, base, novel)
}

fn check_seeds(seeds: &[u64], min: usize) -> Result<()> {
    if seeds.len() < min {
        return Err(RpoError::config(format!("study needs at least {min} seed(s)")));
    }
    Ok(())
}

/// Runs every `(config, seed)` job in parallel and groups results per
/// config, in input order.
fn run_grid(
    bench: Bench<'_>,
    jobs: &[(String, &FewShotTask, AdaptConfig)],
    seeds: &[u64],
) -> Result<Vec<EvalReport>> {
    let flat: Vec<(usize, u64)> = (0..jobs.len())
        .flat_map(|j| seeds.iter().map(move |&s| (j, s)))
        .collect();
    let results = flat
        .par_iter()
        .map(|&(j, seed)| {
            let cfg = AdaptConfig {
                seed,
                ..jobs[j].2.clone()
            };
            run_seed(bench, jobs[j].1, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grouped: Vec<Vec<SeedResult>> = vec![Vec::new(); jobs.len()];
    for ((j, _), r) in flat.into_iter().zip(results) {
        grouped[j].push(r);
    }
    jobs.iter()
        .zip(grouped)
        .map(|((label, task, cfg), runs)| {
            EvalReport::from_seeds(label, fingerprint(cfg, task.shots), runs)
        })
        .collect()
}

/// Seed-aggregated report of one configuration.
pub fn run_config(
    bench: Bench<'_>,
    task: &FewShotTask,
    cfg: &AdaptConfig,
    seeds: &[u64],
    label: &str,
) -> Result<EvalReport> {
    check_seeds(seeds, 1)?;
    let mut out = run_grid(bench, &[(label.to_string(), task, cfg.clone())], seeds)?;
    Ok(out.remove(0))
}

/// `(label, use_mask, use_st_init)` in table order.
pub const ABLATION_ROWS: [(&str, bool, bool); 4] = [
    ("RPO w.o mask/init", false, false),
    ("RPO w.o mask", false, true),
    ("RPO w.o init", true, false),
    ("RPO", true, true),
];

#[derive(Debug, Clone)]
pub struct AblationGrid {
    pub reports: Vec<EvalReport>,
    pub checks: Vec<DirectionalCheck>,
}

/// The four mask/initialization combinations with otherwise identical
/// configs.
pub fn ablation_grid(
    bench: Bench<'_>,
    task: &FewShotTask,
    cfg: &AdaptConfig,
    seeds: &[u64],
    invert_checks: bool,
) -> Result<AblationGrid> {
    check_seeds(seeds, 1)?;
    let jobs: Vec<(String, &FewShotTask, AdaptConfig)> = ABLATION_ROWS
        .iter()
        .map(|&(label, use_mask, use_st_init)| {
            (
                label.to_string(),
                task,
                AdaptConfig {
                    use_mask,
                    use_st_init,
                    ..cfg.clone()
                },
            )
        })
        .collect();
    let reports = run_grid(bench, &jobs, seeds)?;
    let checks = vec![DirectionalCheck::at_least(
        "mask-benefit",
        "RPO H >= RPO w.o mask H",
        reports[3].harmonic_mean,
        reports[1].harmonic_mean,
        0.0,
        invert_checks,
    )];
    Ok(AblationGrid { reports, checks })
}

impl AblationGrid {
    pub fn output(&self) -> StudyOutput {
        StudyOutput {
            table: reports_table("Ablation (percent)", &self.reports),
            csv: reports_csv(&self.reports),
            checks: self.checks.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarianceStudy {
    pub rows: Vec<VarianceRow>,
    pub checks: Vec<DirectionalCheck>,
}

/// Per shot count, masked and unmasked runs over every seed.
pub fn variance_study(
    bench: Bench<'_>,
    source: TaskSource<'_>,
    cfg: &AdaptConfig,
    seeds: &[u64],
    shots: &[usize],
    invert_checks: bool,
) -> Result<VarianceStudy> {
    check_seeds(seeds, 2)?;
    if shots.is_empty() {
        return Err(RpoError::config("variance study needs at least one shot count"));
    }
    let tasks = shots
        .iter()
        .map(|&s| source.with(s, source.config.domain))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (task, s) in tasks.iter().zip(shots) {
        for (name, use_mask) in [("masked", true), ("unmasked", false)] {
            let c = AdaptConfig {
                use_mask,
                ..cfg.clone()
            };
            jobs.push((format!("{s} shot {name}"), task, c));
        }
    }
    let mut reports = run_grid(bench, &jobs, seeds)?.into_iter();
    let rows: Vec<VarianceRow> = shots
        .iter()
        .map(|&s| VarianceRow {
            shots: s,
            masked: reports.next().expect("two per shot"),
            unmasked: reports.next().expect("two per shot"),
        })
        .collect();
    let top = rows
        .iter()
        .max_by_key(|r| r.shots)
        .expect("non-empty");
    let checks = vec![DirectionalCheck::at_least(
        "variance-reduction",
        &format!("unmasked std(H) >= masked std(H) at {} shots", top.shots),
        top.unmasked.harmonic_std,
        top.masked.harmonic_std,
        0.0,
        invert_checks,
    )];
    Ok(VarianceStudy { rows, checks })
}

impl VarianceStudy {
    pub fn output(&self) -> StudyOutput {
        StudyOutput {
            table: variance_table(&self.rows),
            csv: variance_csv(&self.rows),
            checks: self.checks.clone(),
        }
    }
}

/// Masked RPO at each shot count.
pub fn shot_sweep(
    bench: Bench<'_>,
    source: TaskSource<'_>,
    cfg: &AdaptConfig,
    seeds: &[u64],
    shots: &[usize],
) -> Result<Vec<EvalReport>> {
    check_seeds(seeds, 1)?;
    let tasks = shots
        .iter()
        .map(|&s| source.with(s, source.config.domain))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<_> = tasks
        .iter()
        .zip(shots)
        .map(|(t, s)| (format!("{s} shot"), t, cfg.clone()))
        .collect();
    run_grid(bench, &jobs, seeds)
}

/// Text-only prompts scored against the frozen global image feature.
pub fn text_rpo_run(
    bench: Bench<'_>,
    task: &FewShotTask,
    cfg: &AdaptConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    let c = AdaptConfig {
        modality: Modality::TextOnly,
        ..cfg.clone()
    };
    run_config(bench, task, &c, seeds, "text-RPO")
}

#[derive(Debug, Clone)]
pub struct TextRpoComparison {
    pub dual: EvalReport,
    pub text_only: EvalReport,
    pub checks: Vec<DirectionalCheck>,
}

/// Allowed H gap (fraction) of dual prompts below text-only prompts.
pub const TEXT_RPO_GAP: f64 = 0.02;

pub fn text_rpo_comparison(
    bench: Bench<'_>,
    task: &FewShotTask,
    cfg: &AdaptConfig,
    seeds: &[u64],
    invert_checks: bool,
) -> Result<TextRpoComparison> {
    let dual_cfg = AdaptConfig {
        modality: Modality::Dual,
        ..cfg.clone()
    };
    let text_cfg = AdaptConfig {
        modality: Modality::TextOnly,
        ..cfg.clone()
    };
    let mut r = run_grid(
        bench,
        &[
            ("RPO".to_string(), task, dual_cfg),
            ("text-RPO".to_string(), task, text_cfg),
        ],
        seeds,
    )?;
    let text_only = r.pop().expect("two reports");
    let dual = r.pop().expect("two reports");
    let checks = vec![DirectionalCheck::at_least(
        "text-rpo-gap",
        "RPO H >= text-RPO H - 0.02",
        dual.harmonic_mean,
        text_only.harmonic_mean,
        TEXT_RPO_GAP,
        invert_checks,
    )];
    Ok(TextRpoComparison {
        dual,
        text_only,
        checks,
    })
}

impl TextRpoComparison {
    pub fn output(&self) -> StudyOutput {
        let reports = [self.dual.clone(), self.text_only.clone()];
        StudyOutput {
            table: reports_table("Dual vs text-only prompts (percent)", &reports),
            csv: reports_csv(&reports),
            checks: self.checks.clone(),
        }
    }
}

/// The frozen backbone's zero-shot rule on both splits.
pub fn zero_shot_report(bench: Bench<'_>, task: &FewShotTask, label: &str) -> Result<EvalReport> {
    let base = zero_shot_accuracy(bench.weights, bench.tokenizer, task, Split::Base)?;
    let novel = zero_shot_accuracy(bench.weights, bench.tokenizer, task, Split::Novel)?;
    EvalReport::from_seeds(label, "zero-shot".into(), vec![SeedResult::new(0, base, novel)?])
}

pub fn zero_shot_study(bench: Bench<'_>, task: &FewShotTask, invert_checks: bool) -> Result<StudyOutput> {
    let r = zero_shot_report(bench, task, "Zero-shot")?;
    let chance = 1.0 / task.base.len() as f64;
    let checks = vec![DirectionalCheck::at_least(
        "above-chance",
        "zero-shot base accuracy >= chance",
        r.base_acc,
        chance,
        0.0,
        invert_checks,
    )];
    let reports = [r];
    Ok(StudyOutput {
        table: reports_table("Zero-shot (percent)", &reports),
        csv: reports_csv(&reports),
        checks,
    })
}

/// Zero-shot and RPO on the source test set and on a rotated, noisier
/// copy. Training images are the same in both cases.
pub fn domain_study(
    bench: Bench<'_>,
    source: TaskSource<'_>,
    cfg: &AdaptConfig,
    seeds: &[u64],
) -> Result<Vec<EvalReport>> {
    check_seeds(seeds, 1)?;
    let clean = source.with(source.config.shots, DomainTransform::None)?;
    let shifted = source.with(source.config.shots, DomainTransform::Shift)?;
    let mut out = vec![
        zero_shot_report(bench, &clean, "Zero-shot (source)")?,
        zero_shot_report(bench, &shifted, "Zero-shot (shifted)")?,
    ];
    let mode = cfg.attention_mode();
    let pairs = seeds
        .par_iter()
        .map(|&seed| {
            let c = AdaptConfig {
                seed,
                ..cfg.clone()
            };
            let a = adapt_rpo(bench.weights, bench.tokenizer, &clean, &c)?;
            let eval = |task: &FewShotTask| -> Result<SeedResult> {
                let b = evaluate(bench.weights, bench.tokenizer, &a.prompts, task, Split::Base, mode)?;
                let n = evaluate(bench.weights, bench.tokenizer, &a.prompts, task, Split::Novel, mode)?;
                SeedResult::new(seed, b, n)
            };
            Ok((eval(&clean)?, eval(&shifted)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (src, tgt): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let fp = fingerprint(cfg, clean.shots);
    out.push(EvalReport::from_seeds("RPO (source)", fp.clone(), src)?);
    out.push(EvalReport::from_seeds("RPO (shifted)", fp, tgt)?);
    Ok(out)
}
