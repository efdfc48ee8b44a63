//! Report records and their text/CSV renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RpoError};
use crate::training::AdaptConfig;

use super::metrics::{harmonic_mean, mean, sample_std};

/// Accuracies of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub base_acc: f64,
    pub novel_acc: f64,
    pub harmonic_mean: f64,
}

impl SeedResult {
    pub fn new(seed: u64, base_acc: f64, novel_acc: f64) -> Result<Self> {
        for a in [base_acc, novel_acc] {
            if !(0.0..=1.0).contains(&a) {
                return Err(RpoError::config(format!("accuracy {a} outside [0, 1]")));
            }
        }
        Ok(SeedResult {
            seed,
            base_acc,
            novel_acc,
            harmonic_mean: harmonic_mean(base_acc, novel_acc)?,
        })
    }
}

/// Seed-aggregated accuracies of one configuration.
///
/// `base_acc` and `novel_acc` are seed means. `harmonic_mean` is the mean
/// of per-seed harmonic means, so for several seeds it need not equal the
/// harmonic mean of the two averaged accuracies; each entry of `per_seed`
/// is internally consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub base_acc: f64,
    pub novel_acc: f64,
    pub harmonic_mean: f64,
    pub base_std: f64,
    pub novel_std: f64,
    pub harmonic_std: f64,
    pub per_seed: Vec<SeedResult>,
    pub fingerprint: String,
}

impl EvalReport {
    pub fn from_seeds(label: &str, fingerprint: String, per_seed: Vec<SeedResult>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(RpoError::config("report needs at least one seed"));
        }
        let b: Vec<f64> = per_seed.iter().map(|s| s.base_acc).collect();
        let n: Vec<f64> = per_seed.iter().map(|s| s.novel_acc).collect();
        let h: Vec<f64> = per_seed.iter().map(|s| s.harmonic_mean).collect();
        Ok(EvalReport {
            label: label.to_string(),
            base_acc: mean(&b),
            novel_acc: mean(&n),
            harmonic_mean: mean(&h),
            base_std: sample_std(&b),
            novel_std: sample_std(&n),
            harmonic_std: sample_std(&h),
            per_seed,
            fingerprint,
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.per_seed.iter().map(|s| s.seed).collect()
    }
}

/// Canonical `key=value` list of everything in `cfg` except the seed.
pub fn fingerprint(cfg: &AdaptConfig, shots: usize) -> String {
    format!(
        "k={};lr={};epochs={};batch_size={};use_mask={};use_st_init={};modality={};momentum={};sigma={};shots={}",
        cfg.k,
        cfg.lr,
        cfg.epochs,
        cfg.batch_size,
        cfg.use_mask,
        cfg.use_st_init,
        cfg.modality,
        cfg.momentum,
        cfg.sigma,
        shots
    )
}

/// Parses a fingerprint back into `(key, value)` pairs.
pub fn fingerprint_fields(fp: &str) -> Vec<(String, String)> {
    fp.split(';')
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn pm(m: f64, s: f64) -> String {
    format!("{:.2}±{:.2}", 100.0 * m, 100.0 * s)
}

/// Aligned text table of reports with Base, Novel and H columns.
pub fn reports_table(title: &str, reports: &[EvalReport]) -> String {
    let w = reports.iter().map(|r| r.label.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    writeln!(out, "{title}").unwrap();
    writeln!(out, "{:<w$}  {:>7}  {:>7}  {:>7}", "Method", "Base", "Novel", "H").unwrap();
    for r in reports {
        writeln!(
            out,
            "{:<w$}  {:>7}  {:>7}  {:>7}",
            r.label,
            pct(r.base_acc),
            pct(r.novel_acc),
            pct(r.harmonic_mean)
        )
        .unwrap();
    }
    out
}

pub const REPORTS_CSV_HEADER: &str =
    "method,base,novel,hm,base_std,novel_std,hm_std,seeds,fingerprint";

/// One CSV row per report; accuracies as fractions.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORTS_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let seeds: Vec<String> = r.seeds().iter().map(u64::to_string).collect();
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},\"{}\"",
            r.label,
            r.base_acc,
            r.novel_acc,
            r.harmonic_mean,
            r.base_std,
            r.novel_std,
            r.harmonic_std,
            seeds.join(" "),
            r.fingerprint
        )
        .unwrap();
    }
    out
}

/// One shot count of a variance study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub shots: usize,
    pub masked: EvalReport,
    pub unmasked: EvalReport,
}

/// Rows are shot counts; for each variant, mean±std of base, novel and H.
pub fn variance_table(rows: &[VarianceRow]) -> String {
    let mut out = String::new();
    writeln!(out, "Seed variance (mean±std over seeds, percent)").unwrap();
    writeln!(
        out,
        "{:<8}  {:<9}  {:>13}  {:>13}  {:>13}",
        "Shots", "Variant", "Base", "Novel", "H"
    )
    .unwrap();
    for row in rows {
        for (name, r) in [("masked", &row.masked), ("unmasked", &row.unmasked)] {
            writeln!(
                out,
                "{:<8}  {:<9}  {:>13}  {:>13}  {:>13}",
                format!("{} shot", row.shots),
                name,
                pm(r.base_acc, r.base_std),
                pm(r.novel_acc, r.novel_std),
                pm(r.harmonic_mean, r.harmonic_std)
            )
            .unwrap();
        }
    }
    out
}

pub const VARIANCE_CSV_HEADER: &str =
    "shots,variant,base_mean,base_std,novel_mean,novel_std,hm_mean,hm_std";

pub fn variance_csv(rows: &[VarianceRow]) -> String {
    let mut out = String::from(VARIANCE_CSV_HEADER);
    out.push('\n');
    for row in rows {
        for (name, r) in [("masked", &row.masked), ("unmasked", &row.unmasked)] {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                row.shots,
                name,
                r.base_acc,
                r.base_std,
                r.novel_acc,
                r.novel_std,
                r.harmonic_mean,
                r.harmonic_std
            )
            .unwrap();
        }
    }
    out
}

/// A directional expectation carried in a study's output. Only `--strict`
/// turns a failed check into a failing exit status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub name: String,
    /// Human-readable `lhs >= rhs` statement.
    pub expectation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub holds: bool,
}

impl DirectionalCheck {
    /// Holds when `lhs + tolerance >= rhs`; `inverted` flips the
    /// comparison, which the strict-mode test fixture uses to force a
    /// failure.
    pub fn at_least(name: &str, expectation: &str, lhs: f64, rhs: f64, tolerance: f64, inverted: bool) -> Self {
        let holds = if inverted {
            lhs + tolerance < rhs
        } else {
            lhs + tolerance >= rhs
        };
        DirectionalCheck {
            name: name.to_string(),
            expectation: expectation.to_string(),
            lhs,
            rhs,
            tolerance,
            holds,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {} ({:.4} vs {:.4}, tolerance {:.4})",
            if self.holds { "ok" } else { "WARN" },
            self.name,
            self.expectation,
            self.lhs,
            self.rhs,
            self.tolerance
        )
    }
}

pub fn checks_text(checks: &[DirectionalCheck]) -> String {
    checks.iter().map(|c| c.line() + "\n").collect()
}
