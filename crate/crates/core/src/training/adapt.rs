//! Few-shot prompt adaptation over a frozen backbone.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{PromptCheckpoint, PromptInit, PromptMeta};
use crate::encoder::{
    encode_caption, encode_image, AttentionMode, BackboneWeights, BoundBackbone, TokenSequence,
    Tokenizer,
};
use crate::error::{Result, RpoError};
use crate::experiments::{Example, FewShotTask};
use crate::rpo::{
    pairwise_logits, random_initialize, st_initialize, text_rpo_logits, InitSpec, Modality,
    ReadOnlyPromptSet, RANDOM_INIT_STD,
};
use crate::tensor_core::{rng, Sgd, Tape, Tensor, Var};

use super::features::image_features;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub k: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Set from the run's global seed rather than from config files.
    #[serde(skip)]
    pub seed: u64,
    pub use_mask: bool,
    pub use_st_init: bool,
    pub modality: Modality,
    pub momentum: f64,
    pub sigma: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            k: 24,
            lr: 0.01,
            epochs: 15,
            batch_size: 4,
            seed: 1,
            use_mask: true,
            use_st_init: true,
            modality: Modality::Dual,
            momentum: 0.0,
            sigma: 0.1,
        }
    }
}

impl AdaptConfig {
    /// `epochs = 0` is accepted and returns the initialization untouched.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.batch_size == 0 {
            return Err(RpoError::config("adapt k and batch_size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(RpoError::config(format!("adapt lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(RpoError::config("adapt momentum must be in [0, 1)"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(RpoError::config("adapt sigma must be positive"));
        }
        Ok(())
    }

    pub fn attention_mode(&self) -> AttentionMode {
        if self.use_mask {
            AttentionMode::ReadOnly
        } else {
            AttentionMode::Unmasked
        }
    }

    pub fn prompt_init(&self) -> PromptInit {
        let seed = rng::derive_seed(self.seed, "adapt/init");
        if self.use_st_init {
            PromptInit::SpecialToken {
                sigma: self.sigma,
                seed,
            }
        } else {
            PromptInit::Random {
                std: RANDOM_INIT_STD,
                seed,
            }
        }
    }

    /// Trainable scalar count implied by the config.
    pub fn parameter_count(&self, w: &BackboneWeights) -> usize {
        match self.modality {
            Modality::Dual => self.k * (w.config.d_v + w.config.d_t),
            Modality::TextOnly => self.k * w.config.d_t,
        }
    }
}

/// Builds the initial prompt set described by `cfg`.
pub fn initial_prompts(w: &BackboneWeights, cfg: &AdaptConfig) -> Result<ReadOnlyPromptSet> {
    let set = match cfg.prompt_init() {
        PromptInit::SpecialToken { sigma, seed } => st_initialize(w, cfg.k, InitSpec { sigma, seed })?,
        PromptInit::Random { seed, .. } => random_initialize(cfg.k, w.config.d_v, w.config.d_t, seed)?,
    };
    Ok(match cfg.modality {
        Modality::Dual => set,
        Modality::TextOnly => set.into_text_only(),
    })
}

/// One optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// Training accuracy on the step's batch.
    pub accuracy: f64,
}

/// Per-epoch means of the step records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
}

impl TrainingLog {
    /// Example-weighted mean loss and accuracy per epoch.
    pub fn epochs(&self) -> Vec<EpochSummary> {
        let mut out: Vec<EpochSummary> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for r in &self.records {
            if out.last().map(|s| s.epoch) != Some(r.epoch) {
                out.push(EpochSummary {
                    epoch: r.epoch,
                    loss: 0.0,
                    accuracy: 0.0,
                });
                counts.push(0);
            }
            let s = out.last_mut().expect("pushed above");
            s.loss += r.loss;
            s.accuracy += r.accuracy;
            *counts.last_mut().expect("pushed above") += 1;
        }
        for (s, n) in out.iter_mut().zip(counts) {
            s.loss /= n as f64;
            s.accuracy /= n as f64;
        }
        out
    }

    /// Newline-delimited JSON, one step record per line.
    pub fn to_ndjson(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn write_ndjson(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_ndjson().as_bytes())?;
        Ok(())
    }
}

/// Trained prompts plus everything needed to save and audit them.
#[derive(Debug, Clone)]
pub struct Adapted {
    pub prompts: ReadOnlyPromptSet,
    pub log: TrainingLog,
    pub init: PromptInit,
    pub attention: AttentionMode,
    pub backbone_checksum: String,
}

impl Adapted {
    pub fn checkpoint(&self) -> PromptCheckpoint {
        PromptCheckpoint {
            meta: PromptMeta {
                k: self.prompts.k(),
                modality: self.prompts.modality(),
                init: self.init,
                attention: self.attention,
                backbone_checksum: self.backbone_checksum.clone(),
            },
            prompts: self.prompts.clone(),
        }
    }
}

/// Per-class `K × d_joint` text prompt features on `tape`.
pub(crate) fn class_prompt_features(
    tape: &mut Tape,
    w: &BoundBackbone<'_>,
    captions: &[TokenSequence],
    text_prompts: Var,
    mode: AttentionMode,
) -> Result<Vec<Var>> {
    captions
        .iter()
        .map(|c| {
            let e = encode_caption(tape, w, c, Some(text_prompts), mode)?;
            Ok(e.prompt_features.expect("prompts supplied"))
        })
        .collect()
}

pub(crate) fn captions(
    tokenizer: &Tokenizer,
    names: &[String],
    n_y: usize,
) -> Result<Vec<TokenSequence>> {
    names.iter().map(|n| tokenizer.caption(n, n_y)).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in row.iter().enumerate() {
        if *x > row[best] {
            best = i;
        }
    }
    best
}

/// Trains read-only prompts on the task's base-class training images.
///
/// Panics if the backbone checksum changes during training: that would
/// mean the frozen weights were written, which no code path may do.
pub fn adapt_rpo(
    w: &BackboneWeights,
    tokenizer: &Tokenizer,
    task: &FewShotTask,
    cfg: &AdaptConfig,
) -> Result<Adapted> {
    cfg.validate()?;
    if !w.is_frozen() {
        return Err(RpoError::config("adaptation requires a frozen backbone"));
    }
    if task.train.is_empty() || task.base.is_empty() {
        return Err(RpoError::EmptySplit);
    }
    let checksum = w.checksum();
    let mode = cfg.attention_mode();
    let mut prompts = initial_prompts(w, cfg)?;
    assert_eq!(prompts.parameter_count(), cfg.parameter_count(w));

    let names = task.class_names(&task.base);
    let caps = captions(tokenizer, &names, w.config.n_y)?;
    let position = |label: usize| task.base.iter().position(|&b| b == label);
    let train: Vec<(&Example, usize)> = task
        .train
        .iter()
        .map(|e| position(e.label).map(|p| (e, p)).ok_or(RpoError::EmptySplit))
        .collect::<Result<_>>()?;

    // Text-only scoring uses the frozen global image feature, which no
    // prompt can change.
    let global: Vec<Tensor> = match cfg.modality {
        Modality::TextOnly => train
            .iter()
            .map(|(e, _)| image_features(w, &e.image, None, mode).map(|f| f.class_feature))
            .collect::<Result<_>>()?,
        Modality::Dual => Vec::new(),
    };

    let mut sgd = Sgd::new(cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut r = rng::stream(cfg.seed, "adapt/batches");
    let mut log = TrainingLog::default();
    let mut step = 0;
    let mut tape = Tape::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(cfg.batch_size) {
            let bound = w.bind(&mut tape);
            let pv = prompts.visual.as_ref().map(|v| tape.leaf(v));
            let pt = tape.leaf(&prompts.textual);
            let classes = class_prompt_features(&mut tape, &bound, &caps, pt, mode)?;
            let images = batch
                .iter()
                .map(|&i| match (cfg.modality, pv) {
                    (Modality::Dual, Some(pv)) => {
                        let e = encode_image(&mut tape, &bound, &train[i].0.image, Some(pv), mode)?;
                        Ok(e.prompt_features.expect("prompts supplied"))
                    }
                    _ => Ok(tape.constant(global[i].clone())),
                })
                .collect::<Result<Vec<_>>>()?;
            let logits = match cfg.modality {
                Modality::Dual => pairwise_logits(&mut tape, &images, &classes, w.temperature)?,
                Modality::TextOnly => text_rpo_logits(&mut tape, &images, &classes, w.temperature)?,
            };
            let targets: Vec<usize> = batch.iter().map(|&i| train[i].1).collect();
            let loss = tape.cross_entropy(logits, &targets)?;
            let loss_value = tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(RpoError::Divergence {
                    step,
                    loss: loss_value,
                });
            }
            let lv = tape.value(logits);
            let c = lv.cols();
            let correct = targets
                .iter()
                .enumerate()
                .filter(|(b, t)| argmax(&lv.data()[b * c..(b + 1) * c]) == **t)
                .count();

            let grads = tape.backward(loss)?;
            if let (Some(v), Some(pv)) = (prompts.visual.as_mut(), pv) {
                grads.accumulate_into(pv, v)?;
            }
            grads.accumulate_into(pt, &mut prompts.textual)?;
            drop(grads);
            sgd.step(&mut prompts.trainable_mut())?;
            tape.clear();

            log.records.push(LogRecord {
                epoch,
                step,
                loss: loss_value,
                accuracy: correct as f64 / batch.len() as f64,
            });
            step += 1;
        }
    }
    assert_eq!(
        w.checksum(),
        checksum,
        "frozen backbone was modified during adaptation"
    );
    Ok(Adapted {
        prompts,
        log,
        init: cfg.prompt_init(),
        attention: mode,
        backbone_checksum: checksum,
    })
}
