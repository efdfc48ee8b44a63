//! Synthetic image/caption world.
//!
//! A class name is an ordered pair of syllables. Its latent prototype is
//! `normalize(u_a + w_b)`, with one latent table for first syllables and
//! one for second syllables, so captions determine prototypes
//! compositionally and held-out names are still describable. An image is
//! a grid of patches: a few object patches carry the rendered prototype
//! plus a shared objectness marker, the rest carry rendered clutter.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, Tokenizer};
use crate::error::{Result, RpoError};
use crate::tensor_core::{rng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub latent_dim: usize,
    /// Patches per image that show the object.
    pub object_patches: usize,
    /// Scale of the class prototype in object patches; 0 removes all
    /// class information from images.
    pub signal: f64,
    pub noise: f64,
    pub clutter: f64,
    pub objectness: f64,
    /// Class names reserved for few-shot tasks.
    pub held_out: usize,
    /// Class names available to contrastive pre-training.
    pub pretrain_classes: usize,
    /// Givens rotation angle (radians) of the domain shift.
    pub shift_angle: f64,
    /// Noise multiplier of the domain shift.
    pub shift_noise: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            latent_dim: 12,
            object_patches: 6,
            signal: 1.0,
            noise: 0.5,
            clutter: 1.0,
            objectness: 1.0,
            held_out: 48,
            pretrain_classes: 600,
            shift_angle: 0.6,
            shift_noise: 1.5,
            seed: 7,
        }
    }
}

/// Transform applied to test images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainTransform {
    None,
    Shift,
}

/// One labelled image; `label` indexes the owning task's class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub encoder: EncoderConfig,
    tokenizer: Tokenizer,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    render: Vec<f64>,
    marker: Vec<f64>,
    rotation: Vec<f64>,
    task_pool: Vec<String>,
    pretrain_pool: Vec<String>,
}

fn gaussian_vec(n: usize, std: f64, r: &mut rng::Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(r);
            std * z
        })
        .collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

impl SyntheticWorld {
    pub fn new(encoder: &EncoderConfig, config: &WorldConfig) -> Result<Self> {
        encoder.validate()?;
        let c = config;
        if c.latent_dim == 0 || c.object_patches == 0 || c.object_patches > encoder.n_x {
            return Err(RpoError::config(format!(
                "world needs latent_dim ≥ 1 and 1 ≤ object_patches ≤ n_x = {}",
                encoder.n_x
            )));
        }
        let finite_nonneg = [c.signal, c.noise, c.clutter, c.objectness, c.shift_noise];
        if finite_nonneg.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !c.shift_angle.is_finite() {
            return Err(RpoError::config("world scales must be finite and non-negative"));
        }
        let tokenizer = Tokenizer::new(encoder.vocab)?;
        let syl = tokenizer.syllables().to_vec();
        if encoder.n_y < tokenizer.template_len() + 2 {
            return Err(RpoError::config("n_y too small for template plus two syllables"));
        }
        let mut names: Vec<String> = syl
            .iter()
            .flat_map(|a| syl.iter().filter(move |b| *b != a).map(move |b| format!("{a}{b}")))
            .collect();
        let mut r = rng::stream(c.seed, "world/names");
        names.shuffle(&mut r);
        if c.held_out < 2 || c.held_out + c.pretrain_classes > names.len() {
            return Err(RpoError::config(format!(
                "held_out ({}) + pretrain_classes ({}) must fit in {} names, held_out ≥ 2",
                c.held_out,
                c.pretrain_classes,
                names.len()
            )));
        }
        let pretrain_pool = names[c.held_out..c.held_out + c.pretrain_classes].to_vec();
        names.truncate(c.held_out);

        let mut r = rng::stream(c.seed, "world/latents");
        let std = 1.0 / (c.latent_dim as f64).sqrt();
        let first = (0..syl.len()).map(|_| gaussian_vec(c.latent_dim, std, &mut r)).collect();
        let second = (0..syl.len()).map(|_| gaussian_vec(c.latent_dim, std, &mut r)).collect();
        let render = gaussian_vec(c.latent_dim * encoder.patch_dim, 1.0, &mut r);
        let marker = gaussian_vec(encoder.patch_dim, 1.0, &mut r);

        let mut r = rng::stream(c.seed, "world/shift");
        let p = encoder.patch_dim;
        let mut rotation: Vec<f64> = Tensor::eye(p).into_data();
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(&mut r);
        let (s, co) = c.shift_angle.sin_cos();
        for pair in order.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            rotation[a * p + a] = co;
            rotation[a * p + b] = -s;
            rotation[b * p + a] = s;
            rotation[b * p + b] = co;
        }

        Ok(SyntheticWorld {
            config: c.clone(),
            encoder: encoder.clone(),
            tokenizer,
            first,
            second,
            render,
            marker,
            rotation,
            task_pool: names,
            pretrain_pool,
        })
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn task_pool(&self) -> &[String] {
        &self.task_pool
    }

    pub fn pretrain_pool(&self) -> &[String] {
        &self.pretrain_pool
    }

    /// Unit-norm latent prototype of a two-syllable class name.
    pub fn prototype(&self, name: &str) -> Result<Vec<f64>> {
        let ids = self.tokenizer.tokenize_class(name)?;
        if ids.len() != 2 {
            return Err(RpoError::config(format!("class {name:?} is not two syllables")));
        }
        let a = ids[0] - self.tokenizer.syllable_id(0);
        let b = ids[1] - self.tokenizer.syllable_id(0);
        let v = self.first[a].iter().zip(&self.second[b]).map(|(x, y)| x + y).collect();
        Ok(normalize(v))
    }

    /// Renders an `n_x × patch_dim` image of `prototype`.
    pub fn render_image(&self, prototype: &[f64], shifted: bool, r: &mut rng::Rng) -> Tensor {
        let c = &self.config;
        let (n_x, p, l) = (self.encoder.n_x, self.encoder.patch_dim, c.latent_dim);
        let project = |z: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; p];
            for (i, zi) in z.iter().enumerate() {
                for (o, m) in out.iter_mut().zip(&self.render[i * p..(i + 1) * p]) {
                    *o += zi * m;
                }
            }
            out
        };
        let obj = project(prototype);
        let mut slots: Vec<usize> = (0..n_x).collect();
        slots.shuffle(r);
        let mut is_object = vec![false; n_x];
        for &s in &slots[..c.object_patches] {
            is_object[s] = true;
        }
        let noise = if shifted { c.noise * c.shift_noise } else { c.noise };
        let std = 1.0 / (l as f64).sqrt();
        let mut data = Vec::with_capacity(n_x * p);
        for &object in &is_object {
            let base: Vec<f64> = if object {
                obj.iter()
                    .zip(&self.marker)
                    .map(|(o, m)| c.signal * o + c.objectness * m)
                    .collect()
            } else {
                let z = gaussian_vec(l, std, r);
                project(&z).into_iter().map(|x| c.clutter * x).collect()
            };
            let mut patch: Vec<f64> = base
                .into_iter()
                .map(|x| {
                    let e: f64 = StandardNormal.sample(r);
                    x + noise * e
                })
                .collect();
            if shifted {
                let mut rot = vec![0.0; p];
                for (i, x) in patch.iter().enumerate() {
                    for (o, m) in rot.iter_mut().zip(&self.rotation[i * p..(i + 1) * p]) {
                        *o += x * m;
                    }
                }
                patch = rot;
            }
            data.extend(patch);
        }
        Tensor::new(vec![n_x, p], data).expect("n_x × patch_dim")
    }

    /// The orthogonal patch-space map used by the domain shift, row-major.
    pub fn shift_rotation(&self) -> Tensor {
        let p = self.encoder.patch_dim;
        Tensor::new(vec![p, p], self.rotation.clone()).expect("p × p")
    }

    /// Draws a pre-training batch of `size` distinct classes with one
    /// image each.
    pub fn pretrain_batch(&self, size: usize, r: &mut rng::Rng) -> Result<Vec<(String, Tensor)>> {
        if size == 0 || size > self.pretrain_pool.len() {
            return Err(RpoError::config(format!(
                "batch size {size} must be in 1..={}",
                self.pretrain_pool.len()
            )));
        }
        let names: Vec<&String> = self.pretrain_pool.choose_multiple(r, size).collect();
        names
            .into_iter()
            .map(|n| {
                let z = self.prototype(n)?;
                Ok((n.clone(), self.render_image(&z, false, r)))
            })
            .collect()
    }
}

/// Task parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub num_classes: usize,
    pub shots: usize,
    pub test_per_class: usize,
    pub domain: DomainTransform,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            num_classes: 8,
            shots: 16,
            test_per_class: 50,
            domain: DomainTransform::None,
        }
    }
}

/// A few-shot classification task with a base/novel class split.
#[derive(Debug, Clone)]
pub struct FewShotTask {
    /// Class names in sorted order; labels index this list.
    pub classes: Vec<String>,
    pub prototypes: Vec<Vec<f64>>,
    pub shots: usize,
    pub base: Vec<usize>,
    pub novel: Vec<usize>,
    /// Training images, base classes only.
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub domain: DomainTransform,
}

/// Evaluation split of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Base,
    Novel,
}

impl FewShotTask {
    pub fn split_classes(&self, split: Split) -> &[usize] {
        match split {
            Split::Base => &self.base,
            Split::Novel => &self.novel,
        }
    }

    pub fn class_names(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.classes[i].clone()).collect()
    }

    /// Test examples of the split's classes.
    pub fn test_examples(&self, split: Split) -> Vec<&Example> {
        let ids = self.split_classes(split);
        self.test.iter().filter(|e| ids.contains(&e.label)).collect()
    }
}

/// Sorts names; the first `⌈C/2⌉` are base, the rest novel.
pub fn base_new_split(names: &[String]) -> Result<(Vec<String>, Vec<String>)> {
    if names.len() < 2 {
        return Err(RpoError::config(format!(
            "base/novel split needs at least 2 classes, got {}",
            names.len()
        )));
    }
    let mut sorted = names.to_vec();
    sorted.sort();
    let novel = sorted.split_off(names.len().div_ceil(2));
    Ok((sorted, novel))
}

/// Samples `num_classes` held-out names and renders train/test images.
pub fn generate_task(world: &SyntheticWorld, config: &TaskConfig, seed: u64) -> Result<FewShotTask> {
    if config.num_classes < 2 || config.num_classes > world.task_pool().len() {
        return Err(RpoError::config(format!(
            "num_classes must be in 2..={}",
            world.task_pool().len()
        )));
    }
    if config.shots == 0 || config.test_per_class == 0 {
        return Err(RpoError::config("shots and test_per_class must be positive"));
    }
    let mut r = rng::stream(seed, "task/classes");
    let mut classes: Vec<String> = world
        .task_pool()
        .choose_multiple(&mut r, config.num_classes)
        .cloned()
        .collect();
    classes.sort();
    let (base_names, _) = base_new_split(&classes)?;
    let base: Vec<usize> = (0..base_names.len()).collect();
    let novel: Vec<usize> = (base_names.len()..classes.len()).collect();
    let prototypes = classes
        .iter()
        .map(|n| world.prototype(n))
        .collect::<Result<Vec<_>>>()?;

    let mut r = rng::stream(seed, "task/train");
    let mut train = Vec::with_capacity(base.len() * config.shots);
    for &c in &base {
        for _ in 0..config.shots {
            let image = world.render_image(&prototypes[c], false, &mut r);
            train.push(Example { image, label: c });
        }
    }
    let shifted = config.domain == DomainTransform::Shift;
    let mut r = rng::stream(seed, "task/test");
    let mut test = Vec::with_capacity(classes.len() * config.test_per_class);
    for (c, z) in prototypes.iter().enumerate() {
        for _ in 0..config.test_per_class {
            let image = world.render_image(z, shifted, &mut r);
            test.push(Example { image, label: c });
        }
    }
    Ok(FewShotTask {
        classes,
        prototypes,
        shots: config.shots,
        base,
        novel,
        train,
        test,
        domain: config.domain,
    })
}
