//! Metric, initialization, scoring and checkpoint contracts. Each check
//! returns a short detail string on success.

use rand::Rng;
use rpo::checkpoint::{
    backbone_from_bytes, backbone_to_bytes, load_backbone, load_prompts, prompts_from_bytes,
    prompts_to_bytes, save_backbone, save_prompts, PromptCheckpoint, PromptInit, PromptMeta,
};
use rpo::encoder::{AttentionMode, BackboneWeights, EncoderConfig};
use rpo::experiments::harmonic_mean;
use rpo::rpo::{class_probabilities, pairwise_similarity, st_initialize, InitSpec};
use rpo::tensor_core::{rng, Tensor};

use super::randn;

pub type Check = Result<String, String>;

pub fn metric_reproduction() -> Check {
    let h = harmonic_mean(76.60, 71.57).map_err(|e| e.to_string())?;
    if (h - 74.00).abs() > 0.01 {
        return Err(format!("H(76.60, 71.57) = {h:.4}"));
    }
    let mut r = rng::stream(6, "metric-pairs");
    for _ in 0..1000 {
        let x: f64 = r.gen();
        let y: f64 = r.gen();
        let hxx = harmonic_mean(x, x).map_err(|e| e.to_string())?;
        if (hxx - x).abs() > 1e-15 * x.max(1.0) {
            return Err(format!("H({x}, {x}) = {hxx}"));
        }
        for (a, b) in [(x, 0.0), (0.0, y)] {
            if harmonic_mean(a, b).map_err(|e| e.to_string())? != 0.0 {
                return Err(format!("H({a}, {b}) != 0"));
            }
        }
    }
    Ok(format!("H(76.60, 71.57) = {h:.4}; 1000 pairs"))
}

/// Per-coordinate sample mean and variance of `n` ST-initialized prompts
/// at σ = 0.1.
pub fn init_statistics(n: usize) -> Check {
    let sigma = 0.1;
    let w = BackboneWeights::init(&EncoderConfig::default(), 21).map_err(|e| e.to_string())?;
    let set = st_initialize(&w, n, InitSpec { sigma, seed: 5 }).map_err(|e| e.to_string())?;
    let visual = set.visual.as_ref().ok_or("dual set has no visual block")?;
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for (block, special) in [(visual, &w.towers.visual.special), (&set.textual, &w.towers.text.special)] {
        let d = block.cols();
        for c in 0..d {
            let col: Vec<f64> = (0..n).map(|i| block.get2(i, c)).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            let mean_dev = (m - special.data()[c]).abs() / (3.0 * sigma / (n as f64).sqrt());
            let var_dev = (v - sigma * sigma).abs() / (0.1 * sigma * sigma);
            worst_mean = worst_mean.max(mean_dev);
            worst_var = worst_var.max(var_dev);
        }
    }
    let detail = format!(
        "worst mean offset {worst_mean:.3} of bound, worst variance offset {worst_var:.3} of bound"
    );
    if worst_mean <= 1.0 && worst_var <= 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn brute_force_pairwise(v: &Tensor, t: &Tensor) -> f64 {
    let k = v.rows();
    let mut s = 0.0;
    for i in 0..k {
        let (a, b) = (v.row(i), t.row(i));
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        s += dot / (na * nb);
    }
    s / k as f64
}

pub fn scoring_contracts() -> Check {
    let mut r = rng::stream(8, "scoring");
    let mut worst = 0.0f64;
    for k in [1, 2, 4, 24] {
        for _ in 0..50 {
            let d = r.gen_range(1..20);
            let v = randn(&[k, d], 1.0, &mut r);
            let t = randn(&[k, d], 1.0, &mut r);
            let got = pairwise_similarity(&v, &t).map_err(|e| e.to_string())?;
            worst = worst.max((got - brute_force_pairwise(&v, &t)).abs());
        }
    }
    if worst > 1e-12 {
        return Err(format!("pairwise similarity off by {worst:e}"));
    }
    let mut worst_norm = 0.0f64;
    for tau in [0.01, 0.07, 1.0, 10.0] {
        for _ in 0..200 {
            let c = r.gen_range(1..30);
            let sims: Vec<f64> = (0..c).map(|_| r.gen_range(-1.0..1.0)).collect();
            let p = class_probabilities(&sims, tau).map_err(|e| e.to_string())?;
            worst_norm = worst_norm.max((p.iter().sum::<f64>() - 1.0).abs());
            if argmax(&p) != argmax(&sims) {
                return Err(format!("argmax changed at tau={tau}"));
            }
        }
    }
    if worst_norm > 1e-12 {
        return Err(format!("probabilities sum off by {worst_norm:e}"));
    }
    Ok(format!("similarity error {worst:e}, normalization error {worst_norm:e}"))
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// save → load → save for both checkpoint kinds, comparing file bytes.
pub fn checkpoint_round_trip(dir: &std::path::Path) -> Check {
    let w = BackboneWeights::init(&EncoderConfig::default(), 9)
        .map_err(|e| e.to_string())?
        .frozen();
    let a = dir.join("a.ckpt");
    let b = dir.join("b.ckpt");
    save_backbone(&w, &a).map_err(|e| e.to_string())?;
    let loaded = load_backbone(&a).map_err(|e| e.to_string())?;
    save_backbone(&loaded, &b).map_err(|e| e.to_string())?;
    let (ba, bb) = (read(&a)?, read(&b)?);
    if ba != bb {
        return Err("backbone files differ".into());
    }
    if backbone_to_bytes(&backbone_from_bytes(&ba).map_err(|e| e.to_string())?).map_err(|e| e.to_string())? != ba {
        return Err("backbone bytes differ".into());
    }

    let prompts = st_initialize(&w, 24, InitSpec { sigma: 0.1, seed: 3 }).map_err(|e| e.to_string())?;
    let ckpt = PromptCheckpoint {
        meta: PromptMeta {
            k: 24,
            modality: prompts.modality(),
            init: PromptInit::SpecialToken { sigma: 0.1, seed: 3 },
            attention: AttentionMode::ReadOnly,
            backbone_checksum: w.checksum(),
        },
        prompts,
    };
    let pa = dir.join("pa.ckpt");
    let pb = dir.join("pb.ckpt");
    save_prompts(&ckpt, &pa).map_err(|e| e.to_string())?;
    let back = load_prompts(&pa, &loaded).map_err(|e| e.to_string())?;
    save_prompts(&back, &pb).map_err(|e| e.to_string())?;
    let (qa, qb) = (read(&pa)?, read(&pb)?);
    if qa != qb {
        return Err("prompt files differ".into());
    }
    let again = prompts_from_bytes(&qa, &loaded).map_err(|e| e.to_string())?;
    if prompts_to_bytes(&again).map_err(|e| e.to_string())? != qa {
        return Err("prompt bytes differ".into());
    }
    Ok(format!("backbone {} bytes, prompts {} bytes", ba.len(), qa.len()))
}

fn read(p: &std::path::Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}
