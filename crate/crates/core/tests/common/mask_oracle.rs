//! Brute-force restatements of the read-only mask rules, written from the
//! definitions with 1-based indices.

use rpo::attention::{build_text_mask, build_visual_mask, AttentionMask};

/// Visual: key `j` (1-based) is hidden from every query iff
/// `j > 1 + n`.
pub fn visual_blocked(n: usize, _i: usize, j: usize) -> bool {
    j > 1 + n
}

/// Text: prompt keys are hidden everywhere; among original tokens a
/// query only reads itself and earlier tokens; prompt queries read every
/// original token.
pub fn text_blocked(n: usize, i: usize, j: usize) -> bool {
    let original = 1 + n;
    if j > original {
        return true;
    }
    i <= original && j > i
}

pub fn visual_count(n: usize, k: usize) -> usize {
    (1 + n + k) * k
}

pub fn text_count(n: usize, k: usize) -> usize {
    (1 + n + k) * k + n * (n + 1) / 2
}

fn compare(m: &AttentionMask, n: usize, k: usize, oracle: fn(usize, usize, usize) -> bool) -> Result<(), String> {
    let side = 1 + n + k;
    if m.rows() != side || m.cols() != side {
        return Err(format!("N={n} K={k}: side {}×{} != {side}", m.rows(), m.cols()));
    }
    for i in 1..=side {
        for j in 1..=side {
            let want = oracle(n, i, j);
            if m.is_blocked(i - 1, j - 1) != want {
                return Err(format!("N={n} K={k}: entry ({i}, {j}) should be blocked={want}"));
            }
            let e = m.entries()[(i - 1) * side + (j - 1)];
            let ok = if want { e == f64::NEG_INFINITY } else { e == 0.0 };
            if !ok {
                return Err(format!("N={n} K={k}: entry ({i}, {j}) has value {e}"));
            }
        }
    }
    if m.first_empty_row().is_some() {
        return Err(format!("N={n} K={k}: a row has no visible key"));
    }
    Ok(())
}

/// Every `N, K ∈ [1, 6]`: entrywise agreement and closed-form counts.
/// Returns the number of grids compared.
pub fn check_all() -> Result<usize, String> {
    let mut grids = 0;
    for n in 1..=6 {
        for k in 1..=6 {
            let v = build_visual_mask(n, k).map_err(|e| e.to_string())?;
            compare(&v, n, k, visual_blocked)?;
            if v.blocked_count() != visual_count(n, k) {
                return Err(format!("visual N={n} K={k}: count {}", v.blocked_count()));
            }
            let t = build_text_mask(n, k).map_err(|e| e.to_string())?;
            compare(&t, n, k, text_blocked)?;
            if t.blocked_count() != text_count(n, k) {
                return Err(format!("text N={n} K={k}: count {}", t.blocked_count()));
            }
            grids += 2;
        }
    }
    Ok(grids)
}

const TEXT_GOLDEN: &str = include_str!("../golden/text_mask_n4_k2.txt");
const VISUAL_GOLDEN: &str = include_str!("../golden/visual_mask_n4_k2.txt");

pub fn check_golden() -> Result<(), String> {
    let t = build_text_mask(4, 2).map_err(|e| e.to_string())?.dump();
    if t != TEXT_GOLDEN {
        return Err(format!("text dump differs:\n{t}"));
    }
    let v = build_visual_mask(4, 2).map_err(|e| e.to_string())?.dump();
    if v != VISUAL_GOLDEN {
        return Err(format!("visual dump differs:\n{v}"));
    }
    Ok(())
}
