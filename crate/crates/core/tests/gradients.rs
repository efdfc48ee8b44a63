//! Central finite-difference checks of every differentiable tape
//! operation, at h = 1e-5 with a 1e-4 relative-error bound.

mod common;

use common::grad_cases::{self, TOL};
use rpo::tensor_core::{Tape, Tensor};

fn assert_case(name: &str, f: fn() -> f64) {
    let err = f();
    assert!(err < TOL, "{name}: max relative error {err:e}");
}

#[test]
fn matmul() {
    assert_case("matmul", grad_cases::matmul);
}

#[test]
fn matmul_bt() {
    assert_case("matmul_bt", grad_cases::matmul_bt);
}

#[test]
fn add_mul_scale() {
    assert_case("add/mul/scale", grad_cases::add_mul_scale);
}

#[test]
fn add_row() {
    assert_case("add_row", grad_cases::add_row);
}

#[test]
fn masked_softmax() {
    assert_case("masked_softmax", grad_cases::masked_softmax);
}

#[test]
fn layer_norm() {
    assert_case("layer_norm", grad_cases::layer_norm);
}

#[test]
fn quick_gelu() {
    assert_case("quick_gelu", grad_cases::quick_gelu);
}

#[test]
fn slices_and_concats() {
    assert_case("slice/concat", grad_cases::slices_and_concats);
}

#[test]
fn gather_rows_with_repeats() {
    assert_case("gather_rows", grad_cases::gather_rows_with_repeats);
}

#[test]
fn reshape_sum_mean() {
    assert_case("reshape/sum/mean", grad_cases::reshape_sum_mean);
}

#[test]
fn normalize_rows() {
    assert_case("normalize_rows", grad_cases::normalize_rows);
}

#[test]
fn cross_entropy() {
    assert_case("cross_entropy", grad_cases::cross_entropy);
}

#[test]
fn masked_mhsa_all_inputs() {
    assert_case("masked_mhsa", grad_cases::masked_mhsa_all_inputs);
}

#[test]
fn encoder_prompt_gradients() {
    assert_case("encoder prompts", grad_cases::encoder_prompt_gradients);
}

#[test]
fn encoder_weight_gradients() {
    assert_case("encoder weights", grad_cases::encoder_weight_gradients);
}

#[test]
fn pairwise_and_text_rpo_logits() {
    assert_case("scoring logits", grad_cases::pairwise_and_text_rpo_logits);
}

#[test]
fn tape_skips_frozen_branches() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::filled(&[2, 2], 1.0));
    let b = t.leaf(&Tensor::filled(&[2, 2], 2.0).with_requires_grad(true));
    let c = t.matmul(a, a).unwrap();
    let d = t.mul(c, b).unwrap();
    let s = t.sum(d);
    let g = t.backward(s).unwrap();
    assert!(g.get(a).is_none());
    assert!(g.get(c).is_none());
    assert_eq!(g.get(b).unwrap(), &[2.0, 2.0, 2.0, 2.0]);
}
