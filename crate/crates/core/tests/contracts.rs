mod common;

use common::contracts;
use rpo::checkpoint::{backbone_from_bytes, backbone_to_bytes, load_backbone, prompts_from_bytes};
use rpo::encoder::{BackboneWeights, EncoderConfig};
use rpo::rpo::{pairwise_similarity, st_initialize, InitSpec};
use rpo::tensor_core::Tensor;
use rpo::RpoError;

#[test]
fn st_init_statistics_at_ten_thousand() {
    contracts::init_statistics(10_000).unwrap();
}

#[test]
fn st_init_with_zero_sigma_copies_special_tokens() {
    let w = BackboneWeights::init(&EncoderConfig::default(), 2).unwrap();
    let p = st_initialize(&w, 3, InitSpec { sigma: 0.0, seed: 1 }).unwrap();
    for i in 0..3 {
        assert_eq!(p.textual.row(i), w.towers.text.special.data());
        assert_eq!(p.visual.as_ref().unwrap().row(i), w.towers.visual.special.data());
    }
    assert!(st_initialize(&w, 3, InitSpec { sigma: -0.1, seed: 1 }).is_err());
    assert!(InitSpec::new(0.0, 1).is_err());
}

#[test]
fn scoring_matches_brute_force() {
    contracts::scoring_contracts().unwrap();
}

#[test]
fn pairwise_similarity_rejects_mismatched_k() {
    let v = Tensor::filled(&[2, 3], 1.0);
    let t = Tensor::filled(&[3, 3], 1.0);
    assert!(pairwise_similarity(&v, &t).is_err());
    let zero = Tensor::zeros(&[2, 3]);
    assert!(pairwise_similarity(&v, &zero).is_err());
}

#[test]
fn pairwise_similarity_of_identical_sets_is_one() {
    let v = Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
    assert!((pairwise_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn checkpoints_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    contracts::checkpoint_round_trip(dir.path()).unwrap();
}

#[test]
fn corrupted_backbone_is_rejected() {
    let w = BackboneWeights::init(&EncoderConfig::default(), 4).unwrap();
    let mut bytes = backbone_to_bytes(&w).unwrap();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x40;
    assert!(matches!(backbone_from_bytes(&bytes), Err(RpoError::ChecksumMismatch { .. })));
    assert!(backbone_from_bytes(b"not a checkpoint").is_err());
}

#[test]
fn prompts_bound_to_other_backbone_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    contracts::checkpoint_round_trip(dir.path()).unwrap();
    let bytes = std::fs::read(dir.path().join("pa.ckpt")).unwrap();
    let other = BackboneWeights::init(&EncoderConfig::default(), 99).unwrap();
    assert!(matches!(
        prompts_from_bytes(&bytes, &other),
        Err(RpoError::ChecksumMismatch { .. })
    ));
    assert!(load_backbone(&dir.path().join("missing.ckpt")).is_err());
}
