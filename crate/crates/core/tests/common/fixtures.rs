//! Default-configuration world and pre-trained backbone, built once per
//! test binary.

use std::sync::OnceLock;

use rpo::encoder::{BackboneWeights, EncoderConfig};
use rpo::experiments::{SyntheticWorld, WorldConfig};
use rpo::training::{contrastive_pretrain, PretrainConfig, PretrainCorpus, PretrainRecord};

pub struct Pretrained {
    pub world: SyntheticWorld,
    pub weights: BackboneWeights,
    pub log: Vec<PretrainRecord>,
}

/// Default `PretrainConfig` with seed 1, the same recipe `rpo pretrain`
/// runs.
pub fn pretrained() -> &'static Pretrained {
    static CELL: OnceLock<Pretrained> = OnceLock::new();
    CELL.get_or_init(|| {
        let enc = EncoderConfig::default();
        let world = SyntheticWorld::new(&enc, &WorldConfig::default()).expect("world");
        let cfg = PretrainConfig::default();
        let corpus = PretrainCorpus::generate(&world, cfg.pairs, cfg.seed).expect("corpus");
        let out = contrastive_pretrain(&cfg, &enc, &world, &corpus).expect("pretrain");
        Pretrained {
            world,
            weights: out.weights,
            log: out.log,
        }
    })
}
