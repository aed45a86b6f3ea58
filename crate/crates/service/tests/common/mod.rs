#![allow(dead_code)]

use std::path::PathBuf;

use gaitlens_core::model::{init_params, Checkpoint, ModelConfig, ModelRng};
use gaitlens_service::{generate_synthetic_dataset, Dataset, SyntheticConfig};
use rand::SeedableRng;

/// Small synthetic cohort: `legs_per_class / 2` patients per class.
pub fn cohort(seed: u64, legs_per_class: usize) -> Dataset {
    generate_synthetic_dataset(&SyntheticConfig {
        legs_per_class,
        trials_per_leg: 2,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

/// Untrained default-size model; enough for contract tests.
pub fn random_checkpoint(seed: u64) -> Checkpoint {
    let params = init_params(&ModelConfig::default(), &mut ModelRng::seed_from_u64(seed)).unwrap();
    Checkpoint {
        params,
        seed,
        train_config: None,
        history: Vec::new(),
    }
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
