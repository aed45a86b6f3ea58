#![allow(dead_code)]

use std::collections::BTreeMap;

use gaitlens_core::catalog::catalog;
use gaitlens_core::patient::{PatientRecord, SideData, Trial};
use gaitlens_core::series::{GaitCycleSeries, GaitEvents, CYCLE_LEN};
use gaitlens_core::{ChannelId, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Patient whose averaged series are produced by `f(side, channel, t)`.
pub fn patient_with(id: &str, mut f: impl FnMut(Side, ChannelId, usize) -> f64) -> PatientRecord {
    let mut sides = BTreeMap::new();
    for side in Side::BOTH {
        let trial: Trial = catalog()
            .iter()
            .map(|c| {
                let values = (0..CYCLE_LEN).map(|t| f(side, *c, t)).collect();
                (*c, GaitCycleSeries::new(values, c.unit()).unwrap())
            })
            .collect();
        let events = GaitEvents::new(10.0, 50.0, 60.0).unwrap();
        sides.insert(side, SideData::from_trials(vec![trial], events).unwrap());
    }
    PatientRecord {
        id: id.to_string(),
        exam_date: chrono::NaiveDate::from_ymd_opt(2021, 3, 4).unwrap(),
        walking_speed: 1.1,
        sides,
        predicted: BTreeMap::new(),
        confirmed: BTreeMap::new(),
    }
}

/// Patient with independent uniform random samples in `[-scale, scale]`.
pub fn random_patient(id: &str, rng: &mut ChaCha8Rng, scale: f64) -> PatientRecord {
    patient_with(id, |_, _, _| rng.random_range(-scale..scale))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
