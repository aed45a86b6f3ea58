//! Synthetic gait cohorts with planted, class-specific motifs.
//!
//! Every channel follows a fixed base trajectory built from raised
//! cosines, so it starts and ends at its minimum with zero slope:
//!
//! ```text
//! shape(t) = Σ_{h=1..3} a_h · (1 − cos(h·φ)),   φ = 2π·t/100
//! base(t)  = offset + scale · shape(t) · (1 + 0.5·sin(φ + 0.37k)) / 2
//! a = [1, 0.35 + 0.05·(k mod 5), 0.15]
//! ```
//!
//! where `k` is the catalog index and `offset`/`scale` come from
//! [`channel_offset_scale`]. Smooth channel ends matter: the model sees the
//! channels concatenated, and a jump at every boundary would be the
//! sharpest feature in the vector.
//!
//! Each leg adds its own offset (σ = 0.1·scale), gain (×0.9–1.1) and a slow
//! wobble (amplitude 0.05·scale), then the motifs in [`MOTIF_WINDOWS`]:
//! a Hann-windowed raised cosine ([`motif_shape`]) of height
//! `motif_strength · scale` whose period depends on the class
//! ([`motif_period`]). Own-class motifs get a per-leg gain of 0.85–1.15,
//! other classes' motifs a faint 0–[`TRACE_MAX`]. Windows shift by up to
//! ±1 % per leg. Each trial adds i.i.d. Gaussian noise with
//! σ = `noise_std · scale`.
//!
//! Events are drawn around 10 / 50 / 60 % (σ = 1, 1.5, 2), walking speed is
//! uniform in 0.6–1.3 m/s and exam dates are spread over 2015–2022.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Days, NaiveDate};
use gaitlens_core::catalog::{catalog, BodyPart, ChannelId, Plane, Variable};
use gaitlens_core::patient::{PatientRecord, SideData, Trial};
use gaitlens_core::series::{GaitCycleSeries, GaitEvents, CYCLE_LEN};
use gaitlens_core::{GaitClass, Side};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, ServiceError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SyntheticConfig {
    pub legs_per_class: usize,
    pub trials_per_leg: usize,
    /// Trial noise SD as a fraction of each channel's scale.
    pub noise_std: f64,
    /// Motif height as a fraction of each channel's scale.
    pub motif_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            legs_per_class: 50,
            trials_per_leg: 5,
            noise_std: 0.05,
            motif_strength: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.legs_per_class < 2 {
            return Err(ServiceError::InvalidInput("legsPerClass must be at least 2".into()));
        }
        if self.trials_per_leg < 1 {
            return Err(ServiceError::InvalidInput("trialsPerLeg must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(ServiceError::InvalidInput("noiseStd must be a non-negative number".into()));
        }
        if !(self.motif_strength >= 0.0 && self.motif_strength.is_finite()) {
            return Err(ServiceError::InvalidInput("motifStrength must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// A planted motif on one channel between two cycle percentages, shaped by
/// [`motif_shape`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotifWindow {
    pub class: GaitClass,
    pub channel: &'static str,
    pub start: f64,
    pub end: f64,
}

impl MotifWindow {
    pub fn channel_id(&self) -> ChannelId {
        self.channel.parse().expect("motif channels are catalog keys")
    }

    pub fn centre(&self) -> f64 {
        (self.start + self.end) / 2.0
    }
}

/// Ground-truth motif windows. All lie on classifier channels.
pub const MOTIF_WINDOWS: [MotifWindow; 8] = [
    MotifWindow { class: GaitClass::TrueEquinus, channel: "angle.ankle.sagittal", start: 10.0, end: 45.0 },
    MotifWindow { class: GaitClass::TrueEquinus, channel: "angle.ankle.transverse", start: 60.0, end: 90.0 },
    MotifWindow { class: GaitClass::JumpGait, channel: "angle.pelvis.transverse", start: 5.0, end: 30.0 },
    MotifWindow { class: GaitClass::JumpGait, channel: "angle.hip.sagittal", start: 40.0, end: 65.0 },
    MotifWindow { class: GaitClass::ApparentEquinus, channel: "angle.pelvis.sagittal", start: 20.0, end: 50.0 },
    MotifWindow { class: GaitClass::ApparentEquinus, channel: "angle.hip.transverse", start: 60.0, end: 90.0 },
    MotifWindow { class: GaitClass::CrouchGait, channel: "angle.knee.sagittal", start: 35.0, end: 60.0 },
    MotifWindow { class: GaitClass::CrouchGait, channel: "grf.ground.transverse", start: 15.0, end: 40.0 },
];

pub fn motif_windows(class: GaitClass) -> impl Iterator<Item = &'static MotifWindow> {
    MOTIF_WINDOWS.iter().filter(move |w| w.class == class)
}

/// Typical offset and amplitude scale of a channel, in its physical unit.
pub fn channel_offset_scale(channel: ChannelId) -> (f64, f64) {
    use BodyPart::*;
    use Plane::*;
    match (channel.variable(), channel.body_part(), channel.plane()) {
        (Variable::Angle, Pelvis, Sagittal) => (10.0, 3.0),
        (Variable::Angle, Pelvis, _) => (0.0, 5.0),
        (Variable::Angle, Hip, Sagittal) => (20.0, 20.0),
        (Variable::Angle, Hip, _) => (0.0, 6.0),
        (Variable::Angle, Knee, Sagittal) => (30.0, 25.0),
        (Variable::Angle, Knee, _) => (0.0, 7.0),
        (Variable::Angle, Ankle, Sagittal) => (5.0, 12.0),
        (Variable::Angle, Ankle, _) => (-5.0, 5.0),
        (Variable::Angle, FootFloor, _) => (10.0, 25.0),
        (Variable::Angle, _, _) => (-10.0, 6.0),
        (Variable::Moment, _, Sagittal) => (0.2, 0.8),
        (Variable::Moment, _, _) => (0.0, 0.3),
        (Variable::Power, _, _) => (0.2, 1.2),
        (Variable::Grf, _, Sagittal) => (0.0, 20.0),
        (Variable::Grf, _, Frontal) => (0.0, 8.0),
        (Variable::Grf, _, Transverse) => (60.0, 45.0),
    }
}

/// Noise-free, variation-free base trajectory of a channel at cycle index `t`.
pub fn base_value(channel: ChannelId, t: usize) -> f64 {
    let (offset, scale) = channel_offset_scale(channel);
    let k = channel.catalog_index() as f64;
    let amplitudes = [1.0, 0.35 + 0.05 * (channel.catalog_index() % 5) as f64, 0.15];
    let phase = 2.0 * PI * t as f64 / (CYCLE_LEN - 1) as f64;
    let shape: f64 = (0..3)
        .map(|h| amplitudes[h] * (1.0 - ((h + 1) as f64 * phase).cos()))
        .sum();
    let skew = 1.0 + 0.5 * (phase + 0.37 * k).sin();
    offset + scale * shape * skew / 2.0
}

/// Upper bound of the per-leg gain of motifs that belong to other classes.
/// Faint traces stop a class from being recognised purely by absence.
pub const TRACE_MAX: f64 = 0.3;

/// Oscillation period of each class's motif carrier, in percent of the
/// cycle. Distinct periods give each class its own local texture.
pub fn motif_period(class: GaitClass) -> f64 {
    match class {
        GaitClass::TrueEquinus => 6.0,
        GaitClass::JumpGait => 9.0,
        GaitClass::ApparentEquinus => 13.0,
        GaitClass::CrouchGait => 16.0,
    }
}

/// Hann bump of unit height on `[start, end]` (percent), zero outside.
pub fn bump(percent: f64, start: f64, end: f64) -> f64 {
    if percent <= start || percent >= end {
        0.0
    } else {
        let x = (percent - start) / (end - start);
        (PI * x).sin().powi(2)
    }
}

/// Motif shape: a Hann-windowed raised cosine of the given period centred
/// on the window. Non-negative, peaking at 1 in the middle.
pub fn motif_shape(percent: f64, start: f64, end: f64, period: f64) -> f64 {
    let centre = (start + end) / 2.0;
    bump(percent, start, end) * (1.0 + (2.0 * PI * (percent - centre) / period).cos()) / 2.0
}

struct LegShape {
    offset: BTreeMap<ChannelId, f64>,
    gain: BTreeMap<ChannelId, f64>,
    wobble_phase: BTreeMap<ChannelId, f64>,
    motif_gain: Vec<f64>,
    motif_shift: Vec<f64>,
}

impl LegShape {
    fn draw(rng: &mut ChaCha8Rng, class: GaitClass) -> Self {
        let std_normal = Normal::new(0.0, 1.0).expect("valid");
        let mut offset = BTreeMap::new();
        let mut gain = BTreeMap::new();
        let mut wobble_phase = BTreeMap::new();
        for c in catalog() {
            let (_, scale) = channel_offset_scale(*c);
            offset.insert(*c, 0.1 * scale * std_normal.sample(rng));
            gain.insert(*c, rng.random_range(0.9..1.1));
            wobble_phase.insert(*c, rng.random_range(0.0..2.0 * PI));
        }
        let gain_range = |w: &MotifWindow| if w.class == class { 0.85..1.15 } else { 0.0..TRACE_MAX };
        LegShape {
            offset,
            gain,
            wobble_phase,
            motif_gain: MOTIF_WINDOWS.iter().map(|w| rng.random_range(gain_range(w))).collect(),
            motif_shift: MOTIF_WINDOWS.iter().map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    /// Noise-free series of one channel for this leg.
    fn clean_series(&self, channel: ChannelId, motif_strength: f64) -> Vec<f64> {
        let (offset, scale) = channel_offset_scale(channel);
        let windows: Vec<(usize, &MotifWindow)> = MOTIF_WINDOWS
            .iter()
            .enumerate()
            .filter(|(_, w)| w.channel_id() == channel)
            .collect();
        (0..CYCLE_LEN)
            .map(|t| {
                let percent = t as f64;
                let phase = 2.0 * PI * percent / 100.0;
                let mut v = offset
                    + self.gain[&channel] * (base_value(channel, t) - offset)
                    + self.offset[&channel]
                    + 0.05 * scale * (1.0 - phase.cos()) * (phase + self.wobble_phase[&channel]).sin();
                for (i, w) in &windows {
                    let shift = self.motif_shift[*i];
                    v += motif_strength * scale * self.motif_gain[*i] * motif_shape(percent, w.start + shift, w.end + shift, motif_period(w.class));
                }
                v
            })
            .collect()
    }
}

fn draw_events(rng: &mut ChaCha8Rng) -> GaitEvents {
    let n = Normal::<f64>::new(0.0, 1.0).expect("valid");
    let opposite_toe_off = (10.0 + n.sample(rng)).clamp(5.0, 15.0);
    let opposite_initial_contact = (50.0 + 1.5 * n.sample(rng)).clamp(44.0, 56.0);
    let toe_off = (60.0 + 2.0 * n.sample(rng)).clamp(57.0, 70.0);
    GaitEvents::new(opposite_toe_off, opposite_initial_contact, toe_off).expect("clamped ranges are ordered")
}

/// Generates a labelled cohort. Patients have both legs of one class;
/// `ceil(legs_per_class / 2)` patients are drawn per class and exactly
/// `legs_per_class` legs per class carry a ground-truth label. Patient order
/// is shuffled so ids do not reveal classes.
pub fn generate_synthetic_dataset(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let patients_per_class = cfg.legs_per_class.div_ceil(2);
    let mut classes: Vec<GaitClass> = GaitClass::ALL
        .iter()
        .flat_map(|c| std::iter::repeat_n(*c, patients_per_class))
        .collect();
    classes.shuffle(&mut rng);

    let noise = Normal::new(0.0, 1.0).expect("valid");
    let first_date = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let mut next_id = 100_000 + rng.random_range(0..500u32);
    let mut labelled: BTreeMap<GaitClass, usize> = BTreeMap::new();
    let mut patients = Vec::with_capacity(classes.len());
    let mut ground_truth = BTreeMap::new();

    for class in classes {
        let id = format!("{next_id:06}");
        next_id += rng.random_range(1..=97u32);
        if next_id > 999_999 {
            return Err(ServiceError::InvalidInput("cohort too large for 6-digit ids".into()));
        }
        let exam_date = first_date + Days::new(rng.random_range(0..2900u64));
        let walking_speed = rng.random_range(0.6..1.3);
        let mut sides = BTreeMap::new();
        for side in Side::BOTH {
            let shape = LegShape::draw(&mut rng, class);
            let events = draw_events(&mut rng);
            let clean: Vec<Vec<f64>> = catalog()
                .iter()
                .map(|c| shape.clean_series(*c, cfg.motif_strength))
                .collect();
            let mut trials = Vec::with_capacity(cfg.trials_per_leg);
            for _ in 0..cfg.trials_per_leg {
                let mut trial = Trial::new();
                for (c, clean) in catalog().iter().zip(&clean) {
                    let (_, scale) = channel_offset_scale(*c);
                    let values: Vec<f64> = clean
                        .iter()
                        .map(|v| {
                            if cfg.noise_std > 0.0 {
                                v + cfg.noise_std * scale * noise.sample(&mut rng)
                            } else {
                                *v
                            }
                        })
                        .collect();
                    trial.insert(*c, GaitCycleSeries::new(values, c.unit())?);
                }
                trials.push(trial);
            }
            sides.insert(side, SideData::from_trials(trials, events)?);
            let count = labelled.entry(class).or_insert(0);
            if *count < cfg.legs_per_class {
                *count += 1;
                ground_truth.insert((id.clone(), side), class);
            }
        }
        patients.push(PatientRecord {
            id,
            exam_date,
            walking_speed,
            sides,
            predicted: BTreeMap::new(),
            confirmed: BTreeMap::new(),
        });
    }
    Dataset::new(patients, ground_truth, Vec::new())
}
