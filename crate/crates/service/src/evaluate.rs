//! Held-out evaluation: accuracy, confusion matrix and explanation fidelity
//! against the planted motif windows.

use std::collections::BTreeMap;

use gaitlens_core::model::{predict, stratified_split, ModelParams, ModelRng};
use gaitlens_core::{grad_cam, FeatureVector, GaitClass, FEATURE_LEN, CYCLE_LEN};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, ServiceError};
use crate::pipeline::{feature_vectors, labelled_pairs};
use crate::synth::motif_windows;

/// Fraction of input positions replaced in the perturbation test.
pub const PERTURBATION_FRACTION: f64 = 0.1;

/// Patient-level split stratified by each patient's label, so both legs of
/// a patient land on the same side. Patients without ground truth are left
/// out. Returns (train ids, held-out ids).
pub fn patient_split(ds: &Dataset, holdout_fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(ServiceError::InvalidInput(format!(
            "holdout fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    let labelled: Vec<(&str, GaitClass)> = ds
        .patients
        .iter()
        .filter_map(|p| ds.patient_label(&p.id).map(|c| (p.id.as_str(), c)))
        .collect();
    let labels: Vec<GaitClass> = labelled.iter().map(|(_, c)| *c).collect();
    let mut rng = ModelRng::seed_from_u64(seed);
    let (train, test) = stratified_split(&labels, holdout_fraction, &mut rng);
    let ids = |idx: Vec<usize>| {
        let mut v: Vec<String> = idx.into_iter().map(|i| labelled[i].0.to_string()).collect();
        v.sort();
        v
    };
    Ok((ids(train), ids(test)))
}

/// Restricts a dataset to the given patients, keeping their annotations.
pub fn subset(ds: &Dataset, ids: &[String]) -> Result<Dataset> {
    let patients = ds
        .patients
        .iter()
        .filter(|p| ids.contains(&p.id))
        .cloned()
        .collect();
    let ground_truth = ds
        .ground_truth
        .iter()
        .filter(|((id, _), _)| ids.contains(id))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let overrides = ds
        .overrides
        .iter()
        .filter(|o| ids.contains(&o.patient_id))
        .cloned()
        .collect();
    Dataset::new(patients, ground_truth, overrides)
}

/// Training and held-out parts of a labelled dataset.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// [`patient_split`] followed by [`subset`] on both halves.
pub fn split_dataset(ds: &Dataset, holdout_fraction: f64, seed: u64) -> Result<Split> {
    let (train_ids, test_ids) = patient_split(ds, holdout_fraction, seed)?;
    Ok(Split {
        train: subset(ds, &train_ids)?,
        test: subset(ds, &test_ids)?,
    })
}

/// Evaluates on the held-out legs, perturbing towards the class-mean
/// baseline of the training legs.
pub fn evaluate_split(params: &ModelParams, split: &Split) -> Result<EvalReport> {
    let baseline = class_mean_baseline(&labelled_pairs(&split.train, &feature_vectors(&split.train)?))?;
    let test = labelled_pairs(&split.test, &feature_vectors(&split.test)?);
    evaluate(params, &test, &baseline)
}

/// Replaces every ground-truth label by a seeded permutation of the labels.
pub fn shuffle_labels(ds: &Dataset, seed: u64) -> Dataset {
    use rand::seq::SliceRandom;
    let mut labels: Vec<GaitClass> = ds.ground_truth.values().copied().collect();
    labels.shuffle(&mut ModelRng::seed_from_u64(seed));
    let mut out = ds.clone();
    out.ground_truth = ds.ground_truth.keys().cloned().zip(labels).collect();
    out
}

/// Class-balanced mean of feature vectors: the mean of the per-class means.
pub fn class_mean_baseline(pairs: &[(FeatureVector, GaitClass)]) -> Result<Vec<f64>> {
    let mut sums: BTreeMap<GaitClass, (Vec<f64>, usize)> = BTreeMap::new();
    for (fv, c) in pairs {
        let entry = sums.entry(*c).or_insert_with(|| (vec![0.0; FEATURE_LEN], 0));
        for (s, v) in entry.0.iter_mut().zip(fv.values()) {
            *s += v;
        }
        entry.1 += 1;
    }
    if sums.is_empty() {
        return Err(ServiceError::InvalidInput("baseline needs at least one sample".into()));
    }
    let k = sums.len() as f64;
    let mut out = vec![0.0; FEATURE_LEN];
    for (sum, n) in sums.values() {
        for (o, s) in out.iter_mut().zip(sum) {
            *o += s / *n as f64 / k;
        }
    }
    Ok(out)
}

/// True at every feature position that lies inside a motif window of `class`.
pub fn motif_mask(class: GaitClass) -> Vec<bool> {
    let mut mask = vec![false; FEATURE_LEN];
    for w in motif_windows(class) {
        let k = w.channel_id().model_index().expect("motif windows lie on model channels");
        for t in 0..CYCLE_LEN {
            let pct = t as f64;
            if pct >= w.start && pct <= w.end {
                mask[k * CYCLE_LEN + t] = true;
            }
        }
    }
    mask
}

/// Mean relevance inside and outside a mask.
pub fn inside_outside_means(relevance: &[f64], mask: &[bool]) -> (f64, f64) {
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for (r, m) in relevance.iter().zip(mask) {
        if *m {
            si += r;
            ni += 1;
        } else {
            so += r;
            no += 1;
        }
    }
    (si / ni.max(1) as f64, so / no.max(1) as f64)
}

/// Seed of the fixed permutation that breaks relevance ties.
pub const TIE_BREAK_SEED: u64 = 0x71e_b8ea;

/// A fixed pseudo-random rank per position, used to break ties so that
/// runs of equal relevance (typically zeros) are not resolved by position.
pub fn tie_break_ranks(len: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ModelRng::seed_from_u64(TIE_BREAK_SEED));
    let mut rank = vec![0; len];
    for (r, i) in order.into_iter().enumerate() {
        rank[i] = r;
    }
    rank
}

/// Indices of the `count` highest (or lowest) relevance positions. Ties
/// are broken by `ranks`.
pub fn extreme_positions(relevance: &[f64], count: usize, highest: bool, ranks: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..relevance.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = relevance[a].total_cmp(&relevance[b]);
        let ord = if highest { ord.reverse() } else { ord };
        ord.then(ranks[a].cmp(&ranks[b]))
    });
    idx.truncate(count);
    idx
}

pub fn replace_positions(x: &[f64], baseline: &[f64], positions: &[usize]) -> Vec<f64> {
    let mut out = x.to_vec();
    for &i in positions {
        out[i] = baseline[i];
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RateCount {
    pub eligible: usize,
    pub hits: usize,
}

impl RateCount {
    pub fn rate(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.hits as f64 / self.eligible as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub legs: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; 4]; 4],
    /// Per class: correctly classified legs whose mean relevance inside the
    /// class motif windows exceeds the mean outside.
    pub localization: BTreeMap<GaitClass, RateCount>,
    /// Correctly classified legs where replacing the top-decile relevance
    /// positions lowers the class probability more than replacing the
    /// bottom decile.
    pub perturbation: RateCount,
}

/// Evaluates `params` on labelled held-out legs. `baseline` is the
/// replacement signal for the perturbation test.
pub fn evaluate(params: &ModelParams, test: &[(FeatureVector, GaitClass)], baseline: &[f64]) -> Result<EvalReport> {
    if baseline.len() != FEATURE_LEN {
        return Err(ServiceError::InvalidInput("baseline length mismatch".into()));
    }
    let count = (PERTURBATION_FRACTION * FEATURE_LEN as f64).round() as usize;
    let ranks = tie_break_ranks(FEATURE_LEN);
    let mut confusion = [[0usize; 4]; 4];
    let mut localization: BTreeMap<GaitClass, RateCount> =
        GaitClass::ALL.iter().map(|c| (*c, RateCount::default())).collect();
    let mut perturbation = RateCount::default();
    let mut correct = 0usize;
    for (fv, truth) in test {
        let pred = predict(params, fv.values())?;
        confusion[truth.index()][pred.class.index()] += 1;
        if pred.class != *truth {
            continue;
        }
        correct += 1;
        let relevance = grad_cam(params, fv, *truth)?;
        let (inside, outside) = inside_outside_means(relevance.raw(), &motif_mask(*truth));
        let loc = localization.get_mut(truth).expect("all classes present");
        loc.eligible += 1;
        if inside > outside {
            loc.hits += 1;
        }

        let p0 = pred.probabilities[truth.index()];
        let top = replace_positions(fv.values(), baseline, &extreme_positions(relevance.raw(), count, true, &ranks));
        let bottom = replace_positions(fv.values(), baseline, &extreme_positions(relevance.raw(), count, false, &ranks));
        let p_top = predict(params, &top)?.probabilities[truth.index()];
        let p_bottom = predict(params, &bottom)?.probabilities[truth.index()];
        perturbation.eligible += 1;
        if p0 - p_top > p0 - p_bottom {
            perturbation.hits += 1;
        }
    }
    Ok(EvalReport {
        legs: test.len(),
        accuracy: if test.is_empty() { 0.0 } else { correct as f64 / test.len() as f64 },
        confusion,
        localization,
        perturbation,
    })
}
