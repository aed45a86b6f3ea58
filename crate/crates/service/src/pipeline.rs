//! Dataset → features → model → predictions, relevance maps and group
//! statistics, bundled as an immutable snapshot.

use std::collections::BTreeMap;

use gaitlens_core::model::{predict, train, Checkpoint, EpochMetrics, ModelConfig, ModelParams, Prediction, TrainConfig};
use gaitlens_core::stats::Leg;
use gaitlens_core::{build_feature_vector, compute_group_stats, grad_cam, FeatureVector, GaitClass, GroupStats, RelevanceMap, Side};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, LegKey};
use crate::error::{Result, ServiceError};

pub enum ModelSource {
    Train { model: ModelConfig, train: TrainConfig },
    Pretrained(Checkpoint),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LegResult {
    pub prediction: Prediction,
    pub relevance: RelevanceMap,
}

#[derive(Clone, Debug)]
pub struct ServedState {
    pub dataset: Dataset,
    /// `None` only for an empty dataset.
    pub checkpoint: Option<Checkpoint>,
    pub legs: BTreeMap<LegKey, LegResult>,
    pub group_stats: BTreeMap<GaitClass, GroupStats>,
    pub snapshot_hash: String,
}

fn leg_error(id: &str, side: Side) -> impl Fn(gaitlens_core::CoreError) -> ServiceError + '_ {
    move |source| ServiceError::Leg {
        id: id.to_string(),
        side,
        source,
    }
}

pub fn feature_vectors(ds: &Dataset) -> Result<BTreeMap<LegKey, FeatureVector>> {
    ds.legs()
        .map(|(p, side)| {
            let fv = build_feature_vector(p, side).map_err(leg_error(&p.id, side))?;
            Ok(((p.id.clone(), side), fv))
        })
        .collect()
}

/// Ground-truth training pairs in leg order.
pub fn labelled_pairs(ds: &Dataset, features: &BTreeMap<LegKey, FeatureVector>) -> Vec<(FeatureVector, GaitClass)> {
    ds.ground_truth
        .iter()
        .filter_map(|(leg, class)| features.get(leg).map(|fv| (fv.clone(), *class)))
        .collect()
}

/// Group statistics for every class that has at least one confirmed leg.
pub fn group_stats_for(ds: &Dataset, confirmed: &BTreeMap<LegKey, GaitClass>) -> Result<BTreeMap<GaitClass, GroupStats>> {
    let cohort: Vec<Leg<'_>> = confirmed
        .iter()
        .filter_map(|((id, side), class)| {
            ds.patient(id).map(|patient| Leg {
                patient,
                side: *side,
                class: *class,
            })
        })
        .collect();
    let mut out = BTreeMap::new();
    for class in GaitClass::ALL {
        if cohort.iter().any(|l| l.class == class) {
            out.insert(class, compute_group_stats(&cohort, class)?);
        }
    }
    Ok(out)
}

pub fn explain_leg(params: &ModelParams, fv: &FeatureVector) -> Result<LegResult> {
    let err = leg_error(fv.patient_id(), fv.side());
    let prediction = predict(params, fv.values()).map_err(&err)?;
    let relevance = grad_cam(params, fv, prediction.class).map_err(&err)?;
    Ok(LegResult { prediction, relevance })
}

pub fn run_pipeline(ds: Dataset, source: ModelSource) -> Result<ServedState> {
    if ds.patients.is_empty() {
        return Ok(ServedState {
            snapshot_hash: snapshot_hash(None, &BTreeMap::new(), &BTreeMap::new())?,
            dataset: ds,
            checkpoint: None,
            legs: BTreeMap::new(),
            group_stats: BTreeMap::new(),
        });
    }
    let features = feature_vectors(&ds)?;
    let checkpoint = match source {
        ModelSource::Pretrained(c) => c,
        ModelSource::Train { model, train: cfg } => {
            let pairs = labelled_pairs(&ds, &features);
            let outcome = train(&pairs, &model, &cfg)?;
            Checkpoint {
                params: outcome.params,
                seed: cfg.seed,
                train_config: Some(cfg),
                history: outcome.history,
            }
        }
    };
    if checkpoint.params.config.input_length != gaitlens_core::FEATURE_LEN {
        return Err(ServiceError::InvalidInput(format!(
            "model expects {} inputs, features have {}",
            checkpoint.params.config.input_length,
            gaitlens_core::FEATURE_LEN
        )));
    }
    let legs = features
        .iter()
        .map(|(leg, fv)| Ok((leg.clone(), explain_leg(&checkpoint.params, fv)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let group_stats = group_stats_for(&ds, &ds.confirmed_classes())?;
    Ok(ServedState {
        snapshot_hash: snapshot_hash(Some(&checkpoint), &legs, &group_stats)?,
        dataset: ds,
        checkpoint: Some(checkpoint),
        legs,
        group_stats,
    })
}

pub fn training_history(state: &ServedState) -> &[EpochMetrics] {
    state.checkpoint.as_ref().map_or(&[], |c| c.history.as_slice())
}

fn hash_floats(h: &mut Sha256, values: &[f64]) {
    h.update((values.len() as u64).to_le_bytes());
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
}

/// SHA-256 over the checkpoint bytes, every leg's prediction and relevance
/// map, and the group statistics, all as raw IEEE-754 bits.
pub fn snapshot_hash(
    checkpoint: Option<&Checkpoint>,
    legs: &BTreeMap<LegKey, LegResult>,
    group_stats: &BTreeMap<GaitClass, GroupStats>,
) -> Result<String> {
    let mut h = Sha256::new();
    match checkpoint {
        Some(c) => h.update(c.to_bytes()?),
        None => h.update(b"no-model"),
    }
    for ((id, side), r) in legs {
        h.update(id.as_bytes());
        h.update(side.name().as_bytes());
        h.update([r.prediction.class.index() as u8]);
        hash_floats(&mut h, &r.prediction.probabilities);
        hash_floats(&mut h, r.relevance.raw());
    }
    for (class, stats) in group_stats {
        h.update(class.name().as_bytes());
        for (side, channels) in &stats.per_side {
            h.update(side.name().as_bytes());
            for (channel, s) in channels {
                h.update(channel.key().as_bytes());
                h.update((s.n as u64).to_le_bytes());
                hash_floats(&mut h, &s.mean);
                hash_floats(&mut h, &s.std);
            }
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
