//! Group aggregates and the standard / group-comparison overview scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{catalog, ChannelId, GaitClass, Side};
use crate::error::{CoreError, Result};
use crate::explain::ChannelRows;
use crate::patient::PatientRecord;
use crate::series::{CYCLE_LEN, DEGENERATE_EXTENT};

/// One labelled leg of a cohort.
#[derive(Clone, Copy, Debug)]
pub struct Leg<'a> {
    pub patient: &'a PatientRecord,
    pub side: Side,
    pub class: GaitClass,
}

/// Pointwise mean and population standard deviation of one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n: usize,
}

/// Per-side, per-channel statistics of all legs of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroupStats {
    pub gait_class: GaitClass,
    pub per_side: BTreeMap<Side, BTreeMap<ChannelId, ChannelStats>>,
}

impl GroupStats {
    pub fn get(&self, channel: ChannelId, side: Side) -> Option<&ChannelStats> {
        self.per_side.get(&side).and_then(|m| m.get(&channel))
    }
}

/// Mean ± population SD over the averaged series of every leg of `class`.
/// Statistics are kept separately for left and right legs.
pub fn compute_group_stats(cohort: &[Leg<'_>], class: GaitClass) -> Result<GroupStats> {
    let mut per_side = BTreeMap::new();
    for side in Side::BOTH {
        let legs: Vec<&Leg<'_>> = cohort
            .iter()
            .filter(|l| l.class == class && l.side == side)
            .collect();
        if legs.is_empty() {
            continue;
        }
        let n = legs.len() as f64;
        let mut channels = BTreeMap::new();
        for channel in catalog() {
            let mut mean = vec![0.0; CYCLE_LEN];
            let mut m2 = vec![0.0; CYCLE_LEN];
            // Welford update keeps the variance accurate for large offsets.
            for (count, leg) in legs.iter().enumerate() {
                let values = leg.patient.series(leg.side, *channel)?.values();
                let k = (count + 1) as f64;
                for t in 0..CYCLE_LEN {
                    let delta = values[t] - mean[t];
                    mean[t] += delta / k;
                    m2[t] += delta * (values[t] - mean[t]);
                }
            }
            let std = m2.iter().map(|s| (s / n).max(0.0).sqrt()).collect();
            channels.insert(
                *channel,
                ChannelStats {
                    mean,
                    std,
                    n: legs.len(),
                },
            );
        }
        per_side.insert(side, channels);
    }
    if per_side.is_empty() {
        return Err(CoreError::invalid(format!("no legs of class {class} in cohort")));
    }
    Ok(GroupStats {
        gait_class: class,
        per_side,
    })
}

/// Maximum over sides of the absolute z-score against the group, per
/// channel and time point. Points where the group SD is below 1e-12
/// contribute zero.
pub fn zscore_overview(patient: &PatientRecord, stats: &GroupStats) -> Result<ChannelRows> {
    let sides: Vec<Side> = patient
        .sides
        .keys()
        .copied()
        .filter(|s| stats.per_side.contains_key(s))
        .collect();
    if sides.is_empty() {
        let side = patient.sides.keys().next().copied().unwrap_or(Side::Left);
        return Err(CoreError::MissingSide(side));
    }
    let mut rows = ChannelRows::new();
    for channel in catalog() {
        let mut row = vec![0.0f64; CYCLE_LEN];
        for &side in &sides {
            let group = stats.get(*channel, side).ok_or(CoreError::MissingChannel(*channel))?;
            let values = patient.series(side, *channel)?.values();
            for t in 0..CYCLE_LEN {
                let z = if group.std[t] < DEGENERATE_EXTENT {
                    0.0
                } else {
                    ((values[t] - group.mean[t]) / group.std[t]).abs()
                };
                row[t] = row[t].max(z);
            }
        }
        rows.insert(*channel, row);
    }
    Ok(rows)
}

/// `|left − right|` relative to the joint extent of both sides, per channel.
/// Channels whose joint extent is below 1e-12 score zero.
pub fn asymmetry_overview(patient: &PatientRecord) -> Result<ChannelRows> {
    let left = patient.side(Side::Left)?;
    let right = patient.side(Side::Right)?;
    let mut rows = ChannelRows::new();
    for channel in catalog() {
        let l = left.series(*channel)?;
        let r = right.series(*channel)?;
        let extent = l.max().max(r.max()) - l.min().min(r.min());
        let row = if extent < DEGENERATE_EXTENT {
            vec![0.0; CYCLE_LEN]
        } else {
            l.values()
                .iter()
                .zip(r.values())
                .map(|(a, b)| ((a - b).abs() / extent).min(1.0))
                .collect()
        };
        rows.insert(*channel, row);
    }
    Ok(rows)
}
