use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{catalog, model_channels, ChannelId, GaitClass, Side};
use crate::error::{CoreError, Result};
use crate::model::Prediction;
use crate::series::{average_trials, GaitCycleSeries, GaitEvents};

/// Channel set of one recorded trial.
pub type Trial = BTreeMap<ChannelId, GaitCycleSeries>;

/// Recorded data of one body side in one examination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideData {
    pub trials: Vec<Trial>,
    pub averaged: BTreeMap<ChannelId, GaitCycleSeries>,
    pub events: GaitEvents,
}

impl SideData {
    /// Builds a side from its trials, averaging every channel that all
    /// trials share.
    pub fn from_trials(trials: Vec<Trial>, events: GaitEvents) -> Result<Self> {
        let first = trials
            .first()
            .ok_or_else(|| CoreError::invalid("a side needs at least one trial"))?;
        let mut averaged = BTreeMap::new();
        for channel in first.keys() {
            let series: Option<Vec<GaitCycleSeries>> =
                trials.iter().map(|t| t.get(channel).cloned()).collect();
            if let Some(series) = series {
                averaged.insert(*channel, average_trials(&series)?);
            }
        }
        Ok(SideData {
            trials,
            averaged,
            events,
        })
    }

    pub fn series(&self, channel: ChannelId) -> Result<&GaitCycleSeries> {
        self.averaged
            .get(&channel)
            .ok_or(CoreError::MissingChannel(channel))
    }
}

/// One gait examination of one patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PatientRecord {
    pub id: String,
    pub exam_date: chrono::NaiveDate,
    /// Walking speed in m/s.
    pub walking_speed: f64,
    pub sides: BTreeMap<Side, SideData>,
    #[serde(default)]
    pub predicted: BTreeMap<Side, Prediction>,
    #[serde(default)]
    pub confirmed: BTreeMap<Side, Option<GaitClass>>,
}

impl PatientRecord {
    pub fn side(&self, side: Side) -> Result<&SideData> {
        self.sides.get(&side).ok_or(CoreError::MissingSide(side))
    }

    pub fn series(&self, side: Side, channel: ChannelId) -> Result<&GaitCycleSeries> {
        self.side(side)?.series(channel)
    }

    /// Checks the record invariants: six-digit id, positive finite walking
    /// speed, full 29-channel averages per side, model channels in every
    /// trial, channel units matching the catalog, and well-formed
    /// probability vectors.
    pub fn validate(&self) -> Result<()> {
        if self.id.len() != 6 || !self.id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(CoreError::invalid(format!("patient id `{}` is not 6 digits", self.id)));
        }
        if !(self.walking_speed.is_finite() && self.walking_speed > 0.0) {
            return Err(CoreError::invalid(format!(
                "patient {}: walking speed {} is not positive",
                self.id, self.walking_speed
            )));
        }
        for (side, data) in &self.sides {
            for channel in catalog() {
                let s = data.averaged.get(channel).ok_or(CoreError::MissingChannel(*channel))?;
                if s.unit() != channel.unit() {
                    return Err(CoreError::invalid(format!(
                        "patient {} {side} {channel}: unit {} does not match catalog",
                        self.id,
                        s.unit().symbol()
                    )));
                }
            }
            for (i, trial) in data.trials.iter().enumerate() {
                if let Some(missing) = model_channels().iter().find(|c| !trial.contains_key(c)) {
                    return Err(CoreError::invalid(format!(
                        "patient {} {side} trial {i} lacks model channel {missing}",
                        self.id
                    )));
                }
            }
        }
        for (side, p) in &self.predicted {
            check_probabilities(&p.probabilities).map_err(|e| {
                CoreError::invalid(format!("patient {} {side}: {e}", self.id))
            })?;
        }
        Ok(())
    }
}

/// Probability vectors have one entry per class, are non-negative and sum
/// to one within 1e-9.
pub fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.len() != GaitClass::ALL.len() {
        return Err(CoreError::invalid(format!("probability vector of length {}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(CoreError::invalid("negative or non-finite probability"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::invalid(format!("probabilities sum to {sum}")));
    }
    Ok(())
}
