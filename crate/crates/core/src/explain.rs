//! Grad-CAM relevance for the 1D classifier.
//!
//! The coarse map lives on the last convolution layer's time axis. It is
//! linearly stretched over the whole flattened input (coarse index `k` sits
//! at input position `k · (n_in − 1) / (n_coarse − 1)`), so it does not stop
//! at channel boundaries, and then divided by its maximum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{catalog, model_channels, ChannelId, GaitClass, Side};
use crate::error::{CoreError, Result};
use crate::features::{FeatureVector, FEATURE_LEN};
use crate::model::{forward, last_conv_logit_gradient, DropoutMode, ModelParams};
use crate::series::{lerp_at, CYCLE_LEN};

/// Per-channel rows of 101 values keyed by channel; iterates in report order.
pub type ChannelRows = BTreeMap<ChannelId, Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelevanceLevel {
    Low,
    Middle,
    High,
}

/// Three ordinal bins: `[0, 1/3)`, `[1/3, 2/3)`, `[2/3, 1]`.
pub fn bin_relevance(r: f64) -> Result<RelevanceLevel> {
    if !(0.0..=1.0).contains(&r) {
        return Err(CoreError::invalid(format!("relevance {r} outside [0, 1]")));
    }
    Ok(if r >= 2.0 / 3.0 {
        RelevanceLevel::High
    } else if r >= 1.0 / 3.0 {
        RelevanceLevel::Middle
    } else {
        RelevanceLevel::Low
    })
}

/// Normalized Grad-CAM relevance of one leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelevanceMap {
    raw: Vec<f64>,
    target_class: GaitClass,
    side: Side,
}

impl RelevanceMap {
    pub fn new(raw: Vec<f64>, target_class: GaitClass, side: Side) -> Result<Self> {
        if raw.len() != FEATURE_LEN {
            return Err(CoreError::invalid(format!(
                "relevance map needs {FEATURE_LEN} values, got {}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::invalid("relevance values must lie in [0, 1]"));
        }
        Ok(RelevanceMap {
            raw,
            target_class,
            side,
        })
    }

    pub fn zeros(target_class: GaitClass, side: Side) -> Self {
        RelevanceMap {
            raw: vec![0.0; FEATURE_LEN],
            target_class,
            side,
        }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn target_class(&self) -> GaitClass {
        self.target_class
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// The row of a model channel, or `None` for channels outside the model.
    pub fn channel_row(&self, channel: ChannelId) -> Option<&[f64]> {
        channel
            .model_index()
            .map(|k| &self.raw[k * CYCLE_LEN..(k + 1) * CYCLE_LEN])
    }

    /// Rows of the 14 model channels.
    pub fn per_channel(&self) -> ChannelRows {
        model_channels()
            .iter()
            .map(|c| (*c, self.channel_row(*c).expect("model channel").to_vec()))
            .collect()
    }

    /// Serializable export record: raw vector, rows, bins and class.
    pub fn export(&self) -> RelevanceExport {
        let per_channel = self.per_channel();
        let levels = per_channel
            .iter()
            .map(|(c, row)| {
                let bins = row
                    .iter()
                    .map(|&r| bin_relevance(r).expect("map values are in [0, 1]"))
                    .collect();
                (*c, bins)
            })
            .collect();
        RelevanceExport {
            target_class: self.target_class,
            side: self.side,
            raw: self.raw.clone(),
            per_channel,
            levels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelevanceExport {
    pub target_class: GaitClass,
    pub side: Side,
    pub raw: Vec<f64>,
    pub per_channel: ChannelRows,
    pub levels: BTreeMap<ChannelId, Vec<RelevanceLevel>>,
}

/// Rectified class-activation map on the last convolution layer's time axis
/// (before upsampling and normalization).
pub fn grad_cam_coarse(params: &ModelParams, x: &[f64], target: usize) -> Result<Vec<f64>> {
    if !params.is_finite() {
        return Err(CoreError::InvalidModel("parameters contain non-finite values".into()));
    }
    params.check_shapes()?;
    let cache = forward(params, x, DropoutMode::Inference)?;
    let gradient = last_conv_logit_gradient(params, &cache, target)?;
    let activations = cache.last_conv_activations();
    let len = *cache.conv_lengths.last().expect("at least one conv layer");
    let maps = activations.len() / len;
    let mut coarse = vec![0.0; len];
    for k in 0..maps {
        let a = &activations[k * len..(k + 1) * len];
        let g = &gradient[k * len..(k + 1) * len];
        let weight = g.iter().sum::<f64>() / len as f64;
        for (c, v) in coarse.iter_mut().zip(a) {
            *c += weight * v;
        }
    }
    coarse.iter_mut().for_each(|v| *v = v.max(0.0));
    if coarse.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidModel("Grad-CAM produced non-finite values".into()));
    }
    Ok(coarse)
}

/// Linear stretch of a coarse map onto `n_out` points.
pub fn upsample(coarse: &[f64], n_out: usize) -> Vec<f64> {
    if coarse.len() == 1 || n_out == 1 {
        return vec![coarse[0]; n_out];
    }
    let ratio = (coarse.len() - 1) as f64 / (n_out - 1) as f64;
    (0..n_out).map(|i| lerp_at(coarse, i as f64 * ratio)).collect()
}

/// Grad-CAM on an arbitrary-length input: upsampled to the input length and
/// scaled to `[0, 1]`; an identically zero map stays zero.
pub fn grad_cam_raw(params: &ModelParams, x: &[f64], target: usize) -> Result<Vec<f64>> {
    let coarse = grad_cam_coarse(params, x, target)?;
    let mut fine = upsample(&coarse, x.len());
    let max = fine.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        fine.iter_mut().for_each(|v| *v = (*v / max).clamp(0.0, 1.0));
    }
    Ok(fine)
}

/// Grad-CAM relevance of one leg for `target`.
pub fn grad_cam(params: &ModelParams, x: &FeatureVector, target: GaitClass) -> Result<RelevanceMap> {
    let raw = grad_cam_raw(params, x.values(), target.index())?;
    RelevanceMap::new(raw, target, x.side())
}

/// Pointwise maximum of the left and right maps for all 29 channels;
/// channels outside the model get zero rows.
pub fn overview_relevance(left: &RelevanceMap, right: &RelevanceMap) -> ChannelRows {
    catalog()
        .iter()
        .map(|c| {
            let row = match (left.channel_row(*c), right.channel_row(*c)) {
                (Some(l), Some(r)) => l.iter().zip(r).map(|(a, b)| a.max(*b)).collect(),
                _ => vec![0.0; CYCLE_LEN],
            };
            (*c, row)
        })
        .collect()
}

/// Relevance value read off a channel row at a gait-cycle percentage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelevanceReading {
    pub value: f64,
    pub in_model: bool,
}

/// Linear interpolation of a channel's row at `cycle_percent` (0–100).
/// Channels outside the model read as zero with `in_model = false`.
pub fn relevance_at(map: &RelevanceMap, channel: ChannelId, cycle_percent: f64) -> Result<RelevanceReading> {
    if !(0.0..=100.0).contains(&cycle_percent) {
        return Err(CoreError::invalid(format!(
            "cycle percent {cycle_percent} outside [0, 100]"
        )));
    }
    Ok(match map.channel_row(channel) {
        Some(row) => RelevanceReading {
            value: lerp_at(row, cycle_percent * (CYCLE_LEN - 1) as f64 / 100.0),
            in_model: true,
        },
        None => RelevanceReading {
            value: 0.0,
            in_model: false,
        },
    })
}
