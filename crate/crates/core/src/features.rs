use serde::{Deserialize, Serialize};

use crate::catalog::{model_channels, Side, NUM_MODEL_CHANNELS};
use crate::error::{CoreError, Result};
use crate::patient::PatientRecord;
use crate::series::{min_max_normalize, CYCLE_LEN};

/// Length of the classifier input: 14 channels × 101 samples.
pub const FEATURE_LEN: usize = NUM_MODEL_CHANNELS * CYCLE_LEN;

/// Normalized classifier input for one leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    patient_id: String,
    side: Side,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, patient_id: impl Into<String>, side: Side) -> Result<Self> {
        if values.len() != FEATURE_LEN {
            return Err(CoreError::invalid(format!(
                "feature vector needs {FEATURE_LEN} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::invalid("feature values must lie in [0, 1]"));
        }
        Ok(FeatureVector {
            values,
            patient_id: patient_id.into(),
            side,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// The 101-sample segment of the `k`-th model channel.
    pub fn segment(&self, k: usize) -> &[f64] {
        &self.values[k * CYCLE_LEN..(k + 1) * CYCLE_LEN]
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Min-max normalizes each model channel of one leg and concatenates them in
/// model-channel order.
pub fn build_feature_vector(patient: &PatientRecord, side: Side) -> Result<FeatureVector> {
    let data = patient.side(side)?;
    let mut values = Vec::with_capacity(FEATURE_LEN);
    for channel in model_channels() {
        values.extend_from_slice(&min_max_normalize(data.series(*channel)?));
    }
    FeatureVector::new(values, patient.id.clone(), side)
}
