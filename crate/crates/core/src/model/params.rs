use serde::{Deserialize, Serialize};

use crate::catalog::NUM_MODEL_CHANNELS;
use crate::error::{CoreError, Result};
use crate::series::CYCLE_LEN;

use super::layers::conv_output_len;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_layers: usize,
    pub feature_maps: usize,
    pub filter_size: usize,
    pub stride: usize,
    pub fc_width: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub input_length: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_layers: 4,
            feature_maps: 64,
            filter_size: 3,
            stride: 2,
            fc_width: 512,
            num_classes: 4,
            dropout_rate: 0.05,
            input_length: NUM_MODEL_CHANNELS * CYCLE_LEN,
        }
    }
}

impl ModelConfig {
    /// Output length of every convolution layer, first to last.
    pub fn conv_lengths(&self) -> Result<Vec<usize>> {
        self.check_basic()?;
        let mut len = self.input_length;
        let mut out = Vec::with_capacity(self.conv_layers);
        for layer in 0..self.conv_layers {
            len = conv_output_len(len, self.filter_size, self.stride).ok_or_else(|| {
                CoreError::invalid(format!(
                    "conv layer {layer} receives length {len}, shorter than the filter"
                ))
            })?;
            out.push(len);
        }
        Ok(out)
    }

    /// Length of the flattened last-convolution output.
    pub fn flatten_len(&self) -> Result<usize> {
        let lengths = self.conv_lengths()?;
        Ok(lengths.last().copied().unwrap_or(self.input_length) * self.last_maps())
    }

    fn last_maps(&self) -> usize {
        if self.conv_layers == 0 {
            1
        } else {
            self.feature_maps
        }
    }

    fn check_basic(&self) -> Result<()> {
        if self.conv_layers == 0
            || self.feature_maps == 0
            || self.filter_size == 0
            || self.stride == 0
            || self.fc_width == 0
            || self.num_classes < 2
        {
            return Err(CoreError::invalid(format!("degenerate model config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CoreError::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.conv_lengths().map(|_| ())
    }
}

/// Weights of one convolution layer, laid out `[out_map][in_map][tap]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_maps: usize,
    pub out_maps: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_maps: usize, out_maps: usize, kernel: usize) -> Self {
        ConvLayer {
            in_maps,
            out_maps,
            kernel,
            weights: vec![0.0; out_maps * in_maps * kernel],
            biases: vec![0.0; out_maps],
        }
    }

    #[inline]
    pub fn weight_index(&self, out_map: usize, in_map: usize, tap: usize) -> usize {
        (out_map * self.in_maps + in_map) * self.kernel + tap
    }
}

/// Dense layer weights, laid out `[output][input]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn row(&self, output: usize) -> &[f64] {
        &self.weights[output * self.inputs..(output + 1) * self.inputs]
    }
}

/// All trainable tensors. Gradients and Adam moments reuse this shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub conv: Vec<ConvLayer>,
    pub fc1: Dense,
    pub out: Dense,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let flatten = config.flatten_len()?;
        let conv = (0..config.conv_layers)
            .map(|l| {
                let in_maps = if l == 0 { 1 } else { config.feature_maps };
                ConvLayer::zeros(in_maps, config.feature_maps, config.filter_size)
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            conv,
            fc1: Dense::zeros(flatten, config.fc_width),
            out: Dense::zeros(config.fc_width, config.num_classes),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(&self.config).expect("config was validated on construction")
    }

    /// Named tensors in a fixed order: conv weights/biases per layer, then
    /// fc1 and output weights/biases.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::with_capacity(2 * self.conv.len() + 4);
        for (i, layer) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.weights"), &layer.weights));
            out.push((format!("conv{i}.biases"), &layer.biases));
        }
        out.push(("fc1.weights".into(), &self.fc1.weights));
        out.push(("fc1.biases".into(), &self.fc1.biases));
        out.push(("out.weights".into(), &self.out.weights));
        out.push(("out.biases".into(), &self.out.biases));
        out
    }

    /// Mutable view of the same tensors, in the order of [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.conv.len() + 4);
        for layer in self.conv.iter_mut() {
            out.push(&mut layer.weights);
            out.push(&mut layer.biases);
        }
        out.push(&mut self.fc1.weights);
        out.push(&mut self.fc1.biases);
        out.push(&mut self.out.weights);
        out.push(&mut self.out.biases);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Checks that every tensor matches the shape implied by the config.
    pub fn check_shapes(&self) -> Result<()> {
        let reference = ModelParams::zeros(&self.config)?;
        let ours = self.tensors();
        let theirs = reference.tensors();
        if ours.len() != theirs.len() {
            return Err(CoreError::InvalidModel("tensor count mismatch".into()));
        }
        for ((name, a), (_, b)) in ours.iter().zip(&theirs) {
            if a.len() != b.len() {
                return Err(CoreError::InvalidModel(format!(
                    "{name} has {} values, expected {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layer_lengths() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.input_length, 1414);
        assert_eq!(cfg.conv_lengths().unwrap(), vec![706, 352, 175, 87]);
        assert_eq!(cfg.flatten_len().unwrap(), 5568);
    }

    #[test]
    fn parameter_count() {
        let p = ModelParams::zeros(&ModelConfig::default()).unwrap();
        let expected = (64 * 3 + 64) + 3 * (64 * 64 * 3 + 64) + (5568 * 512 + 512) + (512 * 4 + 4);
        assert_eq!(p.num_parameters(), expected);
        p.check_shapes().unwrap();
    }

    #[test]
    fn too_short_input_is_rejected() {
        let cfg = ModelConfig {
            input_length: 20,
            feature_maps: 2,
            ..ModelConfig::default()
        };
        // 20 -> 9 -> 4 -> 1 leaves nothing for a fourth layer.
        assert!(cfg.conv_lengths().is_err());
        let cfg = ModelConfig { conv_layers: 3, ..cfg };
        assert_eq!(cfg.conv_lengths().unwrap(), vec![9, 4, 1]);
    }

    #[test]
    fn bad_dropout_rate_is_rejected() {
        let cfg = ModelConfig {
            dropout_rate: 1.0,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
