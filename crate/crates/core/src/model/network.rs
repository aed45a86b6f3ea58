use serde::{Deserialize, Serialize};

use crate::catalog::GaitClass;
use crate::error::{CoreError, Result};

use super::layers::{
    conv1d_backward, conv1d_forward, dense_accumulate, dense_forward, dense_input_gradient, selu,
    selu_derivative, softmax, DropoutMask,
};
use super::linalg::{gemm, View};
use super::params::ModelParams;
use super::ModelRng;

/// How the two alpha-dropout layers behave during a forward pass.
pub enum DropoutMode<'a> {
    /// Identity (evaluation mode); consumes no randomness.
    Inference,
    /// Draw fresh masks from the generator.
    Sample(&'a mut ModelRng),
    /// Reuse given masks (flatten mask, fc1 mask).
    Fixed(&'a DropoutMask, &'a DropoutMask),
}

impl DropoutMode<'_> {
    /// Masks for one sample: before fc1 and before the output layer.
    fn masks(&mut self, params: &ModelParams) -> Result<Option<(DropoutMask, DropoutMask)>> {
        let flat = params.fc1.inputs;
        let hidden = params.fc1.outputs;
        let rate = params.config.dropout_rate;
        match self {
            DropoutMode::Inference => Ok(None),
            DropoutMode::Sample(rng) => Ok(Some((
                DropoutMask::sample(flat, rate, &mut **rng),
                DropoutMask::sample(hidden, rate, &mut **rng),
            ))),
            DropoutMode::Fixed(a, b) => {
                if a.keep.len() != flat || b.keep.len() != hidden {
                    return Err(CoreError::invalid("fixed dropout masks do not match the model"));
                }
                Ok(Some(((*a).clone(), (*b).clone())))
            }
        }
    }
}

/// Intermediates of one forward pass, kept for backpropagation and Grad-CAM.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// Output length of every conv layer.
    pub conv_lengths: Vec<usize>,
    pub conv_pre: Vec<Vec<f64>>,
    pub conv_act: Vec<Vec<f64>>,
    pub flat_mask: Option<DropoutMask>,
    /// Flattened last conv activations after dropout (fc1 input).
    pub fc1_input: Vec<f64>,
    pub fc1_pre: Vec<f64>,
    pub fc1_act: Vec<f64>,
    pub fc1_mask: Option<DropoutMask>,
    /// fc1 activations after dropout (output layer input).
    pub out_input: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ForwardCache {
    /// Activations of the last convolution layer, `[maps][len]`.
    pub fn last_conv_activations(&self) -> &[f64] {
        self.conv_act.last().expect("at least one conv layer")
    }
}

/// Predicted class with its probability vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: GaitClass,
    pub probabilities: Vec<f64>,
}

struct ConvTrace {
    lengths: Vec<usize>,
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

fn check_input(params: &ModelParams, x: &[f64]) -> Result<()> {
    if x.len() != params.config.input_length {
        return Err(CoreError::invalid(format!(
            "input has {} values, model expects {}",
            x.len(),
            params.config.input_length
        )));
    }
    Ok(())
}

fn conv_forward(params: &ModelParams, x: &[f64]) -> Result<ConvTrace> {
    let n = params.conv.len();
    let mut trace = ConvTrace {
        lengths: Vec::with_capacity(n),
        pre: Vec::with_capacity(n),
        act: Vec::with_capacity(n),
    };
    let mut len = x.len();
    for layer in &params.conv {
        let input = trace.act.last().map(Vec::as_slice).unwrap_or(x);
        let (pre, out_len) = conv1d_forward(input, len, layer, params.config.stride)?;
        trace.act.push(pre.iter().map(|&v| selu(v)).collect());
        trace.pre.push(pre);
        trace.lengths.push(out_len);
        len = out_len;
    }
    Ok(trace)
}

/// Backpropagates `d_act` (gradient w.r.t. the last conv activations)
/// through all conv layers, accumulating parameter gradients.
fn conv_backward(params: &ModelParams, x: &[f64], trace: &ConvTrace, d_act: Vec<f64>, grads: &mut ModelParams) {
    let mut d_act = d_act;
    for l in (0..params.conv.len()).rev() {
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(&trace.pre[l])
            .map(|(g, &z)| g * selu_derivative(z))
            .collect();
        let (input, len) = if l == 0 {
            (x, x.len())
        } else {
            (trace.act[l - 1].as_slice(), trace.lengths[l - 1])
        };
        let d_input = conv1d_backward(
            input,
            len,
            &params.conv[l],
            params.config.stride,
            &d_pre,
            &mut grads.conv[l],
            l > 0,
        );
        if let Some(d) = d_input {
            d_act = d;
        }
    }
}

/// Runs the network on one input vector.
pub fn forward(params: &ModelParams, x: &[f64], mut mode: DropoutMode<'_>) -> Result<ForwardCache> {
    check_input(params, x)?;
    let masks = mode.masks(params)?;
    let trace = conv_forward(params, x)?;
    let flat = trace.act.last().expect("at least one conv layer");
    let (flat_mask, fc1_mask) = match masks {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    let fc1_input = match &flat_mask {
        Some(m) => m.apply(flat),
        None => flat.clone(),
    };
    let fc1_pre = dense_forward(&params.fc1, &fc1_input);
    let fc1_act: Vec<f64> = fc1_pre.iter().map(|&v| selu(v)).collect();
    let out_input = match &fc1_mask {
        Some(m) => m.apply(&fc1_act),
        None => fc1_act.clone(),
    };
    let logits = dense_forward(&params.out, &out_input);
    let probabilities = softmax(&logits);
    Ok(ForwardCache {
        input: x.to_vec(),
        conv_lengths: trace.lengths,
        conv_pre: trace.pre,
        conv_act: trace.act,
        flat_mask,
        fc1_input,
        fc1_pre,
        fc1_act,
        fc1_mask,
        out_input,
        logits,
        probabilities,
    })
}

/// Loss `-log p[label]` and its gradient `p - onehot(label)` w.r.t. the logits.
pub(crate) fn cross_entropy(logits: &[f64], probabilities: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(CoreError::invalid(format!("label {label} outside the output layer")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let mut d = probabilities.to_vec();
    d[label] -= 1.0;
    Ok((log_sum - logits[label], d))
}

/// Mean categorical cross-entropy over `batch` and its exact gradient.
///
/// With [`DropoutMode::Sample`] every batch item draws its own masks. The
/// dense layer runs on the whole batch at once.
pub fn loss_and_gradients<T: AsRef<[f64]>>(
    params: &ModelParams,
    batch: &[(T, GaitClass)],
    mut mode: DropoutMode<'_>,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(CoreError::invalid("empty batch"));
    }
    let n = batch.len();
    let flat_len = params.fc1.inputs;
    let hidden = params.fc1.outputs;
    let mut grads = params.zeros_like();

    let mut traces = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    let mut fc1_in = vec![0.0; n * flat_len];
    for ((x, _), row) in batch.iter().zip(fc1_in.chunks_exact_mut(flat_len)) {
        let x = x.as_ref();
        check_input(params, x)?;
        let item_masks = mode.masks(params)?;
        let trace = conv_forward(params, x)?;
        let flat = trace.act.last().expect("at least one conv layer");
        match &item_masks {
            Some((m, _)) => row.copy_from_slice(&m.apply(flat)),
            None => row.copy_from_slice(flat),
        }
        traces.push(trace);
        masks.push(item_masks);
    }

    let mut fc1_pre = vec![0.0; n * hidden];
    for row in fc1_pre.chunks_exact_mut(hidden) {
        row.copy_from_slice(&params.fc1.biases);
    }
    let inputs = View::row_major(&fc1_in, n, flat_len);
    let w1 = View::row_major(&params.fc1.weights, hidden, flat_len);
    gemm(1.0, inputs, w1.transposed(), 1.0, &mut fc1_pre);

    let mut loss = 0.0;
    let mut d_fc1_pre = vec![0.0; n * hidden];
    for (i, (_, label)) in batch.iter().enumerate() {
        let pre = &fc1_pre[i * hidden..(i + 1) * hidden];
        let act: Vec<f64> = pre.iter().map(|&v| selu(v)).collect();
        let mask = masks[i].as_ref().map(|(_, m)| m);
        let out_input = match mask {
            Some(m) => m.apply(&act),
            None => act,
        };
        let logits = dense_forward(&params.out, &out_input);
        let probabilities = softmax(&logits);
        let (item_loss, d_logits) = cross_entropy(&logits, &probabilities, label.index())?;
        loss += item_loss;
        dense_accumulate(&mut grads.out, &out_input, &d_logits);
        let d_out_input = dense_input_gradient(&params.out, &d_logits);
        let d_act = match mask {
            Some(m) => m.backward(&d_out_input),
            None => d_out_input,
        };
        for ((d, g), &z) in d_fc1_pre[i * hidden..(i + 1) * hidden]
            .iter_mut()
            .zip(&d_act)
            .zip(pre)
        {
            *d = g * selu_derivative(z);
        }
    }

    let d_pre = View::row_major(&d_fc1_pre, n, hidden);
    gemm(1.0, d_pre.transposed(), inputs, 1.0, &mut grads.fc1.weights);
    for row in d_fc1_pre.chunks_exact(hidden) {
        for (b, g) in grads.fc1.biases.iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut d_fc1_in = vec![0.0; n * flat_len];
    gemm(1.0, d_pre, w1, 0.0, &mut d_fc1_in);

    for (i, (x, _)) in batch.iter().enumerate() {
        let d_in = &d_fc1_in[i * flat_len..(i + 1) * flat_len];
        let d_flat = match &masks[i] {
            Some((m, _)) => m.backward(d_in),
            None => d_in.to_vec(),
        };
        conv_backward(params, x.as_ref(), &traces[i], d_flat, &mut grads);
    }

    grads.scale(1.0 / n as f64);
    Ok((loss / n as f64, grads))
}

/// Gradient of the pre-softmax logit of `class` w.r.t. the last-conv
/// activations, laid out like [`ForwardCache::last_conv_activations`].
/// Dropout masks recorded in the cache are honoured.
pub fn last_conv_logit_gradient(params: &ModelParams, cache: &ForwardCache, class: usize) -> Result<Vec<f64>> {
    if class >= params.config.num_classes {
        return Err(CoreError::invalid(format!("class index {class} out of range")));
    }
    let d_out_input = params.out.row(class).to_vec();
    let d_fc1_act = match &cache.fc1_mask {
        Some(mask) => mask.backward(&d_out_input),
        None => d_out_input,
    };
    let d_fc1_pre: Vec<f64> = d_fc1_act
        .iter()
        .zip(&cache.fc1_pre)
        .map(|(g, &z)| g * selu_derivative(z))
        .collect();
    let d_fc1_input = dense_input_gradient(&params.fc1, &d_fc1_pre);
    Ok(match &cache.flat_mask {
        Some(mask) => mask.backward(&d_fc1_input),
        None => d_fc1_input,
    })
}

/// Inference-mode logits computed from given last-conv activations.
pub fn logits_from_last_conv(params: &ModelParams, activations: &[f64]) -> Result<Vec<f64>> {
    if activations.len() != params.fc1.inputs {
        return Err(CoreError::invalid("activation length does not match fc1"));
    }
    let hidden: Vec<f64> = dense_forward(&params.fc1, activations)
        .into_iter()
        .map(selu)
        .collect();
    Ok(dense_forward(&params.out, &hidden))
}

/// Inference-mode class prediction; ties go to the lowest class index.
pub fn predict(params: &ModelParams, x: &[f64]) -> Result<Prediction> {
    let cache = forward(params, x, DropoutMode::Inference)?;
    let best = argmax(&cache.probabilities);
    let class = GaitClass::from_index(best)
        .ok_or_else(|| CoreError::InvalidModel(format!("output {best} has no gait class")))?;
    Ok(Prediction {
        class,
        probabilities: cache.probabilities,
    })
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
