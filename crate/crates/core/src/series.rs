//! Time-normalized gait-cycle series and their preprocessing.

use serde::{Deserialize, Serialize};

use crate::catalog::Unit;
use crate::error::{CoreError, Result};

/// Samples per time-normalized gait cycle (0..=100 % in 1 % steps).
pub const CYCLE_LEN: usize = 101;

/// Extent below which a series is treated as constant.
pub const DEGENERATE_EXTENT: f64 = 1e-12;

/// One time-normalized signal covering a full gait cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesRepr", into = "SeriesRepr")]
pub struct GaitCycleSeries {
    unit: Unit,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SeriesRepr {
    unit: Unit,
    values: Vec<f64>,
}

impl TryFrom<SeriesRepr> for GaitCycleSeries {
    type Error = CoreError;

    fn try_from(repr: SeriesRepr) -> Result<Self> {
        GaitCycleSeries::new(repr.values, repr.unit)
    }
}

impl From<GaitCycleSeries> for SeriesRepr {
    fn from(s: GaitCycleSeries) -> Self {
        SeriesRepr {
            unit: s.unit,
            values: s.values,
        }
    }
}

impl GaitCycleSeries {
    pub fn new(values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.len() != CYCLE_LEN {
            return Err(CoreError::invalid(format!(
                "gait-cycle series needs {CYCLE_LEN} samples, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(GaitCycleSeries { unit, values })
    }

    pub fn constant(value: f64, unit: Unit) -> Result<Self> {
        Self::new(vec![value; CYCLE_LEN], unit)
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Gait events of one side, in percent of the gait cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EventsRepr", into = "EventsRepr")]
pub struct GaitEvents {
    opposite_toe_off: f64,
    opposite_initial_contact: f64,
    toe_off: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct EventsRepr {
    opposite_toe_off: f64,
    opposite_initial_contact: f64,
    toe_off: f64,
}

impl TryFrom<EventsRepr> for GaitEvents {
    type Error = CoreError;

    fn try_from(r: EventsRepr) -> Result<Self> {
        GaitEvents::new(r.opposite_toe_off, r.opposite_initial_contact, r.toe_off)
    }
}

impl From<GaitEvents> for EventsRepr {
    fn from(e: GaitEvents) -> Self {
        EventsRepr {
            opposite_toe_off: e.opposite_toe_off,
            opposite_initial_contact: e.opposite_initial_contact,
            toe_off: e.toe_off,
        }
    }
}

impl GaitEvents {
    /// Requires `0 < opposite_toe_off < opposite_initial_contact < toe_off < 100`.
    pub fn new(opposite_toe_off: f64, opposite_initial_contact: f64, toe_off: f64) -> Result<Self> {
        let ordered = 0.0 < opposite_toe_off
            && opposite_toe_off < opposite_initial_contact
            && opposite_initial_contact < toe_off
            && toe_off < 100.0;
        if !ordered {
            return Err(CoreError::invalid(format!(
                "gait events out of order: {opposite_toe_off}, {opposite_initial_contact}, {toe_off}"
            )));
        }
        Ok(GaitEvents {
            opposite_toe_off,
            opposite_initial_contact,
            toe_off,
        })
    }

    pub fn opposite_toe_off(&self) -> f64 {
        self.opposite_toe_off
    }

    pub fn opposite_initial_contact(&self) -> f64 {
        self.opposite_initial_contact
    }

    pub fn toe_off(&self) -> f64 {
        self.toe_off
    }
}

/// Linearly samples a one-dimensional grid at fractional position `pos`
/// (0 ..= len-1). Positions are clamped to the grid.
pub(crate) fn lerp_at(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= last as f64 {
        return values[last];
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        values[lo]
    } else {
        values[lo] + frac * (values[lo + 1] - values[lo])
    }
}

/// Resamples one gait cycle onto `n_out` equidistant points by linear
/// interpolation. The raw samples are taken to be uniformly spaced from
/// initial contact to the next initial contact.
pub fn resample_cycle(raw: &[f64], n_out: usize) -> Result<Vec<f64>> {
    if raw.len() < 2 {
        return Err(CoreError::invalid(format!(
            "time normalization needs at least 2 samples, got {}",
            raw.len()
        )));
    }
    if n_out < 2 {
        return Err(CoreError::invalid("output length must be at least 2"));
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(CoreError::invalid(format!("non-finite sample at index {i}")));
    }
    let span = (raw.len() - 1) as f64;
    let steps = (n_out - 1) as f64;
    Ok((0..n_out)
        .map(|i| lerp_at(raw, i as f64 * span / steps))
        .collect())
}

/// Time-normalizes a raw cycle to the 101-point gait-cycle grid.
pub fn time_normalize(raw: &[f64], unit: Unit) -> Result<GaitCycleSeries> {
    GaitCycleSeries::new(resample_cycle(raw, CYCLE_LEN)?, unit)
}

/// Pointwise mean of several trials of the same signal.
pub fn average_trials(trials: &[GaitCycleSeries]) -> Result<GaitCycleSeries> {
    let first = trials
        .first()
        .ok_or_else(|| CoreError::invalid("cannot average an empty trial list"))?;
    if let Some(t) = trials.iter().find(|t| t.unit != first.unit) {
        return Err(CoreError::invalid(format!(
            "unit mismatch: {} vs {}",
            first.unit.symbol(),
            t.unit.symbol()
        )));
    }
    let n = trials.len() as f64;
    let mut sum = vec![0.0; CYCLE_LEN];
    for t in trials {
        for (s, v) in sum.iter_mut().zip(&t.values) {
            *s += v;
        }
    }
    GaitCycleSeries::new(sum.into_iter().map(|s| s / n).collect(), first.unit)
}

/// Scales a series to `[0, 1]` by its own extremes. A series whose extent is
/// below [`DEGENERATE_EXTENT`] maps to all zeros.
pub fn min_max_normalize(series: &GaitCycleSeries) -> [f64; CYCLE_LEN] {
    let mut out = [0.0; CYCLE_LEN];
    let lo = series.min();
    let extent = series.max() - lo;
    if extent < DEGENERATE_EXTENT {
        return out;
    }
    for (o, v) in out.iter_mut().zip(series.values()) {
        *o = ((v - lo) / extent).clamp(0.0, 1.0);
    }
    out
}
