//! Channel catalog, gait classes and body sides.
//!
//! The catalog lists the 29 biomechanical time series of a gait report in
//! report order: rows grouped by variable and body part, columns by plane
//! (sagittal, frontal, transverse). A single side-agnostic [`ChannelId`]
//! addresses one row/column cell; left and right series share it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CoreError;

/// Version tag of the channel catalog, embedded in dataset files.
pub const CATALOG_VERSION: &str = "gait-report-29/v1";

/// Number of channels in the full report.
pub const NUM_CHANNELS: usize = 29;

/// Number of channels fed to the classifier.
pub const NUM_MODEL_CHANNELS: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GaitClass {
    TrueEquinus,
    JumpGait,
    ApparentEquinus,
    CrouchGait,
}

impl GaitClass {
    pub const ALL: [GaitClass; 4] = [
        GaitClass::TrueEquinus,
        GaitClass::JumpGait,
        GaitClass::ApparentEquinus,
        GaitClass::CrouchGait,
    ];

    /// Output-neuron index of this class.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<GaitClass> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GaitClass::TrueEquinus => "TrueEquinus",
            GaitClass::JumpGait => "JumpGait",
            GaitClass::ApparentEquinus => "ApparentEquinus",
            GaitClass::CrouchGait => "CrouchGait",
        }
    }
}

impl fmt::Display for GaitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GaitClass {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GaitClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CoreError::invalid(format!("unknown gait class `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Side::Left),
            "right" | "r" => Ok(Side::Right),
            _ => Err(CoreError::invalid(format!("unknown side `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    Angle,
    Moment,
    Power,
    Grf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BodyPart {
    Pelvis,
    Hip,
    Knee,
    Ankle,
    FootFloor,
    FootProgression,
    /// Ground reaction force; not a body segment but gets its own report row.
    Ground,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Plane {
    Sagittal,
    Frontal,
    Transverse,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Sagittal, Plane::Frontal, Plane::Transverse];

    /// Matrix column in the report layout.
    pub fn column(self) -> usize {
        self as usize
    }
}

/// Physical unit of a gait-cycle series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "deg")]
    Degrees,
    #[serde(rename = "Nm/kg")]
    NewtonMetrePerKg,
    #[serde(rename = "W/kg")]
    WattPerKg,
    #[serde(rename = "%BW")]
    PercentBodyWeight,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Degrees => "deg",
            Unit::NewtonMetrePerKg => "Nm/kg",
            Unit::WattPerKg => "W/kg",
            Unit::PercentBodyWeight => "%BW",
        }
    }
}

/// One of the 29 report channels. Construct through [`ChannelId::new`] or
/// pick from [`catalog`]; invalid combinations are rejected.
///
/// Joint powers have no anatomical plane and are tagged `Sagittal`. The GRF
/// components map as sagittal = anterior-posterior, frontal = medio-lateral,
/// transverse = vertical.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    variable: Variable,
    body_part: BodyPart,
    plane: Plane,
}

impl ChannelId {
    pub fn new(variable: Variable, body_part: BodyPart, plane: Plane) -> Result<Self, CoreError> {
        let id = ChannelId {
            variable,
            body_part,
            plane,
        };
        if CATALOG.contains(&id) {
            Ok(id)
        } else {
            Err(CoreError::invalid(format!(
                "{variable:?}/{body_part:?}/{plane:?} is not a catalog channel"
            )))
        }
    }

    const fn raw(variable: Variable, body_part: BodyPart, plane: Plane) -> Self {
        ChannelId {
            variable,
            body_part,
            plane,
        }
    }

    pub fn variable(&self) -> Variable {
        self.variable
    }

    pub fn body_part(&self) -> BodyPart {
        self.body_part
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn unit(&self) -> Unit {
        match self.variable {
            Variable::Angle => Unit::Degrees,
            Variable::Moment => Unit::NewtonMetrePerKg,
            Variable::Power => Unit::WattPerKg,
            Variable::Grf => Unit::PercentBodyWeight,
        }
    }

    /// Position in the 29-channel catalog.
    pub fn catalog_index(&self) -> usize {
        CATALOG
            .iter()
            .position(|c| c == self)
            .expect("ChannelId values are always catalog members")
    }

    /// Position in the model channel set, if the channel is fed to the classifier.
    pub fn model_index(&self) -> Option<usize> {
        MODEL_CHANNELS.iter().position(|c| c == self)
    }

    pub fn in_model(&self) -> bool {
        self.model_index().is_some()
    }

    /// Stable textual key, e.g. `angle.knee.sagittal`.
    pub fn key(&self) -> String {
        format!(
            "{}.{}.{}",
            variable_key(self.variable),
            body_part_key(self.body_part),
            plane_key(self.plane)
        )
    }

    /// Human-readable label, e.g. `Knee angle (sagittal)`.
    pub fn label(&self) -> String {
        let part = match self.body_part {
            BodyPart::Pelvis => "Pelvis",
            BodyPart::Hip => "Hip",
            BodyPart::Knee => "Knee",
            BodyPart::Ankle => "Ankle",
            BodyPart::FootProgression => "Foot progression",
            BodyPart::FootFloor => "Foot-floor",
            BodyPart::Ground => "Ground reaction",
        };
        let var = match self.variable {
            Variable::Angle => "angle",
            Variable::Moment => "moment",
            Variable::Power => "power",
            Variable::Grf => "force",
        };
        if self.variable == Variable::Power {
            format!("{part} {var}")
        } else {
            format!("{part} {var} ({})", plane_key(self.plane))
        }
    }
}

fn variable_key(v: Variable) -> &'static str {
    match v {
        Variable::Angle => "angle",
        Variable::Moment => "moment",
        Variable::Power => "power",
        Variable::Grf => "grf",
    }
}

fn body_part_key(b: BodyPart) -> &'static str {
    match b {
        BodyPart::Pelvis => "pelvis",
        BodyPart::Hip => "hip",
        BodyPart::Knee => "knee",
        BodyPart::Ankle => "ankle",
        BodyPart::FootProgression => "foot_progression",
        BodyPart::FootFloor => "foot_floor",
        BodyPart::Ground => "ground",
    }
}

fn plane_key(p: Plane) -> &'static str {
    match p {
        Plane::Sagittal => "sagittal",
        Plane::Frontal => "frontal",
        Plane::Transverse => "transverse",
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for ChannelId {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CATALOG
            .iter()
            .find(|c| c.key() == s)
            .copied()
            .ok_or_else(|| CoreError::invalid(format!("unknown channel `{s}`")))
    }
}

impl Serialize for ChannelId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for ChannelId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

use BodyPart::*;
use Plane::*;
use Variable::*;

const CATALOG: [ChannelId; NUM_CHANNELS] = [
    ChannelId::raw(Angle, Pelvis, Sagittal),
    ChannelId::raw(Angle, Pelvis, Frontal),
    ChannelId::raw(Angle, Pelvis, Transverse),
    ChannelId::raw(Angle, Hip, Sagittal),
    ChannelId::raw(Angle, Hip, Frontal),
    ChannelId::raw(Angle, Hip, Transverse),
    ChannelId::raw(Angle, Knee, Sagittal),
    ChannelId::raw(Angle, Knee, Frontal),
    ChannelId::raw(Angle, Knee, Transverse),
    ChannelId::raw(Angle, Ankle, Sagittal),
    ChannelId::raw(Angle, Ankle, Frontal),
    ChannelId::raw(Angle, Ankle, Transverse),
    ChannelId::raw(Angle, FootFloor, Sagittal),
    ChannelId::raw(Angle, FootProgression, Transverse),
    ChannelId::raw(Moment, Hip, Sagittal),
    ChannelId::raw(Moment, Hip, Frontal),
    ChannelId::raw(Moment, Hip, Transverse),
    ChannelId::raw(Moment, Knee, Sagittal),
    ChannelId::raw(Moment, Knee, Frontal),
    ChannelId::raw(Moment, Knee, Transverse),
    ChannelId::raw(Moment, Ankle, Sagittal),
    ChannelId::raw(Moment, Ankle, Frontal),
    ChannelId::raw(Moment, Ankle, Transverse),
    ChannelId::raw(Power, Hip, Sagittal),
    ChannelId::raw(Power, Knee, Sagittal),
    ChannelId::raw(Power, Ankle, Sagittal),
    ChannelId::raw(Grf, Ground, Sagittal),
    ChannelId::raw(Grf, Ground, Frontal),
    ChannelId::raw(Grf, Ground, Transverse),
];

/// Classifier input channels, in feature-vector segment order: pelvis, hip
/// and knee angles in all three planes, ankle angle (sagittal, transverse),
/// then the three GRF components.
const MODEL_CHANNELS: [ChannelId; NUM_MODEL_CHANNELS] = [
    ChannelId::raw(Angle, Pelvis, Sagittal),
    ChannelId::raw(Angle, Pelvis, Frontal),
    ChannelId::raw(Angle, Pelvis, Transverse),
    ChannelId::raw(Angle, Hip, Sagittal),
    ChannelId::raw(Angle, Hip, Frontal),
    ChannelId::raw(Angle, Hip, Transverse),
    ChannelId::raw(Angle, Knee, Sagittal),
    ChannelId::raw(Angle, Knee, Frontal),
    ChannelId::raw(Angle, Knee, Transverse),
    ChannelId::raw(Angle, Ankle, Sagittal),
    ChannelId::raw(Angle, Ankle, Transverse),
    ChannelId::raw(Grf, Ground, Sagittal),
    ChannelId::raw(Grf, Ground, Frontal),
    ChannelId::raw(Grf, Ground, Transverse),
];

/// All 29 report channels in report order.
pub fn catalog() -> &'static [ChannelId; NUM_CHANNELS] {
    &CATALOG
}

/// The 14 classifier channels in feature-vector order.
pub fn model_channels() -> &'static [ChannelId; NUM_MODEL_CHANNELS] {
    &MODEL_CHANNELS
}

/// Looks up a channel by textual key.
pub fn channel(key: &str) -> Option<ChannelId> {
    key.parse().ok()
}
