//! Dataset container and its on-disk JSON format.
//!
//! One file holds one dataset:
//!
//! ```text
//! {
//!   "header": { "format": "gaitlens-dataset", "version": 1,
//!               "catalogVersion": "gait-report-29/v1",
//!               "catalog": [ { "key", "label", "unit", "inModel" }, ... ] },
//!   "patients": [ { "id", "examDate", "walkingSpeed",
//!                   "perSide": { "left": { "events": {...},
//!                                          "channels": { "<key>": { "unit", "averaged": [101],
//!                                                                   "trials": [[101], ...] } } } },
//!                   "predicted": { "left": { "class", "probabilities": [4] } },
//!                   "confirmed": { "left": "<class>" | null } } ],
//!   "groundTruth": [ { "patientId", "side", "class" } ],
//!   "overrides":   [ { "patientId", "side", "chosenClass", "timestamp", "note" } ]
//! }
//! ```
//!
//! The full reference lives in `docs/dataset-format.md`. Numbers are written
//! with shortest round-trip formatting, so save followed by load is exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use gaitlens_core::catalog::{catalog, ChannelId, CATALOG_VERSION};
use gaitlens_core::model::Prediction;
use gaitlens_core::patient::{check_probabilities, PatientRecord, SideData, Trial};
use gaitlens_core::series::{GaitCycleSeries, GaitEvents};
use gaitlens_core::{GaitClass, Side, Unit};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const FORMAT_NAME: &str = "gaitlens-dataset";
pub const FORMAT_VERSION: u32 = 1;

/// A clinician's classification of one leg. The log is append-only and the
/// latest entry per leg wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassificationOverride {
    pub patient_id: String,
    pub side: Side,
    pub chosen_class: GaitClass,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub type LegKey = (String, Side);

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Sorted by id.
    pub patients: Vec<PatientRecord>,
    pub ground_truth: BTreeMap<LegKey, GaitClass>,
    pub overrides: Vec<ClassificationOverride>,
}

impl Dataset {
    /// Validates and sorts the patients. Every ground-truth leg and every
    /// override must refer to an existing leg.
    pub fn new(
        mut patients: Vec<PatientRecord>,
        ground_truth: BTreeMap<LegKey, GaitClass>,
        overrides: Vec<ClassificationOverride>,
    ) -> Result<Self> {
        patients.sort_by(|a, b| a.id.cmp(&b.id));
        let mut seen = BTreeSet::new();
        for p in &patients {
            if !seen.insert(p.id.as_str()) {
                return Err(ServiceError::InvalidInput(format!("duplicate patient id {}", p.id)));
            }
            p.validate()?;
            for (side, data) in &p.sides {
                if let Some(first) = data.trials.first() {
                    let keys: Vec<&ChannelId> = first.keys().collect();
                    if data.trials.iter().any(|t| !t.keys().eq(keys.iter().copied())) {
                        return Err(ServiceError::InvalidInput(format!(
                            "patient {} {side}: trials carry different channel sets",
                            p.id
                        )));
                    }
                }
            }
        }
        let ds = Dataset {
            patients,
            ground_truth,
            overrides: Vec::new(),
        };
        for (id, side) in ds.ground_truth.keys() {
            ds.check_leg(id, *side)?;
        }
        let mut ds = ds;
        for o in overrides {
            ds.push_override(o)?;
        }
        Ok(ds)
    }

    pub fn empty() -> Self {
        Dataset {
            patients: Vec::new(),
            ground_truth: BTreeMap::new(),
            overrides: Vec::new(),
        }
    }

    pub fn patient(&self, id: &str) -> Option<&PatientRecord> {
        self.patients
            .binary_search_by(|p| p.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.patients[i])
    }

    pub fn check_leg(&self, id: &str, side: Side) -> Result<()> {
        let p = self
            .patient(id)
            .ok_or_else(|| ServiceError::UnknownPatient(id.to_string()))?;
        if !p.sides.contains_key(&side) {
            return Err(ServiceError::UnknownSide { id: id.to_string(), side });
        }
        Ok(())
    }

    pub fn legs(&self) -> impl Iterator<Item = (&PatientRecord, Side)> {
        self.patients
            .iter()
            .flat_map(|p| p.sides.keys().map(move |s| (p, *s)))
    }

    pub fn push_override(&mut self, o: ClassificationOverride) -> Result<()> {
        self.check_leg(&o.patient_id, o.side)?;
        self.overrides.push(o);
        Ok(())
    }

    /// Confirmed class of a leg: the latest override, else the class stored
    /// on the record, else the ground-truth annotation.
    pub fn confirmed_class(&self, id: &str, side: Side) -> Option<GaitClass> {
        confirmed_from(self.overrides.iter(), self.patient(id), &self.ground_truth, id, side)
    }

    /// Confirmed classes of all legs that have one.
    pub fn confirmed_classes(&self) -> BTreeMap<LegKey, GaitClass> {
        replay_overrides(self, &self.overrides)
    }

    /// Per-patient class used for stratified splits: the ground truth of the
    /// first annotated side.
    pub fn patient_label(&self, id: &str) -> Option<GaitClass> {
        Side::BOTH
            .iter()
            .find_map(|s| self.ground_truth.get(&(id.to_string(), *s)).copied())
    }
}

fn confirmed_from<'a>(
    overrides: impl DoubleEndedIterator<Item = &'a ClassificationOverride>,
    patient: Option<&PatientRecord>,
    ground_truth: &BTreeMap<LegKey, GaitClass>,
    id: &str,
    side: Side,
) -> Option<GaitClass> {
    overrides
        .rev()
        .find(|o| o.patient_id == id && o.side == side)
        .map(|o| o.chosen_class)
        .or_else(|| patient.and_then(|p| p.confirmed.get(&side).copied().flatten()))
        .or_else(|| ground_truth.get(&(id.to_string(), side)).copied())
}

/// Applies an override log to the base dataset (ignoring the dataset's own
/// log) and returns the resulting confirmed class of every leg.
pub fn replay_overrides(base: &Dataset, log: &[ClassificationOverride]) -> BTreeMap<LegKey, GaitClass> {
    let mut out = BTreeMap::new();
    for (p, side) in base.legs() {
        let base_class = p
            .confirmed
            .get(&side)
            .copied()
            .flatten()
            .or_else(|| base.ground_truth.get(&(p.id.clone(), side)).copied());
        if let Some(c) = base_class {
            out.insert((p.id.clone(), side), c);
        }
    }
    for o in log {
        out.insert((o.patient_id.clone(), o.side), o.chosen_class);
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct FileDto {
    header: HeaderDto,
    patients: Vec<PatientDto>,
    #[serde(default)]
    ground_truth: Vec<GroundTruthDto>,
    #[serde(default)]
    overrides: Vec<ClassificationOverride>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct HeaderDto {
    format: String,
    version: u32,
    catalog_version: String,
    catalog: Vec<CatalogEntryDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CatalogEntryDto {
    key: String,
    label: String,
    unit: Unit,
    in_model: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PatientDto {
    id: String,
    exam_date: NaiveDate,
    walking_speed: f64,
    per_side: BTreeMap<Side, SideDto>,
    #[serde(default)]
    predicted: BTreeMap<Side, Prediction>,
    #[serde(default)]
    confirmed: BTreeMap<Side, Option<GaitClass>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SideDto {
    events: GaitEvents,
    channels: BTreeMap<String, ChannelDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelDto {
    unit: Unit,
    averaged: Vec<f64>,
    #[serde(default)]
    trials: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct GroundTruthDto {
    patient_id: String,
    side: Side,
    class: GaitClass,
}

fn header() -> HeaderDto {
    HeaderDto {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        catalog_version: CATALOG_VERSION.to_string(),
        catalog: catalog()
            .iter()
            .map(|c| CatalogEntryDto {
                key: c.key(),
                label: c.label(),
                unit: c.unit(),
                in_model: c.in_model(),
            })
            .collect(),
    }
}

fn to_dto(ds: &Dataset) -> FileDto {
    let patients = ds
        .patients
        .iter()
        .map(|p| PatientDto {
            id: p.id.clone(),
            exam_date: p.exam_date,
            walking_speed: p.walking_speed,
            per_side: p
                .sides
                .iter()
                .map(|(side, data)| {
                    let channels = data
                        .averaged
                        .iter()
                        .map(|(c, avg)| {
                            let trials = data
                                .trials
                                .iter()
                                .filter_map(|t| t.get(c).map(|s| s.values().to_vec()))
                                .collect();
                            (
                                c.key(),
                                ChannelDto {
                                    unit: avg.unit(),
                                    averaged: avg.values().to_vec(),
                                    trials,
                                },
                            )
                        })
                        .collect();
                    (*side, SideDto { events: data.events, channels })
                })
                .collect(),
            predicted: p.predicted.clone(),
            confirmed: p.confirmed.clone(),
        })
        .collect();
    FileDto {
        header: header(),
        patients,
        ground_truth: ds
            .ground_truth
            .iter()
            .map(|((id, side), class)| GroundTruthDto {
                patient_id: id.clone(),
                side: *side,
                class: *class,
            })
            .collect(),
        overrides: ds.overrides.clone(),
    }
}

fn series_at(path: &str, values: Vec<f64>, unit: Unit) -> Result<GaitCycleSeries> {
    GaitCycleSeries::new(values, unit).map_err(|e| ServiceError::format(path, e.to_string()))
}

fn side_from_dto(path: &str, dto: SideDto) -> Result<SideData> {
    let mut averaged = BTreeMap::new();
    let mut trial_count = None;
    let mut trials: Vec<Trial> = Vec::new();
    for (key, ch) in dto.channels {
        let cpath = format!("{path}.channels.{key}");
        let channel: ChannelId = key
            .parse()
            .map_err(|_| ServiceError::format(&cpath, "unknown channel key"))?;
        if ch.unit != channel.unit() {
            return Err(ServiceError::format(
                format!("{cpath}.unit"),
                format!("expected {}", channel.unit().symbol()),
            ));
        }
        match trial_count {
            None => {
                trial_count = Some(ch.trials.len());
                trials = vec![Trial::new(); ch.trials.len()];
            }
            Some(n) if n != ch.trials.len() => {
                return Err(ServiceError::format(
                    format!("{cpath}.trials"),
                    format!("has {} trials, other channels have {n}", ch.trials.len()),
                ));
            }
            Some(_) => {}
        }
        for (i, values) in ch.trials.into_iter().enumerate() {
            trials[i].insert(channel, series_at(&format!("{cpath}.trials[{i}]"), values, ch.unit)?);
        }
        averaged.insert(channel, series_at(&format!("{cpath}.averaged"), ch.averaged, ch.unit)?);
    }
    Ok(SideData {
        trials,
        averaged,
        events: dto.events,
    })
}

fn from_dto(dto: FileDto) -> Result<Dataset> {
    if dto.header.format != FORMAT_NAME {
        return Err(ServiceError::format("header.format", format!("expected `{FORMAT_NAME}`")));
    }
    if dto.header.version != FORMAT_VERSION {
        return Err(ServiceError::format(
            "header.version",
            format!("unsupported version {}, expected {FORMAT_VERSION}", dto.header.version),
        ));
    }
    if dto.header.catalog_version != CATALOG_VERSION {
        return Err(ServiceError::format(
            "header.catalogVersion",
            format!("expected `{CATALOG_VERSION}`"),
        ));
    }
    let expected = header().catalog;
    if dto.header.catalog.len() != expected.len() {
        return Err(ServiceError::format("header.catalog", "wrong number of channels"));
    }
    for (i, (got, want)) in dto.header.catalog.iter().zip(&expected).enumerate() {
        if got.key != want.key || got.unit != want.unit || got.in_model != want.in_model {
            return Err(ServiceError::format(
                format!("header.catalog[{i}]"),
                format!("expected channel `{}`", want.key),
            ));
        }
    }

    let mut patients = Vec::with_capacity(dto.patients.len());
    for (i, p) in dto.patients.into_iter().enumerate() {
        let path = format!("patients[{i}]");
        let mut sides = BTreeMap::new();
        for (side, s) in p.per_side {
            sides.insert(side, side_from_dto(&format!("{path}.perSide.{side}"), s)?);
        }
        for (side, pred) in &p.predicted {
            check_probabilities(&pred.probabilities)
                .map_err(|e| ServiceError::format(format!("{path}.predicted.{side}"), e.to_string()))?;
        }
        let record = PatientRecord {
            id: p.id,
            exam_date: p.exam_date,
            walking_speed: p.walking_speed,
            sides,
            predicted: p.predicted,
            confirmed: p.confirmed,
        };
        record
            .validate()
            .map_err(|e| ServiceError::format(&path, e.to_string()))?;
        patients.push(record);
    }

    let mut ground_truth = BTreeMap::new();
    for (i, g) in dto.ground_truth.into_iter().enumerate() {
        if ground_truth.insert((g.patient_id, g.side), g.class).is_some() {
            return Err(ServiceError::format(format!("groundTruth[{i}]"), "duplicate leg"));
        }
    }
    Dataset::new(patients, ground_truth, dto.overrides).map_err(|e| match e {
        ServiceError::Format { .. } => e,
        other => ServiceError::format("$", other.to_string()),
    })
}

pub fn dataset_to_string(ds: &Dataset) -> Result<String> {
    serde_json::to_string(&to_dto(ds)).map_err(|e| ServiceError::InvalidInput(e.to_string()))
}

/// Parses a dataset document. Nothing is returned unless the whole document
/// is valid.
pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    let mut de = serde_json::Deserializer::from_str(text);
    let dto: FileDto = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        ServiceError::format(path, e.into_inner().to_string())
    })?;
    de.end()
        .map_err(|e| ServiceError::format("$", e.to_string()))?;
    from_dto(dto)
}

/// Writes the dataset to a sibling temp file and renames it into place.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let text = dataset_to_string(ds)?;
    write_atomic(path, text.as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
    dataset_from_str(&text)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| ServiceError::InvalidInput(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        ServiceError::io(path, e)
    })
}
