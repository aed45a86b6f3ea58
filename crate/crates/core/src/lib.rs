//! Core of gaitlens: gait-cycle preprocessing, the 1D CNN gait classifier,
//! Grad-CAM relevance and cohort statistics.

pub mod catalog;
pub mod error;
pub mod explain;
pub mod features;
pub mod model;
pub mod patient;
pub mod series;
pub mod stats;

pub use catalog::{catalog, model_channels, ChannelId, GaitClass, Side, Unit};
pub use error::{CoreError, Result};
pub use explain::{
    bin_relevance, grad_cam, overview_relevance, relevance_at, ChannelRows, RelevanceLevel,
    RelevanceMap,
};
pub use features::{build_feature_vector, FeatureVector, FEATURE_LEN};
pub use patient::{PatientRecord, SideData};
pub use series::{average_trials, min_max_normalize, time_normalize, GaitCycleSeries, GaitEvents, CYCLE_LEN};
pub use stats::{asymmetry_overview, compute_group_stats, zscore_overview, GroupStats, Leg};
