//! Temporal feature extraction from the link speed series.
//!
//! Two rules are supported: a Peakhour indicator found by thresholding the
//! hourly mean speed profile, and an AM/PM meridiem indicator. Users can also
//! pin an explicit set of clock hours.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{SpatialFeature, TemporalDefinition, TemporalFeature, TemporalRule, Timestamp};

pub const PEAKHOUR: &str = "Peakhour";
pub const AM: &str = "AM";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("no observations to profile")]
    EmptyInput,
    #[error("clock hour {0} has no observations")]
    MissingHour(u8),
    #[error("hour {0} is outside 0..=23")]
    InvalidHour(u8),
}

/// Mean speed per clock hour, pooled over every link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub hour_means: [f64; 24],
    /// Mean of the 24 hourly means.
    pub threshold: f64,
    /// Hours whose mean is strictly below `threshold`.
    pub active_hours: BTreeSet<u8>,
}

impl HourlyProfile {
    pub fn from_hour_means(hour_means: [f64; 24]) -> Self {
        let threshold = hour_means.iter().sum::<f64>() / 24.0;
        let active_hours = (0u8..24)
            .filter(|&h| hour_means[h as usize] < threshold)
            .collect();
        Self {
            hour_means,
            threshold,
            active_hours,
        }
    }

    pub fn peakhour_definition(&self) -> TemporalDefinition {
        TemporalDefinition {
            name: PEAKHOUR.to_string(),
            rule: TemporalRule::Peakhour {
                threshold: self.threshold,
                active_hours: self.active_hours.clone(),
            },
        }
    }
}

pub fn hourly_profile(features: &[SpatialFeature]) -> Result<HourlyProfile, FeatureError> {
    let mut sums = [0.0f64; 24];
    let mut counts = [0usize; 24];
    for o in features.iter().flat_map(|f| &f.series) {
        let h = o.at.hour() as usize;
        sums[h] += o.speed_kmh;
        counts[h] += 1;
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(FeatureError::EmptyInput);
    }
    if let Some(h) = counts.iter().position(|&c| c == 0) {
        return Err(FeatureError::MissingHour(h as u8));
    }
    let mut hour_means = [0.0; 24];
    for h in 0..24 {
        hour_means[h] = sums[h] / counts[h] as f64;
    }
    Ok(HourlyProfile::from_hour_means(hour_means))
}

pub fn extract_peakhour(profile: &HourlyProfile, timestamps: &[Timestamp]) -> TemporalFeature {
    TemporalFeature::from_definition(profile.peakhour_definition(), timestamps)
}

pub fn am_definition() -> TemporalDefinition {
    TemporalDefinition {
        name: AM.to_string(),
        rule: TemporalRule::Am,
    }
}

pub fn extract_am(timestamps: &[Timestamp]) -> TemporalFeature {
    TemporalFeature::from_definition(am_definition(), timestamps)
}

pub fn explicit_hours_definition(
    name: impl Into<String>,
    hours: impl IntoIterator<Item = u8>,
) -> Result<TemporalDefinition, FeatureError> {
    let hours: BTreeSet<u8> = hours.into_iter().collect();
    if let Some(&h) = hours.iter().find(|&&h| h > 23) {
        return Err(FeatureError::InvalidHour(h));
    }
    Ok(TemporalDefinition {
        name: name.into(),
        rule: TemporalRule::ExplicitHours { hours },
    })
}

pub fn extract_explicit_hours(
    name: impl Into<String>,
    hours: impl IntoIterator<Item = u8>,
    timestamps: &[Timestamp],
) -> Result<TemporalFeature, FeatureError> {
    Ok(TemporalFeature::from_definition(
        explicit_hours_definition(name, hours)?,
        timestamps,
    ))
}
