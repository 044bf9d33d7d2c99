//! Event overrides: time-windowed replacement of an independent link's speed
//! at prediction time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    EventDefinitionError, EventOverride, FittedModel, Inputs, TemporalDefinition, Timestamp,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EventError {
    #[error("event target '{0}' is not an independent spatial input")]
    UnknownTarget(String),
    #[error("event '{event}' is gated on unknown temporal feature '{feature}'")]
    UnknownGate { event: String, feature: String },
    #[error(transparent)]
    Invalid(#[from] EventDefinitionError),
}

impl EventError {
    pub fn code(&self) -> &'static str {
        match self {
            EventError::UnknownTarget(_) => "UnknownTarget",
            EventError::UnknownGate { .. } => "UnknownGate",
            EventError::Invalid(_) => "InvalidEvent",
        }
    }
}

/// Answers whether a named temporal feature is active at a time.
pub trait TemporalCalendar {
    /// `None` when the calendar has no feature of that name.
    fn is_active(&self, feature: &str, at: Timestamp) -> Option<bool>;
}

impl TemporalCalendar for [TemporalDefinition] {
    fn is_active(&self, feature: &str, at: Timestamp) -> Option<bool> {
        self.iter()
            .find(|d| d.name == feature)
            .map(|d| d.indicator(at) == 1)
    }
}

impl TemporalCalendar for Vec<TemporalDefinition> {
    fn is_active(&self, feature: &str, at: Timestamp) -> Option<bool> {
        self.as_slice().is_active(feature, at)
    }
}

impl TemporalCalendar for FittedModel {
    fn is_active(&self, feature: &str, at: Timestamp) -> Option<bool> {
        self.temporal.is_active(feature, at)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub values: Inputs,
    /// Names of the events whose value was written, ordered by target.
    pub fired: Vec<String>,
}

/// Replaces each targeted input by the value of the winning active event.
///
/// An event is active when `at` lies in its half-open window and its optional
/// gate feature is active at `at`. When several active events target the same
/// feature, the one with the latest start wins; ties fall to the later end,
/// then the greater name, then the greater value.
pub fn apply_events<C: TemporalCalendar + ?Sized>(
    inputs: &Inputs,
    events: &[EventOverride],
    at: Timestamp,
    calendar: &C,
) -> Result<EventOutcome, EventError> {
    let mut winners: BTreeMap<&str, &EventOverride> = BTreeMap::new();
    for event in events {
        event.validate()?;
        let target = event.target_feature.as_str();
        if !inputs.contains_key(target) || calendar.is_active(target, at).is_some() {
            return Err(EventError::UnknownTarget(target.to_string()));
        }
        let gate_open = match &event.gate_feature {
            None => true,
            Some(g) => calendar
                .is_active(g, at)
                .ok_or_else(|| EventError::UnknownGate {
                    event: event.name.clone(),
                    feature: g.clone(),
                })?,
        };
        if !(gate_open && event.window_contains(at)) {
            continue;
        }
        winners
            .entry(target)
            .and_modify(|cur| {
                if precedence(event, cur) == std::cmp::Ordering::Greater {
                    *cur = event;
                }
            })
            .or_insert(event);
    }

    let mut values = inputs.clone();
    let mut fired = Vec::with_capacity(winners.len());
    for (target, event) in winners {
        values.insert(target.to_string(), event.value_kmh);
        fired.push(event.name.clone());
    }
    Ok(EventOutcome { values, fired })
}

fn precedence(a: &EventOverride, b: &EventOverride) -> std::cmp::Ordering {
    a.start
        .cmp(&b.start)
        .then(a.end.cmp(&b.end))
        .then_with(|| a.name.cmp(&b.name))
        .then(a.value_kmh.total_cmp(&b.value_kmh))
}
