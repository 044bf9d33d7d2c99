//! Domain vocabulary shared by the ingestion, feature, regression and event modules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Sampling interval of the congestion-index tool when none is given.
pub const DEFAULT_SAMPLING_MINUTES: u32 = 15;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Date used when a caller supplies only a clock time (`HH:MM`).
pub fn reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid reference date")
}

/// A naive local date-time at minute resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp '{0}': expected YYYY-MM-DDTHH:MM[:00] or HH:MM")]
pub struct TimestampParseError(pub String);

impl Timestamp {
    /// Truncates nothing: returns `None` when the instant carries seconds.
    pub fn new(instant: NaiveDateTime) -> Option<Self> {
        if instant.second() != 0 || instant.nanosecond() != 0 {
            return None;
        }
        Some(Self(instant))
    }

    pub fn from_ymd_hm(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day)?
            .and_hms_opt(hour, minute, 0)
            .map(Self)
    }

    /// A clock time on the reference date.
    pub fn at_clock(hour: u32, minute: u32) -> Option<Self> {
        reference_date().and_hms_opt(hour, minute, 0).map(Self)
    }

    pub fn instant(&self) -> NaiveDateTime {
        self.0
    }

    pub fn hour(&self) -> u32 {
        self.0.hour()
    }

    pub fn minute(&self) -> u32 {
        self.0.minute()
    }

    /// Minutes since the Unix epoch, treating the local time as if it were UTC.
    pub fn epoch_minutes(&self) -> i64 {
        self.0.and_utc().timestamp() / 60
    }

    pub fn plus_minutes(&self, minutes: i64) -> Self {
        Self(self.0 + chrono::Duration::minutes(minutes))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(TIMESTAMP_FORMAT))
    }
}

impl FromStr for Timestamp {
    type Err = TimestampParseError;

    /// Accepts ISO-8601 local date-times (`2020-03-01T08:15`, optional `:00`
    /// seconds, `T` or space separator) and bare clock times (`08:15`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || TimestampParseError(s.to_string());
        for fmt in [
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M",
            "%Y-%m-%d %H:%M:%S",
        ] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                return Timestamp::new(dt).ok_or_else(err);
            }
        }
        for fmt in ["%H:%M", "%H:%M:%S"] {
            if let Ok(t) = NaiveTime::parse_from_str(s, fmt) {
                return Timestamp::new(reference_date().and_time(t)).ok_or_else(err);
            }
        }
        Err(err())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One speed observation of a road link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub at: Timestamp,
    pub speed_kmh: f64,
}

/// A polyline vertex in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub lat: f64,
    pub lon: f64,
}

impl Waypoint {
    pub fn in_range(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// A named road link: its congestion-index time series and route geometry.
///
/// `waypoints` is empty when no geometry was supplied; otherwise it holds at
/// least two in-range points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFeature {
    pub name: String,
    pub series: Vec<Observation>,
    #[serde(default)]
    pub waypoints: Vec<Waypoint>,
}

impl SpatialFeature {
    pub fn timestamps(&self) -> impl Iterator<Item = Timestamp> + '_ {
        self.series.iter().map(|o| o.at)
    }

    pub fn max_speed(&self) -> Option<f64> {
        self.series.iter().map(|o| o.speed_kmh).reduce(f64::max)
    }
}

/// How a temporal indicator is computed from a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalRule {
    /// Clock hours whose cross-link mean speed fell below `threshold`.
    Peakhour {
        threshold: f64,
        active_hours: BTreeSet<u8>,
    },
    /// 1 for clock times in [00:00, 12:00).
    Am,
    /// A user-pinned set of clock hours.
    ExplicitHours { hours: BTreeSet<u8> },
}

/// A named temporal rule; the persisted form of a temporal feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalDefinition {
    pub name: String,
    #[serde(flatten)]
    pub rule: TemporalRule,
}

impl TemporalDefinition {
    pub fn indicator(&self, at: Timestamp) -> u8 {
        let hour = at.hour() as u8;
        let active = match &self.rule {
            TemporalRule::Peakhour { active_hours, .. } => active_hours.contains(&hour),
            TemporalRule::Am => hour < 12,
            TemporalRule::ExplicitHours { hours } => hours.contains(&hour),
        };
        u8::from(active)
    }
}

/// A binary indicator series derived from timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalFeature {
    pub definition: TemporalDefinition,
    pub values: Vec<(Timestamp, u8)>,
}

impl TemporalFeature {
    pub fn from_definition(definition: TemporalDefinition, timestamps: &[Timestamp]) -> Self {
        let values = timestamps
            .iter()
            .map(|&t| (t, definition.indicator(t)))
            .collect();
        Self { definition, values }
    }

    pub fn name(&self) -> &str {
        &self.definition.name
    }
}

/// Aligned regressors and response, one row per shared timestamp.
///
/// Columns hold the temporal features first, then the independent spatial
/// features, each group in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub n_temporal: usize,
    pub timestamps: Vec<Timestamp>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub dependent_name: String,
    pub sampling_minutes: u32,
    #[serde(default)]
    pub temporal: Vec<TemporalDefinition>,
}

impl DesignMatrix {
    /// Builds a design from raw columns; temporal definitions are left empty.
    pub fn from_columns(
        columns: Vec<String>,
        x: DMatrix<f64>,
        y: DVector<f64>,
        dependent_name: impl Into<String>,
    ) -> Self {
        assert_eq!(
            columns.len(),
            x.ncols(),
            "column names must match matrix width"
        );
        assert_eq!(x.nrows(), y.len(), "x and y must have equal row counts");
        let timestamps = (0..x.nrows())
            .map(|i| {
                Timestamp::at_clock(0, 0)
                    .unwrap()
                    .plus_minutes(i as i64 * 15)
            })
            .collect();
        Self {
            columns,
            n_temporal: 0,
            timestamps,
            x,
            y,
            dependent_name: dependent_name.into(),
            sampling_minutes: DEFAULT_SAMPLING_MINUTES,
            temporal: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// A new design holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            n_temporal: self.n_temporal,
            timestamps: rows.iter().map(|&i| self.timestamps[i]).collect(),
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            dependent_name: self.dependent_name.clone(),
            sampling_minutes: self.sampling_minutes,
            temporal: self.temporal.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Ols,
    ElasticNet,
    Bayesian,
    Baseline,
}

impl Solver {
    pub const ALL: [Solver; 4] = [
        Solver::Ols,
        Solver::ElasticNet,
        Solver::Bayesian,
        Solver::Baseline,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Ols => "ols",
            Solver::ElasticNet => "elastic_net",
            Solver::Bayesian => "bayesian",
            Solver::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown solver '{0}' (expected ols, elastic_net, bayesian or baseline)")]
pub struct UnknownSolver(pub String);

impl FromStr for Solver {
    type Err = UnknownSolver;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ols" => Ok(Solver::Ols),
            "elastic_net" | "elastic-net" | "elasticnet" => Ok(Solver::ElasticNet),
            "bayesian" => Ok(Solver::Bayesian),
            "baseline" => Ok(Solver::Baseline),
            other => Err(UnknownSolver(other.to_string())),
        }
    }
}

/// Normal–inverse-gamma posterior over `[intercept, β...]` and the noise variance.
///
/// `precision` is the coefficient precision up to the noise scale: the
/// conditional posterior of the coefficients given σ² is N(mean, σ² precision⁻¹).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorParams {
    pub mean: Vec<f64>,
    pub precision: Vec<Vec<f64>>,
    pub noise_shape: f64,
    pub noise_rate: f64,
}

impl PosteriorParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.precision[i][j])
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n: usize,
    pub dependent_name: String,
    pub sampling_minutes: u32,
    /// Residual standard error on the training rows.
    pub residual_std_error: f64,
    /// Largest speed seen in any training column, dependent included.
    pub max_observed_kmh: f64,
}

/// Solver-specific diagnostics of an elastic-net fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetInfo {
    pub lambda: f64,
    pub alpha_mix: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// A fitted linear model `intercept + coefficientsᵀx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub solver: Solver,
    pub feature_order: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorParams>,
    /// Definitions of the temporal columns in `feature_order`.
    #[serde(default)]
    pub temporal: Vec<TemporalDefinition>,
    pub training: TrainingMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elastic_net: Option<ElasticNetInfo>,
}

impl FittedModel {
    pub fn is_temporal(&self, name: &str) -> bool {
        self.temporal.iter().any(|d| d.name == name)
    }

    pub fn temporal_definition(&self, name: &str) -> Option<&TemporalDefinition> {
        self.temporal.iter().find(|d| d.name == name)
    }

    /// Names of the spatial regressors, in feature order.
    pub fn spatial_features(&self) -> impl Iterator<Item = &str> {
        self.feature_order
            .iter()
            .map(String::as_str)
            .filter(|n| !self.is_temporal(n))
    }
}

/// Named regressor values for a single prediction.
pub type Inputs = BTreeMap<String, f64>;

/// A time-windowed replacement of one independent link's speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOverride {
    pub name: String,
    #[serde(alias = "target")]
    pub target_feature: String,
    pub value_kmh: f64,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Temporal feature that must also be active for the event to fire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_feature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EventDefinitionError {
    #[error("event '{0}': value must be finite and non-negative")]
    InvalidValue(String),
    #[error("event '{0}': window start must precede end")]
    EmptyWindow(String),
}

impl EventOverride {
    pub fn new(
        name: impl Into<String>,
        target_feature: impl Into<String>,
        value_kmh: f64,
        start: Timestamp,
        end: Timestamp,
    ) -> Result<Self, EventDefinitionError> {
        let event = Self {
            name: name.into(),
            target_feature: target_feature.into(),
            value_kmh,
            start,
            end,
            gate_feature: None,
        };
        event.validate()?;
        Ok(event)
    }

    pub fn gated_on(mut self, feature: impl Into<String>) -> Self {
        self.gate_feature = Some(feature.into());
        self
    }

    pub fn validate(&self) -> Result<(), EventDefinitionError> {
        if !(self.value_kmh.is_finite() && self.value_kmh >= 0.0) {
            return Err(EventDefinitionError::InvalidValue(self.name.clone()));
        }
        if self.start >= self.end {
            return Err(EventDefinitionError::EmptyWindow(self.name.clone()));
        }
        Ok(())
    }

    /// Half-open window test: `start <= at < end`.
    pub fn window_contains(&self, at: Timestamp) -> bool {
        self.start <= at && at < self.end
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn timestamp_parses_iso_and_clock_forms() {
        let a: Timestamp = "2020-03-01T08:15".parse().unwrap();
        assert_eq!(a, Timestamp::from_ymd_hm(2020, 3, 1, 8, 15).unwrap());
        let b: Timestamp = "2020-03-01 08:15:00".parse().unwrap();
        assert_eq!(a, b);
        let c: Timestamp = "09:30".parse().unwrap();
        assert_eq!((c.hour(), c.minute()), (9, 30));
        assert_eq!(c.instant().date(), reference_date());
        assert!("2020-03-01T08:15:30".parse::<Timestamp>().is_err());
        assert!("tomorrow".parse::<Timestamp>().is_err());
    }

    #[test]
    fn am_rule_boundaries() {
        let am = TemporalDefinition {
            name: "AM".into(),
            rule: TemporalRule::Am,
        };
        assert_eq!(am.indicator(Timestamp::at_clock(0, 0).unwrap()), 1);
        assert_eq!(am.indicator(Timestamp::at_clock(11, 45).unwrap()), 1);
        assert_eq!(am.indicator(Timestamp::at_clock(12, 0).unwrap()), 0);
    }

    #[test]
    fn event_window_is_half_open() {
        let start = Timestamp::at_clock(9, 0).unwrap();
        let end = Timestamp::at_clock(11, 0).unwrap();
        let e = EventOverride::new("closure", "Road2", 2.0, start, end).unwrap();
        assert!(e.window_contains(start));
        assert!(!e.window_contains(end));
        assert!(EventOverride::new("bad", "Road2", -1.0, start, end).is_err());
        assert!(EventOverride::new("bad", "Road2", 1.0, end, start).is_err());
    }

    #[test]
    fn solver_names_round_trip() {
        for s in Solver::ALL {
            assert_eq!(s.as_str().parse::<Solver>().unwrap(), s);
        }
        assert!("ridge".parse::<Solver>().is_err());
    }

    fn arb_timestamp() -> impl Strategy<Value = Timestamp> {
        (2000i32..2030, 1u32..=12, 1u32..=28, 0u32..24, 0u32..4)
            .prop_map(|(y, mo, d, h, q)| Timestamp::from_ymd_hm(y, mo, d, h, q * 15).unwrap())
    }

    proptest! {
        #[test]
        fn spatial_feature_json_round_trip(
            name in "[A-Za-z][A-Za-z0-9_]{0,8}",
            start in arb_timestamp(),
            speeds in prop::collection::vec(0.0f64..200.0, 1..20),
            lat in -90.0f64..=90.0,
            lon in -180.0f64..=180.0,
        ) {
            let feature = SpatialFeature {
                name,
                series: speeds
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| Observation { at: start.plus_minutes(15 * i as i64), speed_kmh: s })
                    .collect(),
                waypoints: vec![Waypoint { lat, lon }, Waypoint { lat: lat / 2.0, lon: lon / 3.0 }],
            };
            let text = serde_json::to_string(&feature).unwrap();
            let back: SpatialFeature = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, feature);
        }

        #[test]
        fn event_and_posterior_json_round_trip(
            at in arb_timestamp(),
            value in 0.0f64..100.0,
            mean in prop::collection::vec(-1e6f64..1e6, 2),
            shape in 1e-3f64..1e4,
        ) {
            let event = EventOverride::new("e", "Road3", value, at, at.plus_minutes(60))
                .unwrap()
                .gated_on("Peakhour");
            let text = serde_json::to_string(&event).unwrap();
            prop_assert_eq!(serde_json::from_str::<EventOverride>(&text).unwrap(), event);

            let post = PosteriorParams {
                precision: vec![vec![mean[0].abs() + 1.0, 0.1], vec![0.1, mean[1].abs() + 1.0]],
                mean,
                noise_shape: shape,
                noise_rate: shape / 3.0,
            };
            let text = serde_json::to_string(&post).unwrap();
            prop_assert_eq!(serde_json::from_str::<PosteriorParams>(&text).unwrap(), post);
        }
    }
}
