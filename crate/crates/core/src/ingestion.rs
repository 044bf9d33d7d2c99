//! Loading link speed series (CSV) and route geometry (GeoJSON), validating
//! them into a [`Dataset`] and aligning that dataset into a [`DesignMatrix`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{
    DesignMatrix, Observation, SpatialFeature, TemporalDefinition, TemporalFeature, Timestamp,
    Waypoint, DEFAULT_SAMPLING_MINUTES,
};

const SERIES_HEADER: [&str; 2] = ["timestamp", "speed_kmh"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(Timestamp),
    #[error("series needs at least two rows with a positive spacing")]
    NonPositiveInterval,
    #[error("line {0}: negative speed")]
    NegativeSpeed(u64),
    #[error("timestamp {at} breaks the {interval}-minute spacing")]
    IrregularSpacing { at: Timestamp, interval: u32 },
    #[error("invalid GeoJSON: {0}")]
    InvalidGeoJson(String),
    #[error("expected exactly one LineString geometry")]
    NotALineString,
    #[error("a LineString needs at least two points")]
    TooFewPoints,
    #[error("coordinate [{lon}, {lat}] out of range")]
    CoordinateOutOfRange { lat: f64, lon: f64 },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("file '{0}' referenced by the manifest was not supplied")]
    MissingFile(String),
    #[error("dependent feature '{0}' is not among the links")]
    MissingDependent(String),
    #[error("no independent spatial feature besides the dependent")]
    NoIndependent,
    #[error("feature name '{0}' is used more than once")]
    DuplicateName(String),
    #[error("sampling interval must be positive")]
    InvalidSamplingInterval,
    #[error("series '{name}' is sampled every {found} minutes, dataset expects {expected}")]
    IntervalMismatch {
        name: String,
        found: u32,
        expected: u32,
    },
    #[error("series '{name}': timestamp {at} is not on the {interval}-minute grid")]
    OffGrid {
        name: String,
        at: Timestamp,
        interval: u32,
    },
    #[error("temporal feature '{0}' does not align with the spatial series")]
    TemporalMisaligned(String),
    #[error("series share no common timestamp")]
    EmptyIntersection,
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<IngestError>,
    },
}

impl IngestError {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::Io { .. } => "Io",
            IngestError::MalformedRow { .. } => "MalformedRow",
            IngestError::DuplicateTimestamp(_) => "DuplicateTimestamp",
            IngestError::NonPositiveInterval => "NonPositiveInterval",
            IngestError::NegativeSpeed(_) => "NegativeSpeed",
            IngestError::IrregularSpacing { .. } => "IrregularSpacing",
            IngestError::InvalidGeoJson(_) => "InvalidGeoJson",
            IngestError::NotALineString => "NotALineString",
            IngestError::TooFewPoints => "TooFewPoints",
            IngestError::CoordinateOutOfRange { .. } => "CoordinateOutOfRange",
            IngestError::InvalidManifest(_) => "InvalidManifest",
            IngestError::MissingFile(_) => "MissingFile",
            IngestError::MissingDependent(_) => "MissingDependent",
            IngestError::NoIndependent => "NoIndependent",
            IngestError::DuplicateName(_) => "DuplicateName",
            IngestError::InvalidSamplingInterval => "InvalidSamplingInterval",
            IngestError::IntervalMismatch { .. } => "IntervalMismatch",
            IngestError::OffGrid { .. } => "OffGrid",
            IngestError::TemporalMisaligned(_) => "TemporalMisaligned",
            IngestError::EmptyIntersection => "EmptyIntersection",
            IngestError::InFile { source, .. } => source.code(),
        }
    }

    /// Source line of a row-level error, if any.
    pub fn line(&self) -> Option<u64> {
        match self {
            IngestError::MalformedRow { line, .. } | IngestError::NegativeSpeed(line) => {
                Some(*line)
            }
            IngestError::InFile { source, .. } => source.line(),
            _ => None,
        }
    }

    /// File the error was raised for, if known.
    pub fn file(&self) -> Option<&str> {
        match self {
            IngestError::InFile { file, .. } => Some(file),
            IngestError::MissingFile(file) => Some(file),
            _ => None,
        }
    }

    fn in_file(self, file: &str) -> Self {
        match self {
            e @ IngestError::InFile { .. } => e,
            e @ IngestError::MissingFile(_) => e,
            e => IngestError::InFile {
                file: file.to_string(),
                source: Box::new(e),
            },
        }
    }
}

/// Validated spatial and temporal features of one intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub spatial: Vec<SpatialFeature>,
    pub temporal: Vec<TemporalFeature>,
    pub dependent_name: String,
    pub sampling_minutes: u32,
}

impl Dataset {
    pub fn new(
        spatial: Vec<SpatialFeature>,
        dependent_name: impl Into<String>,
        sampling_minutes: u32,
    ) -> Result<Self, IngestError> {
        let dataset = Self {
            spatial,
            temporal: Vec::new(),
            dependent_name: dependent_name.into(),
            sampling_minutes,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.sampling_minutes == 0 {
            return Err(IngestError::InvalidSamplingInterval);
        }
        let mut names = HashSet::new();
        for name in self
            .spatial
            .iter()
            .map(|f| f.name.as_str())
            .chain(self.temporal.iter().map(|t| t.name()))
        {
            if !names.insert(name) {
                return Err(IngestError::DuplicateName(name.to_string()));
            }
        }
        if !self.spatial.iter().any(|f| f.name == self.dependent_name) {
            return Err(IngestError::MissingDependent(self.dependent_name.clone()));
        }
        if self.spatial.len() < 2 {
            return Err(IngestError::NoIndependent);
        }
        for feature in &self.spatial {
            check_grid(feature, self.sampling_minutes)?;
        }
        let common: BTreeSet<Timestamp> = self.common_timestamps().into_iter().collect();
        for t in &self.temporal {
            let own: BTreeSet<Timestamp> = t.values.iter().map(|(at, _)| *at).collect();
            if own != common || t.values.iter().any(|(_, v)| *v > 1) {
                return Err(IngestError::TemporalMisaligned(t.name().to_string()));
            }
        }
        Ok(())
    }

    pub fn dependent(&self) -> &SpatialFeature {
        self.spatial
            .iter()
            .find(|f| f.name == self.dependent_name)
            .expect("validated dataset has its dependent feature")
    }

    pub fn independents(&self) -> impl Iterator<Item = &SpatialFeature> {
        self.spatial
            .iter()
            .filter(move |f| f.name != self.dependent_name)
    }

    /// Timestamps present in every spatial series, ascending.
    pub fn common_timestamps(&self) -> Vec<Timestamp> {
        let mut iter = self.spatial.iter();
        let Some(first) = iter.next() else {
            return Vec::new();
        };
        let mut common: BTreeSet<Timestamp> = first.timestamps().collect();
        for f in iter {
            let own: HashSet<Timestamp> = f.timestamps().collect();
            common.retain(|t| own.contains(t));
        }
        common.into_iter().collect()
    }

    /// Computes `definition` over the common timestamps and attaches it,
    /// replacing any temporal feature of the same name.
    pub fn attach_temporal(
        &mut self,
        definition: TemporalDefinition,
    ) -> Result<&TemporalFeature, IngestError> {
        if self.spatial.iter().any(|f| f.name == definition.name) {
            return Err(IngestError::DuplicateName(definition.name));
        }
        let feature = TemporalFeature::from_definition(definition, &self.common_timestamps());
        let idx = match self
            .temporal
            .iter()
            .position(|t| t.name() == feature.name())
        {
            Some(i) => {
                self.temporal[i] = feature;
                i
            }
            None => {
                self.temporal.push(feature);
                self.temporal.len() - 1
            }
        };
        Ok(&self.temporal[idx])
    }

    pub fn temporal_definitions(&self) -> Vec<TemporalDefinition> {
        self.temporal.iter().map(|t| t.definition.clone()).collect()
    }
}

fn check_grid(feature: &SpatialFeature, interval: u32) -> Result<(), IngestError> {
    for o in &feature.series {
        if (o.at.hour() * 60 + o.at.minute()) % interval != 0 {
            return Err(IngestError::OffGrid {
                name: feature.name.clone(),
                at: o.at,
                interval,
            });
        }
    }
    if let Some(found) = series_interval(feature) {
        if found != interval {
            return Err(IngestError::IntervalMismatch {
                name: feature.name.clone(),
                found,
                expected: interval,
            });
        }
    }
    Ok(())
}

/// Smallest spacing, in minutes, between consecutive observations.
pub fn series_interval(feature: &SpatialFeature) -> Option<u32> {
    feature
        .series
        .windows(2)
        .map(|w| (w[1].at.epoch_minutes() - w[0].at.epoch_minutes()) as u32)
        .min()
}

/// Parses a `timestamp,speed_kmh` CSV into a sorted, validated series.
///
/// Gaps are allowed as long as every spacing is a multiple of the smallest one.
pub fn parse_series_csv<R: Read>(reader: R, name: &str) -> Result<SpatialFeature, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| IngestError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = header
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}'))
        .collect();
    if cols != SERIES_HEADER {
        return Err(IngestError::MalformedRow {
            line: 1,
            reason: format!(
                "expected header 'timestamp,speed_kmh', found '{}'",
                cols.join(",")
            ),
        });
    }

    let mut series = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IngestError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |reason: String| IngestError::MalformedRow { line, reason };
        if record.len() != 2 {
            return Err(malformed(format!(
                "expected 2 fields, found {}",
                record.len()
            )));
        }
        let at: Timestamp = record[0]
            .parse()
            .map_err(|e: crate::types::TimestampParseError| malformed(e.to_string()))?;
        let speed: f64 = record[1]
            .parse()
            .map_err(|_| malformed(format!("invalid speed '{}'", &record[1])))?;
        if !speed.is_finite() {
            return Err(malformed(format!("non-finite speed '{}'", &record[1])));
        }
        if speed < 0.0 {
            return Err(IngestError::NegativeSpeed(line));
        }
        series.push(Observation {
            at,
            speed_kmh: speed,
        });
    }

    series.sort_by_key(|o| o.at);
    if let Some(w) = series.windows(2).find(|w| w[0].at == w[1].at) {
        return Err(IngestError::DuplicateTimestamp(w[0].at));
    }
    let feature = SpatialFeature {
        name: name.to_string(),
        series,
        waypoints: Vec::new(),
    };
    let interval = series_interval(&feature).ok_or(IngestError::NonPositiveInterval)?;
    for w in feature.series.windows(2) {
        let gap = (w[1].at.epoch_minutes() - w[0].at.epoch_minutes()) as u32;
        if !gap.is_multiple_of(interval) {
            return Err(IngestError::IrregularSpacing {
                at: w[1].at,
                interval,
            });
        }
    }
    Ok(feature)
}

pub fn load_series_csv(path: impl AsRef<Path>, name: &str) -> Result<SpatialFeature, IngestError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_series_csv(file, name)
}

/// Extracts the single LineString of a GeoJSON geometry, Feature or
/// FeatureCollection as `(lat, lon)` waypoints.
pub fn parse_waypoints_geojson(text: &str) -> Result<Vec<Waypoint>, IngestError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| IngestError::InvalidGeoJson(e.to_string()))?;
    let mut lines = Vec::new();
    collect_linestrings(&doc, &mut lines)?;
    let [coords] = lines.as_slice() else {
        return Err(IngestError::NotALineString);
    };
    let points = coords
        .as_array()
        .ok_or_else(|| IngestError::InvalidGeoJson("coordinates must be an array".into()))?;
    if points.len() < 2 {
        return Err(IngestError::TooFewPoints);
    }
    points
        .iter()
        .map(|p| {
            let pair = p
                .as_array()
                .filter(|a| a.len() >= 2)
                .and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)))
                .ok_or_else(|| IngestError::InvalidGeoJson("position must be [lon, lat]".into()))?;
            let wp = Waypoint {
                lat: pair.1,
                lon: pair.0,
            };
            if wp.in_range() {
                Ok(wp)
            } else {
                Err(IngestError::CoordinateOutOfRange {
                    lat: wp.lat,
                    lon: wp.lon,
                })
            }
        })
        .collect()
}

fn collect_linestrings<'a>(node: &'a Value, out: &mut Vec<&'a Value>) -> Result<(), IngestError> {
    let kind = node
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| IngestError::InvalidGeoJson("missing \"type\"".into()))?;
    match kind {
        "FeatureCollection" => {
            let features = node
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| IngestError::InvalidGeoJson("missing \"features\"".into()))?;
            for f in features {
                collect_linestrings(f, out)?;
            }
        }
        "Feature" => match node.get("geometry") {
            Some(Value::Null) | None => {}
            Some(g) => collect_linestrings(g, out)?,
        },
        "LineString" => out.push(
            node.get("coordinates")
                .ok_or_else(|| IngestError::InvalidGeoJson("missing \"coordinates\"".into()))?,
        ),
        "GeometryCollection" => {
            for g in node
                .get("geometries")
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
            {
                collect_linestrings(g, out)?;
            }
        }
        _ => return Err(IngestError::NotALineString),
    }
    Ok(())
}

pub fn load_waypoints_geojson(path: impl AsRef<Path>) -> Result<Vec<Waypoint>, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_waypoints_geojson(&text)
}

fn default_sampling() -> u32 {
    DEFAULT_SAMPLING_MINUTES
}

/// One link of a manifest: its series file and optional geometry file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub name: String,
    pub series: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<String>,
}

/// Describes a dataset as a set of named files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dependent: String,
    #[serde(default = "default_sampling")]
    pub sampling_minutes: u32,
    pub links: Vec<LinkEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temporal: Vec<TemporalDefinition>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        serde_json::from_str(text).map_err(|e| IngestError::InvalidManifest(e.to_string()))
    }

    /// Builds a dataset, fetching each referenced file through `fetch`.
    ///
    /// Every failing link is reported, not just the first one.
    pub fn build<F>(&self, mut fetch: F) -> Result<Dataset, Vec<IngestError>>
    where
        F: FnMut(&str) -> Result<Vec<u8>, IngestError>,
    {
        let mut errors = Vec::new();
        let mut seen = HashSet::new();
        for link in &self.links {
            if !seen.insert(link.name.as_str()) {
                errors.push(IngestError::DuplicateName(link.name.clone()));
            }
        }
        if !self.links.iter().any(|l| l.name == self.dependent) {
            errors.push(IngestError::MissingDependent(self.dependent.clone()));
        }

        let mut spatial = Vec::with_capacity(self.links.len());
        for link in &self.links {
            let series = fetch(&link.series)
                .and_then(|bytes| parse_series_csv(bytes.as_slice(), &link.name))
                .map_err(|e| e.in_file(&link.series));
            let waypoints = match &link.waypoints {
                None => Ok(Vec::new()),
                Some(file) => fetch(file)
                    .and_then(|bytes| {
                        let text = String::from_utf8(bytes)
                            .map_err(|e| IngestError::InvalidGeoJson(e.to_string()))?;
                        parse_waypoints_geojson(&text)
                    })
                    .map_err(|e| e.in_file(file)),
            };
            match (series, waypoints) {
                (Ok(mut feature), Ok(waypoints)) => {
                    feature.waypoints = waypoints;
                    spatial.push(feature);
                }
                (s, w) => errors.extend(s.err().into_iter().chain(w.err())),
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }

        let mut dataset = Dataset::new(spatial, self.dependent.clone(), self.sampling_minutes)
            .map_err(|e| vec![e])?;
        for def in &self.temporal {
            dataset.attach_temporal(def.clone()).map_err(|e| vec![e])?;
        }
        Ok(dataset)
    }
}

/// Reads a manifest file and the files it references, relative to its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset, Vec<IngestError>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| {
        vec![IngestError::Io {
            path: path.to_path_buf(),
            source,
        }]
    })?;
    let manifest = Manifest::from_json(&text).map_err(|e| vec![e])?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest.build(|file| {
        let full = base.join(file);
        fs::read(&full).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => IngestError::MissingFile(full.display().to_string()),
            _ => IngestError::Io { path: full, source },
        })
    })
}

/// Inner-joins every series on timestamp into a design matrix.
pub fn align(dataset: &Dataset) -> Result<DesignMatrix, IngestError> {
    if dataset.independents().next().is_none() {
        return Err(IngestError::NoIndependent);
    }
    let spatial_maps: HashMap<&str, BTreeMap<Timestamp, f64>> = dataset
        .spatial
        .iter()
        .map(|f| {
            (
                f.name.as_str(),
                f.series.iter().map(|o| (o.at, o.speed_kmh)).collect(),
            )
        })
        .collect();
    let temporal_maps: Vec<BTreeMap<Timestamp, u8>> = dataset
        .temporal
        .iter()
        .map(|t| t.values.iter().copied().collect())
        .collect();

    let rows: Vec<Timestamp> = dataset
        .common_timestamps()
        .into_iter()
        .filter(|t| temporal_maps.iter().all(|m| m.contains_key(t)))
        .collect();
    if rows.is_empty() {
        return Err(IngestError::EmptyIntersection);
    }

    let independents: Vec<&SpatialFeature> = dataset.independents().collect();
    let mut columns: Vec<String> = dataset
        .temporal
        .iter()
        .map(|t| t.name().to_string())
        .collect();
    columns.extend(independents.iter().map(|f| f.name.clone()));

    let n_temporal = temporal_maps.len();
    let x = DMatrix::from_fn(rows.len(), columns.len(), |i, j| {
        let t = rows[i];
        if j < n_temporal {
            f64::from(temporal_maps[j][&t])
        } else {
            spatial_maps[independents[j - n_temporal].name.as_str()][&t]
        }
    });
    let dependent = &spatial_maps[dataset.dependent_name.as_str()];
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|t| dependent[t]));

    Ok(DesignMatrix {
        columns,
        n_temporal,
        timestamps: rows,
        x,
        y,
        dependent_name: dataset.dependent_name.clone(),
        sampling_minutes: dataset.sampling_minutes,
        temporal: dataset.temporal_definitions(),
    })
}
