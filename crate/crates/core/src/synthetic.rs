//! Deterministic four-link example dataset.
//!
//! Three inbound links (Road2–Road4) slow down during the day; the outbound
//! link Road1 is a linear combination of them plus a meridiem shift, the
//! daytime slowdown, a smooth daily cycle and Gaussian noise (σ = 1.3 km/h).
//! One week at 15-minute spacing gives 672 rows per link.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::ingestion::{Dataset, LinkEntry, Manifest};
use crate::types::{Observation, SpatialFeature, Timestamp, Waypoint};

pub const EXAMPLE_SEED: u64 = 2021;
pub const EXAMPLE_ROWS: usize = 672;
pub const ROAD1_NOISE_SD: f64 = 1.3;

/// Intersection the four example links meet at.
const CENTER: Waypoint = Waypoint {
    lat: 43.9466,
    lon: -78.8963,
};

/// Fraction of the daytime slowdown in effect at fractional clock hour `h`.
pub fn daytime_slowdown(h: f64) -> f64 {
    let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
    logistic((h - 8.0) / 0.5) - logistic((h - 22.5) / 0.5)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn polyline(toward: (f64, f64), outbound: bool) -> Vec<Waypoint> {
    let far = Waypoint {
        lat: CENTER.lat + toward.0,
        lon: CENTER.lon + toward.1,
    };
    let mid = Waypoint {
        lat: CENTER.lat + toward.0 * 0.5,
        lon: CENTER.lon + toward.1 * 0.52,
    };
    if outbound {
        vec![CENTER, mid, far]
    } else {
        vec![far, mid, CENTER]
    }
}

pub fn example_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Timestamp::from_ymd_hm(2020, 3, 2, 0, 0).expect("valid start");
    let noise = |sd: f64| Normal::new(0.0, sd).expect("positive sd");
    let (n2, n3, n4, n1) = (noise(1.2), noise(0.8), noise(1.0), noise(ROAD1_NOISE_SD));

    let mut series: [Vec<Observation>; 4] = Default::default();
    for i in 0..EXAMPLE_ROWS {
        let at = start.plus_minutes(15 * i as i64);
        let h = at.hour() as f64 + at.minute() as f64 / 60.0;
        let slow = daytime_slowdown(h);
        let am = if at.hour() < 12 { 1.0 } else { 0.0 };

        let road2 = (20.0 - 9.0 * slow + n2.sample(&mut rng)).max(0.5);
        let road3 = (9.0 - 4.0 * slow + n3.sample(&mut rng)).max(0.5);
        let road4 = (18.0 - 8.0 * slow + n4.sample(&mut rng)).max(0.5);
        let cycle = 1.2 * (2.0 * PI * h / 24.0).sin();
        let road1 = (7.4 - 0.05 * road2 - 0.05 * road3 + 0.7 * road4 + 1.75 * am - 2.75 * slow
            + cycle
            + n1.sample(&mut rng))
        .max(0.5);

        for (k, v) in [road1, road2, road3, road4].into_iter().enumerate() {
            series[k].push(Observation {
                at,
                speed_kmh: round2(v),
            });
        }
    }

    // Road1 leaves the intersection northward; the others arrive from S, E, W.
    let directions = [
        ((0.006, 0.0), true),
        ((-0.006, 0.0005), false),
        ((0.0004, 0.008), false),
        ((-0.0003, -0.008), false),
    ];
    let spatial = series
        .into_iter()
        .zip(directions)
        .enumerate()
        .map(|(k, (series, (dir, outbound)))| SpatialFeature {
            name: format!("Road{}", k + 1),
            series,
            waypoints: polyline(dir, outbound),
        })
        .collect();
    Dataset::new(spatial, "Road1", 15).expect("generated dataset is valid")
}

/// Writes `dataset` as CSV series, GeoJSON geometries and a `manifest.json`.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut links = Vec::new();
    for feature in &dataset.spatial {
        let stem = feature.name.to_lowercase();
        let mut csv = String::from("timestamp,speed_kmh\n");
        for o in &feature.series {
            csv.push_str(&format!("{},{}\n", o.at, o.speed_kmh));
        }
        fs::write(dir.join(format!("{stem}.csv")), csv)?;

        let waypoints = if feature.waypoints.is_empty() {
            None
        } else {
            let coords: Vec<[f64; 2]> = feature.waypoints.iter().map(|w| [w.lon, w.lat]).collect();
            let doc = json!({
                "type": "Feature",
                "properties": { "name": feature.name },
                "geometry": { "type": "LineString", "coordinates": coords },
            });
            let file = format!("{stem}.geojson");
            fs::write(dir.join(&file), serde_json::to_string_pretty(&doc)? + "\n")?;
            Some(file)
        };
        links.push(LinkEntry {
            name: feature.name.clone(),
            series: format!("{stem}.csv"),
            waypoints,
        });
    }
    let manifest = Manifest {
        dependent: dataset.dependent_name.clone(),
        sampling_minutes: dataset.sampling_minutes,
        links,
        temporal: dataset.temporal_definitions(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )
}
