//! On-disk store of datasets and models.
//!
//! ```text
//! <root>/datasets/<id>/manifest.json   link names, files, temporal definitions
//! <root>/datasets/<id>/link<k>.csv     timestamp,speed_kmh
//! <root>/datasets/<id>/link<k>.geojson optional route
//! <root>/models/<id>/model.json        versioned model file
//! <root>/models/<id>/source.json       dataset the model was fitted on
//! ```
//!
//! Ids are the first 12 hex digits of a SHA-256 over the stored content, so
//! storing the same content twice yields the same id.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use roadreg_core::ingestion::{IngestError, LinkEntry, Manifest};
use roadreg_core::regression::persist::{self, PersistError};
use roadreg_core::{Dataset, FittedModel, TemporalDefinition};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const ID_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store directory {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{kind} '{id}' not found")]
    NotFound { kind: &'static str, id: String },
    #[error("stored dataset is invalid: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Dataset(Vec<IngestError>),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] PersistError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelSource {
    dataset_id: Option<String>,
}

pub fn content_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(digest)[..ID_LEN].to_string()
}

fn valid_id(id: &str) -> bool {
    id.len() == ID_LEN
        && id
            .bytes()
            .all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

pub struct Store {
    root: PathBuf,
    locks: Mutex<HashMap<String, Arc<RwLock<()>>>>,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        for sub in ["datasets", "models"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|source| StoreError::Open {
                path: dir.clone(),
                source,
            })?;
        }
        let probe = root.join(".write-probe");
        fs::write(&probe, b"").map_err(|source| StoreError::Open {
            path: root.clone(),
            source,
        })?;
        let _ = fs::remove_file(probe);
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock_for(&self, id: &str) -> Arc<RwLock<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn dataset_dir(&self, id: &str) -> PathBuf {
        self.root.join("datasets").join(id)
    }

    fn model_dir(&self, id: &str) -> PathBuf {
        self.root.join("models").join(id)
    }

    /// Content id of a dataset's links; attached temporal features do not
    /// change it.
    pub fn dataset_id(dataset: &Dataset) -> String {
        let key = serde_json::json!({
            "dependent": dataset.dependent_name,
            "sampling_minutes": dataset.sampling_minutes,
            "spatial": dataset.spatial,
        });
        content_id(key.to_string().as_bytes())
    }

    pub fn put_dataset(&self, dataset: &Dataset) -> Result<String, StoreError> {
        let id = Self::dataset_id(dataset);
        let lock = self.lock_for(&id);
        let _guard = lock.write().expect("dataset lock");
        let dir = self.dataset_dir(&id);
        if dir.join("manifest.json").exists() {
            return Ok(id);
        }
        self.write_dataset_files(&dir, dataset)?;
        Ok(id)
    }

    fn write_dataset_files(&self, dir: &Path, dataset: &Dataset) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        let mut links = Vec::with_capacity(dataset.spatial.len());
        for (k, feature) in dataset.spatial.iter().enumerate() {
            let series = format!("link{k}.csv");
            let mut csv = String::from("timestamp,speed_kmh\n");
            for o in &feature.series {
                csv.push_str(&format!("{},{}\n", o.at, o.speed_kmh));
            }
            fs::write(dir.join(&series), csv)?;
            let waypoints = if feature.waypoints.is_empty() {
                None
            } else {
                let file = format!("link{k}.geojson");
                let coords: Vec<[f64; 2]> =
                    feature.waypoints.iter().map(|w| [w.lon, w.lat]).collect();
                let doc = serde_json::json!({"type": "LineString", "coordinates": coords});
                fs::write(dir.join(&file), doc.to_string())?;
                Some(file)
            };
            links.push(LinkEntry {
                name: feature.name.clone(),
                series,
                waypoints,
            });
        }
        self.write_manifest(dir, dataset, links)
    }

    fn write_manifest(
        &self,
        dir: &Path,
        dataset: &Dataset,
        links: Vec<LinkEntry>,
    ) -> Result<(), StoreError> {
        let manifest = Manifest {
            dependent: dataset.dependent_name.clone(),
            sampling_minutes: dataset.sampling_minutes,
            links,
            temporal: dataset.temporal_definitions(),
        };
        let tmp = dir.join("manifest.json.tmp");
        fs::write(
            &tmp,
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        fs::rename(tmp, dir.join("manifest.json"))?;
        Ok(())
    }

    fn read_dataset(&self, id: &str) -> Result<(Dataset, Manifest), StoreError> {
        let dir = self.dataset_dir(id);
        let path = dir.join("manifest.json");
        if !valid_id(id) || !path.exists() {
            return Err(StoreError::NotFound {
                kind: "dataset",
                id: id.to_string(),
            });
        }
        let manifest = Manifest::from_json(&fs::read_to_string(&path)?)?;
        let dataset = roadreg_core::ingestion::load_manifest(&path).map_err(StoreError::Dataset)?;
        Ok((dataset, manifest))
    }

    pub fn load_dataset(&self, id: &str) -> Result<Dataset, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.read().expect("dataset lock");
        self.read_dataset(id).map(|(d, _)| d)
    }

    /// Attaches temporal features to a stored dataset and persists their
    /// definitions. Returns the updated dataset.
    pub fn attach_features(
        &self,
        id: &str,
        definitions: Vec<TemporalDefinition>,
    ) -> Result<Dataset, StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.write().expect("dataset lock");
        let (mut dataset, manifest) = self.read_dataset(id)?;
        for def in definitions {
            dataset.attach_temporal(def)?;
        }
        self.write_manifest(&self.dataset_dir(id), &dataset, manifest.links)?;
        Ok(dataset)
    }

    pub fn put_model(
        &self,
        model: &FittedModel,
        dataset_id: Option<&str>,
    ) -> Result<String, StoreError> {
        let text = persist::to_json(model);
        let id = content_id(format!("{}\n{}", dataset_id.unwrap_or(""), text).as_bytes());
        let dir = self.model_dir(&id);
        if dir.join("model.json").exists() {
            return Ok(id);
        }
        fs::create_dir_all(&dir)?;
        let source = ModelSource {
            dataset_id: dataset_id.map(str::to_string),
        };
        fs::write(
            dir.join("source.json"),
            serde_json::to_string(&source).expect("source serializes"),
        )?;
        let tmp = dir.join("model.json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, dir.join("model.json"))?;
        Ok(id)
    }

    pub fn load_model(&self, id: &str) -> Result<FittedModel, StoreError> {
        let path = self.model_dir(id).join("model.json");
        if !valid_id(id) || !path.exists() {
            return Err(StoreError::NotFound {
                kind: "model",
                id: id.to_string(),
            });
        }
        Ok(persist::load(path)?)
    }

    pub fn model_dataset(&self, id: &str) -> Result<Option<String>, StoreError> {
        let path = self.model_dir(id).join("source.json");
        if !valid_id(id) || !path.exists() {
            return Err(StoreError::NotFound {
                kind: "model",
                id: id.to_string(),
            });
        }
        let source: ModelSource =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(io::Error::from)?;
        Ok(source.dataset_id)
    }

    /// Raw bytes of a stored model file.
    pub fn model_bytes(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.model_dir(id).join("model.json");
        if !valid_id(id) || !path.exists() {
            return Err(StoreError::NotFound {
                kind: "model",
                id: id.to_string(),
            });
        }
        Ok(fs::read(path)?)
    }
}
