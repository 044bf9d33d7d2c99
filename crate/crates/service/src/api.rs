use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use roadreg_core::ingestion::{IngestError, Manifest};
use roadreg_core::regression::{self, BayesianPrior, ElasticNetParams, FitSpec};
use roadreg_core::{align, Dataset, Solver};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::error::ApiError;
use crate::store::Store;
use crate::workflow::{self, FeatureRequest, ModelReport, PredictRequest};
use crate::ServiceConfig;

pub struct AppState {
    pub store: Store,
}

type Shared = Arc<AppState>;

pub fn router(state: Shared, config: &ServiceConfig) -> Router {
    let mut app = Router::new()
        .route("/api/health", get(health))
        .route("/api/datasets", post(create_dataset))
        .route("/api/datasets/{id}", get(dataset_summary))
        .route("/api/datasets/{id}/features", post(extract_features))
        .route("/api/datasets/{id}/geometry", get(geometry))
        .route("/api/models", post(create_model))
        .route("/api/models/{id}", get(model_summary))
        .route("/api/models/{id}/predict", post(predict))
        .layer(DefaultBodyLimit::max(config.max_upload_bytes))
        .with_state(state);
    if let Some(dir) = &config.ui_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    if let Some(origin) = &config.cors_origin {
        if let Ok(origin) = HeaderValue::from_str(origin) {
            app = app.layer(
                CorsLayer::new()
                    .allow_origin(origin)
                    .allow_methods(tower_http::cors::Any)
                    .allow_headers(tower_http::cors::Any),
            );
        }
    }
    app
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("InvalidBody", e.to_string()))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Serialize)]
struct LinkSummary {
    name: String,
    role: &'static str,
    rows: usize,
    has_geometry: bool,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    id: String,
    dependent: String,
    sampling_minutes: u32,
    aligned_rows: usize,
    links: Vec<LinkSummary>,
    temporal: Vec<String>,
}

fn summarize(id: String, dataset: &Dataset) -> DatasetSummary {
    DatasetSummary {
        id,
        dependent: dataset.dependent_name.clone(),
        sampling_minutes: dataset.sampling_minutes,
        aligned_rows: dataset.common_timestamps().len(),
        links: dataset
            .spatial
            .iter()
            .map(|f| LinkSummary {
                name: f.name.clone(),
                role: if f.name == dataset.dependent_name {
                    "dependent"
                } else {
                    "independent"
                },
                rows: f.series.len(),
                has_geometry: !f.waypoints.is_empty(),
            })
            .collect(),
        temporal: dataset
            .temporal
            .iter()
            .map(|t| t.name().to_string())
            .collect(),
    }
}

/// Multipart upload: a `manifest` JSON part plus one part per referenced
/// file, matched by the part's file name (or field name).
async fn create_dataset(
    State(state): State<Shared>,
    mut multipart: Multipart,
) -> Result<impl IntoResponse, ApiError> {
    let multipart_error = |e: axum::extract::multipart::MultipartError| {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "PayloadTooLarge"
        } else {
            "InvalidMultipart"
        };
        ApiError::new(status, code, e.body_text())
    };
    let mut manifest_text = None;
    let mut files: HashMap<String, Vec<u8>> = HashMap::new();
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        let field_name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(multipart_error)?;
        if field_name == "manifest" {
            manifest_text = Some(
                String::from_utf8(bytes.to_vec())
                    .map_err(|e| ApiError::bad_request("InvalidManifest", e.to_string()))?,
            );
        } else {
            files.insert(file_name.unwrap_or(field_name), bytes.to_vec());
        }
    }
    let manifest_text = manifest_text
        .ok_or_else(|| ApiError::bad_request("MissingManifest", "no 'manifest' part"))?;
    let manifest = Manifest::from_json(&manifest_text).map_err(|e| ApiError::ingest(&[e]))?;
    let dataset = manifest
        .build(|name| {
            files
                .get(name)
                .cloned()
                .ok_or_else(|| IngestError::MissingFile(name.to_string()))
        })
        .map_err(|errors| ApiError::ingest(&errors))?;
    let id = state.store.put_dataset(&dataset)?;
    Ok((StatusCode::CREATED, Json(summarize(id, &dataset))))
}

async fn dataset_summary(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<DatasetSummary>, ApiError> {
    let dataset = state.store.load_dataset(&id)?;
    Ok(Json(summarize(id, &dataset)))
}

#[derive(Debug, Deserialize)]
struct FeaturesBody {
    features: Vec<FeatureRequest>,
}

async fn extract_features(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let dataset = state.store.load_dataset(&id)?;
    let body: FeaturesBody = parse_body(&body)?;
    let definitions = workflow::feature_definitions(&dataset, &body.features)
        .map_err(|e| ApiError::bad_request(e.code(), e.to_string()))?;
    let names: Vec<String> = definitions.iter().map(|d| d.name.clone()).collect();
    let dataset = state.store.attach_features(&id, definitions)?;
    Ok(Json(
        json!({ "dataset_id": id, "features": workflow::feature_summaries(&dataset, &names) }),
    ))
}

async fn geometry(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let dataset = state.store.load_dataset(&id)?;
    let features: Vec<Value> = dataset
        .spatial
        .iter()
        .map(|f| {
            let role = if f.name == dataset.dependent_name { "dependent" } else { "independent" };
            let geometry = if f.waypoints.is_empty() {
                Value::Null
            } else {
                let coords: Vec<[f64; 2]> = f.waypoints.iter().map(|w| [w.lon, w.lat]).collect();
                json!({ "type": "LineString", "coordinates": coords })
            };
            json!({
                "type": "Feature",
                "properties": { "name": f.name, "role": role, "has_geometry": !f.waypoints.is_empty() },
                "geometry": geometry,
            })
        })
        .collect();
    Ok(Json(
        json!({ "type": "FeatureCollection", "features": features }),
    ))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SolverParams {
    lambda: Option<f64>,
    alpha_mix: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    tau: Option<f64>,
    noise_shape: Option<f64>,
    noise_rate: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ModelBody {
    dataset_id: String,
    solver: String,
    #[serde(default)]
    params: SolverParams,
}

fn fit_spec(solver: Solver, p: &SolverParams) -> FitSpec {
    match solver {
        Solver::Ols => FitSpec::Ols,
        Solver::Baseline => FitSpec::Baseline,
        Solver::ElasticNet => {
            let d = ElasticNetParams::default();
            FitSpec::ElasticNet(ElasticNetParams {
                lambda: p.lambda.unwrap_or(d.lambda),
                alpha_mix: p.alpha_mix.unwrap_or(d.alpha_mix),
                tol: p.tol.unwrap_or(d.tol),
                max_iter: p.max_iter.unwrap_or(d.max_iter),
            })
        }
        Solver::Bayesian => {
            let d = BayesianPrior::default();
            FitSpec::Bayesian(BayesianPrior {
                tau: p.tau.unwrap_or(d.tau),
                noise_shape: p.noise_shape.unwrap_or(d.noise_shape),
                noise_rate: p.noise_rate.unwrap_or(d.noise_rate),
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct ModelCreated {
    model_id: String,
    dataset_id: Option<String>,
    #[serde(flatten)]
    report: ModelReport,
}

async fn create_model(
    State(state): State<Shared>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let body: ModelBody = parse_body(&body)?;
    let solver: Solver = body
        .solver
        .parse()
        .map_err(|e: roadreg_core::types::UnknownSolver| {
            ApiError::bad_request("UnknownSolver", e.to_string())
        })?;
    let dataset = state.store.load_dataset(&body.dataset_id)?;
    let design = align(&dataset).map_err(|e| ApiError::ingest(&[e]))?;
    let model = regression::fit(&design, &fit_spec(solver, &body.params))?;
    let model_id = state.store.put_model(&model, Some(&body.dataset_id))?;
    Ok((
        StatusCode::CREATED,
        Json(ModelCreated {
            model_id,
            dataset_id: Some(body.dataset_id),
            report: workflow::model_report(&model),
        }),
    ))
}

async fn model_summary(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let model = state.store.load_model(&id)?;
    let dataset_id = state.store.model_dataset(&id)?;
    Ok(Json(ModelCreated {
        model_id: id,
        dataset_id,
        report: workflow::model_report(&model),
    }))
}

async fn predict(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let model = state.store.load_model(&id)?;
    let request: PredictRequest = parse_body(&body)?;
    let report = workflow::predict(&model, &request)
        .map_err(|e| ApiError::bad_request(e.code(), e.to_string()))?;
    let mut body = serde_json::to_value(report).expect("report serializes");
    body["model_id"] = Value::String(id);
    Ok(Json(body))
}
