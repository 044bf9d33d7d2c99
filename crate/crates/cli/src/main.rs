//! `roadreg`: ingest link data, extract temporal features, fit, compare,
//! predict and serve, all over a local store directory.

mod render;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use roadreg_core::evaluation::{compare_models, CompareConfig, EvalError, SplitMode};
use roadreg_core::ingestion::load_manifest;
use roadreg_core::regression::{
    self, persist, BayesianPrior, ElasticNetParams, FitSpec, RegressionError,
};
use roadreg_core::synthetic::{example_dataset, write_dataset, EXAMPLE_SEED};
use roadreg_core::{align, EventOverride, FittedModel, Solver, Timestamp};
use roadreg_service::error::{ApiError, ErrorItem};
use roadreg_service::workflow::{self, FeatureRequest, PredictRequest};
use roadreg_service::{ServiceConfig, Store, StoreError, DEFAULT_UPLOAD_LIMIT};
use serde_json::Value;

use crate::render::Format;

#[derive(Debug, Parser)]
#[command(
    name = "roadreg",
    version,
    about = "Spatiotemporal regression of road-link speeds"
)]
struct Cli {
    /// Directory holding ingested datasets and fitted models.
    #[arg(
        long,
        global = true,
        env = "ROADREG_STORE",
        default_value = "roadreg-store"
    )]
    store: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a manifest and its link files into the store.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// Store directory (overrides --store).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract temporal features and attach them to a dataset.
    #[command(group(ArgGroup::new("kind").required(true).multiple(true).args(["peakhour", "am", "hours"])))]
    Features {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        peakhour: bool,
        #[arg(long)]
        am: bool,
        /// NAME=HOURS, e.g. Rush=7-9,16-18
        #[arg(long, value_parser = parse_hours)]
        hours: Vec<(String, Vec<u8>)>,
    },
    /// Fit one solver and store the model.
    Fit {
        #[arg(long)]
        dataset: String,
        #[arg(long, value_enum)]
        solver: SolverArg,
        #[command(flatten)]
        params: SolverParams,
    },
    /// Fit every solver on a train split and score the held-out rows.
    Evaluate {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hold out the latest rows instead of a shuffled sample.
        #[arg(long)]
        chronological: bool,
        #[command(flatten)]
        params: SolverParams,
    },
    /// Predict the dependent link's speed for given inputs.
    Predict {
        /// Model id in the store, or a path to a model file.
        #[arg(long)]
        model: String,
        /// HH:MM or YYYY-MM-DDTHH:MM
        #[arg(long, value_parser = parse_time)]
        at: Option<Timestamp>,
        /// NAME=VALUE, repeatable
        #[arg(long = "set", value_parser = parse_set)]
        set: Vec<(String, f64)>,
        /// name=..,target=..,value=..,start=..,end=..[,gate=..] or a JSON object
        #[arg(long = "event", value_parser = parse_event)]
        event: Vec<EventOverride>,
    },
    /// Copy a model file into the store.
    ImportModel {
        #[arg(long)]
        file: PathBuf,
    },
    /// Write the synthetic four-link example dataset.
    GenerateExample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = EXAMPLE_SEED)]
        seed: u64,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Static files served for paths outside /api.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_UPLOAD_LIMIT)]
        max_upload_bytes: usize,
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Ols,
    #[value(name = "elastic_net", alias = "elastic-net")]
    ElasticNet,
    Bayesian,
    Baseline,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Ols => Solver::Ols,
            SolverArg::ElasticNet => Solver::ElasticNet,
            SolverArg::Bayesian => Solver::Bayesian,
            SolverArg::Baseline => Solver::Baseline,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SolverParams {
    /// Elastic net penalty strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// Elastic net L1 share in [0, 1].
    #[arg(long)]
    alpha_mix: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Bayesian prior precision on the weights.
    #[arg(long)]
    tau: Option<f64>,
}

impl SolverParams {
    fn elastic_net(&self) -> ElasticNetParams {
        let d = ElasticNetParams::default();
        ElasticNetParams {
            lambda: self.lambda.unwrap_or(d.lambda),
            alpha_mix: self.alpha_mix.unwrap_or(d.alpha_mix),
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
        }
    }

    fn prior(&self) -> BayesianPrior {
        let d = BayesianPrior::default();
        BayesianPrior {
            tau: self.tau.unwrap_or(d.tau),
            ..d
        }
    }

    fn spec(&self, solver: Solver) -> FitSpec {
        match solver {
            Solver::Ols => FitSpec::Ols,
            Solver::ElasticNet => FitSpec::ElasticNet(self.elastic_net()),
            Solver::Bayesian => FitSpec::Bayesian(self.prior()),
            Solver::Baseline => FitSpec::Baseline,
        }
    }
}

fn parse_time(s: &str) -> Result<Timestamp, String> {
    s.parse::<Timestamp>().map_err(|e| e.to_string())
}

fn parse_set(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("'{value}' is not a number"))?;
    Ok((name.trim().to_string(), value))
}

fn parse_hour_list(spec: &str) -> Result<Vec<u8>, String> {
    let mut hours = Vec::new();
    for part in spec.split(',').map(str::trim) {
        let bad = || format!("invalid hour range '{part}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u8 = a.trim().parse().map_err(|_| bad())?;
                let b: u8 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                hours.extend(a..=b);
            }
            None => hours.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(hours)
}

fn parse_hours(s: &str) -> Result<(String, Vec<u8>), String> {
    let (name, spec) = s.split_once('=').ok_or("expected NAME=HOURS")?;
    Ok((name.trim().to_string(), parse_hour_list(spec)?))
}

fn parse_event(s: &str) -> Result<EventOverride, String> {
    let event: EventOverride = if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| e.to_string())?
    } else {
        let mut fields = serde_json::Map::new();
        for pair in s.split(',') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got '{pair}'"))?;
            let key = match k.trim() {
                "value" => "value_kmh",
                "target" => "target_feature",
                "gate" => "gate_feature",
                other => other,
            };
            let v = v.trim();
            let value = if key == "value_kmh" {
                Value::from(
                    v.parse::<f64>()
                        .map_err(|_| format!("'{v}' is not a number"))?,
                )
            } else {
                Value::from(v)
            };
            fields.insert(key.to_string(), value);
        }
        serde_json::from_value(Value::Object(fields)).map_err(|e| e.to_string())?
    };
    event.validate().map_err(|e| e.to_string())?;
    Ok(event)
}

/// Errors reported on stderr; every variant exits with status 1.
#[derive(Debug)]
struct Failure(Vec<ErrorItem>);

impl Failure {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Failure(vec![ErrorItem::new(code, message)])
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Dataset(errors) => Failure(errors.iter().map(ErrorItem::from).collect()),
            StoreError::Open { .. } => Failure::new("StoreError", e.to_string()),
            other => Failure(ApiError::from(other).errors),
        }
    }
}

impl From<RegressionError> for Failure {
    fn from(e: RegressionError) -> Self {
        Failure::new(e.code(), e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Fit { source, .. } => source.into(),
            other => Failure::new("EvaluationError", other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("Io", e.to_string())
    }
}

fn open_store(dir: &Path) -> Result<Store, Failure> {
    Ok(Store::open(dir)?)
}

fn load_model(store_dir: &Path, model: &str) -> Result<FittedModel, Failure> {
    let path = Path::new(model);
    if path.is_file() {
        return persist::load(path)
            .map_err(|e| Failure::new("InvalidModel", format!("{}: {e}", path.display())));
    }
    Ok(open_store(store_dir)?.load_model(model)?)
}

fn run(cli: Cli) -> Result<String, Failure> {
    let format = cli.format;
    match cli.command {
        Command::Ingest { manifest, out } => {
            let dataset = load_manifest(&manifest)
                .map_err(|errors| Failure(errors.iter().map(ErrorItem::from).collect()))?;
            let store = open_store(out.as_deref().unwrap_or(&cli.store))?;
            let id = store.put_dataset(&dataset)?;
            Ok(render::ingested(format, &id, &dataset))
        }
        Command::Features {
            dataset: id,
            peakhour,
            am,
            hours,
        } => {
            let store = open_store(&cli.store)?;
            let dataset = store.load_dataset(&id)?;
            let mut requests = Vec::new();
            if peakhour {
                requests.push(FeatureRequest {
                    kind: "peakhour".into(),
                    name: None,
                    hours: None,
                });
            }
            if am {
                requests.push(FeatureRequest {
                    kind: "am".into(),
                    name: None,
                    hours: None,
                });
            }
            for (name, hours) in hours {
                requests.push(FeatureRequest {
                    kind: "explicit_hours".into(),
                    name: Some(name),
                    hours: Some(hours),
                });
            }
            let definitions = workflow::feature_definitions(&dataset, &requests)
                .map_err(|e| Failure::new(e.code(), e.to_string()))?;
            let names: Vec<String> = definitions.iter().map(|d| d.name.clone()).collect();
            let dataset = store.attach_features(&id, definitions)?;
            Ok(render::features(
                format,
                &id,
                &workflow::feature_summaries(&dataset, &names),
            ))
        }
        Command::Fit {
            dataset: id,
            solver,
            params,
        } => {
            let store = open_store(&cli.store)?;
            let dataset = store.load_dataset(&id)?;
            let design = align(&dataset).map_err(|e| Failure(vec![ErrorItem::from(&e)]))?;
            let model = regression::fit(&design, &params.spec(solver.into()))?;
            let model_id = store.put_model(&model, Some(&id))?;
            Ok(render::fitted(
                format,
                &model_id,
                Some(&id),
                &workflow::model_report(&model),
            ))
        }
        Command::Evaluate {
            dataset: id,
            test_fraction,
            seed,
            chronological,
            params,
        } => {
            let store = open_store(&cli.store)?;
            let dataset = store.load_dataset(&id)?;
            let design = align(&dataset).map_err(|e| Failure(vec![ErrorItem::from(&e)]))?;
            let config = CompareConfig {
                test_fraction,
                split: if chronological {
                    SplitMode::Chronological
                } else {
                    SplitMode::Shuffled { seed }
                },
                elastic_net: params.elastic_net(),
                prior: params.prior(),
            };
            let comparison = compare_models(&design, &config)?;
            Ok(render::comparison(format, &config, &comparison))
        }
        Command::Predict {
            model,
            at,
            set,
            event,
        } => {
            let fitted = load_model(&cli.store, &model)?;
            let request = PredictRequest {
                inputs: set.into_iter().collect(),
                time: at.map(|t| t.to_string()),
                events: event,
            };
            let report = workflow::predict(&fitted, &request)
                .map_err(|e| Failure::new(e.code(), e.to_string()))?;
            Ok(render::prediction(format, &report))
        }
        Command::ImportModel { file } => {
            let model = persist::load(&file)
                .map_err(|e| Failure::new("InvalidModel", format!("{}: {e}", file.display())))?;
            let id = open_store(&cli.store)?.put_model(&model, None)?;
            Ok(render::imported(
                format,
                &id,
                &workflow::model_report(&model),
            ))
        }
        Command::GenerateExample { out, seed } => {
            let dataset = example_dataset(seed);
            write_dataset(&dataset, &out)?;
            Ok(render::generated(format, &out, &dataset))
        }
        Command::Serve {
            listen,
            ui_dir,
            max_upload_bytes,
            cors_origin,
        } => {
            let config = ServiceConfig {
                store_dir: cli.store,
                max_upload_bytes,
                cors_origin,
                ui_dir,
            };
            serve(&config, &listen)?;
            Ok(String::new())
        }
    }
}

fn serve(config: &ServiceConfig, listen: &str) -> Result<(), Failure> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let app = roadreg_service::app(config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| Failure::new("Io", format!("cannot listen on {listen}: {e}")))?;
        let mut stdout = std::io::stdout();
        writeln!(stdout, "listening on http://{}", listener.local_addr()?)?;
        stdout.flush()?;
        roadreg_service::serve(listener, app, shutdown_signal()).await?;
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure(errors)) => {
            eprint!("{}", render::errors(format, &errors));
            ExitCode::from(1)
        }
    }
}
