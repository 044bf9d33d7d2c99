//! Text and JSON renderings of command results.

use std::fmt::Write;
use std::path::Path;

use clap::ValueEnum;
use roadreg_core::evaluation::{CompareConfig, Comparison, SplitMode};
use roadreg_core::{Dataset, Solver, TemporalRule};
use roadreg_service::error::ErrorItem;
use roadreg_service::workflow::{FeatureSummary, ModelReport, PredictionReport};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned text for people.
    Table,
    /// One JSON document per command.
    Machine,
}

fn machine<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string(value).expect("serializable");
    out.push('\n');
    out
}

fn with_fields(report: &ModelReport, fields: Value) -> Value {
    let mut value = serde_json::to_value(report).expect("serializable");
    if let (Value::Object(target), Value::Object(extra)) = (&mut value, fields) {
        for (k, v) in extra {
            target.insert(k, v);
        }
    }
    value
}

fn hours(set: impl IntoIterator<Item = u8>) -> String {
    set.into_iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn ingested(format: Format, id: &str, dataset: &Dataset) -> String {
    let rows = dataset.common_timestamps().len();
    let links: Vec<&str> = dataset.spatial.iter().map(|f| f.name.as_str()).collect();
    match format {
        Format::Machine => machine(&json!({
            "id": id,
            "dependent": dataset.dependent_name,
            "sampling_minutes": dataset.sampling_minutes,
            "aligned_rows": rows,
            "links": links,
        })),
        Format::Table => format!(
            "{id}\ndependent {}  links {}  sampling {} min  aligned rows {rows}\n",
            dataset.dependent_name,
            links.join(","),
            dataset.sampling_minutes
        ),
    }
}

pub fn features(format: Format, id: &str, summaries: &[FeatureSummary]) -> String {
    if format == Format::Machine {
        return machine(&json!({ "dataset_id": id, "features": summaries }));
    }
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>8}  rule", "feature", "active");
    for s in summaries {
        let rule = match &s.rule {
            TemporalRule::Peakhour {
                threshold,
                active_hours,
            } => {
                format!(
                    "hourly mean below {threshold:.4} km/h; hours {}",
                    hours(active_hours.iter().copied())
                )
            }
            TemporalRule::Am => "hour < 12".to_string(),
            TemporalRule::ExplicitHours { hours: h } => {
                format!("hours {}", hours(h.iter().copied()))
            }
        };
        let _ = writeln!(
            out,
            "{:<12} {:>8}  {rule}",
            s.name,
            format!("{}/{}", s.active_rows, s.rows)
        );
    }
    out
}

fn coefficient_table(report: &ModelReport) -> String {
    let mut rows = vec![&report.intercept];
    if report.solver != Solver::Baseline {
        rows.extend(report.coefficients.iter());
    }
    let width = rows
        .iter()
        .map(|r| r.feature.len())
        .max()
        .unwrap_or(0)
        .max(11);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>10}", "coefficient", "estimate");
    for r in rows {
        match r.sd {
            Some(sd) => writeln!(out, "{:<width$}  {:>10.4} ± {sd:.4}", r.feature, r.estimate),
            None => writeln!(out, "{:<width$}  {:>10.4}", r.feature, r.estimate),
        }
        .expect("write to string");
    }
    let _ = write!(
        out,
        "residual standard error {:.4} on n = {}",
        report.residual_std_error, report.n
    );
    if let Some(converged) = report.converged {
        let _ = write!(out, "  converged {converged}");
    }
    out.push('\n');
    out
}

pub fn fitted(
    format: Format,
    model_id: &str,
    dataset_id: Option<&str>,
    report: &ModelReport,
) -> String {
    match format {
        Format::Machine => machine(&with_fields(
            report,
            json!({ "model_id": model_id, "dataset_id": dataset_id }),
        )),
        Format::Table => format!(
            "model {model_id}  solver {}  dependent {}\n{}",
            report.solver,
            report.dependent,
            coefficient_table(report)
        ),
    }
}

pub fn imported(format: Format, model_id: &str, report: &ModelReport) -> String {
    fitted(format, model_id, None, report)
}

pub fn comparison(format: Format, config: &CompareConfig, comparison: &Comparison) -> String {
    let split = match config.split {
        SplitMode::Shuffled { seed } => format!("shuffled, seed {seed}"),
        SplitMode::Chronological => "chronological".to_string(),
    };
    if format == Format::Machine {
        return machine(&json!({
            "split": config.split,
            "test_fraction": config.test_fraction,
            "n_train": comparison.n_train,
            "n_test": comparison.n_test,
            "rows": comparison.rows,
        }));
    }
    let mut out = format!(
        "train {}  test {}  ({split})\n",
        comparison.n_train, comparison.n_test
    );
    let _ = writeln!(out, "{:<12} {:>8} {:>8}", "model", "MAE", "RMSE");
    for row in &comparison.rows {
        let _ = writeln!(
            out,
            "{:<12} {:>8.4} {:>8.4}",
            row.solver.as_str(),
            row.mae,
            row.rmse
        );
    }
    out
}

pub fn prediction(format: Format, report: &PredictionReport) -> String {
    if format == Format::Machine {
        return machine(report);
    }
    let mut out = String::new();
    match report.at {
        Some(at) => writeln!(out, "{} at {at}", report.dependent),
        None => writeln!(out, "{}", report.dependent),
    }
    .expect("write to string");
    let p = &report.prediction;
    if p.clamped {
        let _ = writeln!(
            out,
            "prediction {:.2} km/h (linear predictor {:.4}, clamped at 0)",
            p.value, p.raw
        );
    } else {
        let _ = writeln!(out, "prediction {:.2} km/h", p.value);
    }
    if let Some(d) = &report.distribution {
        let _ = writeln!(
            out,
            "99% interval [{:.2}, {:.2}] km/h  (student-t, {:.0} dof, scale {:.4})",
            d.interval_99[0], d.interval_99[1], d.dof, d.scale
        );
    }
    if !report.fired_events.is_empty() {
        let _ = writeln!(out, "events fired: {}", report.fired_events.join(", "));
    }
    let inputs: Vec<String> = report
        .inputs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    let _ = writeln!(out, "inputs {}", inputs.join(" "));
    out
}

pub fn generated(format: Format, dir: &Path, dataset: &Dataset) -> String {
    let rows = dataset.common_timestamps().len();
    match format {
        Format::Machine => {
            machine(&json!({ "dir": dir, "manifest": dir.join("manifest.json"), "rows": rows }))
        }
        Format::Table => format!(
            "wrote {} links x {rows} rows to {}\n",
            dataset.spatial.len(),
            dir.join("manifest.json").display()
        ),
    }
}

pub fn errors(format: Format, errors: &[ErrorItem]) -> String {
    if format == Format::Machine {
        return machine(&json!({ "errors": errors }));
    }
    let mut out = String::new();
    for e in errors {
        let mut location = String::new();
        if let Some(file) = &e.file {
            location.push_str(file);
            if let Some(line) = e.line {
                let _ = write!(location, ":{line}");
            }
            location.push_str(": ");
        } else if let Some(line) = e.line {
            let _ = write!(location, "line {line}: ");
        }
        let _ = writeln!(out, "error[{}]: {location}{}", e.code, e.message);
    }
    out
}
