use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_roadreg"))
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

struct Session {
    store: tempfile::TempDir,
}

impl Session {
    fn new() -> Self {
        Self {
            store: tempfile::tempdir().unwrap(),
        }
    }

    fn run(&self, args: &[&str]) -> Output {
        bin()
            .arg("--store")
            .arg(self.store.path())
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn machine(&self, args: &[&str]) -> Value {
        let mut all = vec!["--format", "machine"];
        all.extend_from_slice(args);
        serde_json::from_str(&self.ok(&all)).unwrap()
    }

    fn example_dataset(&self) -> String {
        let dir = tempfile::tempdir().unwrap();
        self.ok(&[
            "generate-example",
            "--out",
            dir.path().to_str().unwrap(),
            "--seed",
            "5",
        ]);
        let manifest = dir.path().join("manifest.json");
        let id = self.machine(&["ingest", "--manifest", manifest.to_str().unwrap()])["id"]
            .as_str()
            .unwrap()
            .to_string();
        self.ok(&["features", "--dataset", &id, "--peakhour", "--am"]);
        id
    }
}

fn write_links(dir: &Path, manifest: &str, files: &[(&str, &str)]) -> PathBuf {
    for (name, body) in files {
        fs::write(dir.join(name), body).unwrap();
    }
    let path = dir.join("manifest.json");
    fs::write(&path, manifest).unwrap();
    path
}

const SERIES: &str =
    "timestamp,speed_kmh\n2020-03-02T00:00,10\n2020-03-02T00:15,11\n2020-03-02T00:30,12\n";

#[test]
fn ingest_prints_id() {
    let s = Session::new();
    let out = s.ok(&[
        "ingest",
        "--manifest",
        repo_file("data/example/manifest.json").to_str().unwrap(),
    ]);
    let id = out.lines().next().unwrap();
    assert_eq!(id.len(), 12);
    assert!(id.bytes().all(|b| b.is_ascii_hexdigit()));
}

#[test]
fn ingest_out_overrides_store() {
    let s = Session::new();
    let other = tempfile::tempdir().unwrap();
    let manifest = repo_file("data/example/manifest.json");
    s.ok(&[
        "ingest",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        other.path().to_str().unwrap(),
    ]);
    assert!(fs::read_dir(other.path().join("datasets"))
        .unwrap()
        .next()
        .is_some());
}

#[test]
fn ingest_missing_file_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_links(
        dir.path(),
        r#"{"dependent":"A","links":[{"name":"A","series":"a.csv"},{"name":"B","series":"b.csv"}]}"#,
        &[("a.csv", SERIES)],
    );
    let out = Session::new().run(&["ingest", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("b.csv"), "{stderr}");
}

#[test]
fn ingest_duplicate_names_fail() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_links(
        dir.path(),
        r#"{"dependent":"A","links":[{"name":"A","series":"a.csv"},{"name":"B","series":"b.csv"},{"name":"B","series":"c.csv"}]}"#,
        &[("a.csv", SERIES), ("b.csv", SERIES), ("c.csv", SERIES)],
    );
    let out = Session::new().run(&["ingest", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DuplicateName"));
}

#[test]
fn fit_tables() {
    let s = Session::new();
    let id = s.example_dataset();
    let bayes = s.ok(&["fit", "--dataset", &id, "--solver", "bayesian"]);
    for name in ["Intercept", "AM", "Peakhour", "Road2", "Road3", "Road4"] {
        let line = bayes.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.contains('±'), "{line}");
    }
    let baseline = s.ok(&["fit", "--dataset", &id, "--solver", "baseline"]);
    let rows: Vec<&str> = baseline
        .lines()
        .skip(2)
        .take_while(|l| !l.starts_with("residual"))
        .collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("Intercept"));
}

#[test]
fn bad_solver_is_usage_error() {
    let out = Session::new().run(&["fit", "--dataset", "0123456789ab", "--solver", "ridge"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_dataset_is_runtime_error() {
    let out = Session::new().run(&["fit", "--dataset", "0123456789ab", "--solver", "ols"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownDataset"));
}

#[test]
fn evaluate_table() {
    let s = Session::new();
    let id = s.example_dataset();
    let first = s.ok(&[
        "evaluate",
        "--dataset",
        &id,
        "--test-fraction",
        "0.2",
        "--seed",
        "3",
    ]);
    assert_eq!(
        first,
        s.ok(&[
            "evaluate",
            "--dataset",
            &id,
            "--test-fraction",
            "0.2",
            "--seed",
            "3"
        ])
    );
    let rows: Vec<Vec<&str>> = first
        .lines()
        .skip(2)
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let mae: f64 = row[1].parse().unwrap();
        let rmse: f64 = row[2].parse().unwrap();
        assert!(rmse >= mae);
    }

    let chrono = s.machine(&["evaluate", "--dataset", &id, "--chronological"]);
    assert_eq!(chrono["n_test"], 134);
    assert_eq!(chrono["n_train"], 538);
    assert_eq!(chrono["split"]["mode"], "chronological");
}

#[test]
fn predict_reference_model() {
    let model = repo_file("data/reference_model.json");
    let args = [
        "--at",
        "09:30",
        "--set",
        "Road2=18.05",
        "--set",
        "Road3=4.4",
        "--set",
        "Road4=10.45",
    ];
    let s = Session::new();
    let mut all = vec!["predict", "--model", model.to_str().unwrap()];
    all.extend_from_slice(&args);
    let out = s.ok(&all);
    assert!(out.contains("prediction 12.81 km/h"), "{out}");
    assert!(!out.contains("interval"));

    let missing = s.run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--at",
        "09:30",
        "--set",
        "Road2=18.05",
        "--set",
        "Road4=10.45",
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("MissingFeature"));

    let imported = s.machine(&["import-model", "--file", model.to_str().unwrap()]);
    let id = imported["model_id"].as_str().unwrap();
    let mut by_id = vec!["predict", "--model", id];
    by_id.extend_from_slice(&args);
    assert_eq!(s.ok(&by_id), out);
}

#[test]
fn predict_bayesian_interval_and_events() {
    let s = Session::new();
    let id = s.example_dataset();
    let fit = s.machine(&["fit", "--dataset", &id, "--solver", "bayesian"]);
    let model = fit["model_id"].as_str().unwrap();
    let base = [
        "predict",
        "--model",
        model,
        "--at",
        "08:00",
        "--set",
        "Road2=18.05",
        "--set",
        "Road4=10.45",
    ];

    let mut plain = base.to_vec();
    plain.extend_from_slice(&["--set", "Road3=4.4"]);
    let out = s.ok(&plain);
    assert!(out.contains("99% interval ["), "{out}");

    let mut direct = base.to_vec();
    direct.extend_from_slice(&["--set", "Road3=1", "--format", "machine"]);
    let mut evented = plain.clone();
    evented.extend_from_slice(&[
        "--event",
        "name=closure,target=Road3,value=1,start=07:00,end=09:00",
        "--format",
        "machine",
    ]);
    let direct: Value = serde_json::from_str(&s.ok(&direct)).unwrap();
    let evented: Value = serde_json::from_str(&s.ok(&evented)).unwrap();
    assert_eq!(direct["prediction"], evented["prediction"]);
    assert_eq!(evented["fired_events"][0], "closure");

    let mut bad = plain.clone();
    bad.extend_from_slice(&["--event", "name=x,target=AM,value=1,start=07:00,end=09:00"]);
    let out = s.run(&bad);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownTarget"));
}

#[test]
fn malformed_set_is_usage_error() {
    let model = repo_file("data/reference_model.json");
    let out = Session::new().run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--set",
        "Road2",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_store_path_exits_1() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let out = bin()
        .args(["serve", "--listen", "127.0.0.1:0", "--store"])
        .arg(file.path().join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream
        .set_read_timeout(Some(Duration::from_secs(10)))
        .unwrap();
    write!(
        stream,
        "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response
}

#[cfg(unix)]
#[test]
fn serve_health_and_sigint() {
    let store = tempfile::tempdir().unwrap();
    let mut child = bin()
        .args(["serve", "--listen", "127.0.0.1:0", "--store"])
        .arg(store.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap()
        .to_string();

    let response = http_get(&addr, "/api/health");
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");

    let status = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn bundled_example_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    Session::new().ok(&["generate-example", "--out", dir.path().to_str().unwrap()]);
    let bundled = repo_file("data/example");
    for entry in fs::read_dir(&bundled).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(dir.path().join(&name)).unwrap(),
            fs::read(bundled.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}
