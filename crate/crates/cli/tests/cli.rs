use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{Map, Value};

fn expecta(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expecta"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("EXPECTA_THREADS", "0")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn expecta")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dir(o: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().last().expect("run dir on stdout").trim())
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&v).expect("schema compiles")
}

fn assert_valid(schema: &jsonschema::JSONSchema, doc: &Value, what: &str) {
    if let Err(errors) = schema.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{what}: {}", msgs.join("; "));
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

/// CSV rows as JSON objects; numeric cells become numbers, empty cells null.
fn csv_rows(p: &Path) -> Vec<Value> {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut m = Map::new();
            for (k, cell) in header.iter().zip(l.split(',')) {
                let v = if cell.is_empty() {
                    Value::Null
                } else {
                    serde_json::from_str(cell).unwrap_or_else(|_| Value::String(cell.into()))
                };
                m.insert((*k).into(), v);
            }
            Value::Object(m)
        })
        .collect()
}

#[test]
fn later_stage_without_gen_exits_3_and_names_gen() {
    let tmp = tempfile::tempdir().unwrap();
    let o = expecta(&["train", "--profile", "ci"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("expecta gen"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = expecta(&["gen", "--profile", "ci", "--set", "no_such_field=1"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = expecta(&["gen", "--profile", "ci", "--set", "canvas=40"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, "{ not json").unwrap();
    let o = expecta(&["gen", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_expecta"))
        .args(["gen", "--profile", "ci", "--out"])
        .arg(tmp.path())
        .env("EXPECTA_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn regularization_refuses_ci_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let o = expecta(&["experiment-regularization", "--profile", "ci"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn staged_ci_pipeline_writes_schema_valid_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"profile": "ci", "seed": 5}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let mut dir = None;
    for stage in ["gen", "train", "calibrate", "score", "attribute", "report"] {
        let o = expecta(&[stage, "--config", cfg], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", stderr(&o));
        let d = run_dir(&o);
        if let Some(prev) = &dir {
            assert_eq!(prev, &d, "{stage} used a different run directory");
        }
        dir = Some(d);
    }
    let dir = dir.unwrap();

    assert_valid(&schema("report.schema.json"), &read_json(&dir.join("report/report.json")), "report.json");
    assert_valid(
        &schema("overlap_table.schema.json"),
        &read_json(&dir.join("report/overlap_table.json")),
        "overlap_table.json",
    );
    let manifest = schema("manifest.schema.json");
    for (stage, sub) in [
        ("gen", "datasets"),
        ("train", "checkpoints"),
        ("calibrate", "scores"),
        ("score", "scores"),
        ("attribute", "attributions"),
        ("report", "report"),
    ] {
        let p = dir.join(sub).join(format!("{stage}.manifest.json"));
        assert_valid(&manifest, &read_json(&p), stage);
    }
    let calibration = schema("calibration.schema.json");
    let rows = schema("scores_row.schema.json");
    for id in ["VGG05-r0", "VGG13-r0"] {
        let d = dir.join("scores").join(id);
        assert_valid(&calibration, &read_json(&d.join("calibration.json")), id);
        for f in ["scores.csv", "scores_t1.csv"] {
            let all = csv_rows(&d.join(f));
            assert_eq!(all.len(), 200);
            for r in &all {
                assert_valid(&rows, r, f);
            }
        }
    }
    for f in ["fig2_expectation_vs_collected", "fig6a_scores", "fig6b_auroc", "fig7a_nonnegative", "fig7b_marginal"] {
        let svg = fs::read_to_string(dir.join("report").join(format!("{f}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"), "{f}");
    }

    // a different config does not pick up this run
    let o = expecta(&["score", "--profile", "ci", "--seed", "6"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    // rerunning the report stage reproduces it exactly
    let before = fs::read(dir.join("report/report.json")).unwrap();
    let o = expecta(&["report", "--config", cfg], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(before, fs::read(dir.join("report/report.json")).unwrap());
}

#[test]
fn regularization_experiment_emits_valid_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let small = [
        "--profile", "desk", "--set", "canvas=32", "--set", "n_collected=300", "--set", "n_validation=60",
        "--set", "n_test=80", "--set", "n_attr=16", "--set", "archs=[\"VGG05\"]", "--set", "widths=[4,8,8,8]",
        "--set", "train.epochs=2",
    ];
    let gen: Vec<&str> = ["gen"].iter().chain(small.iter()).copied().collect();
    let o = expecta(&gen, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let exp: Vec<&str> = ["experiment-regularization"].iter().chain(small.iter()).copied().collect();
    let o = expecta(&exp, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&run_dir(&o).join("report/regularization.csv"));
    assert_eq!(rows.len(), 3);
    let s = schema("regularization_row.schema.json");
    for r in &rows {
        assert_valid(&s, r, "regularization.csv");
    }
}
