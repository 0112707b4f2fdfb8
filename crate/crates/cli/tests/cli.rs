//! End-to-end runs of the `oneform` binary on small JSON inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("oneform-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn oneform(args: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oneform")).args(args).output().unwrap()
}

fn arg(s: &str) -> &Path {
    Path::new(s)
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const ALPHA: &str = r#"{"version":1,"n":3,"m":2,"records":[
  {"point_id":"p0","weight":0.5,"matrix":[1,0,0,1,0,0]},
  {"point_id":"p1","weight":0.5,"matrix":[2,0,0,1,0,0.5]}]}"#;

const BETA: &str = r#"{"version":1,"n":3,"m":2,"records":[
  {"point_id":"p0","weight":0.5,"matrix":[0,1,-1,0,0,0]},
  {"point_id":"p1","weight":0.5,"matrix":[1,1,0,1,0,0]}]}"#;

#[test]
fn worked_pair_has_unit_distance() {
    let dir = scratch("worked");
    let a = write(&dir, "a.json", r#"{"version":1,"n":2,"m":1,"matrix":[1,0]}"#);
    let b = write(&dir, "b.json", r#"{"version":1,"n":2,"m":1,"matrix":[0.75,1]}"#);
    let out = oneform(&[arg("fiber-dist"), &a, &b]);
    assert_eq!(out.status.code(), Some(0));
    let rec = &lines(&out)[0];
    assert_eq!(rec["method"], "shooting");
    assert!((rec["value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(rec["lower_bound"].as_f64().unwrap() <= 1.0);
    assert!(rec["elapsed_ms"].is_null());
}

#[test]
fn geodesic_samples_follow_the_closed_form() {
    let dir = scratch("geodesic");
    let a = write(&dir, "a.json", r#"{"version":1,"n":2,"m":1,"matrix":[1,0]}"#);
    let z = write(&dir, "z.json", r#"{"version":1,"n":2,"m":1,"matrix":[0,1]}"#);
    let out = oneform(&[arg("fiber-geodesic"), &a, &z, arg("--t-samples"), arg("5")]);
    assert_eq!(out.status.code(), Some(0));
    let recs = lines(&out);
    assert_eq!(recs.len(), 5);
    for rec in recs {
        let t = rec["t"].as_f64().unwrap();
        let m: Vec<f64> = rec["matrix"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((m[0] - (1.0 - t * t / 4.0)).abs() < 1e-11);
        assert!((m[1] - t).abs() < 1e-11);
    }
}

#[test]
fn blowup_exits_with_partial_report() {
    let dir = scratch("blowup");
    let a = write(&dir, "a.json", r#"{"version":1,"n":2,"m":1,"matrix":[1,0]}"#);
    // Pure shrinking: trZ = -4, blow-up at t = 1/2.
    let z = write(&dir, "z.json", r#"{"version":1,"n":2,"m":1,"matrix":[-4,0]}"#);
    let out = oneform(&[arg("fiber-geodesic"), &a, &z, arg("--t-samples"), arg("3")]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(lines(&out).len(), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("singular stratum"));
}

#[test]
fn identical_fields_are_at_distance_zero() {
    let dir = scratch("identical");
    let f = write(&dir, "f.json", ALPHA);
    let g = write(&dir, "g.json", ALPHA);
    let out = oneform(&[arg("field-dist"), &f, &g]);
    assert_eq!(out.status.code(), Some(0));
    let recs = lines(&out);
    assert_eq!(recs.len(), 3);
    assert_eq!(recs[0]["point_id"], "p0");
    assert_eq!(recs[2]["value"].as_f64(), Some(0.0));
}

#[test]
fn completion_mode_accepts_singular_samples() {
    let dir = scratch("completion");
    let f = write(&dir, "f.json", ALPHA);
    let singular = ALPHA.replace("[2,0,0,1,0,0.5]", "[1,2,2,4,0,0]");
    let g = write(&dir, "g.json", &singular);
    assert_eq!(oneform(&[arg("field-dist"), &f, &g]).status.code(), Some(2));
    let out = oneform(&[arg("field-dist"), &f, &g, arg("--completion")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(lines(&out)[0]["method"], "completion");
}

#[test]
fn align_mismatch_names_the_points() {
    let dir = scratch("align-bad");
    let f = write(&dir, "f.json", ALPHA);
    let g = write(&dir, "g.json", BETA);
    let out = oneform(&[arg("align"), &f, &g, arg("--out"), &dir.join("o.json")]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"p1\"") && !err.contains("\"p0\""), "{err}");
    assert!(!dir.join("o.json").exists());
}

#[test]
fn align_writes_rotations() {
    let dir = scratch("align");
    let f = write(&dir, "f.json", ALPHA);
    let rotated = ALPHA.replace("[1,0,0,1,0,0]", "[0,1,-1,0,0,0]").replace("[2,0,0,1,0,0.5]", "[0,1,-2,0,0,0.5]");
    let g = write(&dir, "g.json", &rotated);
    let o = dir.join("o.json");
    let out = oneform(&[arg("align"), &f, &g, arg("--out"), &o]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(lines(&out)[0]["value"].as_f64().unwrap() < 1e-10);
    let file: Value = serde_json::from_str(&fs::read_to_string(o).unwrap()).unwrap();
    assert_eq!(file["kind"], "rotation");
    assert_eq!(file["records"][1]["matrix"].as_array().unwrap().len(), 9);
}

#[test]
fn interpolation_at_zero_round_trips() {
    let dir = scratch("interp");
    let f = write(&dir, "f.json", ALPHA);
    let g = write(&dir, "g.json", BETA);
    let mid = dir.join("mid.json");
    let out = oneform(&[arg("field-interp"), &f, &g, arg("--t"), arg("0"), arg("--out"), &mid]);
    assert_eq!(out.status.code(), Some(0));
    let written: Value = serde_json::from_str(&fs::read_to_string(&mid).unwrap()).unwrap();
    let original: Value = serde_json::from_str(ALPHA).unwrap();
    for (w, o) in written["records"].as_array().unwrap().iter().zip(original["records"].as_array().unwrap()) {
        assert_eq!(w["point_id"], o["point_id"]);
        let diff = w["matrix"]
            .as_array()
            .unwrap()
            .iter()
            .zip(o["matrix"].as_array().unwrap())
            .map(|(x, y)| (x.as_f64().unwrap() - y.as_f64().unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }
    // The written file is itself a valid input.
    assert_eq!(oneform(&[arg("field-dist"), &mid, &f]).status.code(), Some(0));
}

#[test]
fn metric_projection_feeds_sym_dist() {
    let dir = scratch("metric");
    let f = write(&dir, "f.json", ALPHA);
    let g = write(&dir, "g.json", BETA);
    let (gf, gg) = (dir.join("gf.json"), dir.join("gg.json"));
    assert_eq!(oneform(&[arg("project-metric"), &f, arg("--out"), &gf]).status.code(), Some(0));
    assert_eq!(oneform(&[arg("project-metric"), &g, arg("--out"), &gg]).status.code(), Some(0));
    let out = oneform(&[arg("sym-dist"), &gf, &gg]);
    assert_eq!(out.status.code(), Some(0));
    let rec = &lines(&out)[0];
    let fiber = lines(&oneform(&[arg("field-dist"), &f, &g]))[2]["value"].as_f64().unwrap();
    let value = rec["value"].as_f64().unwrap();
    assert!(value <= fiber + 1e-9 && value >= rec["lower_bound"].as_f64().unwrap() - 1e-9);
}

#[test]
fn sym_dist_of_scalars() {
    let dir = scratch("scalars");
    let one = write(&dir, "one.json", r#"{"version":1,"n":1,"m":1,"matrix":[1]}"#);
    let four = write(&dir, "four.json", r#"{"version":1,"n":1,"m":1,"matrix":[4]}"#);
    let out = oneform(&[arg("sym-dist"), &one, &four, arg("--n"), arg("2")]);
    assert_eq!(out.status.code(), Some(0));
    let value = lines(&out)[0]["value"].as_f64().unwrap();
    assert!((value - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-8);
    assert_eq!(oneform(&[arg("sym-dist"), &one, &four]).status.code(), Some(2));
}

#[test]
fn malformed_input_names_the_field() {
    let dir = scratch("malformed");
    let f = write(&dir, "f.json", ALPHA);
    let short = write(&dir, "short.json", &ALPHA.replace("[2,0,0,1,0,0.5]", "[2,0,0,1]"));
    let out = oneform(&[arg("field-dist"), &short, &f]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("records[1].matrix"));

    let weight = write(&dir, "weight.json", &ALPHA.replace("\"weight\":0.5,\"matrix\":[2", "\"weight\":0,\"matrix\":[2"));
    let out = oneform(&[arg("field-dist"), &weight, &weight]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("records[1].weight"));

    let missing = write(&dir, "missing.json", r#"{"version":1,"n":2,"m":1}"#);
    let out = oneform(&[arg("dist-to-singular"), &missing]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("matrix"));

    let rank = write(&dir, "rank.json", r#"{"version":1,"n":3,"m":2,"matrix":[1,2,2,4,0,0]}"#);
    assert_eq!(oneform(&[arg("dist-to-singular"), &rank]).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = scratch("repeat");
    let f = write(&dir, "f.json", ALPHA);
    let g = write(&dir, "g.json", BETA);
    let first = oneform(&[arg("field-dist"), &f, &g]);
    let second = oneform(&[arg("field-dist"), &f, &g]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);

    let (m1, m2) = (dir.join("m1.json"), dir.join("m2.json"));
    oneform(&[arg("field-interp"), &f, &g, arg("--t"), arg("0.3"), arg("--out"), &m1]);
    oneform(&[arg("field-interp"), &f, &g, arg("--t"), arg("0.3"), arg("--out"), &m2]);
    assert_eq!(fs::read(m1).unwrap(), fs::read(m2).unwrap());
}

#[test]
fn timing_fills_elapsed() {
    let dir = scratch("timing");
    let a = write(&dir, "a.json", r#"{"version":1,"n":2,"m":1,"matrix":[1,0]}"#);
    let out = oneform(&[arg("dist-to-singular"), &a, arg("--timing")]);
    let rec = &lines(&out)[0];
    assert!(rec["elapsed_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(rec["value"].as_f64(), Some(2.0));
}

#[test]
fn in_process_runner_matches_the_binary() {
    let dir = scratch("in-process");
    let a = write(&dir, "a.json", r#"{"version":1,"n":2,"m":1,"matrix":[1,0]}"#);
    let b = write(&dir, "b.json", r#"{"version":1,"n":2,"m":1,"matrix":[0.75,1]}"#);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let args = ["oneform".into(), "fiber-dist".into(), a.clone().into_os_string(), b.clone().into_os_string()];
    let code = oneform_cli::run::<_, std::ffi::OsString>(args, &mut out, &mut err);
    assert_eq!(code, 0);
    assert_eq!(out, oneform(&[arg("fiber-dist"), &a, &b]).stdout);
}
