use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn triform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triform")).args(args).current_dir(root()).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn malformed_system_exits_with_2() {
    let tmp = TempDir::new().unwrap();
    let sys = write(&tmp, "bad.sys", "states x1 x2\ninputs u\nf = [x2, x1 +]\ng = [[0],[1]]\nh = x1\n");
    let out = triform(&["validate", "--system", path(&sys)]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn inconsistent_config_exits_with_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "bad.json", r#"{ "region": { "lower": [-1, -1], "upper": [1, 1] } }"#);
    let out = triform(&["analyze", "--system", "systems/example1.sys", "--config", path(&cfg)]);
    assert_eq!(code(&out), 3);
    let cfg = write(&tmp, "unknown.json", r#"{ "regoin": {} }"#);
    assert_eq!(code(&triform(&["validate", "--system", "systems/example1.sys", "--config", path(&cfg)])), 3);
}

#[test]
fn missing_form_exits_with_3() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nowhere.json");
    let out = triform(&[
        "simulate",
        "--system",
        "systems/example1.sys",
        "--config",
        "configs/example1_observer.json",
        "--form",
        path(&missing),
        "--out",
        path(tmp.path()),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn synthetic_transform_is_refused_with_a_mirror_witness() {
    let tmp = TempDir::new().unwrap();
    let out = triform(&["transform", "--system", "systems/synthetic.sys", "--config", "configs/synthetic.json", "--out", path(tmp.path())]);
    assert_eq!(code(&out), 4);
    assert!(!tmp.path().join("form.json").exists());
    let r = report(tmp.path());
    assert!(r["results"]["refusal"].as_str().unwrap().contains("order 3"));
    assert!(r["verdicts"].as_array().unwrap().iter().any(|v| v["status"] == "fail"));
}

#[test]
fn analyze_reports_strong_order_five_and_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = triform(&["analyze", "--system", "systems/example1.sys", "--config", "configs/example1_analyze.json", "--out", path(dir)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    let r = report(&a);
    assert_eq!(r["command"], "analyze");
    assert!(r["report_version"].is_string() || r["report_version"].is_number());
    assert_eq!(r["results"]["strong_order"], 5);
    assert!(a.join("metadata.json").exists());
}

#[test]
fn bilinear_transform_then_simulate_converges() {
    let tmp = TempDir::new().unwrap();
    let (t, s) = (tmp.path().join("t"), tmp.path().join("s"));
    let common = ["--system", "systems/example2.sys", "--config", "configs/example2_form.json"];
    let out = triform(&[&["transform"][..], &common, &["--out", path(&t)]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let form = t.join("form.json");
    assert!(form.exists());
    let out = triform(&[&["simulate"][..], &common, &["--form", path(&form), "--out", path(&s)]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&s);
    let run = &r["results"]["runs"][0];
    assert!(run["final_z_error"].as_f64().unwrap() < 1e-3, "{run}");
    assert_eq!(run["degraded"], false);
    let traces = std::fs::read_to_string(s.join("traces.csv")).unwrap();
    assert!(traces.starts_with("t,x1,x2,x3,z1,"), "{}", traces.lines().next().unwrap());
}

#[test]
fn leaving_the_region_exits_with_5() {
    let tmp = TempDir::new().unwrap();
    let (t, s) = (tmp.path().join("t"), tmp.path().join("s"));
    let out = triform(&["transform", "--system", "systems/example1.sys", "--config", "configs/example1_observer.json", "--out", path(&t)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    // u = +1 drives x3 past the upper edge of the region
    let cfg = write(
        &tmp,
        "escape.json",
        r#"{
          "seed": 1,
          "region": { "lower": [-1, -1, 0.6], "upper": [14, 6, 1.8], "grid": 9, "random": 200 },
          "orders": { "n_t": 2, "d_z": 3 },
          "simulation": { "x0": [0, 0, 1], "horizon": 5, "dt": 0.001, "input": { "constant": [1] } }
        }"#,
    );
    let form = t.join("form.json");
    let out = triform(&["simulate", "--system", "systems/example1.sys", "--config", path(&cfg), "--form", path(&form), "--out", path(&s)]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tangent_sim_finds_the_unobservable_direction() {
    let tmp = TempDir::new().unwrap();
    let out = triform(&["tangent-sim", "--system", "systems/example2.sys", "--config", "configs/example2_tangent.json", "--out", path(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = &report(tmp.path())["results"];
    assert_eq!(r["witness"], true);
    assert!(r["sup_w"].as_f64().unwrap() < 1e-12);
    assert_eq!(r["infinitesimal_rank"]["rank"], 2);
    let trace = std::fs::read_to_string(tmp.path().join("tangent_trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t,x1,x2,x3,v1,v2,v3,w");
}
