use std::path::Path;
use std::process::{Command, Output};

fn berkson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_berkson"))
        .args(args)
        .env_remove("BERKSON_QUAD_ORDER")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn tabulate_writes_csv() {
    let out = berkson(&["tabulate", "--k", "0", "--v", "1", "--xmin", "-1", "--xmax", "1", "--step", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,L_0");
    assert_eq!(lines.len(), 6);
    let mid: Vec<f64> = lines[3].split(',').map(|t| t.parse().unwrap()).collect();
    assert_eq!(mid, vec![0.0, 0.5]);

    let out = berkson(&["tabulate", "--k", "1", "--v", "0", "--xmin", "0", "--xmax", "0", "--step", "1", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"][0]["value"].as_f64().unwrap(), 0.25);
}

#[test]
fn verify_default_grids_pass() {
    for lemma in ["key-inequality", "third-deriv", "curvature-sign", "aux-f"] {
        let out = berkson(&["verify", "--lemma", lemma]);
        assert_eq!(out.status.code(), Some(0), "{lemma}: {}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["passed"], true);
        assert!(v["grid"].is_string() && v["max_violation"].is_number() && v["worst"].is_array());
    }
    let out = berkson(&["verify", "--lemma", "aux-f", "--grid", "x=0.5,1;v=1;d=0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["points"], 2);
    let out = berkson(&["verify", "--lemma", "aux-f", "--grid", "x=-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identify_equal_variances() {
    let out = berkson(&["identify", "--left", "0,1,1", "--right", "1,2,1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["case"], "EqualVariances");
    let roots = v["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 1);
    assert_eq!(roots[0].as_f64().unwrap(), -1.0);

    let out = berkson(&["identify", "--left", "0,1,1", "--right", "0,1,1"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["is_identity"], true);
}

#[test]
fn identify_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.csv");
    std::fs::write(&design, "x0\n0\n1\n-0\n2\n").unwrap();
    let out = berkson(&["identify", "--design", p(&design), "--tau-known"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["identifiable"], true);
    assert_eq!(v["support_points"], 3);
    let out = berkson(&["identify", "--design", p(&design)]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["identifiable"], false);
    let out = berkson(&["identify", "--support", "infinite"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["identifiable"], true);
}

#[test]
fn simulate_requires_seed() {
    let out = berkson(&["simulate", "--b0", "0.3", "--b1", "1.2", "--tau2", "0.25", "--dist", "normal,0,4", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let out = berkson(&["simulate", "--b0", "0", "--b1", "1", "--tau2", "0.5", "--dist", "cauchy,0,1", "--n", "3", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for path in [&a, &b] {
        let out = berkson(&[
            "simulate", "--b0", "0.3", "--b1", "1.2", "--tau2", "0.25", "--dist", "normal,0,4", "--n", "500", "--seed", "5",
            "-o", p(path),
        ]);
        assert!(out.status.success());
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert!(ta.starts_with(b"x0,y\n"));
    assert_eq!(ta.iter().filter(|&&c| c == b'\n').count(), 501);
    let c = dir.path().join("c.csv");
    berkson(&[
        "simulate", "--b0", "0.3", "--b1", "1.2", "--tau2", "0.25", "--dist", "normal,0,4", "--n", "500", "--seed", "6",
        "-o", p(&c),
    ]);
    assert_ne!(std::fs::read(&c).unwrap(), ta);
}

#[test]
fn simulate_then_fit_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.csv");
    let mut text = String::from("x0\n");
    for i in 0..2000 {
        text.push_str(&format!("{}\n", -3.0 + 6.0 * i as f64 / 1999.0));
    }
    std::fs::write(&design, text).unwrap();
    let data = dir.path().join("data.csv");
    let out = berkson(&["simulate", "--b0", "0.3", "--b1", "1.2", "--tau2", "0.25", "--design", p(&design), "--seed", "9", "-o", p(&data)]);
    assert!(out.status.success());
    let (f1, f2) = (dir.path().join("f1.json"), dir.path().join("f2.json"));
    for f in [&f1, &f2] {
        let out = berkson(&["fit", "--data", p(&data), "--tau2", "0.25", "-o", p(f)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&f1).unwrap(), std::fs::read(&f2).unwrap());
    let v = json(&f1);
    assert_eq!(v["converged"], true);
    assert_eq!(v["tau2_known"].as_f64().unwrap(), 0.25);
    let b1 = v["estimate"]["b1"].as_f64().unwrap();
    assert!((b1 - 1.2).abs() < 0.3, "{b1}");

    let f3 = dir.path().join("f3.json");
    let out = berkson(&["fit", "--data", p(&data), "--unknown-tau", "-o", p(&f3)]);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let v = json(&f3);
    assert!(v.get("tau2_known").is_none());
    assert!(v["estimate"]["s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fit_separated_data_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ones.csv");
    std::fs::write(&data, "x0,y\n0,1\n1,1\n2,1\n").unwrap();
    let out = berkson(&["fit", "--data", p(&data), "--tau2", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], false);
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "x0,y\n0.5,1\n1.5,0\noops,1\n").unwrap();
    let out = berkson(&["fit", "--data", p(&data), "--tau2", "0"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn quad_order_env_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_berkson"))
        .args(["tabulate", "--k", "0", "--v", "0.5", "--xmin", "0", "--xmax", "1", "--step", "1"])
        .env("BERKSON_QUAD_ORDER", "4")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_berkson"))
        .args(["tabulate", "--k", "0", "--v", "0.5", "--xmin", "0.7", "--xmax", "0.7", "--step", "1"])
        .env("BERKSON_QUAD_ORDER", "96")
        .output()
        .unwrap();
    assert!(out.status.success());
    let base = berkson(&["tabulate", "--k", "0", "--v", "0.5", "--xmin", "0.7", "--xmax", "0.7", "--step", "1"]);
    let val = |o: &Output| -> f64 {
        String::from_utf8_lossy(&o.stdout).lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((val(&out) - val(&base)).abs() < 1e-14);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(berkson(&["fit", "--bogus"]).status.code(), Some(2));
}
