use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polystab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DEADBEAT: &str = r#"{"n":1,"m":1,"modes":[{"name":"a","A":[[2]],"B":[[1]]}]}"#;
const TWO_MODE: &str = r#"{"n":1,"m":1,"modes":[{"name":"p","A":[[2]],"B":[[1]]},{"name":"q","A":[[-2]],"B":[[1]]}]}"#;
const STABLE: &str = r#"{"n":1,"m":0,"modes":[{"name":"a","A":[[0.5]],"B":[[]]}]}"#;
const ROTATION: &str =
    r#"{"n":2,"m":0,"modes":[{"name":"r","A":[[0.4330127018922193,-0.25],[0.25,0.4330127018922193]],"B":[[],[]]}]}"#;
const EMBEDDED: &str = r#"{"n":2,"m":1,"modes":[{"name":"a","A":[[3,0],[0,0.5]],"B":[[1],[0]]}]}"#;
const PLANAR: &str = r#"{"n":2,"m":1,"modes":[
    {"name":"a","A":[[1.2,0.5],[0,0.6]],"B":[[1],[0]]},
    {"name":"b","A":[[0.5,0],[0.6,1.2]],"B":[[0.4],[1]]}]}"#;

#[test]
fn synthesize_exit_codes() {
    let dir = TempDir::new().unwrap();
    let db = write(&dir, "db.json", DEADBEAT);
    let tm = write(&dir, "tm.json", TWO_MODE);
    let cert = dir.path().join("c.json");

    let out = run(&["synthesize", "--system", s(&db), "--mode-independent", "--out", s(&cert)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("status=Converged iters=1 rho=0 c2="), "{}", stdout(&out));
    assert!(cert.exists());

    let out = run(&["synthesize", "--system", s(&tm), "--mode-independent"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).starts_with("status=Diverged"));

    let out = run(&["synthesize", "--system", s(&tm), "--mode-dependent"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains(" rho=0 "));

    let out = run(&["synthesize", "--system", s(&write(&dir, "st.json", STABLE)), "--tol", "1e-3", "--max-iters", "3"]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).starts_with("status=MaxItersReached"));
}

#[test]
fn usage_and_input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let db = write(&dir, "db.json", DEADBEAT);
    assert_eq!(code(&run(&["synthesize", "--system", s(&db), "--bogus"])), 1);
    assert_eq!(code(&run(&["synthesize", "--system", s(&db), "--mode-independent", "--mode-dependent"])), 1);
    assert_eq!(code(&run(&["synthesize", "--system", "/nonexistent/sys.json"])), 1);
    let bad = write(&dir, "bad.json", r#"{"n":1,"m":1,"modes":[{"name":"a","A":[[1,2]],"B":[[1]]}]}"#);
    let out = run(&["synthesize", "--system", s(&bad)]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());
    assert_eq!(code(&run(&["synthesize", "--system", s(&db), "--directions", "7"])), 1);
}

#[test]
fn compare_reports_both_syntheses() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("cmp.json");
    let out = run(&["compare", "--system", s(&write(&dir, "tm.json", TWO_MODE)), "--out", s(&report)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["ifs"]["status"], "Diverged");
    assert_eq!(v["dfs"]["status"], "Converged");
    assert!(v["dfs"]["rho"].as_f64().unwrap() <= 1e-9);

    let out = run(&["compare", "--system", s(&write(&dir, "db.json", DEADBEAT)), "--out", s(&report)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["ifs"]["status"], "Converged");
    assert_eq!(v["dfs"]["status"], "Converged");

    let out = run(&["compare", "--system", s(&write(&dir, "st.json", STABLE)), "--out", s(&report)]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["ifs"]["rho"], v["dfs"]["rho"]);

    let unstable = r#"{"n":1,"m":0,"modes":[{"name":"a","A":[[2]],"B":[[]]}]}"#;
    let out = run(&["compare", "--system", s(&write(&dir, "un.json", unstable))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_hand_recursion_and_zero_state() {
    let dir = TempDir::new().unwrap();
    let tm = write(&dir, "tm.json", TWO_MODE);
    let cert = dir.path().join("d.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&tm), "--mode-dependent", "--out", s(&cert)])), 0);
    let csv = dir.path().join("t.csv");
    let out = run(&[
        "simulate", "--system", s(&tm), "--cert", s(&cert), "--signal", "periodic:0,1", "--steps", "3", "--x0", "1",
        "--csv", s(&csv),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "gamma_hat=0 violations=0");
    let text = fs::read_to_string(&csv).unwrap();
    let xs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(xs, vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(text.lines().next().unwrap(), "k,mode,x0,u0,V");

    let db = write(&dir, "db2.json", EMBEDDED);
    let c2 = dir.path().join("c2.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&db), "--directions", "72", "--out", s(&c2)])), 0);
    let out = run(&["simulate", "--system", s(&db), "--cert", s(&c2), "--x0", "0,0", "--steps", "5"]);
    assert_eq!(code(&out), 0);
    for line in stdout(&out).lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2], "0");
        assert_eq!(fields[3], "0");
    }
}

#[test]
fn simulate_rejects_foreign_certificate() {
    let dir = TempDir::new().unwrap();
    let db = write(&dir, "db.json", DEADBEAT);
    let tm = write(&dir, "tm.json", TWO_MODE);
    let cert = dir.path().join("c.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&db), "--out", s(&cert)])), 0);
    let out = run(&["simulate", "--system", s(&tm), "--cert", s(&cert), "--x0", "1"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(&["simulate", "--system", s(&db), "--cert", s(&cert), "--x0", "1,2"])), 1);
    assert_eq!(code(&run(&["simulate", "--system", s(&db), "--cert", s(&cert), "--x0", "1", "--signal", "often"])), 1);
}

#[test]
fn disturbed_adversarial_run_is_bit_identical() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "p.json", PLANAR);
    let cert = dir.path().join("c.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&sys), "--directions", "120", "--out", s(&cert)])), 0);
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let csv = dir.path().join(name);
        let out = run(&[
            "simulate", "--system", s(&sys), "--cert", s(&cert), "--signal", "adversarial", "--disturbance", "0.01",
            "--seed", "7", "--x0", "1,-0.5", "--steps", "40", "--csv", s(&csv),
        ]);
        assert_eq!(code(&out), 0);
        outputs.push(fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8(outputs[0].clone()).unwrap().lines().count(), 42);
}

#[test]
fn certify_exit_codes_and_report() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "p.json", PLANAR);
    let cert = dir.path().join("c.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&sys), "--directions", "120", "--out", s(&cert)])), 0);
    let report = dir.path().join("r.json");
    let out = run(&["certify", "--system", s(&sys), "--cert", s(&cert), "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["tool_version"].is_string());
    assert!(v["system_hash"].is_string());
    assert!(v["certificate_hash"].is_string());
    assert_eq!(v["sector_certificate"]["pass"], true);

    let out = run(&["certify", "--system", s(&sys), "--cert", s(&cert), "--tol", "1e-15"]);
    assert_eq!(code(&out), 2);

    let tm = write(&dir, "tm.json", TWO_MODE);
    let diverged = dir.path().join("dv.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&tm), "--out", s(&diverged)])), 2);
    assert_eq!(code(&run(&["certify", "--system", s(&tm), "--cert", s(&diverged)])), 2);
    assert_eq!(code(&run(&["certify", "--system", s(&tm), "--cert", s(&cert)])), 1);
}

#[test]
fn ball_of_scaled_euclidean_norm() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "r.json", ROTATION);
    let cert = dir.path().join("c.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&sys), "--out", s(&cert)])), 0);
    let out = run(&["ball", "--cert", s(&cert)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    assert!(pts.len() <= 361);
    assert_eq!(pts.first(), pts.last());
    // V = ‖x‖ / (1 − 0.5), so the ball is the circle of radius 1/2
    let worst = pts.iter().map(|(x, y)| (x.hypot(*y) / 0.5 - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 2e-4, "radial deviation {worst}");
}

#[test]
fn ball_symmetry_and_errors() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "e.json", EMBEDDED);
    let cert = dir.path().join("c.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&sys), "--directions", "72", "--out", s(&cert)])), 0);
    let csv = dir.path().join("ball.csv");
    assert_eq!(code(&run(&["ball", "--cert", s(&cert), "--csv", s(&csv)])), 0);
    let text = fs::read_to_string(&csv).unwrap();
    let pts: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    let k = pts.len() - 1;
    assert_eq!(k % 2, 0);
    for j in 0..k / 2 {
        assert_eq!(pts[j + k / 2], (-pts[j].0, -pts[j].1));
    }

    let db = write(&dir, "db.json", DEADBEAT);
    let c1 = dir.path().join("c1.json");
    assert_eq!(code(&run(&["synthesize", "--system", s(&db), "--out", s(&c1)])), 0);
    assert_eq!(code(&run(&["ball", "--cert", s(&c1)])), 1);
    let bad = write(&dir, "bad.json", "{\"vertices\": ");
    let out = run(&["ball", "--cert", s(&bad)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));
}

#[test]
fn synthesize_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let sys = write(&dir, "p.json", PLANAR);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert_eq!(code(&run(&["synthesize", "--system", s(&sys), "--directions", "120", "--out", s(p)])), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
