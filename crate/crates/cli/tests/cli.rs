use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use symcap_cli::input::BodyInput;
use tempfile::TempDir;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn symcap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symcap")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn rotation(theta: f64) -> String {
    let (c, s) = (theta.cos(), theta.sin());
    format!("[[{c:e},{:e}],[{s:e},{c:e}]]", -s)
}

fn p(x: &Path) -> &str {
    x.to_str().unwrap()
}

#[test]
fn tpsi_known_matrices() {
    let d = TempDir::new().unwrap();
    let id = write(d.path(), "id.json", "[[1,0],[0,1]]");
    let minus = write(d.path(), "minus.json", "[[-1,0,0,0],[0,-1,0,0],[0,0,-1,0],[0,0,0,-1]]");
    let rot = write(d.path(), "rot.json", &rotation(PI / 3.0));
    for (f, t) in [(&id, 2.0 * PI), (&minus, PI), (&rot, PI / 3.0)] {
        let v = json_of(&symcap(&["tpsi", p(f)]));
        assert!((v["t"].as_f64().unwrap() - t).abs() < 1e-9, "{v}");
    }
}

#[test]
fn exit_codes_and_stderr() {
    let d = TempDir::new().unwrap();
    let bad = write(d.path(), "bad.json", "[[2,0],[0,1]]");
    let out = symcap(&["tpsi", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_symplectic"));

    let garbage = write(d.path(), "garbage.json", "{not json");
    let id = write(d.path(), "id.json", "[[1,0],[0,1]]");
    let out = symcap(&["capacity", p(&id), p(&garbage)]);
    assert_eq!(out.status.code(), Some(2));

    // -I fixes only the origin, which lies outside this disc.
    let minus = write(d.path(), "minus.json", "[[-1,0],[0,-1]]");
    let off = write(d.path(), "off.json", r#"{"kind":"ball","radius":0.5,"center":[2.0,0.0]}"#);
    let out = symcap(&["capacity", p(&minus), p(&off)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_fixed_interior_point"));

    let out = symcap(&["capacity", p(&id), p(&off), "--max-iter", "0"]);
    assert_eq!(out.status.code(), Some(5));

    let out = symcap(&["oracle2d", p(&off), "--theta", "1.0"]);
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn capacity_of_discs_and_ellipse() {
    let d = TempDir::new().unwrap();
    let disc = write(d.path(), "disc.json", r#"{"kind":"ball","radius":1.0,"dim":2}"#);
    let ell = write(d.path(), "ell.json", r#"{"kind":"ellipsoid_axes","semi_axes":[1.0,2.0]}"#);
    let id = write(d.path(), "id.json", "[[1,0],[0,1]]");
    let quarter = write(d.path(), "q.json", &rotation(PI / 2.0));
    let carrier = d.path().join("carrier.csv");
    let v = json_of(&symcap(&["capacity", p(&id), p(&disc), "--emit-carrier", p(&carrier)]));
    assert!((v["value"].as_f64().unwrap() - PI).abs() < 1e-6);
    assert_eq!(v["method"], "dual_solver");
    let csv = std::fs::read_to_string(&carrier).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,q_1,p_1"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 3);
    for field in &row {
        let mantissa = field.split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 15, "{field}");
    }

    let v = json_of(&symcap(&["capacity", p(&quarter), p(&disc)]));
    assert!((v["value"].as_f64().unwrap() - PI / 4.0).abs() < 1e-6);
    let v = json_of(&symcap(&["capacity", p(&id), p(&ell)]));
    assert!((v["value"].as_f64().unwrap() - 2.0 * PI).abs() < 1e-3 * 2.0 * PI);
}

#[test]
fn ellipsoid_command() {
    let d = TempDir::new().unwrap();
    let id = write(d.path(), "id.json", "[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]");
    let s = write(d.path(), "s.json", "[[2,0,0,0],[0,0.5,0,0],[0,0,2,0],[0,0,0,0.5]]");
    let v = json_of(&symcap(&["ellipsoid", p(&id), p(&s)]));
    assert!((v["value"].as_f64().unwrap() - PI).abs() < 1e-8);
    assert_eq!(v["method"], "root_find");
}

#[test]
fn oracle_on_square() {
    let d = TempDir::new().unwrap();
    let sq = write(d.path(), "sq.json", r#"{"kind":"cuboid","half_widths":[1.0,1.0]}"#);
    let v = json_of(&symcap(&["oracle2d", p(&sq), "--theta", &format!("{}", 2.0 * PI)]));
    assert!((v["value"].as_f64().unwrap() - 4.0).abs() < 1e-8);
}

#[test]
fn deterministic_output() {
    let d = TempDir::new().unwrap();
    let body = write(
        d.path(),
        "b.json",
        r#"{"kind":"rounded","eps":0.1,"body":{"kind":"polytope","vertices":[[1,0],[0,1],[-1,0.2],[0,-1]]}}"#,
    );
    let rot = write(d.path(), "r.json", &rotation(2.0));
    let args = ["capacity", p(&rot), p(&body), "--restarts", "4", "--seed", "7"];
    let a = symcap(&args);
    let b = symcap(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let a = symcap(&["verify", "neduv", "--seed", "3"]);
    let b = symcap(&["verify", "neduv", "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn numbers_have_at_most_fifteen_digits() {
    let d = TempDir::new().unwrap();
    let rot = write(d.path(), "r.json", &rotation(1.0));
    let out = symcap(&["tpsi", p(&rot)]);
    let v = json_of(&out);
    let t = v["t"].as_f64().unwrap();
    let digits = format!("{t}").chars().filter(|c| c.is_ascii_digit()).count();
    assert!(digits <= 15, "{t}");
}

#[test]
fn billiard_in_square() {
    let d = TempDir::new().unwrap();
    let a = write(d.path(), "a.json", "[[1,0],[0,1]]");
    let sq = write(d.path(), "sq.json", r#"{"kind":"cuboid","half_widths":[1.0,1.0]}"#);
    let bounces = d.path().join("b.csv");
    let v = json_of(&symcap(&["billiard", p(&a), p(&sq), "--restarts", "4", "--emit-bounces", p(&bounces)]));
    let xi = v["value"].as_f64().unwrap();
    assert!((xi - 4.0).abs() < 0.02 * 4.0, "{xi}");
    assert!((v["bounds"]["width_upper"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    assert!(v["bounces"]["relative_gap"].as_f64().unwrap() < 0.01);
    let csv = std::fs::read_to_string(&bounces).unwrap();
    assert!(csv.starts_with("j,q_1,q_2,h_chord\n"));
}

#[test]
fn body_input_round_trip() {
    let text = r#"{"kind":"planar_product","factors":[
        {"kind":"ball","radius":1.0,"dim":2},
        {"kind":"translated","offset":[0.1,0.0],"body":{"kind":"cuboid","half_widths":[1,2]}}]}"#;
    let a = BodyInput::from_json(text).unwrap();
    let b = BodyInput::from_json(&a.to_json()).unwrap();
    assert_eq!(a, b);
    assert_eq!(b.build().unwrap().dim(), 4);
}
