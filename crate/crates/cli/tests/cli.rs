use std::path::Path;
use std::process::{Command, Output};

use artqr::raster::GrayImage;

const URL: &str = "https://example.org/artqr";

fn artqr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artqr"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn guidance(dir: &Path) {
    let g = GrayImage::from_fn(200, 200, |x, y| ((x * 255 / 199 + y / 3) % 256) as u8);
    g.save_png(dir.join("g.png")).unwrap();
}

#[test]
fn encode_then_verify_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = artqr(dir.path(), &["encode", "--message", URL, "--out", "code.png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("code.json").is_file());
    let o = artqr(dir.path(), &["verify", "code.png"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("e = 0\n"), "{out}");
    assert!(out.contains(&format!("decoded: {URL}")), "{out}");
}

#[test]
fn verify_without_sidecar_uses_detection() {
    let dir = tempfile::tempdir().unwrap();
    assert!(artqr(dir.path(), &["encode", "--message", URL, "--out", "code.png"]).status.success());
    std::fs::remove_file(dir.path().join("code.json")).unwrap();
    let o = artqr(dir.path(), &["verify", "code.png", "--message", URL]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("e = 0\n"));
    let o = artqr(dir.path(), &["verify", "code.png", "--message", "something else"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn blueprint_is_scannable_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    guidance(dir.path());
    for out in ["b.png", "c.png"] {
        let o = artqr(dir.path(), &["blueprint", "--message", URL, "--guidance", "g.png", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert!(dir.path().join("b.json").is_file());
    let o = artqr(dir.path(), &["verify", "b.png"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("e = 0\n"), "{}", stdout(&o));
    let b = artqr::raster::load_luminance(dir.path().join("b.png")).unwrap();
    let c = artqr::raster::load_luminance(dir.path().join("c.png")).unwrap();
    assert_eq!(b, c);
}

#[test]
fn verify_blank_image_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    GrayImage::filled(120, 120, 255).save_png(dir.path().join("blank.png")).unwrap();
    let o = artqr(dir.path(), &["verify", "blank.png"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NotFound"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = artqr(dir.path(), &["verify", "nowhere.png"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = artqr(dir.path(), &["blueprint", "--message", URL, "--guidance", "nowhere.png", "--out", "b.png"]);
    assert_eq!(o.status.code(), Some(2));
    let o = artqr(dir.path(), &["--config", "nowhere.cfg", "encode", "--message", URL, "--out", "x.png"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_settings_are_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = artqr(dir.path(), &["encode", "--message", URL, "--eta", "2", "--out", "x.png"]);
    assert_eq!(o.status.code(), Some(1));
    let o = artqr(dir.path(), &["encode", "--message", &"x".repeat(200), "--out", "x.png"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), format!("message = {URL}\nmodule_px = 12\nquiet = 0\n")).unwrap();
    let o = artqr(dir.path(), &["--config", "run.cfg", "encode", "--out", "a.png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(artqr::raster::load_luminance(dir.path().join("a.png")).unwrap().dims(), (37 * 12, 37 * 12));
    let o = artqr(dir.path(), &["--config", "run.cfg", "encode", "--module-px", "10", "--out", "b.png"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(artqr::raster::load_luminance(dir.path().join("b.png")).unwrap().dims(), (370, 370));
}

#[test]
fn refine_writes_image_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    guidance(dir.path());
    assert!(artqr(dir.path(), &["blueprint", "--message", URL, "--guidance", "g.png", "--out", "b.png"]).status.success());
    let o = artqr(
        dir.path(),
        &["refine", "--stylized", "g.png", "--blueprint", "b.png", "--out", "q.png", "--set", "iterations=12"],
    );
    // the stylized input must match the blueprint's size
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = artqr(
        dir.path(),
        &["refine", "--stylized", "b.png", "--blueprint", "b.png", "--out", "q.png", "--set", "iterations=12"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("q.png").is_file());
    let csv = std::fs::read_to_string(dir.path().join("q.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("iteration,e,L_m,L_c,L_h,total"));
    assert!(csv.lines().count() >= 2);
}

#[test]
fn simulate_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(artqr(dir.path(), &["encode", "--message", URL, "--out", "code.png"]).status.success());
    std::fs::write(
        dir.path().join("s.json"),
        r#"[{"display_size_cm": 5, "angle_deg": 90, "trials": 4}, {"display_size_cm": 3, "angle_deg": 45, "trials": 4, "noise_sigma": 2}]"#,
    )
    .unwrap();
    let o = artqr(dir.path(), &["simulate", "code.png", "--scenarios", "s.json", "--out", "r.json", "--table", "r.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r["rate"].as_f64(), Some(1.0));
    }
    let table = std::fs::read_to_string(dir.path().join("r.txt")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert_eq!(stdout(&o), table);
}
