use std::path::Path;
use std::process::Command;

use lunareg::eval::Algorithm;
use lunareg::Error;
use lunareg_cli::{dispatch, parse_config, parse_config_str, RunConfig, EXIT_FAILED, EXIT_OK, EXIT_USAGE};

fn lunareg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lunareg")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config_field(err: Error) -> String {
    match err {
        Error::ConfigInvalid { field, .. } => field,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn minimal_config_takes_defaults() {
    let c = parse_config_str(r#"{"source": "a.png", "reference": "b.png"}"#, None).unwrap();
    let d = RunConfig::default();
    assert_eq!(c.algorithm, Algorithm::Sift);
    assert_eq!(c.seed, 42);
    assert_eq!(c.ransac, d.ransac);
    assert_eq!(c.registration().ransac.seed, 42);
    assert!(c.emit.report && c.emit.warped);
}

#[test]
fn invalid_values_name_their_field() {
    let base = r#""source": "a.png", "reference": "b.png""#;
    let field = |extra: &str| config_field(parse_config_str(&format!("{{{base}, {extra}}}"), None).unwrap_err());
    assert_eq!(field(r#""ratio": 1.5"#), "ratio");
    assert_eq!(field(r#""algorithm": "external""#), "external_matches");
    assert_eq!(field(r#""ransac": {"threshold_px": -1}"#), "ransac.threshold_px");
    assert_eq!(field(r#""ransac": {"max_iter": 5}"#), "ransac.max_iter");
    assert_eq!(field(r#""dataset": """#), "dataset");
    assert_eq!(config_field(parse_config_str("{}", None).unwrap_err()), "source");
}

#[test]
fn config_round_trip_and_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.source = "imgs/a.png".into();
    c.reference = "imgs/b.png".into();
    c.algorithm = Algorithm::Akaze;
    c.ratio = Some(0.7);
    let file = dir.path().join("run.json");
    std::fs::write(&file, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    let back = parse_config(&file).unwrap();
    assert_eq!(back.source, dir.path().join("imgs/a.png"));
    assert_eq!(back.out_dir, dir.path().join("out"));
    assert_eq!(back.algorithm, Algorithm::Akaze);
    assert_eq!(back.ratio, Some(0.7));
    assert!(matches!(
        parse_config(&dir.path().join("missing.json")),
        Err(Error::InputUnreadable { .. })
    ));
}

#[test]
fn exit_codes_for_usage() {
    assert_eq!(dispatch(["lunareg", "--version"]), EXIT_OK);
    assert_eq!(dispatch(["lunareg", "frobnicate"]), EXIT_USAGE);
    assert_eq!(dispatch(["lunareg", "register"]), EXIT_USAGE);
    assert_eq!(
        dispatch([
            "lunareg",
            "register",
            "--source",
            "/nonexistent/a.png",
            "--reference",
            "/nonexistent/b.png"
        ]),
        EXIT_USAGE
    );
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = lunareg(&[
            "synth",
            "--seed",
            "9",
            "--size",
            "128",
            "--craters",
            "8",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "reference.png",
        "reference.geo.json",
        "source.png",
        "truth.csv",
        "h_true.json",
        "scene.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn register_writes_products_and_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let o = lunareg(&[
        "synth",
        "--seed",
        "2",
        "--size",
        "256",
        "--craters",
        "20",
        "--out",
        path(&scene),
    ]);
    assert!(o.status.success());
    let src = scene.join("source.png");
    let reference = scene.join("reference.png");
    let truth = scene.join("truth.csv");

    let ok = dir.path().join("ok");
    let o = lunareg(&[
        "register",
        "--source",
        path(&src),
        "--reference",
        path(&reference),
        "--truth",
        path(&truth),
        "--out",
        path(&ok),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&o.stderr));
    for name in [
        "report.csv",
        "report.json",
        "homography.json",
        "matches.csv",
        "warped.png",
        "composite.png",
    ] {
        assert!(ok.join(name).exists(), "missing {name}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(ok.join("report.json")).unwrap()).unwrap();
    assert_eq!(report[0]["status"], "ok");
    assert!(report[0]["rmse_x"].as_f64().unwrap() < 1.0);

    let flat_dir = dir.path().join("flat");
    std::fs::create_dir(&flat_dir).unwrap();
    let flat = flat_dir.join("flat.png");
    lunareg::io::write_raster(&lunareg::GeoRaster::from_fn_u8(64, 64, |_, _| 100).unwrap(), &flat).unwrap();
    let failed = dir.path().join("failed");
    let o = lunareg(&[
        "register",
        "--source",
        path(&flat),
        "--reference",
        path(&reference),
        "--out",
        path(&failed),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_FAILED));
    let csv = std::fs::read_to_string(failed.join("report.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[2], row[3], row[14]), ("NA", "NA", "failed"));
}

#[test]
fn detect_and_match_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    assert!(lunareg(&[
        "synth",
        "--seed",
        "4",
        "--size",
        "192",
        "--craters",
        "12",
        "--out",
        path(&scene)
    ])
    .status
    .success());
    let out = dir.path().join("out");
    let o = lunareg(&[
        "detect",
        "--input",
        path(&scene.join("source.png")),
        "--algorithm",
        "sift",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        std::fs::read_to_string(out.join("source_keypoints.jsonl"))
            .unwrap()
            .lines()
            .count()
            > 0
    );
    let o = lunareg(&[
        "match",
        "--source",
        path(&scene.join("source.png")),
        "--reference",
        path(&scene.join("reference.png")),
        "--algorithm",
        "akaze",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("matches.csv").exists() && out.join("matches.png").exists());
    let o = lunareg(&[
        "preprocess",
        "--input",
        path(&scene.join("source.png")),
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("source_preprocessed.png").exists());
}
