use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dentseg::image::save_image;
use dentseg::phantom::{default_batch_specs, generate, PhantomSpec};
use dentseg::GrayImage;

fn dentseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dentseg"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn four_tooth_film(dir: &Path) -> PathBuf {
    let spec = PhantomSpec {
        width: 480,
        height: 600,
        tooth_count: 4,
        canal_teeth: vec![],
        noise_sigma: 0.0,
        ..PhantomSpec::default()
    };
    let path = dir.join("four.pgm");
    save_image(&generate(&spec).unwrap().0, &path).unwrap();
    path
}

fn fig7() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/fig7.csv").to_string()
}

#[test]
fn evaluate_prints_the_table() {
    let o = dentseg(&["evaluate", &fig7()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Opt", "1st", "2nd", "3rd", "Fail"]);
    let values: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(values, ["77.32", "19.06", "3.62", "0.00", "0.00"]);

    let o = dentseg(&["evaluate", &fig7(), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["film_totals"], serde_json::json!([0, 5, 16, 22, 8]));
}

#[test]
fn exit_codes() {
    assert_eq!(dentseg(&["--help"]).status.code(), Some(0));
    assert_eq!(dentseg(&["--version"]).status.code(), Some(0));
    assert_eq!(dentseg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(dentseg(&["segment"]).status.code(), Some(1));
    assert_eq!(
        dentseg(&["segment", "x.pgm", "--tol", "nope"])
            .status
            .code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let missing = dentseg(&["segment", p(&dir.path().join("absent.pgm"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: "));

    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "j,1,2\n0,1,0\n1,0,0\n2,3,0\n").unwrap();
    assert_eq!(dentseg(&["evaluate", p(&bad_csv)]).status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "no_such_key = 1\n").unwrap();
    let film = four_tooth_film(dir.path());
    assert_eq!(
        dentseg(&["segment", p(&film), "--config", p(&bad_cfg)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn blank_film_segments_to_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let blank = dir.path().join("blank.pgm");
    save_image(&GrayImage::filled(300, 200, 0.0).unwrap(), &blank).unwrap();
    let o = dentseg(&["segment", p(&blank)]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["separators"], serde_json::json!([]));
    assert_eq!(v["tooth_count"], 1);
    assert_eq!(v["rotation"]["sets_used"], 0);
}

#[test]
fn outputs_are_refused_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let film = four_tooth_film(dir.path());
    let out = dir.path().join("res.json");
    let overlay = dir.path().join("overlay.png");
    let args = [
        "segment",
        p(&film),
        "--out",
        p(&out),
        "--overlay",
        p(&overlay),
    ];
    assert_eq!(dentseg(&args).status.code(), Some(0));
    let first = std::fs::read(&out).unwrap();
    assert_eq!(dentseg(&args).status.code(), Some(1));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(dentseg(&forced).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), first);
    assert!(std::fs::metadata(&overlay).unwrap().len() > 0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let film = four_tooth_film(dir.path());
    for args in [
        vec!["segment", p(&film)],
        vec!["project", p(&film)],
        vec!["project", p(&film), "--raw", "--json"],
        vec!["rotation", p(&film)],
    ] {
        let (a, b) = (dentseg(&args), dentseg(&args));
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    let spec = dir.path().join("spec.json");
    let specs: Vec<PhantomSpec> = default_batch_specs().into_iter().take(2).collect();
    std::fs::write(&spec, serde_json::to_string(&specs).unwrap()).unwrap();
    for d in [&da, &db] {
        assert_eq!(
            dentseg(&["synth", "--spec", p(&spec), "--out-dir", p(d)])
                .status
                .code(),
            Some(0)
        );
    }
    for name in ["phantom_000.pgm", "phantom_001.truth.json", "manifest.json"] {
        assert_eq!(
            std::fs::read(da.join(name)).unwrap(),
            std::fs::read(db.join(name)).unwrap(),
            "{name}"
        );
    }
    let (a, b) = (
        dentseg(&["bench", p(&da.join("manifest.json"))]),
        dentseg(&["bench", p(&db.join("manifest.json"))]),
    );
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn flags_override_the_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let film = four_tooth_film(dir.path());
    let valleys = |extra: &[&str]| -> Vec<u64> {
        let mut args = vec!["project", p(&film), "--json"];
        args.extend_from_slice(extra);
        let o = dentseg(&args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["valleys"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap())
            .collect()
    };
    let cfg = dir.path().join("wide.toml");
    std::fs::write(&cfg, "[valleys]\nmin_separation = 300\n").unwrap();
    assert_eq!(valleys(&[]).len(), 3);
    assert!(valleys(&["--config", p(&cfg)]).len() < 3);
    assert_eq!(
        valleys(&["--config", p(&cfg), "--min-separation", "80"]),
        valleys(&[])
    );
}

#[test]
fn preprocess_writes_each_stage() {
    let dir = tempfile::tempdir().unwrap();
    let film = four_tooth_film(dir.path());
    let out = dir.path().join("clean.png");
    assert_eq!(
        dentseg(&["preprocess", p(&film), p(&out), "--dump-stages"])
            .status
            .code(),
        Some(0)
    );
    let files = std::fs::read_dir(dir.path()).unwrap().filter(|e| {
        let n = e.as_ref().unwrap().file_name();
        let n = n.to_string_lossy();
        n.starts_with("clean.") && n.ends_with(".png")
    });
    assert!(files.count() >= 4);
    assert!(out.exists());
}

#[test]
fn noise_free_default_batch_scores_at_least_ninety() {
    let dir = tempfile::tempdir().unwrap();
    let specs: Vec<PhantomSpec> = default_batch_specs()
        .into_iter()
        .map(|s| PhantomSpec {
            noise_sigma: 0.0,
            ..s
        })
        .collect();
    let spec = dir.path().join("clean.json");
    std::fs::write(&spec, serde_json::to_string(&specs).unwrap()).unwrap();
    let out = dir.path().join("batch");
    assert_eq!(
        dentseg(&["synth", "--spec", p(&spec), "--out-dir", p(&out)])
            .status
            .code(),
        Some(0)
    );
    let o = dentseg(&["bench", p(&out.join("manifest.json")), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let optimality = v["report"]["optimality"].as_f64().unwrap();
    assert!(optimality >= 90.0, "optimality {optimality}");
}
