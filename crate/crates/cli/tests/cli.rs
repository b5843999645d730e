use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "fiber": {"core_count": 24},
  "grid": {"start_nm": 650, "step_nm": 2.0, "count": 10},
  "sweep": {"ratios": [0.5, 2.0], "levels": [0.0, 0.2, 0.4], "ratio": 2.0}
}"#;

fn mcmmf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcmmf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
    dir
}

#[test]
fn full_pipeline() {
    let dir = setup();
    let d = dir.path();
    let o = mcmmf(
        &[
            "simulate",
            "--config",
            "cfg.json",
            "--out",
            "sim",
            "--n-lambda",
            "2",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("sim/calibration/frame_0000_650.000.pgm").exists());
    assert!(d.join("sim/config.json").exists());

    let o = mcmmf(
        &[
            "find-cores",
            "--frame",
            "sim/white.pgm",
            "--eps",
            "3",
            "--min-pts",
            "13",
            "--out",
            "cores.json",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let map =
        mcmmf::clustering::CoreMap::from_json(&fs::read_to_string(d.join("cores.json")).unwrap())
            .unwrap();
    assert_eq!(map.len(), 24);

    let o = mcmmf(
        &[
            "calibrate",
            "--frames",
            "sim/calibration",
            "--cores",
            "cores.json",
            "--pixels-per-core",
            "40",
            "--out",
            "stm.bin",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let stm = mcmmf::stm::Stm::load(d.join("stm.bin")).unwrap();
    assert_eq!(stm.columns(), 10);
    assert_eq!(stm.grid().values()[9], 668.0);

    let o = mcmmf(
        &[
            "reconstruct",
            "--stm",
            "stm.bin",
            "--frame",
            "sim/scene.pgm",
            "--out",
            "spectra.csv",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("spectra.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("core_id,wavelength_nm,intensity"));
    assert_eq!(lines.count(), 24 * 10);
}

#[test]
fn calibration_order_follows_wavelength() {
    let dir = setup();
    let d = dir.path();
    assert!(
        mcmmf(&["simulate", "--config", "cfg.json", "--out", "sim"], d)
            .status
            .success()
    );
    assert!(mcmmf(
        &[
            "find-cores",
            "--frame",
            "sim/white.pgm",
            "--out",
            "cores.json"
        ],
        d
    )
    .status
    .success());
    let args = [
        "calibrate",
        "--frames",
        "sim/calibration",
        "--cores",
        "cores.json",
        "--pixels-per-core",
        "40",
        "--out",
    ];
    let mut a = args.to_vec();
    a.push("ref.bin");
    assert!(mcmmf(&a, d).status.success());
    // indices no longer agree with wavelength order
    let cal = d.join("sim/calibration");
    fs::rename(
        cal.join("frame_0000_650.000.pgm"),
        cal.join("frame_0099_650.000.pgm"),
    )
    .unwrap();
    fs::rename(
        cal.join("frame_0009_668.000.pgm"),
        cal.join("frame_0000_668.000.pgm"),
    )
    .unwrap();
    let mut a = args.to_vec();
    a.push("renamed.bin");
    assert!(mcmmf(&a, d).status.success());
    assert_eq!(
        fs::read(d.join("ref.bin")).unwrap(),
        fs::read(d.join("renamed.bin")).unwrap()
    );
}

#[test]
fn missing_stm_is_a_domain_error() {
    let dir = setup();
    let o = mcmmf(
        &[
            "reconstruct",
            "--stm",
            "missing.bin",
            "--frame",
            "f.pgm",
            "--out",
            "x.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.bin"), "{}", stderr(&o));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = setup();
    for args in [
        &["bogus"][..],
        &["sweep", "--kind", "nope", "--config", "cfg.json"],
        &["find-cores", "--wat"],
    ] {
        let o = mcmmf(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("--help"), "{}", stderr(&o));
    }
    let o = mcmmf(
        &["sweep", "--kind", "noise", "--config", "cfg.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("--out"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_keys() {
    let dir = setup();
    let d = dir.path();
    let cases = [
        (
            r#"{"grid": {"start_nm": 650, "step_nm": 2, "count": 10}, "clustering": {"eps": -1}}"#,
            "clustering.eps",
        ),
        (
            r#"{"grid": {"start_nm": 650, "step_nm": 2, "count": 10}, "source": {"incidence_deg": 5.0}}"#,
            "4.5",
        ),
        (
            r#"{"grid": {"start_nm": 650, "step_nm": 2, "count": 10}, "colour": 1}"#,
            "colour",
        ),
    ];
    for (text, needle) in cases {
        fs::write(d.join("bad.json"), text).unwrap();
        let o = mcmmf(
            &[
                "sweep", "--kind", "noise", "--config", "bad.json", "--out", "n.csv",
            ],
            d,
        );
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains(needle), "{needle}: {}", stderr(&o));
        assert!(!d.join("n.csv").exists());
    }
}

#[test]
fn noise_sweep_starts_at_noiseless_baseline() {
    let dir = setup();
    let d = dir.path();
    let o = mcmmf(
        &[
            "sweep",
            "--kind",
            "noise",
            "--config",
            "cfg.json",
            "--out",
            "noise.csv",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("noise.csv")).unwrap();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "0.0");

    fs::write(
        d.join("base.json"),
        SMALL.replace(r#""levels": [0.0, 0.2, 0.4]"#, r#""levels": [0.0]"#),
    )
    .unwrap();
    assert!(mcmmf(
        &[
            "sweep",
            "--kind",
            "noise",
            "--config",
            "base.json",
            "--out",
            "base.csv"
        ],
        d
    )
    .status
    .success());
    let base = fs::read_to_string(d.join("base.csv")).unwrap();
    assert_eq!(base.lines().nth(1).unwrap(), csv.lines().nth(1).unwrap());
    assert!(d.join("noise.csv.config.json").exists());
}

#[test]
fn outputs_are_deterministic() {
    let dir = setup();
    let d = dir.path();
    for out in ["a", "b"] {
        let o = mcmmf(
            &[
                "--threads",
                "1",
                "simulate",
                "--config",
                "cfg.json",
                "--out",
                out,
                "--seed",
                "9",
            ],
            d,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = format!("{out}.csv");
        let o = mcmmf(
            &[
                "sweep", "--kind", "sampling", "--config", "cfg.json", "--out", &csv, "--seed", "9",
            ],
            d,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "scene.pgm",
        "white.pgm",
        "truth.csv",
        "calibration/frame_0004_658.000.pgm",
        "config.json",
    ] {
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );
    let cfg = fs::read_to_string(d.join("a/config.json")).unwrap();
    assert!(cfg.contains("\"instrument\": 9"), "{cfg}");
}
