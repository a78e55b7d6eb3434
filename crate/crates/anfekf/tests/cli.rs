use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use anfekf::ScenarioFile;

fn anfekf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anfekf"))
        .args(args)
        .output()
        .unwrap()
}

/// Short scenario so the CLI tests stay quick.
fn write_scenario(dir: &Path) -> String {
    let mut f = ScenarioFile::builtin();
    f.duration = 20.0;
    f.noise.assumed.sigma_r = 2.0;
    let path = dir.join("scenario.toml");
    f.save(&path).unwrap();
    path.to_str().unwrap().to_owned()
}

fn body(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn run_writes_runs_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path());
    let out = tmp.path().join("out");
    let o = anfekf(&[
        "run",
        "--scenario",
        &scenario,
        "--variant",
        "ekf",
        "--runs",
        "3",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let runs = body(&out.join("runs.csv"));
    let mut lines = runs.lines();
    assert!(lines.next().unwrap().starts_with("# anfekf runs schema 1"));
    assert_eq!(
        lines.next().unwrap(),
        "run,step,t,truth_x,truth_y,truth_phi,est_x,est_y,est_phi,P11,P22,P33,nees,n_meas,n_gated,R11,R22,Q11,Q22,dom11,dom22"
    );
    assert_eq!(lines.count(), 3 * 800);

    let report = body(&out.join("report.csv"));
    let mut lines = report.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "step,t,rmse_pos,avg_nees,band_lo,band_hi"
    );
    assert_eq!(lines.count(), 800);
    assert!(out.join("summary.csv").exists() && out.join("meta.txt").exists());
}

#[test]
fn missing_scenario_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = anfekf(&[
        "run",
        "--scenario",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(missing.to_str().unwrap()), "{err}");
}

#[test]
fn invalid_overrides_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path());
    let out = tmp.path().join("out");
    for (flag, value) in [
        ("--eta", "0"),
        ("--eta", "1.5"),
        ("--window", "1"),
        ("--r-floor", "0"),
        ("--q-floor", "2"),
    ] {
        let o = anfekf(&[
            "run",
            "--scenario",
            &scenario,
            "--out",
            out.to_str().unwrap(),
            flag,
            value,
        ]);
        assert!(!o.status.success(), "{flag} {value}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(flag), "{flag}");
    }
    assert!(!out.exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path());
    let before = body(Path::new(&scenario));
    let dirs = ["a", "b"].map(|d| tmp.path().join(d));
    for (dir, threads) in dirs.iter().zip(["1", "4"]) {
        let o = anfekf(&[
            "run",
            "--scenario",
            &scenario,
            "--variant",
            "anfekf-rq",
            "--runs",
            "4",
            "--out",
            dir.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(o.status.success());
    }
    for name in ["runs.csv", "report.csv", "summary.csv"] {
        assert_eq!(
            body(&dirs[0].join(name)),
            body(&dirs[1].join(name)),
            "{name}"
        );
    }
    assert_eq!(body(Path::new(&scenario)), before);
}

#[test]
fn comparing_a_variant_with_itself_gives_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path());
    let out = tmp.path().join("cmp");
    let o = anfekf(&[
        "compare",
        "--variant-a",
        "anfekf-r",
        "--variant-b",
        "anfekf-r",
        "--scenario",
        &scenario,
        "--runs",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let deltas = body(&out.join("deltas.csv"));
    let mut rows = deltas.lines().skip(2).peekable();
    assert!(rows.peek().is_some());
    for row in rows {
        let delta = row.rsplit(',').next().unwrap();
        assert_eq!(delta.parse::<f64>().unwrap(), 0.0, "{row}");
    }
    let series = body(&out.join("compare.csv"));
    assert!(series.lines().nth(1).unwrap().ends_with("band_lo,band_hi"));
    for row in series.lines().skip(2) {
        let c: Vec<&str> = row.split(',').collect();
        assert_eq!(c[2], c[3]);
        assert_eq!(c[4], c[5]);
    }
}

#[test]
fn default_scenario_round_trips_with_exact_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("default.toml");
    let o = anfekf(&["scenario-default", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    let file = ScenarioFile::load(&path).unwrap();
    assert_eq!(file, ScenarioFile::builtin());
    let t = &file.noise.truth;
    assert_eq!(
        (t.sigma_v, t.sigma_gamma, t.sigma_r, t.sigma_theta),
        (0.3, 3.0, 0.1, 1.0)
    );
    assert_eq!(
        (file.speed, file.gamma_max_deg, file.wheelbase),
        (3.0, 30.0, 4.0)
    );
    assert_eq!((file.sensor_range, file.sensor_fov_deg), (20.0, 180.0));
    assert_eq!((file.control_rate, file.observe_rate), (40.0, 5.0));
    file.to_scenario().unwrap();

    let stdout = anfekf(&["scenario-default"]);
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), body(&path));
}

#[test]
fn help_documents_every_column() {
    let o = anfekf(&["run", "--help"]);
    let help = String::from_utf8(o.stdout).unwrap();
    for col in anfekf::output::RUNS_COLUMNS
        .iter()
        .chain(&anfekf::output::REPORT_COLUMNS)
    {
        assert!(help.contains(col), "{col}");
    }
}
