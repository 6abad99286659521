//! End-to-end tests of the command-line surface: argument validation,
//! fail-fast config checks, JSON outputs, failure reports, and output
//! directory precedence.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::Command;

use crosscorr::catalog::write_catalog_csv;
use crosscorr::synth;
use crosscorr_cli::commands::{cmd_fit, cmd_ranktest, CompareMode, FitArgs, MethodChoice, RanktestArgs};
use crosscorr_cli::pipeline::run_correlate;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crosscorr"))
}

fn write_uniform_catalog(path: &Path, label: &str, n: usize, seed: u64, with_z: bool) {
    let z = with_z.then_some((0.0, 1.0));
    let cat = synth::uniform_catalog(label, n, seed, (9.0, 12.0), (0.3, 1.3), z);
    let mut f = File::create(path).expect("create catalog file");
    write_catalog_csv(&cat, &mut f).expect("write catalog");
}

/// Minimal single-component config; the comparison side is unsliced.
fn write_small_config(root: &Path) -> PathBuf {
    write_uniform_catalog(&root.join("comp.csv"), "comp", 60, 1, false);
    write_uniform_catalog(&root.join("survey.csv"), "survey", 120, 2, false);
    let config = "\
        master_seed = 7\n\
        n_bins = 6\n\
        bootstrap_reps = 8\n\
        components = [\"comp\"]\n\
        comparison = \"survey\"\n\n\
        [[sources]]\n\
        label = \"comp\"\n\
        path = \"comp.csv\"\n\n\
        [[sources]]\n\
        label = \"survey\"\n\
        path = \"survey.csv\"\n";
    let path = root.join("run.toml");
    std::fs::write(&path, config).expect("write config");
    path
}

#[test]
fn validate_config_fails_fast_on_missing_input() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = "\
        master_seed = 1\n\
        components = [\"a\"]\n\
        comparison = \"a\"\n\n\
        [[sources]]\n\
        label = \"a\"\n\
        path = \"does-not-exist.csv\"\n";
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, config).expect("write config");
    let out = bin()
        .args(["validate-config", "--config"])
        .arg(&path)
        .output()
        .expect("run binary");
    assert!(!out.status.success(), "missing input must fail validation");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("does-not-exist.csv"),
        "error should name the missing file, got: {stderr}"
    );
}

#[test]
fn validate_config_accepts_good_config() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = write_small_config(dir.path());
    let out = bin()
        .args(["validate-config", "--config"])
        .arg(&config)
        .output()
        .expect("run binary");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("config OK"), "got: {stdout}");
}

#[test]
fn merger_subcommand_emits_json() {
    let out = bin()
        .args(["merger", "--eta", "1", "--epsilon", "1"])
        .output()
        .expect("run binary");
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("merger output is JSON");
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["v2_ratio"], 1.0);
    assert_eq!(v["size_ratio"], 2.0);
    assert_eq!(v["density_ratio"], 0.25);

    let inverted = bin()
        .args(["merger", "--target-size", "4", "--epsilon", "0"])
        .output()
        .expect("run binary");
    assert!(inverted.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&inverted.stdout).expect("inverted output is JSON");
    assert_eq!(v["eta"], 1.0);
    assert_eq!(v["size_ratio"], 4.0);
}

#[test]
fn merger_requires_exactly_one_query() {
    let neither = bin()
        .args(["merger", "--epsilon", "1"])
        .output()
        .expect("run binary");
    assert!(!neither.status.success(), "missing query must be a usage error");
    let both = bin()
        .args([
            "merger",
            "--eta",
            "1",
            "--target-size",
            "2",
            "--epsilon",
            "1",
        ])
        .output()
        .expect("run binary");
    assert!(!both.status.success(), "conflicting query must be a usage error");
}

#[test]
fn ranktest_self_comparison_accepts() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("sample.csv");
    write_uniform_catalog(&path, "sample", 40, 9, false);
    let args = RanktestArgs {
        files: vec![path.clone(), path],
        vars: "mass,size".into(),
        alpha: 0.005,
        method: MethodChoice::Mckeon,
        permutations: 999,
        seed: 0,
        mode: CompareMode::Reference,
        mass_column: "mass".into(),
        size_column: "size".into(),
        out: Some(dir.path().join("rank.json")),
    };
    let report = cmd_ranktest(&args).expect("self comparison runs");
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(row.statistic, 0.0, "identical samples must give a zero statistic");
    assert_eq!(row.p_value, 1.0);
    assert_eq!(row.decision, "Accepted");
    let json: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("rank.json")).expect("report written"),
    )
    .expect("report is JSON");
    assert_eq!(json["rows"][0]["decision"], "Accepted");
}

#[test]
fn ranktest_pairwise_covers_all_pairs() {
    let dir = tempfile::tempdir().expect("tempdir");
    for (i, name) in ["one", "two", "three"].iter().enumerate() {
        write_uniform_catalog(&dir.path().join(format!("{name}.csv")), name, 30, 20 + i as u64, false);
    }
    let args = RanktestArgs {
        files: ["one", "two", "three"]
            .iter()
            .map(|n| dir.path().join(format!("{n}.csv")))
            .collect(),
        vars: "mass,size".into(),
        alpha: 0.005,
        method: MethodChoice::Permutation,
        permutations: 199,
        seed: 5,
        mode: CompareMode::Pairwise,
        mass_column: "mass".into(),
        size_column: "size".into(),
        out: None,
    };
    let report = cmd_ranktest(&args).expect("pairwise run succeeds");
    let pairs: Vec<(String, String)> = report
        .rows
        .iter()
        .map(|r| (r.sample1.clone(), r.sample2.clone()))
        .collect();
    assert_eq!(
        pairs,
        vec![
            ("one".into(), "two".into()),
            ("one".into(), "three".into()),
            ("two".into(), "three".into()),
        ]
    );
    for row in &report.rows {
        assert_eq!(row.n_permutations, Some(199));
        assert!(row.p_value > 0.0 && row.p_value <= 1.0);
    }
}

#[test]
fn correlate_writes_error_report_on_degenerate_input() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    // A single-record component survives validation (the file exists and
    // parses) but cannot be mapped onto the unit plane, so the pipeline
    // must fail after startup and leave a machine-readable report.
    std::fs::write(root.join("tiny.csv"), "mass,size\n10.0,0.7\n").expect("write tiny");
    write_uniform_catalog(&root.join("survey.csv"), "survey", 80, 3, false);
    let config = "\
        master_seed = 3\n\
        bootstrap_reps = 4\n\
        components = [\"tiny\"]\n\
        comparison = \"survey\"\n\n\
        [[sources]]\n\
        label = \"tiny\"\n\
        path = \"tiny.csv\"\n\n\
        [[sources]]\n\
        label = \"survey\"\n\
        path = \"survey.csv\"\n";
    let config_path = root.join("run.toml");
    std::fs::write(&config_path, config).expect("write config");
    let out_dir = root.join("out");
    let out = bin()
        .args(["correlate", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("run binary");
    assert!(!out.status.success(), "degenerate component must fail the run");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("tiny"), "error should name the pair, got: {stderr}");

    let error: serde_json::Value = serde_json::from_slice(
        &std::fs::read(out_dir.join("error.json")).expect("error report written"),
    )
    .expect("error report is JSON");
    assert_eq!(error["schema_version"], 1);
    assert!(error["error"].as_str().expect("message").contains("tiny"));

    let manifest: serde_json::Value = serde_json::from_slice(
        &std::fs::read(out_dir.join("manifest.json")).expect("partial manifest written"),
    )
    .expect("manifest is JSON");
    let outputs = manifest["outputs"].as_array().expect("outputs array");
    assert_eq!(outputs.len(), 1);
    assert_eq!(outputs[0]["status"], "failed");
}

#[test]
fn correlate_out_dir_precedence() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    let config = write_small_config(root);

    // Environment variable applies when neither flag nor config names a
    // directory.
    let env_dir = root.join("from-env");
    let out = bin()
        .args(["correlate", "--config"])
        .arg(&config)
        .env("CROSSCORR_OUT_DIR", &env_dir)
        .output()
        .expect("run binary");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("manifest.json").exists(), "env var directory used");

    // The command-line flag beats the environment variable.
    let flag_dir = root.join("from-flag");
    let ignored_dir = root.join("ignored-env");
    let out = bin()
        .args(["correlate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&flag_dir)
        .env("CROSSCORR_OUT_DIR", &ignored_dir)
        .output()
        .expect("run binary");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(flag_dir.join("manifest.json").exists(), "flag directory used");
    assert!(!ignored_dir.exists(), "env directory must stay untouched");
}

#[test]
fn fit_subcommand_reads_correlate_output() {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    let config = write_small_config(root);
    let out_dir = root.join("out");
    let summary = run_correlate(&config, Some(&out_dir)).expect("small correlate run");
    assert_eq!(summary.pairs_written, 1);

    let xi_csv = out_dir.join("xi_comp_all.csv");
    assert!(xi_csv.exists(), "expected {}", xi_csv.display());
    let report = cmd_fit(&FitArgs {
        input: xi_csv,
        estimator: 4,
        alpha: 0.005,
        weighted: None,
        out: Some(root.join("fit.json")),
    })
    .expect("fit runs on pipeline output");
    assert_eq!(report.estimator, "xi_4");
    assert!(report.fit.amplitude.is_finite());
    assert!(report.fit.n_points_used > 0);
    assert!(root.join("fit.json").exists());

    // The same numbers must also be in the pipeline's own fit report.
    let pipeline_fit: serde_json::Value = serde_json::from_slice(
        &std::fs::read(out_dir.join("fit_comp_all.json")).expect("fit report"),
    )
    .expect("fit report is JSON");
    let entry = pipeline_fit["fits"]
        .as_array()
        .expect("fits array")
        .iter()
        .find(|e| e["estimator"] == "xi_4")
        .expect("xi_4 entry");
    let amp = entry["fit"]["amplitude"].as_f64().expect("amplitude");
    assert!(
        (amp - report.fit.amplitude).abs() <= 1e-12 * amp.abs().max(1.0),
        "CLI fit {} vs pipeline fit {amp}",
        report.fit.amplitude
    );
}
