use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qtp_cli::{load_raw, run, validate_and_plan, RawConfig, RunManifest, ScenarioConfig};

const SMALL: &str = "\
[run]
name = small
medium = fiber_step
experiment = correlation_scan
seed = 4
realizations = 3

[fiber]
core_radius_um = 6
numerical_aperture = 0.2
length_m = 0.05

[grid]
size = 64
pitch_um = 0.3

[scan]
detunings_nm = 0, 1, 2, 4
sum_band_nm = 2
";

fn qtp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtp")).args(args).output().expect("qtp runs")
}

fn small_config(dir: &Path, seed: u64) -> ScenarioConfig {
    let mut raw = RawConfig::parse(SMALL).unwrap();
    raw.set("run", "seed", seed.to_string());
    raw.set("run", "output_dir", dir.display().to_string());
    ScenarioConfig::from_raw(raw).unwrap()
}

fn checksums(m: &RunManifest) -> Vec<(String, String)> {
    m.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())).collect()
}

#[test]
fn presets_are_exactly_the_six_figures() {
    let out = qtp(&["presets"]);
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(names, ["fig2", "fig3-4", "fig5", "fig6", "figS1-S2", "figS3-S4"]);
    let fig2 = String::from_utf8(qtp(&["presets", "fig2"]).stdout).unwrap();
    assert!(fig2.contains("center_wavelength_nm = 810"));
}

#[test]
fn fig2_plans_two_solves_per_detuning_plus_center() {
    let raw = load_raw("fig2").unwrap();
    let (cfg, plan) = validate_and_plan(raw).unwrap();
    let nonzero = match &cfg.params {
        qtp_cli::config::Params::FiberScan { scan, .. } => scan.detunings.iter().filter(|d| **d > 0.0).count(),
        p => panic!("{p:?}"),
    };
    assert_eq!(plan.basis_solves, 2 * nonzero + 1);
    assert_eq!(plan.cache_hits, 0);
}

#[test]
fn zero_numerical_aperture_is_rejected_with_its_path() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.conf");
    fs::write(&p, SMALL.replace("numerical_aperture = 0.2", "numerical_aperture = 0")).unwrap();
    let out = qtp(&["validate", p.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("fiber.numerical_aperture"), "{err}");
    let out = qtp(&["run", p.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!tmp.path().join("o").exists(), "nothing may run before validation passes");
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("typo.conf");
    fs::write(&p, SMALL.replace("length_m", "length_cm")).unwrap();
    let out = qtp(&["validate", p.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("fiber.length_cm") && err.contains("unknown key"), "{err}");
}

#[test]
fn run_writes_the_contract_files_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let m = run(&small_config(tmp.path(), 4)).unwrap();
    assert_eq!(m.status, "complete");
    let mut names: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    names.sort();
    assert_eq!(
        names,
        ["classical_sum.pgm", "classical_sum.pgm.txt", "pcc_curve.csv", "spdc_sum.pgm", "spdc_sum.pgm.txt"]
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 5);
    let csv = fs::read_to_string(tmp.path().join("pcc_curve.csv")).unwrap();
    assert!(csv.starts_with("delta_lambda_nm,") && !csv.contains('\r'));
    for o in &m.outputs {
        let bytes = fs::read(tmp.path().join(&o.path)).unwrap();
        assert_eq!(o.bytes as usize, bytes.len());
        assert_eq!(o.sha256, qtp_cli::run::sha256_hex(&bytes));
    }
}

#[test]
fn same_config_and_seed_reproduce_checksums_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("small.conf");
    fs::write(&conf, SMALL).unwrap();
    let mut sums = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("o{i}"));
        let status = qtp(&["run", conf.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        sums.push(m["outputs"].clone());
    }
    assert_eq!(sums[0], sums[1]);

    let other = run(&small_config(&tmp.path().join("seed5"), 5)).unwrap();
    let base = run(&small_config(&tmp.path().join("seed4"), 4)).unwrap();
    assert_ne!(checksums(&other), checksums(&base));
}

#[test]
fn warm_cache_plans_zero_solves() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("modes");
    let mut raw = RawConfig::parse(SMALL).unwrap();
    raw.set("run", "mode_cache", cache.display().to_string());
    raw.set("run", "output_dir", tmp.path().join("cold").display().to_string());
    let (cfg, cold) = validate_and_plan(raw.clone()).unwrap();
    assert_eq!((cold.basis_solves, cold.cache_hits), (7, 0));
    let m = run(&cfg).unwrap();
    assert_eq!((m.basis_solves, m.cache_hits), (7, 0));

    raw.set("run", "output_dir", tmp.path().join("warm").display().to_string());
    let (cfg, warm) = validate_and_plan(raw).unwrap();
    assert_eq!((warm.basis_solves, warm.cache_hits), (0, 7));
    let again = run(&cfg).unwrap();
    assert_eq!((again.basis_solves, again.cache_hits), (0, 7));
    assert_eq!(checksums(&m), checksums(&again));
}

#[test]
fn module_failure_flags_the_manifest_partial() {
    let tmp = tempfile::tempdir().unwrap();
    // A file where the cache directory should be: validation cannot know,
    // the first save fails.
    let blocker = tmp.path().join("not_a_dir");
    fs::write(&blocker, b"x").unwrap();
    let mut raw = RawConfig::parse(SMALL).unwrap();
    raw.set("run", "mode_cache", blocker.join("sub").display().to_string());
    raw.set("run", "output_dir", tmp.path().join("o").display().to_string());
    let (cfg, _) = validate_and_plan(raw).unwrap();
    assert!(run(&cfg).is_err());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "partial");
    assert!(m["error"].is_string());
}

#[test]
fn grating_and_mixing_runs_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let grating = "\
[run]
name = g
medium = grating
experiment = grating_orders

[grating]
size = 512
pitch_um = 2
beam_waist_um = 150
offsets_nm = -40, 0, 40
profile_bins = 8
";
    let mut raw = RawConfig::parse(grating).unwrap();
    raw.set("run", "output_dir", tmp.path().join("g").display().to_string());
    let m = run(&ScenarioConfig::from_raw(raw).unwrap()).unwrap();
    let names: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    assert_eq!(names, ["grating_orders.csv", "grating_profile.csv"]);
    assert!(m.summary["spdc.min_weight_at_double_order"].unwrap() > 0.99);

    let mixing = SMALL.replace("correlation_scan", "mode_mixing").replace(
        "[scan]\ndetunings_nm = 0, 1, 2, 4\nsum_band_nm = 2\n",
        "[mixing]\nslm_pixels = 2, 8\nslm_samples = 32, 8\nseeds = 3\n",
    );
    let mut raw = RawConfig::parse(&mixing).unwrap();
    raw.set("run", "output_dir", tmp.path().join("m").display().to_string());
    let m = run(&ScenarioConfig::from_raw(raw).unwrap()).unwrap();
    let csv = fs::read_to_string(tmp.path().join("m/mixing.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let coarse = m.summary["step.2x32.mean_overlap"].unwrap();
    let fine = m.summary["step.8x8.mean_overlap"].unwrap();
    assert!(fine < coarse, "finer pixels should mix more: {fine} vs {coarse}");
}
