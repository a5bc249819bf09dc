//! Executes a validated scenario and writes its artifacts and manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qtp_core::fiber::solve_modes_cached;
use qtp_core::io;
use qtp_core::shaping::{run_focus_study, slm_mode_mixing_diagnostic, FocusReport, SlmMask, SlmPlane};
use qtp_core::thin::{grating_order_profile, run_diffuser_study, run_grating_study, GratingChannel, GratingRow};
use qtp_core::twophoton::{run_detuning_scan, CorrelationCurve, CrystalModel, ScanVariant};

use crate::config::{Params, ScenarioConfig};
use crate::plan::{plan, Plan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub plan_s: f64,
    pub run_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub name: String,
    pub medium: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    /// SHA-256 of the canonical `section.key = value` listing.
    pub config_sha256: String,
    pub code_version: &'static str,
    /// `complete`, or `partial` when a module failed mid-run.
    pub status: &'static str,
    pub error: Option<String>,
    pub outputs: Vec<OutputFile>,
    /// Headline numbers per experiment; `null` where a curve never crossed.
    pub summary: BTreeMap<String, Option<f64>>,
    pub plan: Plan,
    pub basis_solves: usize,
    pub cache_hits: usize,
    pub timings: Timings,
}

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files written so far plus the numbers that go into the manifest.
struct Sink {
    dir: PathBuf,
    files: Vec<PathBuf>,
    summary: BTreeMap<String, Option<f64>>,
    solves: usize,
    hits: usize,
}

impl Sink {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> qtp_core::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn pgm(&mut self, name: &str, map: &qtp_core::field::IntensityMap) -> Result<()> {
        let p = self.path(name);
        io::save_pgm(&p, map)?;
        self.files.push(io::sidecar_path(&p));
        Ok(())
    }

    fn metric(&mut self, key: impl Into<String>, v: Option<f64>) {
        self.summary.insert(key.into(), v.filter(|x| x.is_finite()));
    }

    fn curve(&mut self, prefix: &str, c: &CorrelationCurve) {
        self.metric(format!("{prefix}.half_width_nm"), c.crossing(0.5).map(|x| x * 1e9));
    }
}

/// Compact label number: three decimals, trailing zeros dropped.
fn trim(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn execute(config: &ScenarioConfig, sink: &mut Sink) -> Result<()> {
    match &config.params {
        Params::FiberScan { scan, scenario } => {
            let out = run_detuning_scan(scan, scenario, &[ScanVariant::thin("spdc")])?;
            let spdc = &out.variants[0];
            let mut curves = Vec::new();
            if let Some(c) = &out.classical {
                curves.push(&c.curve);
            }
            curves.push(&spdc.curve);
            sink.csv("pcc_curve.csv", |b| CorrelationCurve::write_csv(&curves, b))?;
            sink.pgm("spdc_sum.pgm", &spdc.sum)?;
            sink.curve("spdc", &spdc.curve);
            sink.metric("spdc.sum_contrast", Some(spdc.sum_contrast));
            if let Some(c) = &out.classical {
                sink.pgm("classical_sum.pgm", &c.sum)?;
                sink.curve("classical", &c.curve);
                sink.metric("classical.sum_contrast", Some(c.sum_contrast));
            }
            sink.solves += out.basis_solves;
            sink.hits += out.cache_hits;
        }
        Params::PhaseMatching { scan, scenario, spdc, crystal_lengths } => {
            let mut variants = vec![ScanVariant::thin("thin")];
            for &l in crystal_lengths {
                variants.push(ScanVariant {
                    name: format!("Lc={} mm", trim(l * 1e3)),
                    crystal: CrystalModel::Finite(spdc.with_crystal_length(l)?),
                    defocus: 0.0,
                });
            }
            let out = run_detuning_scan(scan, scenario, &variants)?;
            let curves: Vec<&CorrelationCurve> = out.variants.iter().map(|v| &v.curve).collect();
            sink.csv("pcc_curve.csv", |b| CorrelationCurve::write_csv(&curves, b))?;
            for v in &out.variants {
                sink.curve(&v.name, &v.curve);
            }
            sink.solves += out.basis_solves;
            sink.hits += out.cache_hits;
        }
        Params::Defocus { scan, scenarios, defocus } => {
            let mut all = Vec::new();
            for s in scenarios {
                let profile = format!("{:?}", s.fiber.profile).to_lowercase();
                let variants: Vec<ScanVariant> = defocus
                    .iter()
                    .map(|&dz| ScanVariant {
                        name: format!("{profile} dz={} um", trim(dz * 1e6)),
                        crystal: CrystalModel::Thin,
                        defocus: dz,
                    })
                    .collect();
                let out = run_detuning_scan(scan, s, &variants)?;
                sink.solves += out.basis_solves;
                sink.hits += out.cache_hits;
                all.extend(out.variants.into_iter().map(|v| v.curve));
            }
            let first = scan.detunings.get(1).copied();
            for c in &all {
                sink.curve(&c.label, c);
                if let Some(d) = first {
                    sink.metric(format!("{}.pcc_at_{}nm", c.label, trim(d * 1e9)), c.value_at(d));
                }
            }
            let refs: Vec<&CorrelationCurve> = all.iter().collect();
            sink.csv("pcc_curve.csv", |b| CorrelationCurve::write_csv(&refs, b))?;
        }
        Params::Diffuser(study) => {
            let out = run_diffuser_study(study)?;
            sink.csv("pcc_curve.csv", |b| CorrelationCurve::write_csv(&[&out.classical, &out.spdc], b))?;
            sink.pgm("spdc_sum.pgm", &out.spdc_sum)?;
            sink.pgm("classical_sum.pgm", &out.classical_sum)?;
            sink.curve("classical", &out.classical);
            sink.curve("spdc", &out.spdc);
            sink.metric("classical.pcc_at_5nm", out.classical.value_at(5e-9));
            sink.metric("spdc.pcc_at_40nm", out.spdc.value_at(40e-9));
            sink.metric("classical.sum_contrast", Some(out.classical_contrast));
            sink.metric("spdc.sum_contrast", Some(out.spdc_contrast));
        }
        Params::Grating { study, profile_bins } => {
            let rows = run_grating_study(study)?;
            sink.csv("grating_orders.csv", |b| GratingRow::write_csv(&rows, b))?;
            let profile = grating_order_profile(study, *profile_bins)?;
            let mut text = String::from("order_coordinate,classical,spdc\n");
            for (u, c, s) in &profile {
                text.push_str(&format!("{u:?},{c:?},{s:?}\n"));
            }
            sink.write("grating_profile.csv", text.as_bytes())?;
            let blaze = 2 * study.spec.blaze_order as i32;
            let spdc_min = rows
                .iter()
                .filter(|r| r.channel == GratingChannel::Spdc && r.order == blaze)
                .map(|r| r.weight_numerical)
                .fold(f64::INFINITY, f64::min);
            let disagreement = rows
                .iter()
                .filter(|r| r.channel == GratingChannel::Classical && r.weight_analytical > 1e-3)
                .map(|r| (r.weight_numerical - r.weight_analytical).abs() / r.weight_analytical)
                .fold(0.0, f64::max);
            sink.metric("spdc.min_weight_at_double_order", Some(spdc_min));
            sink.metric("classical.max_relative_weight_error", Some(disagreement));
        }
        Params::Wfs { setup, detunings, scenarios } => {
            let study = run_focus_study(setup, scenarios, detunings)?;
            sink.csv("focus_curve.csv", |b| FocusReport::write_csv(&study.reports, b))?;
            for ((r, mask), pattern) in study.reports.iter().zip(&study.masks).zip(&study.focused) {
                let name = r.scenario.as_str();
                let p = sink.path(&format!("mask_{name}.qtpf"));
                mask.save(&p, &setup.grid)?;
                sink.files.push(io::sidecar_path(&p));
                sink.pgm(&format!("focus_{name}.pgm"), pattern)?;
                sink.metric(format!("{name}.enhancement"), Some(r.enhancement));
                sink.metric(format!("{name}.half_bandwidth_nm"), r.half_bandwidth.map(|x| x * 1e9));
            }
            sink.solves += study.basis_solves;
            sink.hits += study.cache_hits;
        }
        Params::Mixing { fibers, grid, wavelength, layouts, seeds } => {
            let mut text = String::from("profile,slm_pixels,slm_samples,seed,overlap\n");
            for f in fibers {
                let profile = format!("{:?}", f.profile).to_lowercase();
                let (basis, hit) = solve_modes_cached(f, *wavelength, grid, config.mode_cache.as_deref())?;
                if hit {
                    sink.hits += 1;
                } else {
                    sink.solves += 1;
                }
                for &(k, s) in layouts {
                    let mut total = 0.0;
                    for seed in 0..*seeds {
                        let seed = config.seed.wrapping_add(seed);
                        let mask = SlmMask::random(k, s, SlmPlane::FiberOutputOnePhoton, seed)?;
                        let r = slm_mode_mixing_diagnostic(&basis, &mask, seed, f.length)?;
                        text.push_str(&format!("{profile},{k},{s},{seed},{:?}\n", r.overlap));
                        total += r.overlap;
                    }
                    sink.metric(format!("{profile}.{k}x{s}.mean_overlap"), Some(total / *seeds as f64));
                }
            }
            sink.write("mixing.csv", text.as_bytes())?;
        }
    }
    Ok(())
}

/// Output directory: the config's `output_dir`, else `runs/<name>`.
pub fn output_dir(config: &ScenarioConfig) -> PathBuf {
    config.output_dir.clone().unwrap_or_else(|| Path::new("runs").join(&config.name))
}

/// Runs the experiment and writes the manifest last. A module failure still
/// writes a manifest, flagged `partial`, before the error is returned.
pub fn run(config: &ScenarioConfig) -> Result<RunManifest> {
    let t0 = Instant::now();
    let plan = plan(config);
    let plan_s = t0.elapsed().as_secs_f64();
    let dir = output_dir(config);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut sink = Sink { dir: dir.clone(), files: Vec::new(), summary: BTreeMap::new(), solves: 0, hits: 0 };
    let t1 = Instant::now();
    let result = execute(config, &mut sink);
    let run_s = t1.elapsed().as_secs_f64();

    let mut outputs = Vec::new();
    for p in &sink.files {
        if let Ok(bytes) = fs::read(p) {
            let rel = p.strip_prefix(&dir).unwrap_or(p).to_string_lossy().into_owned();
            outputs.push(OutputFile { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
    }
    let manifest = RunManifest {
        name: config.name.clone(),
        medium: config.medium.as_str(),
        experiment: config.experiment.as_str(),
        seed: config.seed,
        config_sha256: sha256_hex(config.raw.canonical().as_bytes()),
        code_version: env!("CARGO_PKG_VERSION"),
        status: if result.is_ok() { "complete" } else { "partial" },
        error: result.as_ref().err().map(|e| format!("{e:#}")),
        outputs,
        summary: sink.summary,
        plan,
        basis_solves: sink.solves,
        cache_hits: sink.hits,
        timings: Timings { plan_s, run_s },
    };
    let json = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(dir.join(MANIFEST), json)?;
    result.map(|_| manifest)
}
