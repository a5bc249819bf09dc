//! Scenario files: `[section]` headers followed by `key = value` lines.
//!
//! `#` starts a comment when it begins a line or follows whitespace. Lists are
//! comma separated. Every key is consumed by exactly one builder; anything
//! left over is reported as unknown, so a typo never silently falls back to a
//! default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use qtp_core::fiber::{FiberSpec, IndexProfile};
use qtp_core::field::Grid;
use qtp_core::shaping::{FocusScenario, ShapingSetup};
use qtp_core::thin::{DiffuserStudy, GratingSpec, GratingStudy, MaterialModel};
use qtp_core::twophoton::{default_detunings, DetuningScan, FiberScenario, SpdcSpec};

/// A rejected configuration, tied to the parameter that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// `section.key`, or the section alone for structural errors.
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{} (line {l}): {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(path: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), line, message: message.into() }
}

/// Library precondition failures keep the library's parameter path, prefixed
/// with the section when the library names a bare field.
fn module(section: &str, e: qtp_core::Error) -> ConfigError {
    match e {
        qtp_core::Error::Config { param, reason } => {
            let path = if param.contains('.') { param } else { format!("{section}.{param}") };
            err(path, None, reason)
        }
        other => err(section, None, other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but untyped scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn strip_comment(line: &str) -> &str {
    let mut prev_ws = true;
    for (i, ch) in line.char_indices() {
        if ch == '#' && prev_ws {
            return &line[..i];
        }
        prev_ws = ch.is_whitespace();
    }
    line
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("config", Some(n), "section header must end with ']'"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(err("config", Some(n), format!("bad section name {name:?}")));
                }
                if out.sections.contains_key(name) {
                    return Err(err(name, Some(n), "section appears twice"));
                }
                out.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("config", Some(n), "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let section = current.as_ref().ok_or_else(|| err(key, Some(n), "key before any [section]"))?;
            let path = format!("{section}.{key}");
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(path, Some(n), "bad key name"));
            }
            if value.is_empty() {
                return Err(err(path, Some(n), "empty value"));
            }
            let map = out.sections.get_mut(section).expect("section exists");
            if map.insert(key.to_string(), Entry { value: value.to_string(), line: n }).is_some() {
                return Err(err(path, Some(n), "key appears twice"));
            }
        }
        Ok(out)
    }

    /// `section.key = value` lines in sorted order; the hashed form of a run.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (sec, map) in &self.sections {
            for (k, e) in map {
                s.push_str(&format!("{sec}.{k} = {}\n", e.value));
            }
        }
        s
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|e| e.value.as_str())
    }

    /// Sets or adds a value, as the CLI does for `--seed`.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), Entry { value: value.into(), line: 0 });
    }
}

/// Typed access that remembers every key it hands out.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: std::cell::RefCell<Vec<(String, String)>>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Self { raw, used: Default::default() }
    }

    fn entry(&self, section: &str, key: &str) -> Option<&'a Entry> {
        let e = self.raw.sections.get(section)?.get(key)?;
        self.used.borrow_mut().push((section.to_string(), key.to_string()));
        Some(e)
    }

    fn line(e: &Entry) -> Option<usize> {
        (e.line > 0).then_some(e.line)
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| err(format!("{section}.{key}"), Self::line(e), format!("{:?} is not {what}", e.value))),
        }
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parse(section, key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(err(format!("{section}.{key}"), None, "must be finite")),
            v => Ok(v),
        }
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(section, key)?.unwrap_or(default))
    }

    /// Value given in `unit`s per meter, converted to meters; `default` is
    /// already in meters and is returned untouched.
    fn si_or(&self, section: &str, key: &str, unit: f64, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(section, key)?.map_or(default, |x| x / unit))
    }

    fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parse(section, key, "a non-negative integer")?.unwrap_or(default))
    }

    fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        Ok(self.parse(section, key, "a non-negative integer")?.unwrap_or(default))
    }

    fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self.parse(section, key, "true or false")?.unwrap_or(default))
    }

    fn str(&self, section: &str, key: &str) -> Option<&'a str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    fn required_str(&self, section: &str, key: &str) -> Result<&'a str, ConfigError> {
        self.str(section, key).ok_or_else(|| err(format!("{section}.{key}"), None, "is required"))
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str, what: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(e) = self.entry(section, key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|s| s.trim())
            .map(|s| {
                s.parse().map_err(|_| {
                    err(format!("{section}.{key}"), Self::line(e), format!("list item {s:?} is not {what}"))
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.list(section, key, "a number")
    }

    fn pair(&self, section: &str, key: &str) -> Result<Option<(usize, usize)>, ConfigError> {
        match self.list::<usize>(section, key, "a non-negative integer")? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
            Some(_) => Err(err(format!("{section}.{key}"), None, "needs exactly two integers `row, col`")),
        }
    }

    /// Fails on the first key or section nobody asked for.
    fn finish(self) -> Result<(), ConfigError> {
        let used = self.used.into_inner();
        for (sec, map) in &self.raw.sections {
            if !used.iter().any(|(s, _)| s == sec) {
                let line = map.values().map(|e| e.line).min();
                return Err(err(sec.clone(), line.filter(|l| *l > 0), "unknown or unused section"));
            }
            for (k, e) in map {
                if !used.iter().any(|(s, key)| s == sec && key == k) {
                    return Err(err(format!("{sec}.{k}"), Self::line(e), "unknown key"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Medium {
    FiberStep,
    FiberGraded,
    Diffuser,
    Grating,
    Mcf,
}

impl Medium {
    pub fn as_str(&self) -> &'static str {
        match self {
            Medium::FiberStep => "fiber_step",
            Medium::FiberGraded => "fiber_graded",
            Medium::Diffuser => "diffuser",
            Medium::Grating => "grating",
            Medium::Mcf => "mcf",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Medium::FiberStep, Medium::FiberGraded, Medium::Diffuser, Medium::Grating, Medium::Mcf]
            .into_iter()
            .find(|m| m.as_str() == s)
    }

    fn profile(&self) -> Option<IndexProfile> {
        match self {
            Medium::FiberStep => Some(IndexProfile::Step),
            Medium::FiberGraded => Some(IndexProfile::Graded),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    CorrelationScan,
    IncoherentSum,
    DefocusStudy,
    PhaseMatchingStudy,
    Wfs,
    GratingOrders,
    ModeMixing,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::CorrelationScan => "correlation_scan",
            Experiment::IncoherentSum => "incoherent_sum",
            Experiment::DefocusStudy => "defocus_study",
            Experiment::PhaseMatchingStudy => "phase_matching_study",
            Experiment::Wfs => "wfs",
            Experiment::GratingOrders => "grating_orders",
            Experiment::ModeMixing => "mode_mixing",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        use Experiment::*;
        [CorrelationScan, IncoherentSum, DefocusStudy, PhaseMatchingStudy, Wfs, GratingOrders, ModeMixing]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// Everything an experiment needs, already validated by the owning module.
#[derive(Debug, Clone)]
pub enum Params {
    /// Thin-crystal coincidence and classical speckle versus detuning.
    FiberScan { scan: DetuningScan, scenario: FiberScenario },
    PhaseMatching { scan: DetuningScan, scenario: FiberScenario, spdc: SpdcSpec, crystal_lengths: Vec<f64> },
    /// One scenario per fiber profile, defocus values shared.
    Defocus { scan: DetuningScan, scenarios: Vec<FiberScenario>, defocus: Vec<f64> },
    Diffuser(DiffuserStudy),
    Grating { study: GratingStudy, profile_bins: usize },
    Wfs { setup: ShapingSetup, detunings: Vec<f64>, scenarios: Vec<FocusScenario> },
    Mixing { fibers: Vec<FiberSpec>, grid: Grid, wavelength: f64, layouts: Vec<(usize, usize)>, seeds: u64 },
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub medium: Medium,
    pub experiment: Experiment,
    pub seed: u64,
    pub realizations: usize,
    pub output_dir: Option<PathBuf>,
    pub mode_cache: Option<PathBuf>,
    pub params: Params,
    /// The parsed file, kept for hashing and the manifest.
    pub raw: RawConfig,
}

// Units per meter. Dividing by an exact power of ten keeps `810 nm` equal
// to the literal `810e-9`, so cache keys match values written in code.
const NM: f64 = 1e9;
const UM: f64 = 1e6;
const MM: f64 = 1e3;

fn fiber_from(r: &Reader, profile: IndexProfile) -> Result<FiberSpec, ConfigError> {
    let spec = FiberSpec::new(
        r.f64_or("fiber", "core_radius_um", 25.0)? / UM,
        r.f64_or("fiber", "numerical_aperture", 0.2)?,
        profile,
        r.f64_or("fiber", "cladding_index", FiberSpec::DEFAULT_CLADDING_INDEX)?,
        r.f64_or("fiber", "length_m", 0.1)?,
    )
    .map_err(|e| module("fiber", e))?;
    Ok(spec)
}

fn grid_from(r: &Reader, section: &str, size: usize, pitch: f64) -> Result<Grid, ConfigError> {
    Grid::square(r.usize_or(section, "size", size)?, r.si_or(section, "pitch_um", UM, pitch)?)
        .map_err(|e| module(section, e))
}

fn scan_from(r: &Reader, center_nm: f64, realizations: usize, seed: u64) -> Result<DetuningScan, ConfigError> {
    let detunings = match r.f64_list("scan", "detunings_nm")? {
        Some(v) => v.into_iter().map(|x| x / NM).collect(),
        None => default_detunings(),
    };
    DetuningScan::new(r.f64_or("scan", "center_wavelength_nm", center_nm)? / NM, detunings, realizations, seed)
        .map_err(|e| module("scan", e))
}

fn scenario_from(r: &Reader, fiber: FiberSpec, grid: Grid, cache: Option<PathBuf>, classical: bool) -> Result<FiberScenario, ConfigError> {
    let mut s = FiberScenario::new(fiber, grid);
    s.detector_waist = r.si_or("scan", "detector_waist_um", UM, s.detector_waist)?;
    s.position_fraction = r.f64_or("scan", "position_fraction", s.position_fraction)?;
    s.roi_fraction = r.f64_or("scan", "roi_fraction", s.roi_fraction)?;
    s.sum_band = r.si_or("scan", "sum_band_nm", NM, s.sum_band)?;
    s.classical = r.bool_or("scan", "classical", classical)?;
    s.mode_cache = cache;
    s.validate().map_err(|e| module("scan", e))?;
    Ok(s)
}

fn profile_named(path: &str, s: &str) -> Result<IndexProfile, ConfigError> {
    match s {
        "step" => Ok(IndexProfile::Step),
        "graded" => Ok(IndexProfile::Graded),
        other => Err(err(path, None, format!("unknown fiber profile {other:?} (step or graded)"))),
    }
}

fn material_from(r: &Reader) -> Result<MaterialModel, ConfigError> {
    match r.str("diffuser", "material").unwrap_or("constant") {
        "constant" => Ok(MaterialModel::Constant { n: r.f64_or("diffuser", "n", 1.5)? }),
        "cauchy" => Ok(MaterialModel::Cauchy {
            a: r.f64("diffuser", "cauchy_a")?.ok_or_else(|| err("diffuser.cauchy_a", None, "is required"))?,
            b: r.f64_or("diffuser", "cauchy_b_um2", 0.0)?,
            c: r.f64_or("diffuser", "cauchy_c_um4", 0.0)?,
        }),
        other => Err(err("diffuser.material", None, format!("unknown material {other:?} (constant or cauchy)"))),
    }
}

fn diffuser_from(r: &Reader, realizations: usize, seed: u64) -> Result<DiffuserStudy, ConfigError> {
    let l0 = r.f64_or("diffuser", "center_wavelength_nm", 808.0)? / NM;
    let mut d = DiffuserStudy::fig4(l0, seed).map_err(|e| module("diffuser", e))?;
    d.grid = grid_from(r, "diffuser", d.grid.rows, d.grid.pitch)?;
    d.macro_samples = r.usize_or("diffuser", "macro_samples", d.macro_samples)?;
    d.thickness_max = r.f64_or("diffuser", "thickness_max_wavelengths", 40.0)? * l0;
    d.material = material_from(r)?;
    d.beam_waist = r.si_or("diffuser", "beam_waist_um", UM, d.beam_waist)?;
    d.focal_length = r.f64_or("diffuser", "focal_length_m", d.focal_length)?;
    d.realizations = realizations;
    if let Some(v) = r.f64_list("diffuser", "separations_nm")? {
        d.separations = v.into_iter().map(|x| x / NM).collect();
    }
    d.band_half_width = r.si_or("diffuser", "band_half_width_nm", NM, d.band_half_width)?;
    d.band_samples = r.usize_or("diffuser", "band_samples", d.band_samples)?;
    d.far_size = r.usize_or("diffuser", "far_size", d.far_size)?;
    d.far_samples_per_spot = r.f64_or("diffuser", "far_samples_per_spot", d.far_samples_per_spot)?;
    d.validate().map_err(|e| module("diffuser", e))?;
    Ok(d)
}

fn grating_from(r: &Reader) -> Result<(GratingStudy, usize), ConfigError> {
    let l0 = r.f64_or("grating", "design_wavelength_nm", 808.0)? / NM;
    let mut g = GratingStudy::default_for(l0).map_err(|e| module("grating", e))?;
    let mut spec = GratingSpec::new(
        r.si_or("grating", "period_um", UM, g.spec.period)?,
        l0,
        r.f64_or("grating", "index", g.spec.index)?,
    )
    .map_err(|e| module("grating", e))?;
    spec.blaze_order = r.parse("grating", "blaze_order", "a positive integer")?.unwrap_or(1);
    spec.validate().map_err(|e| module("grating", e))?;
    g.spec = spec;
    g.grid = grid_from(r, "grating", g.grid.rows, g.grid.pitch)?;
    g.beam_waist = r.si_or("grating", "beam_waist_um", UM, g.beam_waist)?;
    g.focal_length = r.f64_or("grating", "focal_length_m", g.focal_length)?;
    if let Some(v) = r.f64_list("grating", "offsets_nm")? {
        g.offsets = v.into_iter().map(|x| x / NM).collect();
    }
    let lo = r.parse("grating", "order_min", "an integer")?.unwrap_or(*g.orders.start());
    let hi = r.parse("grating", "order_max", "an integer")?.unwrap_or(*g.orders.end());
    if lo > hi {
        return Err(err("grating.order_min", None, "must not exceed order_max"));
    }
    g.orders = lo..=hi;
    g.validate().map_err(|e| module("grating", e))?;
    let bins = r.usize_or("grating", "profile_bins", 64)?;
    if bins == 0 {
        return Err(err("grating.profile_bins", None, "must be at least 1"));
    }
    Ok((g, bins))
}

fn scenario_named(s: &str) -> Result<FocusScenario, ConfigError> {
    FocusScenario::ALL
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| err("wfs.scenarios", None, format!("unknown scenario {s:?}")))
}

fn wfs_from(r: &Reader, profile: IndexProfile, cache: Option<PathBuf>) -> Result<Params, ConfigError> {
    let mut s = ShapingSetup::fig6().map_err(|e| module("wfs", e))?;
    s.fiber = FiberSpec::new(
        r.si_or("fiber", "core_radius_um", UM, s.fiber.core_radius)?,
        r.f64_or("fiber", "numerical_aperture", s.fiber.numerical_aperture)?,
        profile,
        r.f64_or("fiber", "cladding_index", s.fiber.cladding_index)?,
        r.f64_or("fiber", "length_m", s.fiber.length)?,
    )
    .map_err(|e| module("fiber", e))?;
    s.grid = grid_from(r, "grid", s.grid.rows, s.grid.pitch)?;
    s.center_wavelength = r.si_or("wfs", "center_wavelength_nm", NM, s.center_wavelength)?;
    s.slm_pixels = r.usize_or("wfs", "slm_pixels", s.slm_pixels)?;
    s.slm_samples = r.usize_or("wfs", "slm_samples", s.slm_samples)?;
    s.facet_target = r.pair("wfs", "facet_target")?.unwrap_or(s.facet_target);
    s.focal_length = r.f64_or("wfs", "focal_length_m", s.focal_length)?;
    s.far_grid = Grid::square(
        r.usize_or("wfs", "far_size", s.far_grid.rows)?,
        r.si_or("wfs", "far_pitch_mm", MM, s.far_grid.pitch)?,
    )
    .map_err(|e| module("wfs", e))?;
    s.far_target = r.pair("wfs", "far_target")?.unwrap_or(s.far_target);
    s.mode_cache = cache;
    s.validate().map_err(|e| module("wfs", e))?;
    let detunings = match r.f64_list("wfs", "detunings_nm")? {
        Some(v) => v.into_iter().map(|x| x / NM).collect::<Vec<_>>(),
        None => default_detunings(),
    };
    if detunings.first() != Some(&0.0) || detunings.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(err("wfs.detunings_nm", None, "must start at 0 and ascend strictly"));
    }
    let scenarios = match r.list::<String>("wfs", "scenarios", "a scenario name")? {
        Some(v) => v.iter().map(|s| scenario_named(s)).collect::<Result<Vec<_>, _>>()?,
        None => FocusScenario::ALL.to_vec(),
    };
    Ok(Params::Wfs { setup: s, detunings, scenarios })
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let r = Reader::new(&raw);
        let name = r.str("run", "name").unwrap_or("scenario").to_string();
        let medium_s = r.required_str("run", "medium")?;
        let medium = Medium::parse(medium_s).ok_or_else(|| err("run.medium", None, format!("unknown medium {medium_s:?}")))?;
        let exp_s = r.required_str("run", "experiment")?;
        let experiment =
            Experiment::parse(exp_s).ok_or_else(|| err("run.experiment", None, format!("unknown experiment {exp_s:?}")))?;
        let seed = r.u64_or("run", "seed", 0)?;
        let realizations = r.usize_or("run", "realizations", 1)?;
        if realizations == 0 {
            return Err(err("run.realizations", None, "must be at least 1"));
        }
        let output_dir = r.str("run", "output_dir").map(PathBuf::from);
        let mode_cache = r.str("run", "mode_cache").map(PathBuf::from);

        use Experiment as E;
        let fiber_profile = || {
            medium
                .profile()
                .ok_or_else(|| err("run.medium", None, format!("{} needs a fiber medium", experiment.as_str())))
        };
        let params = match (medium, experiment) {
            (Medium::Mcf, _) => return Err(err("run.medium", None, "multicore fibers are not implemented")),
            (Medium::FiberStep | Medium::FiberGraded, E::CorrelationScan | E::IncoherentSum) => {
                let fiber = fiber_from(&r, fiber_profile()?)?;
                let grid = grid_from(&r, "grid", 256, 0.3 / UM)?;
                let scan = scan_from(&r, 810.0, realizations, seed)?;
                let scenario = scenario_from(&r, fiber, grid, mode_cache.clone(), true)?;
                Params::FiberScan { scan, scenario }
            }
            (Medium::FiberStep | Medium::FiberGraded, E::PhaseMatchingStudy) => {
                let fiber = fiber_from(&r, fiber_profile()?)?;
                let grid = grid_from(&r, "grid", 256, 0.3 / UM)?;
                let scan = scan_from(&r, 810.0, realizations, seed)?;
                let scenario = scenario_from(&r, fiber, grid, mode_cache.clone(), false)?;
                let pump = r.f64_or("spdc", "pump_wavelength_nm", 405.0)? / NM;
                let waist = r.f64_or("spdc", "pump_waist_um", 500.0)? / UM;
                let magnification = r.f64_or("spdc", "magnification", 10.0)?;
                let index = r.f64_or("spdc", "crystal_index", 1.0)?;
                let spdc = SpdcSpec::from_pump_waist(pump, waist, 0.0, magnification)
                    .and_then(|s| s.with_crystal_index(index))
                    .map_err(|e| module("spdc", e))?;
                if (spdc.central_wavelength() - scan.center_wavelength).abs() > 1e-12 {
                    return Err(err("spdc.pump_wavelength_nm", None, "degenerate wavelength 2λ_p must equal scan.center_wavelength_nm"));
                }
                let crystal_lengths: Vec<f64> = r
                    .f64_list("spdc", "crystal_lengths_mm")?
                    .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0])
                    .into_iter()
                    .map(|x| x / MM)
                    .collect();
                for &l in &crystal_lengths {
                    spdc.with_crystal_length(l).map_err(|e| module("spdc.crystal_lengths_mm", e))?;
                }
                Params::PhaseMatching { scan, scenario, spdc, crystal_lengths }
            }
            (Medium::FiberStep | Medium::FiberGraded, E::DefocusStudy) => {
                let own = fiber_profile()?;
                let profiles = match r.list::<String>("defocus", "profiles", "a profile name")? {
                    Some(v) => v.iter().map(|s| profile_named("defocus.profiles", s)).collect::<Result<Vec<_>, _>>()?,
                    None => vec![own],
                };
                let grid = grid_from(&r, "grid", 256, 0.3 / UM)?;
                let scan = scan_from(&r, 810.0, realizations, seed)?;
                let base = fiber_from(&r, own)?;
                let mut scenarios = Vec::new();
                let template = scenario_from(&r, base, grid, mode_cache.clone(), false)?;
                for p in profiles {
                    let fiber = FiberSpec::new(base.core_radius, base.numerical_aperture, p, base.cladding_index, base.length)
                        .map_err(|e| module("fiber", e))?;
                    scenarios.push(FiberScenario { fiber, ..template.clone() });
                }
                let defocus: Vec<f64> = r
                    .f64_list("defocus", "dz_um")?
                    .unwrap_or_else(|| vec![0.0, 10.0, 20.0, 40.0, 100.0])
                    .into_iter()
                    .map(|x| x / UM)
                    .collect();
                if defocus.iter().any(|d| *d < 0.0) {
                    return Err(err("defocus.dz_um", None, "distances must be non-negative"));
                }
                Params::Defocus { scan, scenarios, defocus }
            }
            (Medium::FiberStep | Medium::FiberGraded, E::Wfs) => wfs_from(&r, fiber_profile()?, mode_cache.clone())?,
            (Medium::FiberStep | Medium::FiberGraded, E::ModeMixing) => {
                let base = fiber_from(&r, fiber_profile()?)?;
                let profiles = match r.list::<String>("mixing", "profiles", "a profile name")? {
                    Some(v) => v.iter().map(|s| profile_named("mixing.profiles", s)).collect::<Result<Vec<_>, _>>()?,
                    None => vec![base.profile],
                };
                let fibers = profiles
                    .into_iter()
                    .map(|p| FiberSpec::new(base.core_radius, base.numerical_aperture, p, base.cladding_index, base.length))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| module("fiber", e))?;
                let grid = grid_from(&r, "grid", 256, 0.3 / UM)?;
                let pixels = r.list::<usize>("mixing", "slm_pixels", "an integer")?.unwrap_or_else(|| vec![4, 8, 16, 32]);
                let samples = r.list::<usize>("mixing", "slm_samples", "an integer")?.unwrap_or_else(|| vec![40, 20, 10, 5]);
                if pixels.len() != samples.len() {
                    return Err(err("mixing.slm_samples", None, "needs one entry per slm_pixels entry"));
                }
                let layouts: Vec<(usize, usize)> = pixels.into_iter().zip(samples).collect();
                for &(k, s) in &layouts {
                    let side = k * s;
                    if k == 0 || s == 0 || side > grid.rows || (grid.rows - side) % 2 != 0 {
                        return Err(err("mixing.slm_pixels", None, format!("{k}x{s} samples cannot be centered on a {} grid", grid.rows)));
                    }
                }
                Params::Mixing {
                    fibers,
                    grid,
                    wavelength: r.f64_or("mixing", "wavelength_nm", 810.0)? / NM,
                    layouts,
                    seeds: r.u64_or("mixing", "seeds", realizations as u64)?,
                }
            }
            (Medium::Diffuser, E::CorrelationScan | E::IncoherentSum) => Params::Diffuser(diffuser_from(&r, realizations, seed)?),
            (Medium::Grating, E::GratingOrders) => {
                let (study, profile_bins) = grating_from(&r)?;
                Params::Grating { study, profile_bins }
            }
            (m, e) => {
                return Err(err("run.experiment", None, format!("{} is not defined for medium {}", e.as_str(), m.as_str())))
            }
        };
        r.finish()?;
        Ok(Self { name, medium, experiment, seed, realizations, output_dir, mode_cache, params, raw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
[run]
medium = fiber_step   # comment
experiment = correlation_scan
seed = 4
realizations = 2

[fiber]
core_radius_um = 5
numerical_aperture = 0.2
length_m = 0.1

[grid]
size = 64
pitch_um = 0.3

[scan]
detunings_nm = 0, 0.5, 1
";

    #[test]
    fn parses_sections_and_lists() {
        let c = ScenarioConfig::parse(SMALL).unwrap();
        assert_eq!(c.medium, Medium::FiberStep);
        assert_eq!(c.seed, 4);
        match &c.params {
            Params::FiberScan { scan, scenario } => {
                assert_eq!(scan.detunings.len(), 3);
                assert!((scan.detunings[2] - 1e-9).abs() < 1e-20);
                assert_eq!(scenario.grid.rows, 64);
            }
            p => panic!("{p:?}"),
        }
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let e = ScenarioConfig::parse(&format!("{SMALL}[fiber2]\nx = 1\n")).unwrap_err();
        assert_eq!(e.path, "fiber2");
        let e = ScenarioConfig::parse(&SMALL.replace("length_m", "lenght_m")).unwrap_err();
        assert_eq!(e.path, "fiber.lenght_m");
        assert_eq!(e.line, Some(10));
        assert!(e.message.contains("unknown key"));
    }

    #[test]
    fn module_preconditions_are_reported_against_the_section() {
        let e = ScenarioConfig::parse(&SMALL.replace("numerical_aperture = 0.2", "numerical_aperture = 0")).unwrap_err();
        assert_eq!(e.path, "fiber.numerical_aperture");
        let e = ScenarioConfig::parse(&SMALL.replace("0, 0.5, 1", "0.5, 1")).unwrap_err();
        assert!(e.path.starts_with("scan"), "{e}");
        let e = ScenarioConfig::parse(&SMALL.replace("seed = 4", "seed = -4")).unwrap_err();
        assert_eq!(e.path, "run.seed");
    }

    #[test]
    fn structural_errors() {
        assert!(RawConfig::parse("x = 1").is_err());
        assert!(RawConfig::parse("[a]\nx = 1\nx = 2").is_err());
        assert!(RawConfig::parse("[a]\nx =").is_err());
        assert!(RawConfig::parse("[a\n").is_err());
        assert_eq!(RawConfig::parse("[a]\np = dir#1 # note").unwrap().get("a", "p"), Some("dir#1"));
        let e = ScenarioConfig::parse(&SMALL.replace("fiber_step", "mcf")).unwrap_err();
        assert!(e.message.contains("not implemented"));
        let e = ScenarioConfig::parse(&SMALL.replace("correlation_scan", "grating_orders")).unwrap_err();
        assert_eq!(e.path, "run.experiment");
    }

    #[test]
    fn canonical_form_is_order_independent() {
        let a = RawConfig::parse("[b]\ny = 2\n[a]\nx = 1\n").unwrap();
        let b = RawConfig::parse("[a]\nx = 1\n\n[b]\ny   =   2").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
