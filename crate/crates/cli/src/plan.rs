//! What a run will solve before it solves anything.

use serde::Serialize;

use qtp_core::fiber::{cache_key, cache_path, solve_modes_cached, FiberSpec, IndexProfile};
use qtp_core::field::Grid;
use qtp_core::shaping::FocusScenario;
use qtp_core::twophoton::{pair_wavelengths, DetuningScan};

use crate::config::{ConfigError, Params, RawConfig, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedBasis {
    pub profile: &'static str,
    pub wavelength_nm: f64,
    /// A solve for this key already sits in the mode cache.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub bases: Vec<PlannedBasis>,
    pub basis_solves: usize,
    pub cache_hits: usize,
}

fn profile_name(p: IndexProfile) -> &'static str {
    match p {
        IndexProfile::Step => "step",
        IndexProfile::Graded => "graded",
    }
}

fn scan_wavelengths(scan: &DetuningScan) -> Vec<f64> {
    let mut out = vec![scan.center_wavelength];
    for &d in scan.detunings.iter().filter(|d| **d > 0.0) {
        let (p, m) = scan.pair_wavelengths(d);
        out.extend([p, m]);
    }
    out
}

#[derive(Default)]
struct Builder {
    keys: Vec<String>,
    bases: Vec<(FiberSpec, f64, Grid)>,
}

impl Builder {
    fn add(&mut self, fiber: &FiberSpec, grid: &Grid, wavelengths: &[f64]) {
        for &w in wavelengths {
            let key = cache_key(fiber, w, grid);
            if !self.keys.contains(&key) {
                self.keys.push(key);
                self.bases.push((*fiber, w, *grid));
            }
        }
    }
}

/// Every distinct `(fiber, wavelength, grid)` solve the experiment needs,
/// in the order the run requests them.
pub fn required_bases(config: &ScenarioConfig) -> Vec<(FiberSpec, f64, Grid)> {
    let mut b = Builder::default();
    match &config.params {
        Params::FiberScan { scan, scenario } | Params::PhaseMatching { scan, scenario, .. } => {
            b.add(&scenario.fiber, &scenario.grid, &scan_wavelengths(scan))
        }
        Params::Defocus { scan, scenarios, .. } => {
            for s in scenarios {
                b.add(&s.fiber, &s.grid, &scan_wavelengths(scan));
            }
        }
        Params::Wfs { setup, detunings, scenarios } => {
            let l0 = setup.center_wavelength;
            let classical = scenarios.contains(&FocusScenario::Classical);
            let pair = scenarios.iter().any(|s| *s != FocusScenario::Classical);
            let mut w = vec![l0];
            for &d in &detunings[1..] {
                if classical {
                    w.push(l0 + d);
                }
                if pair {
                    let (p, m) = pair_wavelengths(l0, d);
                    w.extend([p, m]);
                }
            }
            b.add(&setup.fiber, &setup.grid, &w);
        }
        Params::Mixing { fibers, grid, wavelength, .. } => {
            for f in fibers {
                b.add(f, grid, &[*wavelength]);
            }
        }
        Params::Diffuser(_) | Params::Grating { .. } => {}
    }
    b.bases
}

/// Lists every mode basis the experiment needs. A wavelength counts as a
/// cache hit only when the cache file exists now.
pub fn plan(config: &ScenarioConfig) -> Plan {
    let mut plan = Plan { bases: Vec::new(), basis_solves: 0, cache_hits: 0 };
    for (fiber, w, grid) in required_bases(config) {
        let cached = config.mode_cache.as_deref().is_some_and(|d| cache_path(d, &fiber, w, &grid).exists());
        if cached {
            plan.cache_hits += 1;
        } else {
            plan.basis_solves += 1;
        }
        plan.bases.push(PlannedBasis { profile: profile_name(fiber.profile), wavelength_nm: w * 1e9, cached });
    }
    plan
}

/// Solves and stores every basis missing from the mode cache. Returns the
/// number of solves; a config without `mode_cache` has nothing to warm.
pub fn warm_cache(config: &ScenarioConfig) -> qtp_core::Result<usize> {
    let Some(dir) = config.mode_cache.as_deref() else { return Ok(0) };
    let mut solved = 0;
    for (fiber, w, grid) in required_bases(config) {
        let (_, hit) = solve_modes_cached(&fiber, w, &grid, Some(dir))?;
        solved += usize::from(!hit);
    }
    Ok(solved)
}

/// Parses, checks every module precondition and plans the solves.
pub fn validate_and_plan(raw: RawConfig) -> Result<(ScenarioConfig, Plan), ConfigError> {
    let config = ScenarioConfig::from_raw(raw)?;
    let plan = plan(&config);
    Ok((config, plan))
}
