//! Scenario files shipped with the binary, one per reproduced figure.

use crate::config::{ConfigError, ScenarioConfig};

const PRESETS: [(&str, &str); 6] = [
    ("fig2", include_str!("../presets/fig2.conf")),
    ("fig3-4", include_str!("../presets/fig3-4.conf")),
    ("fig5", include_str!("../presets/fig5.conf")),
    ("fig6", include_str!("../presets/fig6.conf")),
    ("figS1-S2", include_str!("../presets/figS1-S2.conf")),
    ("figS3-S4", include_str!("../presets/figS3-S4.conf")),
];

/// `(name, config text)` for every preset.
pub fn built_in_presets() -> &'static [(&'static str, &'static str)] {
    &PRESETS
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Option<Result<ScenarioConfig, ConfigError>> {
    preset_text(name).map(ScenarioConfig::parse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Params;

    #[test]
    fn every_preset_validates() {
        for (name, _) in built_in_presets() {
            let c = preset(name).unwrap().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(c.name, *name);
        }
    }

    #[test]
    fn preset_parameters() {
        match preset("fig2").unwrap().unwrap().params {
            Params::FiberScan { scan, scenario } => {
                assert_eq!(scan.center_wavelength, 810e-9);
                assert_eq!(scan.realizations, 23);
                assert_eq!(scenario.fiber.core_radius, 25e-6);
                assert_eq!(scenario.fiber.length, 0.1);
            }
            p => panic!("{p:?}"),
        }
        match preset("figS1-S2").unwrap().unwrap().params {
            Params::PhaseMatching { spdc, crystal_lengths, .. } => {
                assert_eq!(spdc.pump_wavelength, 405e-9);
                assert_eq!(spdc.magnification, 10.0);
                let mm: Vec<f64> = crystal_lengths.iter().map(|l| (l * 1e3 * 1e6).round() / 1e6).collect();
                assert_eq!(mm, [1.0, 2.0, 4.0, 8.0, 16.0]);
            }
            p => panic!("{p:?}"),
        }
        match preset("fig6").unwrap().unwrap().params {
            Params::Wfs { setup, .. } => assert_eq!(setup.fiber.length, 0.2),
            p => panic!("{p:?}"),
        }
        match preset("fig3-4").unwrap().unwrap().params {
            Params::Diffuser(d) => {
                assert_eq!(d.center_wavelength, 808e-9);
                assert!((d.thickness_max - 40.0 * 808e-9).abs() < 1e-18);
                assert_eq!(d.realizations, 30);
            }
            p => panic!("{p:?}"),
        }
        match preset("fig5").unwrap().unwrap().params {
            Params::Grating { study, .. } => {
                assert_eq!(study.spec.design_wavelength, 808e-9);
                let lo = study.offsets.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = study.offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!((lo + 40e-9).abs() < 1e-18 && (hi - 40e-9).abs() < 1e-18);
            }
            p => panic!("{p:?}"),
        }
    }
}
