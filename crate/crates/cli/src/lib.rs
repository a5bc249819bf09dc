//! Scenario files, presets, planning and artifact emission for the `qtp`
//! binary.

pub mod config;
pub mod plan;
pub mod presets;
pub mod run;

use std::path::Path;

use anyhow::{bail, Context, Result};

pub use config::{ConfigError, RawConfig, ScenarioConfig};
pub use plan::{validate_and_plan, Plan};
pub use presets::built_in_presets;
pub use run::{run, RunManifest};

/// Reads `source` as a file when one exists, else as a preset name.
pub fn load_raw(source: &str) -> Result<RawConfig> {
    let text = if Path::new(source).is_file() {
        std::fs::read_to_string(source).with_context(|| format!("reading {source}"))?
    } else if let Some(t) = presets::preset_text(source) {
        t.to_string()
    } else {
        bail!("{source:?} is neither a config file nor a preset (see `qtp presets`)");
    };
    Ok(RawConfig::parse(&text)?)
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
