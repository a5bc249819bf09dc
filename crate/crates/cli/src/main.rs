use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qtp_cli::{built_in_presets, load_raw, run, validate_and_plan, RawConfig};

#[derive(Parser)]
#[command(name = "qtp", version, about = "Classical and two-photon speckle simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a preset.
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mode_cache: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the built-in presets, or print one.
    Presets { name: Option<String> },
    /// Check a config and print the basis-solve plan.
    Validate {
        config: String,
        #[arg(long)]
        mode_cache: Option<PathBuf>,
    },
}

fn apply_overrides(raw: &mut RawConfig, seed: Option<u64>, out: Option<PathBuf>, cache: Option<PathBuf>) {
    if let Some(s) = seed {
        raw.set("run", "seed", s.to_string());
    }
    if let Some(o) = out {
        raw.set("run", "output_dir", o.display().to_string());
    }
    if let Some(c) = cache {
        raw.set("run", "mode_cache", c.display().to_string());
    }
}

fn main_inner(cli: Cli) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Presets { name: None } => {
            for (name, _) in built_in_presets() {
                writeln!(out, "{name}")?;
            }
        }
        Command::Presets { name: Some(n) } => match built_in_presets().iter().find(|(p, _)| *p == n) {
            Some((_, text)) => write!(out, "{text}")?,
            None => anyhow::bail!("no preset named {n:?}"),
        },
        Command::Validate { config, mode_cache } => {
            let mut raw = load_raw(&config)?;
            apply_overrides(&mut raw, None, None, mode_cache);
            let (cfg, plan) = validate_and_plan(raw)?;
            writeln!(out, "{}: {} / {} ok", cfg.name, cfg.medium.as_str(), cfg.experiment.as_str())?;
            writeln!(out, "basis solves: {}, cache hits: {}", plan.basis_solves, plan.cache_hits)?;
            for b in &plan.bases {
                writeln!(out, "  {} {:.6} nm{}", b.profile, b.wavelength_nm, if b.cached { " (cached)" } else { "" })?;
            }
        }
        Command::Run { config, seed, out: out_dir, mode_cache, threads } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            }
            let mut raw = load_raw(&config)?;
            apply_overrides(&mut raw, seed, out_dir, mode_cache);
            let (cfg, plan) = validate_and_plan(raw)?;
            eprintln!("{}: planning {} basis solves, {} cache hits", cfg.name, plan.basis_solves, plan.cache_hits);
            let m = run(&cfg)?;
            for (k, v) in &m.summary {
                match v {
                    Some(x) => writeln!(out, "{k} = {x:.6}")?,
                    None => writeln!(out, "{k} = none")?,
                }
            }
            eprintln!("wrote {} files and {} in {:.1} s", m.outputs.len(), qtp_cli::run::MANIFEST, m.timings.run_s);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // `qtp presets | head` is not an error.
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
