//! `lora-stbc`: runs BER experiments described by flat TOML manifests.

mod manifest;
mod presets;
mod runner;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::manifest::{Diagnostic, Format, Manifest};

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "lora-stbc", version, about = "Simulated and analytic BER curves for STBC-MIMO LoRa")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a manifest and write one record per curve and SNR point.
    Run {
        manifest: PathBuf,
        /// Master seed, overriding the manifest.
        #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
        seed: Option<u64>,
        /// Worker threads for the simulation.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        workers: Option<u64>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Skip the Monte Carlo simulation.
        #[arg(long)]
        analytic_only: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a manifest without running it.
    Validate { manifest: PathBuf },
    /// Built-in curve families.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn report(path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        match d.line {
            Some(l) => eprintln!("{}:{l}: {}", path.display(), d.message),
            None => eprintln!("{}: {}", path.display(), d.message),
        }
    }
}

fn load(path: &Path) -> Result<(String, Manifest), ExitCode> {
    let src = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: cannot read manifest: {e}", path.display());
        ExitCode::from(EXIT_INVALID)
    })?;
    let m = manifest::parse(&src).map_err(|d| {
        report(path, &[d]);
        ExitCode::from(EXIT_INVALID)
    })?;
    Ok((src, m))
}

fn run(
    path: &Path,
    seed: Option<u64>,
    workers: Option<u64>,
    format: Option<FormatArg>,
    analytic_only: bool,
    out: Option<PathBuf>,
) -> ExitCode {
    let (src, mut m) = match load(path) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Some(s) = seed {
        m.seed = Some(s as i64);
    }
    if let Some(f) = format {
        m.format = Some(Format::from(f).as_str().to_string());
    }
    if analytic_only {
        m.simulate = Some(false);
    }
    if let Some(o) = &out {
        m.output = Some(o.display().to_string());
    }
    let plan = match manifest::validate(&m, &src) {
        Ok(p) => p,
        Err(diags) => {
            report(path, &diags);
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let records = match runner::execute(&plan, workers.map(|w| w as usize)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let written = runner::render(&records, &m, plan.format).and_then(|bytes| match &plan.output {
        Some(p) => runner::write_atomic(p, &bytes),
        None => std::io::stdout().lock().write_all(&bytes),
    });
    if let Err(e) = written {
        eprintln!("error: writing output: {e}");
        return ExitCode::from(EXIT_IO);
    }
    if let Some(p) = &plan.output {
        eprintln!("wrote {} records to {}", records.len(), p.display());
    }
    ExitCode::SUCCESS
}

fn validate(path: &Path) -> ExitCode {
    let (src, m) = match load(path) {
        Ok(v) => v,
        Err(code) => return code,
    };
    match manifest::validate(&m, &src) {
        Ok(plan) => {
            println!(
                "{}: ok ({} curves, {} SNR points)",
                path.display(),
                plan.curves.len(),
                plan.snr_db.len()
            );
            ExitCode::SUCCESS
        }
        Err(diags) => {
            report(path, &diags);
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            manifest,
            seed,
            workers,
            format,
            analytic_only,
            out,
        } => run(&manifest, seed, workers, format, analytic_only, out),
        Command::Validate { manifest } => validate(&manifest),
        Command::Preset {
            action: PresetAction::List,
        } => {
            for p in presets::PRESETS {
                let (start, stop, step) = p.grid;
                println!(
                    "{:<6} {:>2} curves  {start} to {stop} dB step {step}  {}",
                    p.name,
                    p.curves().len(),
                    p.description
                );
            }
            ExitCode::SUCCESS
        }
    }
}
