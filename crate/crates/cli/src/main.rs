use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvmaser::fixtures::standard_suite;
use nvmaser::model::{presets, TWO_PI};
use nvmaser_cli::fig2::run_fig2;
use nvmaser_cli::output::write_json;
use nvmaser_cli::settings::Settings;
use nvmaser_cli::single::run_single;
use nvmaser_cli::sweep::{run_sweep, SweepSpec};
use nvmaser_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "nvmaser", version, about = "Mean-field NV-diamond maser simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Start from a named experimental parameter set.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// `key=value`, applied after the file and the preset.
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state, spectrum and diagnostics of one parameter point.
    Single,
    /// Two-dimensional parameter grid.
    Sweep,
    /// Sub-ensemble spectra over a range of pump rates.
    Fig2,
    /// List the experimental parameter sets.
    Presets,
    /// Compare the mean-field model with exact small-system evolution.
    OracleCheck,
}

fn run(cli: &Cli) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref(), cli.preset.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Single => {
            let r = run_single(&s, &cli.out)?;
            println!("regime {:?}, photon number {:e}", r.regime, r.steady.photon_number);
            if let Some(w) = r.linewidth {
                println!("linewidth {w:e} ({})", s.units());
            }
        }
        Command::Sweep => {
            let spec = SweepSpec::from_settings(&mut s)?;
            let meta = run_sweep(&s, &spec, &cli.out)?;
            println!("{} points, {} failed, {} flagged", meta.points, meta.failed, meta.hysteresis_points.len());
        }
        Command::Fig2 => {
            let r = run_fig2(&s, &cli.out)?;
            for e in &r.spectra {
                println!("eta/gamma {:e}: {} peaks ({})", e.eta_over_gamma, e.peaks.len(), e.status);
            }
        }
        Command::Presets => {
            println!("{:<14} {:>12} {:>10} {:>10} {:>12} {:>12}  regime", "name", "omega_c/2pi", "N", "g/2pi", "Gamma_c/2pi", "Omega/2pi");
            for p in presets() {
                println!(
                    "{:<14} {:>12.4e} {:>10.2e} {:>10.3} {:>12.3e} {:>12.3e}  {:?}",
                    p.name,
                    p.params.omega_c / TWO_PI,
                    p.params.n_spins,
                    p.params.g / TWO_PI,
                    p.tabulated_purcell,
                    p.tabulated_omega,
                    p.coupling_regime
                );
            }
            write_json(&cli.out, "presets.json", &presets())?;
        }
        Command::OracleCheck => {
            let reports = standard_suite()?;
            for r in &reports {
                println!("{} {}: {:e} (bound {:e})", if r.pass { "PASS" } else { "FAIL" }, r.name, r.measured, r.bound);
            }
            write_json(&cli.out, "oracle_report.json", &reports)?;
            let failed = reports.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(CliError::Solver(format!("{failed} oracle comparisons outside their bounds")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
