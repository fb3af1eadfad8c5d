use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fastlight_cli::{load_scenario, run_scenario, validate_config, with_threads, CliError, RunOverrides};

/// Fast-light pulse and imaging simulator.
#[derive(Debug, Parser)]
#[command(name = "fastlight", version)]
struct Args {
    /// Scenario file or preset name (fig2, fig3, fig4, sweep-distortion, vacuum).
    #[arg(long)]
    scenario: String,
    /// Output directory; defaults to out/<scenario name>.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the number of time samples.
    #[arg(long)]
    time_samples: Option<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Print diagnostics and exit without running.
    #[arg(long)]
    validate_only: bool,
}

fn run(args: &Args) -> Result<(), CliError> {
    if args.validate_only {
        let diagnostics = validate_config(&args.scenario);
        if diagnostics.is_empty() {
            println!("{}: ok", args.scenario);
            return Ok(());
        }
        return Err(CliError::Diagnostics(diagnostics));
    }
    let (scenario, base) = load_scenario(&args.scenario)?;
    let out = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    let overrides = RunOverrides { time_samples: args.time_samples };
    let outcome = with_threads(args.parallel, || run_scenario(&scenario, &base, Some(&out), overrides))??;
    let p = &outcome.report.pulse;
    println!(
        "{}: gain {:.4}, advancement {:.4e} s ({:.3} of FWHM), distortion {:.4}",
        scenario.name, p.peak_gain, p.advancement_s, p.relative_advancement, p.distortion
    );
    if let Some(im) = &outcome.report.imaging {
        println!(
            "  in-beam maps: advancement {:.4e}..{:.4e} s, gain {:.3}..{:.3}, {} pixels",
            im.min_advancement_s, im.max_advancement_s, im.min_gain, im.max_gain, im.binned_in_ellipse
        );
    }
    println!("  {} files written to {}", outcome.manifest.files.len() + 1, out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
