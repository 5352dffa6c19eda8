mod settings;
mod validate;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patsync::harness::{nmse_vs_crb, run_experiment, snr_for_target, write_csv, ExperimentSpec};
use settings::Settings;

#[derive(Parser)]
#[command(name = "patsync", version, about = "Packet error bounds for pilot-aided synchronization over block fading")]
struct Cli {
    /// Flat TOML file with the same keys as the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound (or SNR for a target) along one parameter axis.
    Sweep(Settings),
    /// SNR reaching `--target-eps`, with the bisection trace as CSV.
    SnrSearch(Settings),
    /// Delay and channel NMSE against the CRB over the SNRs in `--values`.
    Nmse(Settings),
    /// Quick oracle checks of the numerical kernels.
    Validate(Settings),
}

impl Command {
    fn flags(&self) -> &Settings {
        match self {
            Command::Sweep(s) | Command::SnrSearch(s) | Command::Nmse(s) | Command::Validate(s) => s,
        }
    }
}

fn output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), String> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?.overlay(cli.command.flags()),
        None => cli.command.flags().clone(),
    };
    if let Some(n) = settings.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let cfg = settings.system_config()?;
    let mode = settings.mode()?;
    let eval = settings.eval_options();
    let err = |e: patsync::Error| e.to_string();
    match cli.command {
        Command::Sweep(_) => {
            let mut spec = ExperimentSpec::new(cfg, settings.axis()?, settings.values.clone().unwrap_or_default(), mode);
            spec.eval = eval;
            spec.search = settings.search_options();
            spec.target_eps = settings.target_eps;
            spec.optimize_np = settings.optimize_np.unwrap_or(false);
            spec.nmse_trials = settings.nmse_trials.unwrap_or(0);
            spec.timing = settings.timing.unwrap_or(false);
            let rows = run_experiment(&spec).map_err(err)?;
            let out = output(settings.out.as_ref()).map_err(|e| e.to_string())?;
            write_csv(&rows, out).map_err(err)?;
        }
        Command::SnrSearch(_) => {
            let target = settings.target_eps.ok_or("snr-search needs --target-eps")?;
            let r = snr_for_target(&cfg, mode, target, &eval, &settings.search_options()).map_err(err)?;
            eprintln!("snr_dB = {:.4} (bracket [{:.4}, {:.4}])", r.snr_db, r.lo_db, r.hi_db);
            let mut out = output(settings.out.as_ref()).map_err(|e| e.to_string())?;
            let mut write = || -> io::Result<()> {
                writeln!(out, "snr_dB,s,eps_pep_ub,stderr")?;
                for p in &r.trace {
                    writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", p.snr_db, p.s, p.eps, p.stderr)?;
                }
                out.flush()
            };
            write().map_err(|e| e.to_string())?;
        }
        Command::Nmse(_) => {
            let snrs = settings.values.clone().unwrap_or_else(|| vec![cfg.snr_db()]);
            let trials = settings.nmse_trials.unwrap_or(10_000);
            let mut out = output(settings.out.as_ref()).map_err(|e| e.to_string())?;
            let mut lines = vec!["snr_dB,mode,nmse_delay,crb_delay,nmse_channel,crb_channel,n_used".to_string()];
            for snr in snrs {
                let mut c = cfg.clone();
                c.set_snr_db(snr);
                let r = nmse_vs_crb(&c, mode, trials, eval.seed).map_err(err)?;
                lines.push(format!(
                    "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    snr,
                    mode.name(),
                    r.nmse_delay,
                    r.crb_delay,
                    r.nmse_channel,
                    r.crb_channel,
                    r.n_used
                ));
            }
            for l in lines {
                writeln!(out, "{l}").map_err(|e| e.to_string())?;
            }
        }
        Command::Validate(_) => {
            let results = validate::run_all(eval.seed);
            let mut failed = false;
            for (name, ok, detail) in &results {
                println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
                failed |= !ok;
            }
            if failed {
                return Err("validation failed".into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
