use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use renewal::config::Config;
use renewal::harness::{check_windows, random_windows, run_traces, Algorithm, EnsembleSummary};
use renewal::oracle::theta_star;
use renewal::output::{emit_csv, write_csv};
use renewal::scenarios::SystemKind;
use renewal::{Error, Result};

#[derive(Parser)]
#[command(name = "renewal", version, about = "Adaptive renewal-reward controller simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensemble and write per-task means as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output file; falls back to the config's `output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal ratio, policy and Slater margin of each finite-support distribution.
    ThetaStar {
        #[arg(long)]
        config: PathBuf,
    },
    /// Derived constants of the adaptive controller.
    Constants {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every replication with per-step and windowed invariant checks.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = Config::load(config)?;
    let exp = cfg.experiment()?;
    let traces = run_traces(&exp, cfg.threads)?;
    let summary = EnsembleSummary::from_traces(&traces, exp.window, exp.scenario.p_av(), cfg.fingerprint())?;
    match out.or(cfg.output.clone()) {
        Some(path) => emit_csv(&summary, &path)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv(&summary, &mut lock)
                .and_then(|_| lock.flush())
                .map_err(|source| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
        }
    }
    eprintln!(
        "fingerprint {} replications {} final cum_ratio {}",
        summary.fingerprint,
        summary.replications,
        summary.cum_ratio.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn theta_star_cmd(config: &Path) -> Result<()> {
    let cfg = Config::load(config)?;
    let SystemKind::FiniteSupport { distributions } = &cfg.scenario.system else {
        return Err(Error::Unsupported(
            "theta-star needs a finite_support scenario".into(),
        ));
    };
    let mut infeasible = false;
    let mut out = Vec::new();
    for (i, spec) in distributions.iter().enumerate() {
        let r = theta_star(spec)?;
        infeasible |= !r.feasible;
        out.push(json!({
            "distribution": i + 1,
            "feasible": r.feasible,
            "theta_star": r.feasible.then_some(r.theta_star),
            "slater_s": if r.slater_s.is_finite() { json!(r.slater_s) } else { json!("inf") },
            "policy": r.policy.map(|p| p.probs),
            "expectation_point": r.expectation_point,
        }));
    }
    print_json(&json!(out));
    if infeasible {
        return Err(Error::Infeasible);
    }
    Ok(())
}

fn constants_cmd(config: &Path) -> Result<()> {
    let cfg = Config::load(config)?;
    let k = cfg.constants()?;
    let (params, _) = cfg.adaptive_params()?.expect("constants succeeded");
    print_json(&json!({
        "params": params,
        "constants": k,
        "j_bound": k.j_bound(params.v),
    }));
    Ok(())
}

fn check_cmd(config: &Path) -> Result<()> {
    let cfg = Config::load(config)?;
    let exp = cfg.experiment()?;
    let Algorithm::Adaptive(params) = &exp.algorithm else {
        return Err(Error::Unsupported("check runs the adaptive algorithm".into()));
    };
    let traces = run_traces(&exp, cfg.threads)?;
    let y_max = exp.scenario.bounds().y_max;
    for trace in &traces {
        let pairs = random_windows(exp.seed, trace.replication, exp.horizon, cfg.window_checks);
        check_windows(trace, params, &y_max, &pairs)?;
    }
    print_json(&json!({
        "status": "ok",
        "replications": exp.replications,
        "tasks": exp.horizon,
        "windows_per_replication": cfg.window_checks,
    }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::ThetaStar { config } => theta_star_cmd(&config),
        Command::Constants { config } => constants_cmd(&config),
        Command::Check { config } => check_cmd(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
