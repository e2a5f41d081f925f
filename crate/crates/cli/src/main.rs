//! `lpvcert`: analyze, bisect, synthesize gains, verify, and build report tables.
//!
//! Exit codes: 0 feasible/pass, 1 infeasible/fail, 2 inconclusive, 3 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use lpvcert::bisect;
use lpvcert::conditions::{self, Certificate, ConditionId};
use lpvcert::gains::{self, GainExport, GainSchedule};
use lpvcert::io;
use lpvcert::lpv::{SimMode, SystemSpec};
use lpvcert::report::{self, ReportConfig};
use lpvcert::sdpfeas::{SolveOptions, Status};
use lpvcert::verify;

const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "lpvcert", version, about = "Certificates for discrete-time polytopic LPV systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one condition and print the verdict and margin as JSON.
    Analyze {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        condition: ConditionId,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Write the certificate here when feasible.
        #[arg(long)]
        cert_out: Option<PathBuf>,
    },
    /// Bisect for the largest feasible radius.
    Bisect {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        condition: ConditionId,
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Solve a synthesis or detectability condition and export the gain.
    Gains {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        condition: ConditionId,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Points per axis of the documentation grid of sampled gains.
        #[arg(long, default_value_t = 5)]
        grid_points: usize,
    },
    /// Check a certificate (and optionally a gain) on vertices and by sampling.
    Verify {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        gain: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Required decrease rate; defaults to half the smallest vertex margin.
        #[arg(long)]
        a3: Option<f64>,
        /// Points per axis of the (π, π₊) grid for two-parameter gains.
        #[arg(long, default_value_t = 21)]
        grid_points: usize,
    },
    /// Run a report config and write the tables into a directory.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Errors in how the tool was invoked, as opposed to negative verdicts.
#[derive(Debug)]
struct Usage(anyhow::Error);

fn usage<T>(r: Result<T>) -> std::result::Result<T, Usage> {
    r.map_err(Usage)
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::Feasible => 0,
        Status::Infeasible => 1,
        Status::Inconclusive => 2,
    }
}

fn load_system(path: &Path, gamma: Option<f64>) -> Result<SystemSpec> {
    let spec = SystemSpec::load(path).with_context(|| format!("reading system {}", path.display()))?;
    match gamma {
        Some(_) if !spec.has_gamma() => bail!("--gamma given but {} has no radius", path.display()),
        Some(g) => Ok(spec.with_gamma(g)),
        None => Ok(spec),
    }
}

fn print(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn run(cmd: Command) -> std::result::Result<u8, Usage> {
    let opts = SolveOptions::default();
    match cmd {
        Command::Analyze {
            system,
            condition,
            gamma,
            eps,
            cert_out,
        } => {
            let spec = usage(load_system(&system, gamma))?;
            let sys = usage(spec.build().map_err(Into::into))?;
            let eps = eps.unwrap_or_else(|| conditions::default_eps(&sys, condition));
            let a = usage(conditions::analyze(condition, &sys, eps, &opts).map_err(Into::into))?;
            if let (Some(p), Some(c)) = (&cert_out, &a.certificate) {
                usage(io::write_text(p, &c.to_json()).map_err(Into::into))?;
            }
            print(&json!({
                "schema_version": io::SCHEMA_VERSION,
                "condition": condition,
                "gamma": gamma,
                "eps": eps,
                "status": a.outcome.status,
                "margin": a.outcome.margin,
                "upper_bound": a.outcome.upper_bound,
                "iterations": a.outcome.iterations,
                "num_scalars": a.num_scalars,
                "seconds": a.seconds,
                "diagnostic": a.outcome.diagnostic,
            }));
            Ok(status_code(a.outcome.status))
        }
        Command::Bisect {
            system,
            condition,
            lo,
            hi,
            tol,
        } => {
            let spec = usage(load_system(&system, None))?;
            match bisect::bisect_gamma(condition, &spec, lo, hi, tol, &opts) {
                Ok(r) => {
                    let mut v = serde_json::to_value(&r).expect("json");
                    v["schema_version"] = json!(io::SCHEMA_VERSION);
                    v["gamma_star_4dp"] = json!(r.formatted());
                    print(&v);
                    Ok(0)
                }
                Err(bisect::BisectError::NoGamma) => Err(Usage(anyhow::anyhow!("system family has no radius to vary"))),
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(1)
                }
            }
        }
        Command::Gains {
            system,
            condition,
            gamma,
            out,
            grid_points,
        } => {
            let spec = usage(load_system(&system, gamma))?;
            let sys = usage(spec.build().map_err(Into::into))?;
            // Reject conditions without a gain before spending time solving.
            if matches!(
                condition,
                ConditionId::PolyqsL12 | ConditionId::PolyqsL13 | ConditionId::PolyqsL14 | ConditionId::StabNec | ConditionId::Thm2Sampled
            ) {
                return Err(Usage(anyhow::anyhow!("{condition} does not define a gain")));
            }
            let eps = conditions::default_eps(&sys, condition);
            let a = usage(conditions::analyze(condition, &sys, eps, &opts).map_err(Into::into))?;
            let Some(cert) = a.certificate else {
                eprintln!("{condition}: {:?}, no gain written", a.outcome.status);
                return Ok(status_code(a.outcome.status));
            };
            let export = GainSchedule::from_certificate(&sys, &cert)
                .and_then(|g| g.export(&gains::parameter_grid(&sys, grid_points)))
                .context("building gain");
            let export = match export {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return Ok(1);
                }
            };
            usage(io::write_text(&out, &export.to_json()).map_err(Into::into))?;
            print(&json!({
                "schema_version": io::SCHEMA_VERSION,
                "condition": condition,
                "status": a.outcome.status,
                "margin": a.outcome.margin,
                "kind": export.kind,
                "recipe": export.recipe,
                "out": out,
            }));
            Ok(0)
        }
        Command::Verify {
            system,
            cert,
            gain,
            gamma,
            samples,
            horizon,
            seed,
            a3,
            grid_points,
        } => {
            let spec = usage(load_system(&system, gamma))?;
            let sys = usage(spec.build().map_err(Into::into))?;
            let text = usage(io::read_text(&cert).map_err(Into::into))?;
            // Accept a bare certificate or a gain export carrying one.
            let certificate = match Certificate::from_json(&text) {
                Ok(c) => c,
                Err(_) => usage(GainExport::from_json(&text).map(|g| g.certificate).context("reading certificate"))?,
            };
            let schedule = match &gain {
                Some(p) => {
                    let g = usage(io::read_text(p).map_err(Into::into).and_then(|t| GainExport::from_json(&t).map_err(Into::into)))?;
                    Some(usage(g.schedule(&sys).map_err(Into::into))?)
                }
                None => None,
            };
            let mode = schedule.as_ref().map_or(SimMode::Open, |g| g.kind.mode());
            let grid = gains::parameter_grid(&sys, grid_points);
            let r = verify::monte_carlo_descent(&sys, &certificate, mode, schedule.as_ref(), samples, horizon, seed, a3, &grid);
            match r {
                Ok(r) => {
                    println!("{}", r.to_json());
                    Ok(if r.pass { 0 } else { 1 })
                }
                Err(e @ (verify::VerifyError::BadSampling | verify::VerifyError::Count { .. })) => Err(Usage(e.into())),
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(1)
                }
            }
        }
        Command::Report { config, out_dir } => {
            let cfg = usage(ReportConfig::load(&config).map_err(Into::into))?;
            let base = config.parent().unwrap_or(Path::new("."));
            let r = usage(report::run_report(&cfg, base, &opts).map_err(Into::into))?;
            let files = usage(r.write(&out_dir).map_err(Into::into))?;
            print!("{}", r.bisection_md());
            if !r.timing.is_empty() {
                print!("\n{}", r.timing_md());
            }
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            let ok = r.bisections.iter().all(|b| b.error.is_none()) && r.orderings.iter().all(|o| o.holds);
            Ok(if ok { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
