use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use separatrix_lab::charts_flows::PlanePoint;
use separatrix_lab::cli::{
    check_theorem_a, check_theorem_b, counterexample_run, curve_catalog, emit_plots, resolve_output_dir, run_scenario,
    write_catalog, write_counterexample, write_model, write_orbit, write_renorm, write_return_map, CheckResult, Lab,
    ScenarioConfig, ScenarioError,
};
use separatrix_lab::return_renorm::AnnulusPoint;

#[derive(Parser)]
#[command(name = "seplab", version, about = "Separatrix renormalization laboratory")]
struct Cli {
    /// Scenario config (TOML); built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides SEPLAB_OUT and the config.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, short, global = true)]
    jobs: Option<usize>,
    /// Validate the config and stop before any computation.
    #[arg(long, global = true)]
    check_only: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model summary, separatrix and fundamental domain.
    Model,
    /// Plane orbit of f_eps.
    Orbit {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
    /// Orbit of the renormalized return map on the annulus.
    ReturnMap {
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        logy: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
    /// Sigma table, twist profiles and a strip image.
    Renorm,
    /// Invariant curve catalog and accumulation table.
    Curves,
    /// Descent, witness orbit, certificate and solver sweeps.
    Counterexample,
    /// Run the configured scenario and write report.json.
    Report,
    /// gnuplot scripts for the artifacts in the output directory.
    Plots,
}

fn describe(err: &ScenarioError) -> String {
    let mut msg = err.to_string();
    let mut src = std::error::Error::source(err);
    while let Some(s) = src {
        msg.push_str(&format!("\n  caused by: {s}"));
        src = s.source();
    }
    if let ScenarioError::Other(e) = err {
        msg = format!("{e:#}");
    }
    msg
}

fn print_check(c: &CheckResult, took: Option<std::time::Duration>) {
    let took = took.map(|d| format!(" ({:.2} s)", d.as_secs_f64())).unwrap_or_default();
    println!("[{}] criterion {}: {}{took}", if c.pass { "PASS" } else { "FAIL" }, c.criterion, c.name);
    for n in &c.notes {
        println!("    {n}");
    }
}

fn exit_for(pass: bool) -> ExitCode {
    ExitCode::from(if pass { 0 } else { 1 })
}

fn run(cli: Cli) -> Result<ExitCode, ScenarioError> {
    let cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    cfg.validate()?;
    if cli.check_only {
        println!("config ok");
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| ScenarioError::Config(format!("--jobs: {e}")))?;
    }
    let out = resolve_output_dir(&cfg, cli.out.as_deref());
    let written = |paths: &[PathBuf]| {
        for p in paths {
            println!("wrote {}", p.display());
        }
    };
    match cli.command {
        Command::Plots => {
            written(&emit_plots(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report => {
            let outcome = run_scenario(&cfg, &out)?;
            for (c, t) in outcome.report.checks.iter().zip(&outcome.timings) {
                print_check(c, Some(*t));
            }
            println!("wrote {}", outcome.report_path.display());
            Ok(ExitCode::from(outcome.exit_code() as u8))
        }
        cmd => {
            let lab = Lab::build(&cfg)?;
            match cmd {
                Command::Model => {
                    written(&write_model(&cfg, &lab, &out)?);
                    Ok(ExitCode::SUCCESS)
                }
                Command::Orbit { x, y, steps, epsilon } => {
                    written(&[write_orbit(&lab, epsilon, PlanePoint::new(x, y), steps, &out)?]);
                    Ok(ExitCode::SUCCESS)
                }
                Command::ReturnMap { x, logy, steps, epsilon } => {
                    written(&[write_return_map(&lab, epsilon, AnnulusPoint::new(x, logy), steps, &out)?]);
                    Ok(ExitCode::SUCCESS)
                }
                Command::Renorm => {
                    written(&write_renorm(&cfg, &lab, &out)?);
                    Ok(ExitCode::SUCCESS)
                }
                Command::Curves => {
                    let cat = curve_catalog(&cfg, &lab)?;
                    written(&write_catalog(&cat, &out)?);
                    let check = check_theorem_a(&cfg, &cat);
                    print_check(&check, None);
                    Ok(exit_for(check.pass))
                }
                Command::Counterexample => {
                    let run = counterexample_run(&cfg, &lab)?;
                    written(&write_counterexample(&run, &out)?);
                    let check = check_theorem_b(&cfg, &run);
                    print_check(&check, None);
                    Ok(exit_for(check.pass))
                }
                Command::Plots | Command::Report => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
