use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fusion_drive::drivesim::{generate_route, RouteSpec};
use fusion_drive::train::{self, TrainOptions};
use fusion_drive::verify::{self, VerifyOptions};
use fusion_drive::RunConfig;

#[derive(Parser)]
#[command(name = "fusion-drive", version, about = "Train, evaluate and verify lane-following agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; resumes when the output directory holds the same run.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Skip the held-out evaluation after training.
        #[arg(long)]
        no_eval: bool,
        /// Progress line interval in episodes (0 for silence).
        #[arg(long, default_value_t = 25)]
        log_every: usize,
    },
    /// Evaluate a checkpoint in deterministic mode.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        routes: RouteArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the gradient, reward, target and buffer property suites.
    Verify {
        /// Corrupts one backward rule to show the suites catch it.
        #[arg(long, hide = true, value_parser = ["relu-sign", "dense-weight-sign", "conv-weight-sign"])]
        inject_fault: Option<String>,
    },
    /// Add exponentially smoothed columns to a run's reward curve.
    ExportCurve {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct RouteArgs {
    /// JSON file holding one route or a list of routes.
    #[arg(long)]
    routes: Option<PathBuf>,
    /// Generate routes from a seed range `a..b` (end exclusive) with the run's route parameters.
    #[arg(long)]
    seeds: Option<String>,
}

/// Failures mapped to exit code 1; property-suite failures return 2 directly.
fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { config, seed, out, no_eval, log_every } => {
            let bytes = std::fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
            let mut cfg = RunConfig::from_json(text).with_context(|| format!("invalid config {}", config.display()))?;
            cfg.seed = seed;
            let opts = TrainOptions { config_bytes: Some(bytes), evaluate: !no_eval, log_every };
            let summary = train::train(&cfg, &out, &opts)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Eval { checkpoint, routes, out } => {
            let (cfg, agent) = train::load_agent(&checkpoint)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let routes = resolve_routes(&routes, &cfg)?;
            let report = train::evaluate(&agent, &cfg.label(), &routes, &cfg.env, cfg.eval_resolution, Some(&out))?;
            report.write(&out)?;
            println!("{}", report.to_csv()?.trim_end());
        }
        Command::Verify { inject_fault } => {
            let opts = VerifyOptions { fault: inject_fault.as_deref().map(verify::parse_fault).transpose()? };
            let results = verify::run_all(&opts)?;
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::ExportCurve { run, alpha } => {
            let path = train::export_curve(&run, alpha)?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn resolve_routes(args: &RouteArgs, cfg: &RunConfig) -> anyhow::Result<Vec<RouteSpec>> {
    if let Some(path) = &args.routes {
        return read_routes(path);
    }
    let spec = args.seeds.as_deref().expect("clap enforces one route source");
    let (a, b) = spec.split_once("..").with_context(|| format!("seed range {spec:?} is not of the form a..b"))?;
    let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
    if a >= b {
        bail!("seed range {spec:?} is empty");
    }
    (a..b).map(|s| Ok(generate_route(s, &cfg.routes.params)?)).collect()
}

fn read_routes(path: &Path) -> anyhow::Result<Vec<RouteSpec>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let routes: Vec<RouteSpec> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    for r in &routes {
        r.validate()?;
    }
    if routes.is_empty() {
        bail!("{} holds no routes", path.display());
    }
    Ok(routes)
}
