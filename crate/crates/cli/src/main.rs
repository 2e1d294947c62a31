use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use gkdv::dichotomy::{algorithm1_constant, build_staircase, gaussian_envelopes, SimulationOracle};
use gkdv::output::{self, write_atomic};
use gkdv::simulation::{run_simulation, run_with_profile, Outcome, SimulationConfig};
use gkdv::DampingProfile;

/// Simulate the damped gKdV equation and search for damping that prevents blow-up.
#[derive(Debug, Parser)]
#[command(name = "gkdv", version)]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for independent simulations.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation; exits 2 when it blows up.
    Simulate(Common),
    /// Bracket the critical constant damping.
    FindConstant {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.01)]
        gamma0: f64,
        #[arg(long, default_value_t = 2e-4)]
        eps: f64,
    },
    /// Constant search, then tail searches at each band cutoff and Gaussian envelopes.
    FindBands {
        #[command(flatten)]
        common: Common,
        /// Comma-separated increasing cutoffs, e.g. "64,128,256". Empty for none.
        #[arg(long, default_value = "")]
        bands: String,
        /// Bisection steps per band.
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 0.01)]
        gamma0: f64,
        #[arg(long, default_value_t = 2e-4)]
        eps: f64,
        /// Also simulate both envelopes and record their outcomes.
        #[arg(long)]
        verify_envelopes: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON simulation config.
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

fn load_config(path: &Path) -> Result<SimulationConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: SimulationConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(cfg)
}

fn parse_bands(s: &str) -> Result<Vec<i64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let bands: Vec<i64> = s
        .split(',')
        .map(|b| b.trim().parse::<i64>().with_context(|| format!("bad cutoff {b:?}")))
        .collect::<Result<_>>()?;
    if bands.windows(2).any(|w| w[1] <= w[0]) || bands.iter().any(|b| *b <= 0) {
        bail!("band cutoffs must be positive and strictly increasing: {bands:?}");
    }
    Ok(bands)
}

fn write_manifest(out: &Path, subcommand: &str, cfg: &SimulationConfig, params: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "subcommand": subcommand,
        "config": cfg,
        "parameters": params,
        "out_dir": out,
        "determinism": "no randomness; identical inputs give bit-identical outputs",
    });
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    write_atomic(&out.join("manifest.json"), text.as_bytes())?;
    Ok(())
}

fn simulate(common: &Common) -> Result<ExitCode> {
    let cfg = load_config(&common.config)?;
    let report = run_simulation(&cfg)?;
    output::write_simulation(&common.out, &report)?;
    write_manifest(&common.out, "simulate", &cfg, json!({}))?;
    info!(
        "{} steps, {} Picard sweeps, outcome {:?}",
        report.steps, report.picard_sweeps, report.outcome
    );
    Ok(match report.outcome {
        Outcome::Completed { .. } => ExitCode::SUCCESS,
        Outcome::BlowUp { .. } => ExitCode::from(2),
        Outcome::Failure { description } => {
            eprintln!("error: {description}");
            ExitCode::FAILURE
        }
    })
}

fn find_constant(common: &Common, gamma0: f64, eps: f64) -> Result<ExitCode> {
    let cfg = load_config(&common.config)?;
    let oracle = SimulationOracle::new(cfg.clone())?;
    let result = algorithm1_constant(gamma0, eps, &oracle)?;
    output::write_constant_search(&common.out, &result)?;
    write_manifest(&common.out, "find-constant", &cfg, json!({ "gamma0": gamma0, "eps": eps }))?;
    info!(
        "gamma_e = {:?}, gamma_a = {} after {} simulations",
        result.gamma_e,
        result.gamma_a,
        result.trials.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_envelopes(cfg: &SimulationConfig, profiles: [&DampingProfile; 2], jobs: usize) -> Result<Vec<Outcome>> {
    let run = |p: &DampingProfile| run_with_profile(cfg, p).map(|r| r.outcome);
    if jobs > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = profiles.iter().map(|p| s.spawn(move || run(p))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("simulation thread panicked").map_err(Into::into))
                .collect()
        })
    } else {
        profiles.iter().map(|p| run(p).map_err(Into::into)).collect()
    }
}

struct BandArgs<'a> {
    common: &'a Common,
    bands: &'a str,
    iters: usize,
    gamma0: f64,
    eps: f64,
    verify: bool,
    jobs: usize,
}

fn find_bands(args: BandArgs) -> Result<ExitCode> {
    let cutoffs = parse_bands(args.bands)?;
    let cfg = load_config(&args.common.config)?;
    let oracle = SimulationOracle::new(cfg.clone())?;
    let stair = build_staircase(&cutoffs, args.gamma0, args.eps, args.iters, &oracle)?;
    let (g1, g2) = gaussian_envelopes(&stair)?;
    output::write_staircase(&args.common.out, &stair, Some((&g1, &g2)))?;
    let mut params = json!({
        "bands": cutoffs,
        "iters": args.iters,
        "gamma0": args.gamma0,
        "eps": args.eps,
    });
    if args.verify {
        let outcomes = run_envelopes(&cfg, [&g1, &g2], args.jobs)?;
        info!("gamma1 -> {:?}, gamma2 -> {:?}", outcomes[0], outcomes[1]);
        params["envelope_outcomes"] = json!({ "gamma1": outcomes[0], "gamma2": outcomes[1] });
    }
    write_manifest(&args.common.out, "find-bands", &cfg, params)?;
    info!("{} simulations in the sweep", stair.trial_count());
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    match &cli.command {
        Command::Simulate(common) => simulate(common),
        Command::FindConstant { common, gamma0, eps } => find_constant(common, *gamma0, *eps),
        Command::FindBands {
            common,
            bands,
            iters,
            gamma0,
            eps,
            verify_envelopes,
        } => find_bands(BandArgs {
            common,
            bands,
            iters: *iters,
            gamma0: *gamma0,
            eps: *eps,
            verify: *verify_envelopes,
            jobs: cli.jobs,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_lists() {
        assert_eq!(parse_bands("").unwrap(), Vec::<i64>::new());
        assert_eq!(parse_bands("64, 128,256").unwrap(), vec![64, 128, 256]);
        assert!(parse_bands("128,64").is_err());
        assert!(parse_bands("64,x").is_err());
        assert!(parse_bands("0").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
