use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pof_harness::sweep::{curve_csv, parse_grid};
use pof_harness::{
    apen, simulate, sweep, tune, verify_trace, ApenOptions, HarnessError, LoadedConfig, SweepKind, EXIT_OK,
};

/// Proof-of-following experiments: simulate sessions, tune the decision
/// rule, sweep channel and protocol parameters, and verify recorded traces.
#[derive(Debug, Parser)]
#[command(name = "pof", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (simulate) or file (other commands); defaults to
    /// the config's `output` or stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// simulate: run only this seed. tune, sweep: base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every scenario over every seed; write reports and aggregate.csv.
    Simulate,
    /// Tune (tau, K, alpha) on the config's training pairs.
    Tune,
    /// Sweep one parameter and write `x,mean,std,n`.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        /// `a,b,c` or `start:stop:step`; overrides the config's grid.
        #[arg(long, value_parser = grid_arg)]
        grid: Option<Grid>,
    },
    /// Offline decision on a recorded verifier/candidate trace pair.
    VerifyTrace {
        trace_v: PathBuf,
        trace_c: PathBuf,
        params: PathBuf,
    },
    /// Approximate entropy of a trace after smoothing.
    Apen {
        trace: PathBuf,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 0.2)]
        r_factor: f64,
        /// Moving-average window applied before ApEn.
        #[arg(long, default_value_t = 20)]
        smooth: usize,
    },
}

#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

fn grid_arg(s: &str) -> Result<Grid, String> {
    parse_grid(s).map(Grid)
}

fn load(cli: &Cli, required: bool) -> Result<LoadedConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => LoadedConfig::load(p)?,
        None if required => {
            return Err(HarnessError::Config {
                path: PathBuf::from("--config"),
                line: None,
                column: None,
                msg: "this command needs --config".into(),
            })
        }
        None => LoadedConfig::from_text(Path::new("<defaults>"), "{}".into())?,
    };
    if let Some(s) = cli.seed {
        cfg.raw.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), HarnessError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| HarnessError::Runtime(format!("{}: {e}", dir.display())))?;
            }
            std::fs::write(p, bytes).map_err(|e| HarnessError::Runtime(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{}", String::from_utf8_lossy(bytes));
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.command {
        Command::Simulate => {
            let mut cfg = load(cli, true)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let out = cli
                .out
                .clone()
                .or_else(|| cfg.raw.output.as_ref().map(|p| cfg.resolve(p)))
                .unwrap_or_else(|| PathBuf::from("pof-out"));
            let res = simulate(&cfg, &out)?;
            for (scenario, rate, n) in res.passing_rates() {
                println!("{scenario}: passing rate {rate:.3} over {n} runs");
            }
            println!("wrote {} reports and {}", res.reports.len(), res.aggregate.display());
        }
        Command::Tune => {
            let cfg = load(cli, true)?;
            let report = tune(&cfg, cfg.raw.seed)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(cli.out.as_deref(), report.to_json().as_bytes())?;
        }
        Command::Sweep { kind, grid } => {
            let cfg = load(cli, false)?;
            let res = sweep(&cfg, *kind, grid.as_ref().map_or(&[][..], |g| &g.0[..]))?;
            if let Some(dc) = res.fitted_d_corr {
                eprintln!("fitted d_corr = {dc:.2} m (configured {} m)", cfg.world.d_corr);
            }
            emit(cli.out.as_deref(), &curve_csv(&res.curve)?)?;
            if let Some(remote) = &res.remote {
                match &cli.out {
                    Some(p) => {
                        let rp = p.with_extension("remote.csv");
                        emit(Some(&rp), &curve_csv(remote)?)?;
                        eprintln!("remote-candidate curve written to {}", rp.display());
                    }
                    None => eprintln!("remote-candidate curve is written only with --out"),
                }
            }
        }
        Command::VerifyTrace { trace_v, trace_c, params } => {
            let v = verify_trace(trace_v, trace_c, params)?;
            emit(cli.out.as_deref(), v.to_json().as_bytes())?;
        }
        Command::Apen { trace, m, r_factor, smooth } => {
            let opts = ApenOptions {
                m: *m,
                r_factor: *r_factor,
                smooth: *smooth,
            };
            let v = apen(trace, opts)?;
            emit(cli.out.as_deref(), format!("{v}\n").as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
