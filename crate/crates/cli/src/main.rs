//! Runs one configured experiment.
//!
//! Usage:
//!     irpe --config <path> [--mode irpe|hybrid|centralized|lifted-check]
//!          [--seed N] [--cycles N] [--out DIR]
//!
//! Writes trace.csv and summary.json (plus lifted_trace.csv in lifted-check
//! mode) to the output directory. On failure prints one JSON object to stderr
//! and exits nonzero.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use irpe::harness::{run_experiment, ExperimentConfig, Mode};
use serde_json::json;

#[derive(Parser)]
#[command(name = "irpe", version, about = "Incremental RPE experiments on simulated sensor networks")]
struct Args {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,

    /// Overrides the configured estimator mode
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,

    /// Overrides the data seed
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the number of cycles
    #[arg(long)]
    cycles: Option<usize>,

    /// Overrides the output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: irpe::Error| e.to_string())
}

fn fail(kind: &str, message: String, extra: serde_json::Value) -> ExitCode {
    let mut line = json!({ "error": kind, "message": message });
    if let (Some(obj), Some(more)) = (line.as_object_mut(), extra.as_object()) {
        obj.extend(more.clone());
    }
    eprintln!("{line}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), json!({})),
    };

    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e.kind(), e.to_string(), json!({})),
    };
    if let Some(m) = args.mode {
        cfg.estimator.mode = m;
    }
    if let Some(s) = args.seed {
        cfg.estimator.seed = s;
    }
    if let Some(c) = args.cycles {
        cfg.estimator.cycles = c;
    }
    if let Some(o) = args.out {
        cfg.output.dir = o;
    }

    match run_experiment(&cfg) {
        Ok(out) => {
            let s = &out.summary;
            let mut stdout = std::io::stdout().lock();
            // A closed pipe is not a failure of the run.
            let _ = writeln!(
                stdout,
                "{} cycles={} x_final={:?} distance_to_truth={:.6} comm_cost={:.3} wall_time={:.3}s",
                s.mode,
                s.completed_cycles,
                s.x_final,
                s.distance_to_truth,
                s.total_comm_cost,
                out.wall_time.as_secs_f64()
            );
            if let Some(eq) = &s.equivalence {
                let _ = writeln!(
                    stdout,
                    "lifted check: max_abs_dev={:e} max_rel_dev={:e} first_divergence={:?}",
                    eq.max_abs_dev, eq.max_rel_dev, eq.first_divergence_index
                );
            }
            for w in &s.admissibility_warnings {
                let _ = writeln!(stdout, "warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(
            e.kind(),
            e.to_string(),
            json!({ "mode": cfg.estimator.mode.as_str(), "sensor": e.sensor(), "output": cfg.output.dir }),
        ),
    }
}
