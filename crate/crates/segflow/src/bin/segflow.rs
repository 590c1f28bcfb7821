//! Thin CLI over the library's experiment commands.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical divergence,
//! 4 diagnostic failure.

use std::path::PathBuf;
use std::process::ExitCode;

use segflow::config::ExperimentConfig;
use segflow::error::Error;
use segflow::runner::{cmd_ablate, cmd_diagnose, cmd_joint, cmd_sample, cmd_train, CmdOptions};

const USAGE: &str = "\
segflow - joint segment transport for rectified-flow fields

USAGE:
  segflow <COMMAND> --config PATH [OPTIONS]

COMMANDS:
  train      Fit the MLP velocity field; writes checkpoint.bin and loss_curve.csv
  sample     Integrate the base sampler per seed; writes base_trajectory.csv
  joint      Joint segment transport per seed; writes trajectory.csv, summary.json, aggregate.json
  ablate     Run setups A-D on identical seeds; writes ablation.csv and ablation.json
  diagnose   Run the verification checks; writes diagnostics.json

OPTIONS:
  --config PATH   Experiment config (JSON, schema-versioned)   [required]
  --seed N        Override the config's seed list with one seed
  --out DIR       Override the config's output directory
  --dry-run       Validate and print the resolved config; write nothing
  --help          Show this help

EXIT CODES:
  0 success   2 config error   3 numerical divergence   4 diagnostic failure
";

struct Args {
    command: String,
    config: PathBuf,
    opts: CmdOptions,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    if argv.is_empty() || argv[0] == "--help" || argv[0] == "-h" {
        return Err(String::new());
    }
    let command = argv[0].clone();
    let mut config: Option<PathBuf> = None;
    let mut opts = CmdOptions::default();
    let mut i = 1;
    while i < argv.len() {
        match argv[i].as_str() {
            "--config" => {
                i += 1;
                config = Some(PathBuf::from(argv.get(i).ok_or("--config needs a path")?));
            }
            "--seed" => {
                i += 1;
                let raw = argv.get(i).ok_or("--seed needs a value")?;
                opts.seed_override =
                    Some(raw.parse().map_err(|_| format!("bad seed '{raw}'"))?);
            }
            "--out" => {
                i += 1;
                opts.out_override =
                    Some(PathBuf::from(argv.get(i).ok_or("--out needs a path")?));
            }
            "--dry-run" => opts.dry_run = true,
            "--help" | "-h" => return Err(String::new()),
            other => return Err(format!("unknown argument '{other}'")),
        }
        i += 1;
    }
    let config = config.ok_or("missing required --config PATH")?;
    Ok(Args {
        command,
        config,
        opts,
    })
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Contract(_) => 2,
        Error::NonFinite { .. } => 3,
        Error::DiagnosticsFailed(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => {
            if msg.is_empty() {
                print!("{USAGE}");
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {msg}");
            eprint!("{USAGE}");
            return ExitCode::from(2);
        }
    };

    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };

    let result = match args.command.as_str() {
        "train" => cmd_train(&cfg, &args.opts).map(|out| {
            if !args.opts.dry_run {
                println!("train: wrote {}", out.checkpoint.display());
            }
        }),
        "sample" => cmd_sample(&cfg, &args.opts).map(|_| ()),
        "joint" => cmd_joint(&cfg, &args.opts).map(|v| {
            if let Some(m) = v.get("final_norm_mean").and_then(|m| m.as_f64()) {
                println!("joint: mean final segment norm {m:.6}");
            }
        }),
        "ablate" => cmd_ablate(&cfg, &args.opts).map(|v| {
            if let Some(frac) = v.get("a_beats_d_on_midpoint_nll").and_then(|m| m.as_f64()) {
                println!("ablate: setup A beats setup D on midpoint NLL in {:.0}% of seeds", frac * 100.0);
            }
        }),
        "diagnose" => cmd_diagnose(&cfg, &args.opts).map(|_| ()),
        other => {
            eprintln!("error: unknown command '{other}'");
            eprint!("{USAGE}");
            return ExitCode::from(2);
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
