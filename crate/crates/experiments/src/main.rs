use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fasa_experiments::config::{campaign_from_value, Campaign, CampaignKind};
use fasa_experiments::output::{format_value, write_outputs};
use fasa_experiments::{run_campaign, validate};

const USAGE_ERROR: u8 = 2;
const RUN_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "fasa-sim", version, about = "Slotted-ALOHA backlog estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drift curves of the estimators against offered load
    Drift(RunArgs),
    /// Step response: rising time and stationary throughput
    Step(RunArgs),
    /// One burst of devices: access delay percentiles
    SingleEvent(RunArgs),
    /// Interrupted Poisson traffic: mean delay and divergence
    Repetitive(RunArgs),
    /// Residual backlog and delay at several horizons
    Scan(RunArgs),
    /// Check the analytic model and exit nonzero on any failure
    Validate,
}

#[derive(Args)]
struct RunArgs {
    /// Campaign document (JSON); the built-in desk campaign when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Base seed, overriding the campaign's
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Scheme string replacing the campaign's list (repeatable)
    #[arg(long = "scheme", value_name = "SCHEME")]
    schemes: Vec<String>,
}

fn builtin(kind: CampaignKind) -> &'static str {
    match kind {
        CampaignKind::Drift => include_str!("../../../configs/desk/fig2.json"),
        CampaignKind::Step => include_str!("../../../configs/desk/table1.json"),
        CampaignKind::SingleEvent => include_str!("../../../configs/desk/table3.json"),
        CampaignKind::Repetitive => include_str!("../../../configs/desk/fig5.json"),
        CampaignKind::StabilityScan => include_str!("../../../configs/desk/stability.json"),
    }
}

fn load(kind: CampaignKind, args: &RunArgs) -> Result<Campaign, String> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => builtin(kind).to_string(),
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("syntax error: {e}"))?;
    let mut c = campaign_from_value(value).map_err(|e| e.to_string())?;
    if c.kind != kind {
        return Err(format!(
            "campaign kind `{}` belongs to subcommand `{}`",
            c.kind,
            c.kind.command()
        ));
    }
    if !args.schemes.is_empty() {
        c = c.with_schemes(&args.schemes).map_err(|e| format!("--scheme {e}"))?;
    }
    if let Some(seed) = args.seed {
        c = c.with_seed(seed);
    }
    Ok(c)
}

fn run(kind: CampaignKind, args: RunArgs) -> ExitCode {
    let campaign = match load(kind, &args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    };
    let workers = args.workers.map(|w| w as usize).unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let out_dir = args
        .out
        .or_else(|| campaign.output_path.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(&campaign.name));

    let output = match run_campaign(&campaign, workers) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RUN_FAILURE);
        }
    };
    let files = match write_outputs(&campaign, &output, &out_dir) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RUN_FAILURE);
        }
    };
    for r in &output.rows {
        println!(
            "{:<40} {:<28} {:<24} {:>14} ± {}",
            r.scheme,
            r.param,
            r.metric,
            format_value(r.value),
            format_value(r.value.and(r.ci95))
        );
    }
    println!("wrote {} file(s) to {}", files.len(), out_dir.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Drift(a) => run(CampaignKind::Drift, a),
        Command::Step(a) => run(CampaignKind::Step, a),
        Command::SingleEvent(a) => run(CampaignKind::SingleEvent, a),
        Command::Repetitive(a) => run(CampaignKind::Repetitive, a),
        Command::Scan(a) => run(CampaignKind::StabilityScan, a),
        Command::Validate => {
            let checks = validate::run_suite();
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} check(s), {failed} failed", checks.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(RUN_FAILURE)
            }
        }
    }
}
