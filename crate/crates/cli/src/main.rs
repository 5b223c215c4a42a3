//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a safety or security property failed, 2 bad
//! configuration or input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use vitalcode::coded_core::CodeKey;
use vitalcode::coded_runtime::{run_campaign, run_cycle, CampaignConfig, FaultModel, FaultSpec, Target, Timing};
use vitalcode::harness::{run_channel_campaign_with, CampaignConfig as ChannelConfig};
use vitalcode::mac::{known_answer_results, MAC_KEY_ENV};
use vitalcode::redundancy::{analytic_prediction, redundancy_campaign, Policy, VoteConfig};
use vitalcode::sigtool::{emit_prom, load_prom, sign_source};
use vitalcode::stats::within_sigmas;

#[derive(Parser)]
#[command(
    name = "vitalcode",
    version,
    about = "Coded monoprocessor toolkit and channel campaigns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign signatures, predetermine constants and write a PROM image.
    Sign {
        program: PathBuf,
        /// Prime modulus A.
        #[arg(long, default_value_t = 2_147_483_647)]
        key: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Execute cycles of a PROM image and print one verdict per cycle.
    Run {
        prom: PathBuf,
        /// JSON object of input values, or an array of objects used in turn.
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, default_value_t = 1)]
        cycles: u64,
        /// Number of the first cycle.
        #[arg(long, default_value_t = 0)]
        start: u64,
    },
    /// Run a fault-injection campaign against a PROM image.
    Inject {
        prom: PathBuf,
        #[arg(long)]
        model: FaultModel,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Variable name to fault; random when omitted.
        #[arg(long)]
        target: Option<String>,
        /// `random`, `before-check`, `before:N` or `after:N`.
        #[arg(long, default_value = "random")]
        timing: String,
        /// Cycles of staleness for F4.
        #[arg(long, default_value_t = 1)]
        age: u64,
    },
    /// Run a telegram channel campaign from a JSON configuration.
    Channel {
        #[arg(long)]
        config: PathBuf,
        /// JSON report path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the cells as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulate replicated channels under independent and common-mode faults.
    Redundancy {
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        q: f64,
        /// `2oo2` (unanimity) or `2oo3` (majority).
        #[arg(long, default_value = "2oo3")]
        policy: Policy,
        /// Replica count; 2 for 2oo2, 3 for 2oo3 when omitted.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the hash and MAC known-answer vectors.
    Vectors,
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Ok,
    Failed(String),
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load(path: &Path) -> anyhow::Result<(vitalcode::sigtool::SignatureTable, vitalcode::sigtool::CodedProgram)> {
    load_prom(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn parse_timing(s: &str) -> anyhow::Result<Timing> {
    let index = |v: &str| {
        v.parse::<usize>()
            .with_context(|| format!("bad instruction index `{v}`"))
    };
    Ok(match s {
        "random" => Timing::Random,
        "before-check" => Timing::BeforeCheck,
        _ => match s.split_once(':') {
            Some(("before", i)) => Timing::BeforeInstruction(index(i)?),
            Some(("after", i)) => Timing::AfterInstruction(index(i)?),
            _ => bail!("unknown timing `{s}`"),
        },
    })
}

fn sign(program: &Path, key: u64, seed: u64, output: &Path) -> anyhow::Result<Status> {
    let text = String::from_utf8(read(program)?).context("program is not UTF-8")?;
    let key = CodeKey::new(key)?;
    let (table, coded) = sign_source(&text, &key, seed).map_err(|e| anyhow!("{}: {e}", program.display()))?;
    let image = emit_prom(&table, &coded);
    fs::write(output, &image).with_context(|| format!("writing {}", output.display()))?;
    let duplicates = table.duplicates().len();
    println!(
        "{}",
        json!({
            "key": key.modulus(),
            "seed": seed,
            "variables": table.len(),
            "instructions": coded.ir.instructions.len(),
            "duplicate_signatures": duplicates,
            "bytes": image.len(),
        })
    );
    Ok(Status::Ok)
}

fn run(prom: &Path, inputs: &Path, cycles: u64, start: u64) -> anyhow::Result<Status> {
    let (table, program) = load(prom)?;
    let key = table.key();
    let value: serde_json::Value = serde_json::from_slice(&read(inputs)?).context("inputs are not JSON")?;
    let datasets: Vec<BTreeMap<String, i64>> = match value {
        serde_json::Value::Array(_) => serde_json::from_value(value)?,
        _ => vec![serde_json::from_value(value)?],
    };
    if datasets.is_empty() {
        bail!("no input datasets");
    }
    let mut rejected = 0u64;
    for (i, cycle) in (start..start + cycles).enumerate() {
        let data = &datasets[i % datasets.len()];
        let r = run_cycle(&program, &table, data, key.date(cycle), key)?;
        rejected += !r.verdict.is_accept() as u64;
        println!(
            "{}",
            json!({ "cycle": cycle, "verdict": r.verdict, "outputs": r.outputs })
        );
    }
    Ok(if rejected == 0 {
        Status::Ok
    } else {
        Status::Failed(format!("{rejected} of {cycles} fault-free cycles did not accept"))
    })
}

#[allow(clippy::too_many_arguments)]
fn inject(
    prom: &Path,
    model: FaultModel,
    trials: u64,
    seed: u64,
    target: Option<&str>,
    timing: &str,
    age: u64,
) -> anyhow::Result<Status> {
    let (table, program) = load(prom)?;
    let key = table.key();
    let mut spec = FaultSpec::new(model).with_timing(parse_timing(timing)?).with_age(age);
    if let Some(name) = target {
        let var = program
            .ir
            .lookup(name)
            .ok_or_else(|| anyhow!("unknown variable `{name}`"))?;
        spec = spec.with_target(Target::Variable(var));
    }
    let cfg = CampaignConfig::new(trials, seed, vec![spec]);
    let report = run_campaign(&program, &table, key, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    // Single-bit and stale-data faults carry no 1/A escape probability.
    let must_detect = matches!(model, FaultModel::F1 | FaultModel::F2 | FaultModel::F4);
    Ok(if report.false_alarms > 0 {
        Status::Failed(format!("{} false alarms", report.false_alarms))
    } else if must_detect && report.undetected_wrong_output > 0 {
        Status::Failed(format!("{} undetected {model} faults", report.undetected_wrong_output))
    } else {
        Status::Ok
    })
}

fn channel(config: &Path, output: Option<&Path>, csv: Option<&Path>) -> anyhow::Result<Status> {
    let text = String::from_utf8(read(config)?).map_err(|_| anyhow!("config is not UTF-8"))?;
    let cfg = ChannelConfig::from_json(&text).map_err(|e| anyhow!("{}: {e}", config.display()))?;
    let env = std::env::var(MAC_KEY_ENV).ok();
    let secrets = cfg.resolve_secrets(env.as_deref())?;
    let report = run_channel_campaign_with(&cfg, &secrets)?;
    let body = report.to_json();
    match output {
        Some(p) => fs::write(p, &body).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{body}"),
    }
    if let Some(p) = csv {
        let table = report.to_csv().context("rendering CSV")?;
        fs::write(p, table).with_context(|| format!("writing {}", p.display()))?;
    }
    let breaches: Vec<String> = report
        .cells
        .iter()
        .filter(|c| c.scheme.starts_with("hmac") && c.counts.accepted_but_wrong > 0)
        .map(|c| format!("{} under {}", c.scheme, c.threat))
        .collect();
    Ok(if breaches.is_empty() {
        Status::Ok
    } else {
        Status::Failed(format!(
            "keyed scheme accepted forged telegrams: {}",
            breaches.join(", ")
        ))
    })
}

fn redundancy(p: f64, q: f64, policy: Policy, n: Option<usize>, trials: u64, seed: u64) -> anyhow::Result<Status> {
    let n = n.unwrap_or(match policy {
        Policy::Unanimity => 2,
        Policy::Majority => 3,
    });
    let cfg = VoteConfig { n, policy, p, q };
    let report = redundancy_campaign(&cfg, trials, seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let expected = analytic_prediction(&cfg);
    let off: Vec<&str> = [
        ("correct", report.rate_correct.rate, expected.correct),
        ("safe_halt", report.rate_safehalt.rate, expected.safe_halt),
        (
            "undetected_wrong",
            report.rate_undetected_wrong.rate,
            expected.undetected_wrong,
        ),
    ]
    .into_iter()
    .filter(|&(_, observed, p)| !within_sigmas(observed, p, trials, 4.0))
    .map(|(name, ..)| name)
    .collect();
    Ok(if off.is_empty() {
        Status::Ok
    } else {
        Status::Failed(format!(
            "simulation disagrees with the analytic model on {}",
            off.join(", ")
        ))
    })
}

fn vectors() -> Status {
    let results = known_answer_results();
    for (name, ok) in &results {
        println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    let failed = results.iter().filter(|(_, ok)| !ok).count();
    if failed == 0 {
        Status::Ok
    } else {
        Status::Failed(format!("{failed} known-answer vectors failed"))
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<Status> {
    Ok(match cli.command {
        Command::Sign {
            program,
            key,
            seed,
            output,
        } => sign(&program, key, seed, &output)?,
        Command::Run {
            prom,
            inputs,
            cycles,
            start,
        } => run(&prom, &inputs, cycles, start)?,
        Command::Inject {
            prom,
            model,
            trials,
            seed,
            target,
            timing,
            age,
        } => inject(&prom, model, trials, seed, target.as_deref(), &timing, age)?,
        Command::Channel { config, output, csv } => channel(&config, output.as_deref(), csv.as_deref())?,
        Command::Redundancy {
            p,
            q,
            policy,
            n,
            trials,
            seed,
        } => redundancy(p, q, policy, n, trials, seed)?,
        Command::Vectors => vectors(),
    })
}

fn main() -> ExitCode {
    env_logger::init();
    match dispatch(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed(why)) => {
            eprintln!("vitalcode: {why}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("vitalcode: {e:#}");
            ExitCode::from(2)
        }
    }
}
