//! Command-line front end: plan, simulate, sweep and fuzz.

use std::error::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coedge::fuzz::{check_identity, random_scenario, FuzzLimits, IdentityCheck};
use coedge::io::{load_cluster, load_model_document, load_scenario, PlanDocument};
use coedge::sim::{run_epochs, simulate, EpochSchedule};
use coedge::sweep::{
    sweep_deadline, sweep_offloading_ratio, write_epoch_csv, write_ratio_csv, write_run_csv, RunRow,
};
use coedge::{validate_plan, Execution, PartitionPlan, PlanError, Planner, Scenario};

type Fallible<T> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "coedge", version, about = "Cooperative CNN inference partitioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition the model and write the plan as JSON.
    Plan {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "coedge")]
        planner: PlannerArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a plan and write its event trace (one planner) or a summary (all).
    Simulate {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "coedge")]
        planner: PlannerArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-device latency and energy against the offloaded share.
    SweepRatio {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every planner over a list of deadlines.
    SweepDeadline {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_delimiter = ',', default_value = "50,75,100,150,200,500")]
        deadlines_ms: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-plan as the link bandwidth changes from epoch to epoch.
    Epochs {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "coedge")]
        planner: Planner,
        #[arg(long, value_delimiter = ',', default_value = "1000,750,500,1250,1500,1000")]
        bandwidths_kbps: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random scenarios through every planner, the validator and the simulator.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Input {
    /// Scenario TOML naming the model and cluster files.
    #[arg(long, conflicts_with_all = ["model", "cluster"])]
    scenario: Option<PathBuf>,
    #[arg(long, requires = "cluster")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    cluster: Option<PathBuf>,
    #[arg(long)]
    deadline_ms: Option<f64>,
    /// Bytes per activation element; overrides the model and scenario files.
    #[arg(long)]
    elem_bytes: Option<usize>,
    /// Keep only the first k devices.
    #[arg(long)]
    prefix: Option<usize>,
}

#[derive(Clone, Copy)]
enum PlannerArg {
    One(Planner),
    All,
}

impl std::str::FromStr for PlannerArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(PlannerArg::All),
            other => other.parse().map(PlannerArg::One),
        }
    }
}

impl PlannerArg {
    fn planners(self) -> Vec<Planner> {
        match self {
            PlannerArg::One(p) => vec![p],
            PlannerArg::All => Planner::ALL.to_vec(),
        }
    }
}

const DEFAULT_DEADLINE_MS: f64 = 100.0;

impl Input {
    fn load(&self) -> Fallible<Scenario> {
        let mut scenario = match (&self.scenario, &self.model, &self.cluster) {
            (Some(path), _, _) => {
                let s = load_scenario(path)?;
                match self.deadline_ms {
                    Some(d) => s.with_deadline(ms(d, "--deadline-ms")?),
                    None => s,
                }
            }
            (None, Some(model), Some(cluster)) => {
                let doc = load_model_document(model)?;
                let cluster = load_cluster(cluster)?;
                let deadline = ms(self.deadline_ms.unwrap_or(DEFAULT_DEADLINE_MS), "--deadline-ms")?;
                let s = Scenario::new(doc.model, cluster, deadline)?;
                match doc.elem_bytes {
                    Some(b) => s.with_elem_bytes(b)?,
                    None => s,
                }
            }
            _ => return Err("either --scenario or both --model and --cluster are required".into()),
        };
        if let Some(b) = self.elem_bytes {
            scenario = scenario.with_elem_bytes(b).map_err(|e| format!("--elem-bytes: {e}"))?;
        }
        if let Some(k) = self.prefix {
            let cluster = scenario.cluster.prefix(k).map_err(|e| format!("--prefix: {e}"))?;
            scenario = scenario.with_cluster(cluster)?;
        }
        Ok(scenario)
    }
}

fn ms(value: f64, flag: &str) -> Fallible<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value / 1e3)
    } else {
        Err(format!("{flag}: expected a positive number of milliseconds, got {value}").into())
    }
}

fn output(path: Option<&Path>) -> Fallible<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| format!("{}: {e}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn fmt_rows(plan: &PartitionPlan, sep: &str) -> String {
    plan.rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(sep)
}

/// Returns whether any planner fell back to full offload.
fn cmd_plan(scenario: &Scenario, planners: &[Planner], out: Option<&Path>) -> Fallible<bool> {
    let mut docs = Vec::new();
    let mut fallback = false;
    for planner in planners {
        let plan = planner.plan(scenario)?;
        let doc = PlanDocument::new(scenario, &plan)?;
        let met = doc.predicted_latency_s <= scenario.deadline_s;
        println!("planner: {}", doc.planner);
        println!("rows: [{}]", fmt_rows(&plan, ", "));
        println!("aggregator: {}", plan.aggregator);
        println!("latency: {:.3} ms", doc.predicted_latency_s * 1e3);
        println!("energy: {:.6} J", doc.objective_energy_j);
        println!("deadline met: {}", if met { "yes" } else { "no" });
        if plan.is_fallback() {
            fallback = true;
            eprintln!(
                "{}: no feasible cooperative partition for the {} ms deadline; fell back to full offload",
                planner.name(),
                scenario.deadline_s * 1e3
            );
        }
        docs.push(doc);
    }
    if let Some(path) = out {
        let text = if docs.len() == 1 {
            docs[0].to_json()
        } else {
            serde_json::to_string_pretty(&docs)?
        };
        std::fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(fallback)
}

fn cmd_simulate(scenario: &Scenario, planner: PlannerArg, out: Option<&Path>) -> Fallible<()> {
    match planner {
        PlannerArg::One(p) => {
            let plan = p.plan(scenario)?;
            let (trace, _) = simulate(scenario, &plan)?;
            trace.write_csv(output(out)?)?;
        }
        PlannerArg::All => {
            let rows = sweep_deadline(scenario, &[scenario.deadline_s], &Planner::ALL, Execution::default())?;
            write_run_csv(&rows, "deadline_s", output(out)?)?;
        }
    }
    Ok(())
}

enum FuzzOutcome {
    Checked(PartitionPlan, IdentityCheck),
    /// The planner found no plan that fits device memory.
    NoPlan(String),
    Failed(String),
}

fn fuzz_one(scenario: &Scenario, planner: Planner) -> FuzzOutcome {
    let plan = match planner.plan(scenario) {
        Ok(plan) => plan,
        Err(e @ PlanError::Memory { .. }) => return FuzzOutcome::NoPlan(e.to_string()),
        Err(e) => return FuzzOutcome::Failed(e.to_string()),
    };
    if let Err(e) = validate_plan(scenario, &plan) {
        return FuzzOutcome::Failed(format!("emitted plan rejected: {e}"));
    }
    match check_identity(scenario, &plan) {
        Ok(c) if !c.latency_exact() => {
            FuzzOutcome::Failed(format!("trace finish {} differs from model {}", c.finish_time, c.t_total))
        }
        Ok(c) if c.energy_rel_err() > 1e-9 => {
            FuzzOutcome::Failed(format!("energy relative error {:e}", c.energy_rel_err()))
        }
        Ok(c) => FuzzOutcome::Checked(plan, c),
        Err(e) => FuzzOutcome::Failed(e.to_string()),
    }
}

/// Returns whether every invariant held.
fn cmd_fuzz(seed: u64, count: usize, out: Option<&Path>) -> Fallible<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios: Vec<Scenario> = (0..count).map(|_| random_scenario(&mut rng, &FuzzLimits::MEDIUM)).collect();
    let results = Execution::default().map(&scenarios, |s| {
        Planner::ALL.iter().map(|&p| fuzz_one(s, p)).collect::<Vec<_>>()
    });
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record([
        "scenario", "devices", "rows_total", "planner", "status", "rows", "aggregator", "latency_s", "energy_j", "detail",
    ])?;
    let mut failures = 0;
    for (k, (s, outcomes)) in scenarios.iter().zip(&results).enumerate() {
        for (planner, outcome) in Planner::ALL.iter().zip(outcomes) {
            let blank = || (String::new(), String::new(), String::new(), String::new());
            let (status, (rows, agg, t, e), detail) = match outcome {
                FuzzOutcome::Checked(plan, c) => (
                    "ok",
                    (fmt_rows(plan, ";"), plan.aggregator.to_string(), c.t_total.to_string(), c.model_energy.to_string()),
                    String::new(),
                ),
                FuzzOutcome::NoPlan(why) => ("no_plan", blank(), why.clone()),
                FuzzOutcome::Failed(why) => {
                    failures += 1;
                    log::error!("scenario {k}, {}: {why}", planner.name());
                    ("fail", blank(), why.clone())
                }
            };
            w.write_record([
                k.to_string(),
                s.num_devices().to_string(),
                s.input_rows().to_string(),
                planner.name().to_string(),
                status.to_string(),
                rows,
                agg,
                t,
                e,
                detail,
            ])?;
        }
    }
    w.flush()?;
    if failures > 0 {
        eprintln!("{failures} invariant failures over {count} scenarios");
    }
    Ok(failures == 0)
}

fn run(cli: Cli) -> Fallible<ExitCode> {
    match cli.command {
        Command::Plan { input, planner, out } => {
            let scenario = input.load()?;
            if cmd_plan(&scenario, &planner.planners(), out.as_deref())? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Simulate { input, planner, out } => cmd_simulate(&input.load()?, planner, out.as_deref())?,
        Command::SweepRatio { input, steps, out } => {
            let points = sweep_offloading_ratio(&input.load()?, steps)?;
            write_ratio_csv(&points, output(out.as_deref())?)?;
        }
        Command::SweepDeadline { input, deadlines_ms, out } => {
            let scenario = input.load()?;
            let deadlines = deadlines_ms
                .iter()
                .map(|&d| ms(d, "--deadlines-ms"))
                .collect::<Fallible<Vec<f64>>>()?;
            let rows: Vec<RunRow> = sweep_deadline(&scenario, &deadlines, &Planner::ALL, Execution::default())?;
            write_run_csv(&rows, "deadline_s", output(out.as_deref())?)?;
        }
        Command::Epochs { input, planner, bandwidths_kbps, out } => {
            let scenario = input.load()?;
            let links: Vec<f64> = bandwidths_kbps.iter().map(|b| b * 1e3).collect();
            let records = run_epochs(&scenario, &EpochSchedule::uniform(&links)?, planner)?;
            for r in records.iter().filter(|r| r.replanned) {
                log::info!("epoch {}: planned in {:?}", r.epoch, r.planning);
            }
            write_epoch_csv(&records, output(out.as_deref())?)?;
        }
        Command::Fuzz { seed, count, out } => {
            if !cmd_fuzz(seed, count, out.as_deref())? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COEDGE_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
