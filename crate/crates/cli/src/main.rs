use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mgconfig::analysis::{compare, compare_csv, priority, sweep};
use mgconfig::feeder::{parse_network, reduce_feeder};
use mgconfig::fixtures::{random_instance, RandomSpec};
use mgconfig::hazard::{annotated_blocks, load_risk_csv, load_svi_csv};
use mgconfig::omcp::{export_milp, Controllability, Objective, OmcpInstance, RiskPolicy};
use mgconfig::solver::{solve_with, LpCache, SolveError, SolveOptions, SolveReport};
use mgconfig::{identify_blocks, NetworkModel};

#[derive(Parser)]
#[command(name = "mgconfig", version, about = "Wildfire-risk-constrained microgrid configuration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write solution.json and summary.csv
    Solve(SolveArgs),
    /// Solve over a range of risk thresholds
    Sweep(SweepArgs),
    /// Rank blocks by how long they stay energized across a sweep
    Priority(SweepArgs),
    /// Compare controllability regimes on one instance
    Compare(CompareArgs),
    /// Print the load-block table
    Blocks(BlocksArgs),
    /// Collapse secondary circuits behind distribution transformers
    Reduce(ReduceArgs),
    /// Write a random instance (network, risk and SVI tables)
    Generate(GenerateArgs),
}

#[derive(Args, Clone)]
struct InstanceArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    risk: PathBuf,
    #[arg(long)]
    svi: PathBuf,
    /// lo | vo | vl
    #[arg(long, default_value = "vl")]
    objective: String,
    /// none | static | expanding | networking
    #[arg(long, default_value = "networking")]
    controllability: String,
    /// Accepted fraction of total wildfire risk, in [0, 1]
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Count only block risk, not closed-switch risk
    #[arg(long)]
    no_switch_risk: bool,
    /// Keep the substation source de-energized
    #[arg(long)]
    substation_off: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Also write the full MILP in MPS format
    #[arg(long)]
    export_mps: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    #[arg(long, default_value_t = 1.0)]
    to: f64,
    #[arg(long, default_value_t = 0.001)]
    step: f64,
    /// Output CSV file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Comma-separated regimes, in output order
    #[arg(long, default_value = "none,static,expanding,networking")]
    regimes: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BlocksArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long, requires = "svi")]
    risk: Option<PathBuf>,
    #[arg(long, requires = "risk")]
    svi: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    max_blocks: usize,
    #[arg(long, default_value_t = 4)]
    max_switches: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Errors the user can fix by changing the input.
struct InputError(anyhow::Error);

impl InstanceArgs {
    fn build(&self) -> Result<OmcpInstance> {
        let objective: Objective = self.objective.parse().context("--objective")?;
        let controllability: Controllability = self.controllability.parse().context("--controllability")?;
        if !(0.0..=1.0).contains(&self.threshold) {
            bail!("--threshold must lie in [0, 1], got {}", self.threshold);
        }
        let net = parse_network(&self.network).with_context(|| format!("reading {}", self.network.display()))?;
        let rt = load_risk_csv(&self.risk, &net).with_context(|| format!("reading {}", self.risk.display()))?;
        let st = load_svi_csv(&self.svi, &net).with_context(|| format!("reading {}", self.svi.display()))?;
        let bg = annotated_blocks(&net, &rt, &st)?;
        let policy = RiskPolicy::new(&bg, self.threshold, !self.no_switch_risk)?;
        Ok(OmcpInstance::new(net, bg, objective, controllability, policy).with_substation_off(self.substation_off))
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary_csv(r: &SolveReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let blocks: Vec<String> = r.configuration.energized_blocks().iter().map(|b| b.to_string()).collect();
    let mut s = String::from(
        "objective,controllability,threshold,blocks_on,switches_closed,risk,risk_pct,shed_cost,\
         served_kw_pct,served_v_pct,served_weighted_pct,mean_v_served,mean_v_shed,optimal,topologies_evaluated\n",
    );
    s.push_str(&format!(
        "{},{},{},{},{},{},{:.4},{},{:.4},{:.4},{:.4},{},{},{},{}\n",
        r.objective,
        r.controllability,
        r.threshold,
        blocks.join(" "),
        r.configuration.closed_switches().join(" "),
        r.risk,
        100.0 * r.risk_fraction,
        r.shed_cost(),
        r.report.load_only.served_pct,
        r.report.vulnerability_only.served_pct,
        r.report.vulnerability_weighted.served_pct,
        opt(r.vulnerability.mean_served),
        opt(r.vulnerability.mean_shed),
        r.optimal,
        r.stats.topologies_evaluated,
    ));
    s
}

enum Outcome {
    Done,
    Infeasible(String),
}

fn run(cli: Cli) -> Result<Outcome, InputError> {
    let ie = InputError;
    match cli.command {
        Command::Solve(a) => {
            let inst = a.inst.build().map_err(ie)?;
            if let Some(p) = &a.export_mps {
                let m = export_milp(&inst, p).with_context(|| format!("writing {}", p.display())).map_err(ie)?;
                info!("wrote {} columns, {} rows to {}", m.vars.len(), m.rows.len(), p.display());
            }
            let rep = match solve_with(&inst, SolveOptions::default(), &LpCache::new()) {
                Ok(r) => r,
                Err(e @ SolveError::TooManyBinaries { .. }) => return Ok(Outcome::Infeasible(e.to_string())),
            };
            fs::create_dir_all(&a.out).context("creating output directory").map_err(ie)?;
            let json = serde_json::to_string_pretty(&rep).expect("report serializes");
            fs::write(a.out.join("solution.json"), json + "\n").context("writing solution.json").map_err(ie)?;
            let summary = summary_csv(&rep);
            fs::write(a.out.join("summary.csv"), &summary).context("writing summary.csv").map_err(ie)?;
            print!("{summary}");
            if inst.controllability == Controllability::StaticMicrogrids {
                eprintln!("static regime: {} topology evaluated", rep.stats.topologies_evaluated);
            }
            Ok(Outcome::Done)
        }
        Command::Sweep(a) => {
            let inst = a.inst.build().map_err(ie)?;
            let res = sweep(&inst, a.from, a.to, a.step, &LpCache::new()).map_err(|e| ie(e.into()))?;
            write_or_print(a.out.as_deref(), &res.to_csv()).map_err(ie)?;
            eprintln!("{} thresholds, {} distinct solutions", res.rows.len(), res.distinct());
            Ok(Outcome::Done)
        }
        Command::Priority(a) => {
            let inst = a.inst.build().map_err(ie)?;
            let t = priority(&inst, a.from, a.to, a.step, &LpCache::new()).map_err(|e| ie(e.into()))?;
            write_or_print(a.out.as_deref(), &t.to_csv()).map_err(ie)?;
            Ok(Outcome::Done)
        }
        Command::Compare(a) => {
            let inst = a.inst.build().map_err(ie)?;
            let regimes: Vec<Controllability> = a
                .regimes
                .split(',')
                .map(|s| s.trim().parse::<Controllability>().context("--regimes"))
                .collect::<Result<_>>()
                .map_err(ie)?;
            let rows = compare(&inst, &regimes, &LpCache::new()).map_err(|e| ie(e.into()))?;
            write_or_print(a.out.as_deref(), &compare_csv(&rows, inst.blocks.len())).map_err(ie)?;
            Ok(Outcome::Done)
        }
        Command::Blocks(a) => {
            let net = parse_network(&a.network).context("reading network").map_err(ie)?;
            let bg = match (&a.risk, &a.svi) {
                (Some(r), Some(s)) => {
                    let rt = load_risk_csv(r, &net).context("reading risk").map_err(ie)?;
                    let st = load_svi_csv(s, &net).context("reading svi").map_err(ie)?;
                    annotated_blocks(&net, &rt, &st).map_err(|e| ie(e.into()))?
                }
                _ => identify_blocks(&net),
            };
            write_or_print(a.out.as_deref(), &bg.to_csv()).map_err(ie)?;
            Ok(Outcome::Done)
        }
        Command::Reduce(a) => {
            let net = parse_network(&a.network).context("reading network").map_err(ie)?;
            let red = reduce_feeder(&net).map_err(|e| ie(e.into()))?;
            red.network.write(&a.out).context("writing reduced network").map_err(ie)?;
            for t in &red.retained {
                eprintln!("retained {}: {}", t.id, t.reason);
            }
            println!("buses {} -> {}, loads {} -> {}", net.buses.len(), red.network.buses.len(), net.loads.len(), red.network.loads.len());
            Ok(Outcome::Done)
        }
        Command::Generate(a) => {
            let spec = RandomSpec { max_blocks: a.max_blocks, max_switches: a.max_switches, ..RandomSpec::default() };
            let ri = random_instance(a.seed, spec);
            fs::create_dir_all(&a.out).context("creating output directory").map_err(ie)?;
            write_instance(&a.out, &ri.network, &ri.risk.values, &ri.svi.values).map_err(ie)?;
            println!("seed {} -> {}", a.seed, a.out.display());
            Ok(Outcome::Done)
        }
    }
}

fn write_instance(
    dir: &Path,
    net: &NetworkModel,
    risk: &std::collections::BTreeMap<String, f64>,
    svi: &std::collections::BTreeMap<String, f64>,
) -> Result<()> {
    net.write(dir.join("network.json"))?;
    let table = |m: &std::collections::BTreeMap<String, f64>| {
        let mut s = String::from("id,value\n");
        for (k, v) in m {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    };
    fs::write(dir.join("risk.csv"), table(risk))?;
    fs::write(dir.join("svi.csv"), table(svi))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
