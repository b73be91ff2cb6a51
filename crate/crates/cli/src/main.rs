//! `stepqos`: run, compare and inspect step-topology QoS scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use stepqos_core::scenario::{self, compare_disciplines_with_runs, parse_scenario_with, write_outputs};
use stepqos_core::{run_scenario, QdiscKind, Scenario};

#[derive(Parser, Debug)]
#[command(name = "stepqos", version, about = "Packet-level FIFO/PQ/WFQ comparison on a step topology")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario under one discipline and write its outputs.
    Run {
        #[command(flatten)]
        common: Common,
        /// Queue discipline at router ports.
        #[arg(long, value_parser = parse_kind)]
        qdisc: Option<QdiscKind>,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run under FIFO, PQ and WFQ and check the voice orderings.
    /// Exits with status 1 if any verdict fails.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Output directory; one subdirectory per discipline.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the adjacency dump: `src dst rate_bps prop_delay_ns ber`.
    Topo {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file, or the name of a bundled scenario
    /// (uncongested, overload, sweep).
    #[arg(long)]
    scenario: String,
    /// Run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any scenario key, e.g. `--set voip.0.count=12`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

fn parse_kind(s: &str) -> Result<QdiscKind, String> {
    s.parse().map_err(|_| format!("unknown discipline `{s}`; expected fifo, pq or wfq"))
}

fn load(common: &Common, mut extra: Vec<String>) -> Result<Scenario> {
    let path = Path::new(&common.scenario);
    let text = if path.exists() {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else if let Some((_, text)) = scenario::BUNDLED.iter().find(|(n, _)| *n == common.scenario) {
        (*text).to_owned()
    } else {
        anyhow::bail!("no scenario file or bundled scenario named `{}`", common.scenario);
    };
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    overrides.append(&mut extra);
    parse_scenario_with(&text, &overrides).with_context(|| format!("in scenario `{}`", common.scenario))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            common,
            qdisc,
            duration,
            out,
        } => {
            let mut extra = Vec::new();
            if let Some(k) = qdisc {
                extra.push(format!("qdisc.kind={k}"));
            }
            if let Some(d) = duration {
                extra.push(format!("run.duration_s={d}"));
            }
            let s = load(&common, extra)?;
            let result = run_scenario(&s)?;
            write_outputs(&s, &result, &out)?;
            print!("{}", result.summary.to_json());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { common, out } => {
            let s = load(&common, Vec::new())?;
            let (report, runs) = compare_disciplines_with_runs(&s)?;
            for (scenario, result) in &runs {
                write_outputs(scenario, result, &out.join(scenario.qdisc.kind.name()))?;
            }
            let path = out.join("report.json");
            fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
            print!("{}", report.table());
            Ok(if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Topo { common } => {
            let s = load(&common, Vec::new())?;
            print!("{}", s.topology()?.adjacency_dump());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
