//! Command-line harness: runs guest binaries, the instruction test suite,
//! the latency probe, the benchmark corpus and litmus tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use hetmesh::bench::{run_bench, Bench};
use hetmesh::config::MachineConfig;
use hetmesh::elf::GuestImage;
use hetmesh::explore::Limits;
use hetmesh::litmus::{self, outcome_str, Litmus};
use hetmesh::machine::{Completion, Halt, Machine, StepError};
use hetmesh::probe::{derived_hit_cycles, run_probe, ProbeKind};
use hetmesh::rv32ui::run_suite;

/// Exit status when the guest traps instead of exiting.
const EXIT_TRAP: u8 = 120;
/// Exit status when the simulator fails at one of the boot steps or mid-run.
const EXIT_STEP: u8 = 121;

#[derive(Parser)]
#[command(name = "simctl", version, about = "Heterogeneous tile simulator harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a static RV32 ELF onto the guest tile and run it to exit.
    Run {
        #[arg(long)]
        binary: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write run statistics here as JSON.
        #[arg(long)]
        stats_out: Option<PathBuf>,
        /// Write a fabric event trace here, one event per line.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every *.elf in a directory with the tohost convention.
    #[command(name = "test-rv32ui")]
    TestRv32ui {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Measure rdcycle-bracketed load and store latencies.
    LatencyProbe {
        #[arg(long)]
        no_jitter: bool,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Run one of the built-in microbenchmarks.
    Bench {
        /// hanoi, binsearch or quicksort
        name: Bench,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
    /// Exhaustively explore a two-core litmus test ("all" runs every one).
    Litmus {
        name: String,
        /// Spontaneous evictions allowed per execution.
        #[arg(long)]
        evictions: Option<u32>,
        #[arg(long)]
        stats_out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<MachineConfig> {
    match path {
        Some(p) => MachineConfig::load(p).with_context(|| format!("step 0 (config): {}", p.display())),
        None => Ok(MachineConfig::default()),
    }
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json(map: &BTreeMap<String, Value>) -> String {
    let mut s = serde_json::to_string_pretty(map).expect("serializable");
    s.push('\n');
    s
}

fn step_failed(e: &StepError) -> ExitCode {
    eprintln!("simctl: step {} ({}) failed: {}", e.step, e.name, e.source);
    ExitCode::from(EXIT_STEP)
}

fn cmd_run(binary: &Path, config: Option<&Path>, stats_out: Option<&Path>, trace: Option<&Path>) -> Result<ExitCode> {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("simctl: {e:#}");
            return Ok(ExitCode::from(EXIT_STEP));
        }
    };
    let image = match GuestImage::from_file(binary) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("simctl: step 0 (read binary) failed: {e}");
            return Ok(ExitCode::from(EXIT_STEP));
        }
    };
    let mut m = match Machine::new(cfg) {
        Ok(m) => m,
        Err(e) => return Ok(step_failed(&StepError { step: 0, name: "config", source: e })),
    };
    m.set_completion(Completion::Mailbox);
    m.host.echo = true;
    if trace.is_some() {
        m.fabric.enable_trace();
    }
    if let Err(e) = m.boot(&image) {
        return Ok(step_failed(&e));
    }
    let result = m.run();
    if let Some(p) = trace {
        let mut text = m.fabric.trace_lines().join("\n");
        text.push('\n');
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = stats_out {
        write_json(p, &m.stats().to_json())?;
    }
    match result {
        Err(e) => Ok(step_failed(&StepError { step: 6, name: "run", source: e })),
        Ok(Halt::Exit(code)) => Ok(ExitCode::from(code as u8)),
        Ok(Halt::Trap { tile, trap }) => {
            eprintln!("simctl: guest on tile {tile} trapped: {trap}");
            Ok(ExitCode::from(EXIT_TRAP))
        }
        Ok(Halt::ToHost(v)) => {
            eprintln!("simctl: guest wrote tohost {v}");
            Ok(ExitCode::from(EXIT_STEP))
        }
    }
}

fn cmd_test_rv32ui(dir: &Path, config: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let report = run_suite(&cfg, dir).with_context(|| format!("reading {}", dir.display()))?;
    print!("{}", report.render());
    if report.results.is_empty() {
        eprintln!("simctl: no *.elf tests in {}", dir.display());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::from(report.failed().min(255) as u8))
}

fn cmd_latency_probe(no_jitter: bool, trials: u32, config: Option<&Path>, stats_out: Option<&Path>) -> Result<ExitCode> {
    let mut cfg = load_config(config)?;
    if no_jitter {
        cfg.timing.dram_jitter_cycles = 0;
    }
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let exec = cfg.timing.load_store_exec_cycles as u64;
    let mut out = BTreeMap::new();
    let mut cached = 0;
    println!("{:<16} {:>6} {:>5} {:>5}", "probe", "trials", "min", "max");
    for kind in ProbeKind::ALL {
        let r = run_probe(&cfg, kind, trials).with_context(|| format!("{} probe", kind.name()))?;
        println!("{:<16} {:>6} {:>5} {:>5}", kind.name(), trials, r.min(), r.max());
        if kind == ProbeKind::CachedLoad {
            cached = r.min();
        }
        let p = format!("probe.{}", kind.name().replace(' ', "_"));
        out.insert(format!("{p}.min"), r.min().into());
        out.insert(format!("{p}.max"), r.max().into());
        out.insert(format!("{p}.samples"), json!(r.samples));
    }
    let hit = derived_hit_cycles(cached, exec);
    println!("derived L1.5 hit: ({cached} - {exec}) / 3 = {hit} cycles");
    out.insert("derived_hit_cycles".into(), hit.into());
    out.insert("jitter_cycles".into(), cfg.timing.dram_jitter_cycles.into());
    if let Some(p) = stats_out {
        write_json(p, &to_json(&out))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(bench: Bench, config: Option<&Path>, stats_out: Option<&Path>) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let r = match run_bench(&cfg, bench) {
        Ok(r) => r,
        Err(e) => return Ok(step_failed(&e)),
    };
    let tile = cfg.guest_tiles().next().expect("validated");
    print!("{}", String::from_utf8_lossy(&r.stdout));
    print!("{}", r.summary(tile));
    if let Some(p) = stats_out {
        let mut map = r.stats.to_map();
        map.insert("bench.name".into(), bench.name().into());
        map.insert("bench.data_miss_rate".into(), r.data_miss_rate(tile).into());
        if !r.moves.is_empty() {
            map.insert("bench.moves".into(), r.moves.len().into());
        }
        if let Some(n) = r.probes {
            map.insert("bench.probes".into(), n.into());
        }
        write_json(p, &to_json(&map))?;
    }
    Ok(match r.halt {
        Halt::Exit(0) => ExitCode::SUCCESS,
        _ => ExitCode::FAILURE,
    })
}

fn cmd_litmus(name: &str, evictions: Option<u32>, stats_out: Option<&Path>) -> Result<ExitCode> {
    let tests: Vec<Litmus> = if name == "all" {
        litmus::all()
    } else {
        match litmus::find(name) {
            Some(t) => vec![t],
            None => {
                let names: Vec<&str> = litmus::all().iter().map(|l| l.name).collect();
                bail!("unknown litmus test {name:?} (expected all, {})", names.join(", "));
            }
        }
    };
    let mut limits = Limits::default();
    if let Some(e) = evictions {
        limits.evictions = e;
    }
    let mut out = BTreeMap::new();
    let mut forbidden = 0;
    for t in &tests {
        let r = t.run(limits).map_err(|e| anyhow::anyhow!("{}: {e}", t.name))?;
        print!("{}", t.render(&r));
        forbidden += r.forbidden_seen;
        let outcomes: Vec<String> = r.report.outcomes.iter().map(outcome_str).collect();
        out.insert(
            t.name.to_string(),
            json!({
                "states": r.report.states,
                "transitions": r.report.transitions,
                "executions": r.report.terminals,
                "outcomes": outcomes,
                "forbidden_seen": r.forbidden_seen,
            }),
        );
    }
    if let Some(p) = stats_out {
        write_json(p, &to_json(&out))?;
    }
    Ok(if forbidden == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run { binary, config, stats_out, trace } => {
            cmd_run(binary, config.as_deref(), stats_out.as_deref(), trace.as_deref())
        }
        Cmd::TestRv32ui { dir, config } => cmd_test_rv32ui(dir, config.as_deref()),
        Cmd::LatencyProbe { no_jitter, trials, config, stats_out } => {
            cmd_latency_probe(*no_jitter, *trials, config.as_deref(), stats_out.as_deref())
        }
        Cmd::Bench { name, config, stats_out } => cmd_bench(*name, config.as_deref(), stats_out.as_deref()),
        Cmd::Litmus { name, evictions, stats_out } => cmd_litmus(name, *evictions, stats_out.as_deref()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("simctl: {e:#}");
        ExitCode::FAILURE
    })
}
