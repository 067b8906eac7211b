//! Acceptance suite: one PASS/FAIL line per criterion, exit status non-zero
//! if any fails. Drives the real `simctl` binary where a command exists and
//! the independent oracles from the core crate's test support otherwise.

#[path = "../../core/tests/support/refexec.rs"]
mod refexec;
#[path = "../../core/tests/support/isa_check.rs"]
mod isa_check;
#[path = "../../core/tests/support/sc.rs"]
mod sc;
#[path = "../../core/tests/support/coherence_sweep.rs"]
mod sweep;
#[path = "../../core/tests/support/flat_oracle.rs"]
mod flat_oracle;
#[path = "../../core/tests/support/mbfuzz_check.rs"]
mod mbfuzz;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use hetmesh::config::{CacheGeometry, MachineConfig, PollInterval};
use serde_json::Value;

type Check = Result<String, String>;

const CACHED: u64 = 17;
const UNCACHED: u64 = 113;
const JITTER: (u64, u64) = (112, 114);
const HIT: u64 = 4;
const MISS_RATIO: f64 = 5.0;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Out {
    code: i32,
    stdout: Vec<u8>,
}

fn simctl(args: &[&str]) -> Result<Out, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_simctl"))
        .args(args)
        .current_dir(root())
        .output()
        .map_err(|e| format!("spawning simctl: {e}"))?;
    Ok(Out { code: out.status.code().unwrap_or(-1), stdout: out.stdout })
}

fn json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn num(v: &Value, key: &str) -> Result<u64, String> {
    v[key].as_u64().ok_or_else(|| format!("missing {key}"))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn latency(dir: &Path) -> Check {
    let fixed = dir.join("probe_fixed.json");
    let out = simctl(&["latency-probe", "--no-jitter", "--stats-out", s(&fixed)])?;
    ensure(out.code == 0, || format!("latency-probe exited {}", out.code))?;
    let v = json(&fixed)?;
    for (kind, want) in [("cached_load", CACHED), ("cached_store", CACHED), ("uncached_load", UNCACHED), ("uncached_store", UNCACHED)] {
        for end in ["min", "max"] {
            let got = num(&v, &format!("probe.{kind}.{end}"))?;
            ensure(got == want, || format!("{kind} {end} = {got}, want {want}"))?;
        }
    }
    let hit = num(&v, "derived_hit_cycles")?;
    ensure(hit == HIT && (CACHED - 5) / 3 == HIT, || format!("derived hit {hit}"))?;

    let jit = dir.join("probe_jitter.json");
    let out = simctl(&["latency-probe", "--trials", "100", "--stats-out", s(&jit)])?;
    ensure(out.code == 0, || format!("latency-probe exited {}", out.code))?;
    let v = json(&jit)?;
    let mut seen = Vec::new();
    for kind in ["uncached_load", "uncached_store"] {
        let samples = v[format!("probe.{kind}.samples")].as_array().ok_or("missing samples")?;
        ensure(samples.len() == 100, || format!("{kind}: {} samples", samples.len()))?;
        for x in samples {
            let x = x.as_u64().ok_or("bad sample")?;
            ensure((JITTER.0..=JITTER.1).contains(&x), || format!("{kind} sample {x}"))?;
            seen.push(x);
        }
    }
    let (lo, hi) = (seen.iter().min().unwrap(), seen.iter().max().unwrap());
    Ok(format!("cached {CACHED}/{CACHED}, uncached {UNCACHED}/{UNCACHED}, jittered in [{lo}, {hi}] over 100 trials, hit {hit}"))
}

fn isa() -> Check {
    let out = simctl(&["test-rv32ui", "--dir", "corpus/rv32ui/bin"])?;
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    ensure(out.code == 0, || format!("rv32ui: {} failed\n{text}", out.code))?;
    let passed = text.lines().filter(|l| l.contains("PASS")).count();
    let fields = isa_check::llvm_fields()?;
    let legal = isa_check::capstone_legality()?;
    let exec = isa_check::execution(1000, 0x5eed_1a)?;
    ensure(exec.executed == 1000, || format!("executed {}", exec.executed))?;
    Ok(format!(
        "rv32ui {passed} passed, 0 failed; {fields} LLVM words, {legal} capstone words, 1000 executions (+{} traps) match",
        exec.rejected
    ))
}

fn coherence(dir: &Path) -> Check {
    let tiny = CacheGeometry { l15_size_bytes: 256, l15_associativity: 2, l2_slice_size_bytes: 2048, ..CacheGeometry::default() };
    let mut tx = flat_oracle::check_benches(&MachineConfig::default())?;
    tx += flat_oracle::check_benches(&MachineConfig { geometry: tiny, ..MachineConfig::default() })?;

    let progs = sweep::up_to(6);
    let states = sweep::check_all(&progs, 1)?;

    let path = dir.join("litmus.json");
    let out = simctl(&["litmus", "mp", "--stats-out", s(&path)])?;
    let v = json(&path)?;
    let forbidden = num(&v["mp"], "forbidden_seen")?;
    ensure(out.code == 0 && forbidden == 0, || format!("mp forbidden outcomes: {forbidden}"))?;
    Ok(format!(
        "{tx} transactions replayed with 0 mismatches; {} programs, {states} states, no violation or deadlock; mp forbidden 0",
        progs.len()
    ))
}

fn syscalls() -> Check {
    let out = simctl(&["run", "--binary", "corpus/bin/hello.elf"])?;
    ensure(out.code == 0, || format!("hello exited {}", out.code))?;
    ensure(out.stdout == b"hello\n", || format!("hello printed {:?}", String::from_utf8_lossy(&out.stdout)))?;

    let image = hetmesh::corpus::image(hetmesh::corpus::HELLO).map_err(|e| e.to_string())?;
    let (m, _) = hetmesh::machine::run_image(MachineConfig::default(), &image, hetmesh::machine::Completion::Mailbox)
        .map_err(|e| e.to_string())?;
    let steps: Vec<&str> = m.host.steps.iter().map(|(_, s)| s.as_str()).collect();
    let want = ["pico_setup", "load_binary", "pico_start:syscall", "pico_start:hypercall", "pico_start:interrupt"];
    ensure(steps == want, || format!("steps {steps:?}"))?;

    let mut serviced = 0;
    for seed in [1, 2, 3] {
        serviced += mbfuzz::fuzz(PollInterval::Range { min: 1, max: 200 }, seed)? - 1;
    }
    Ok(format!("hello ran steps 0-5 and exited 0; {serviced} fuzzed syscalls serviced exactly once, reserved bytes untouched"))
}

fn working_set(dir: &Path) -> Check {
    let rate = |name: &str| -> Result<f64, String> {
        let path = dir.join(format!("{name}.json"));
        let out = simctl(&["bench", name, "--stats-out", s(&path)])?;
        ensure(out.code == 0, || format!("{name} exited {}", out.code))?;
        json(&path)?["bench.data_miss_rate"].as_f64().ok_or_else(|| format!("{name}: no miss rate"))
    };
    let (b, h) = (rate("binsearch")?, rate("hanoi")?);
    let ratio = b / h;
    ensure(ratio >= MISS_RATIO, || format!("binsearch {b:.4} / hanoi {h:.4} = {ratio:.2}"))?;
    Ok(format!("binsearch {b:.4} / hanoi {h:.4} = {ratio:.1}x (>= {MISS_RATIO}x)"))
}

fn determinism(dir: &Path) -> Check {
    // {out} is replaced by a per-run file; None means compare stdout only.
    let commands: &[(&str, &[&str], Option<&str>)] = &[
        ("run hello", &["run", "--binary", "corpus/bin/hello.elf", "--trace", "{trace}", "--stats-out"], Some("json")),
        ("run mbfuzz", &["run", "--binary", "corpus/bin/mbfuzz.elf", "--config", "configs/fuzz.toml", "--trace", "{trace}", "--stats-out"], Some("json")),
        ("test-rv32ui", &["test-rv32ui", "--dir", "corpus/rv32ui/bin"], None),
        ("latency-probe", &["latency-probe", "--stats-out"], Some("json")),
        ("bench hanoi", &["bench", "hanoi", "--stats-out"], Some("json")),
        ("bench binsearch", &["bench", "binsearch", "--stats-out"], Some("json")),
        ("bench quicksort", &["bench", "quicksort", "--stats-out"], Some("json")),
        ("litmus all", &["litmus", "all", "--stats-out"], Some("json")),
    ];
    for (i, (name, args, ext)) in commands.iter().enumerate() {
        let mut runs = Vec::new();
        for r in 0..2 {
            let stats = dir.join(format!("det{i}_{r}.json"));
            let trace = dir.join(format!("det{i}_{r}.trace"));
            let mut argv: Vec<&str> = args.iter().map(|a| if *a == "{trace}" { s(&trace) } else { a }).collect();
            if ext.is_some() {
                argv.push(s(&stats));
            }
            let out = simctl(&argv)?;
            let read = |p: &Path| std::fs::read(p).unwrap_or_default();
            runs.push((out.code, out.stdout, read(&stats), read(&trace)));
        }
        ensure(runs[0] == runs[1], || format!("{name}: runs differ"))?;
        ensure(ext.is_none() || !runs[0].2.is_empty(), || format!("{name}: no stats written"))?;
    }
    Ok(format!("{} commands byte-identical across two runs", commands.len()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir_in(env!("CARGO_TARGET_TMPDIR")).expect("temp dir");
    let dir = tmp.path();
    let criteria: [(&str, &dyn Fn() -> Check); 6] = [
        ("latency", &|| latency(dir)),
        ("isa", &isa),
        ("coherence", &|| coherence(dir)),
        ("syscall proxy", &syscalls),
        ("working set", &|| working_set(dir)),
        ("determinism", &|| determinism(dir)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
