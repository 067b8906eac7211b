//! Runner for bare-metal instruction tests using the `tohost` convention.
//!
//! A test passes when it stores 1 to its `tohost` word and fails with code
//! `n` when it stores `(n << 1) | 1`. A test that defines `__expect_trap`
//! instead passes iff the core traps at exactly that pc before touching
//! `tohost`. A test with neither symbol is malformed.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::MachineConfig;
use crate::elf::GuestImage;
use crate::machine::{run_image, Completion, Halt};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail { code: u32 },
    /// Ran into a trap (or the wrong one) when none was expected.
    Trapped(String),
    Malformed(String),
    Error(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        *self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "PASS"),
            Verdict::Fail { code } => write!(f, "FAIL (test {code})"),
            Verdict::Trapped(t) => write!(f, "FAIL (trap: {t})"),
            Verdict::Malformed(why) => write!(f, "MALFORMED ({why})"),
            Verdict::Error(e) => write!(f, "ERROR ({e})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TestResult {
    pub name: String,
    pub verdict: Verdict,
    pub cycles: u64,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub results: Vec<TestResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.verdict.passed()).count()
    }

    pub fn failed(&self) -> usize {
        self.results.len() - self.passed()
    }

    /// A suite succeeds only if it ran something and everything passed.
    pub fn success(&self) -> bool {
        !self.results.is_empty() && self.failed() == 0
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            s += &format!("{:<28} {} ({} cycles)\n", r.name, r.verdict, r.cycles);
        }
        s += &format!("{} tests, {} passed, {} failed\n", self.results.len(), self.passed(), self.failed());
        s
    }
}

pub fn run_test(cfg: &MachineConfig, image: &GuestImage) -> (Verdict, u64) {
    let expect_trap = image.symbol("__expect_trap");
    let Some(tohost) = image.symbol("tohost") else {
        return (Verdict::Malformed("no tohost symbol".into()), 0);
    };
    match run_image(cfg.clone(), image, Completion::ToHost(tohost)) {
        Err(e) => (Verdict::Error(e.to_string()), 0),
        Ok((m, halt)) => {
            let cycles = m.now();
            let verdict = match (halt, expect_trap) {
                (Halt::ToHost(1), None) => Verdict::Pass,
                (Halt::ToHost(v), _) if v & 1 == 1 && v > 1 => Verdict::Fail { code: v >> 1 },
                (Halt::ToHost(v), Some(_)) => Verdict::Trapped(format!("expected a trap, got tohost {v}")),
                (Halt::ToHost(v), None) => Verdict::Malformed(format!("tohost written with {v}")),
                (Halt::Trap { trap, .. }, Some(pc)) if trap.pc() == pc => Verdict::Pass,
                (Halt::Trap { trap, .. }, _) => Verdict::Trapped(trap.to_string()),
                (Halt::Exit(c), _) => Verdict::Malformed(format!("exited with {c}")),
            };
            (verdict, cycles)
        }
    }
}

/// Runs every `*.elf` in `dir`, in name order.
pub fn run_suite(cfg: &MachineConfig, dir: &Path) -> std::io::Result<SuiteReport> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "elf"))
        .collect();
    paths.sort();
    let mut report = SuiteReport::default();
    for p in paths {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (verdict, cycles) = match GuestImage::from_file(&p) {
            Ok(img) => run_test(cfg, &img),
            Err(e) => (Verdict::Malformed(e.to_string()), 0),
        };
        report.results.push(TestResult { name, verdict, cycles });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::Asm;
    use crate::isa::Reg;

    fn image(body: impl FnOnce(&mut Asm)) -> GuestImage {
        let mut a = Asm::new(0x10000);
        body(&mut a);
        a.align(64).label("tohost").word(0);
        GuestImage::from_assembled(&a.finish().unwrap())
    }

    fn write_tohost(a: &mut Asm, v: i32) {
        a.li(Reg::T0, v).la(Reg::T1, "tohost").sw(Reg::T0, 0, Reg::T1).label("spin").j("spin");
    }

    #[test]
    fn tohost_values() {
        let cfg = MachineConfig::default();
        assert_eq!(run_test(&cfg, &image(|a| write_tohost(a, 1))).0, Verdict::Pass);
        assert_eq!(run_test(&cfg, &image(|a| write_tohost(a, 7))).0, Verdict::Fail { code: 3 });
    }

    #[test]
    fn missing_tohost_is_malformed() {
        let mut a = Asm::new(0x10000);
        a.label("spin").j("spin");
        let img = GuestImage::from_assembled(&a.finish().unwrap());
        assert!(matches!(run_test(&MachineConfig::default(), &img).0, Verdict::Malformed(_)));
    }

    #[test]
    fn unexpected_trap_fails() {
        let v = run_test(&MachineConfig::default(), &image(|a| {
            a.ebreak();
        }))
        .0;
        assert!(matches!(v, Verdict::Trapped(_)), "{v:?}");
    }

    #[test]
    fn empty_dir_is_not_success() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_suite(&MachineConfig::default(), dir.path()).unwrap();
        assert!(r.results.is_empty());
        assert!(!r.success());
    }
}
