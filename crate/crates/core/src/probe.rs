//! The memory-latency probe: `rdcycle; lw/sw; rdcycle` on a guest core.
//!
//! The cached variants touch the target once before each bracket. The
//! uncached variants advance to a never-touched line every trial, so the
//! bracketed access always goes to DRAM. The first trial warms the probe's
//! own instruction lines and is discarded.

use crate::asm::{Asm, AsmError};
use crate::config::MachineConfig;
use crate::elf::GuestImage;
use crate::isa::Reg;
use crate::machine::{run_image, Completion, Halt, StepError};
use crate::mailbox;
use crate::syscall::SYS_EXIT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProbeKind {
    CachedLoad,
    CachedStore,
    UncachedLoad,
    UncachedStore,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 4] =
        [ProbeKind::CachedLoad, ProbeKind::CachedStore, ProbeKind::UncachedLoad, ProbeKind::UncachedStore];

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::CachedLoad => "cached load",
            ProbeKind::CachedStore => "cached store",
            ProbeKind::UncachedLoad => "uncached load",
            ProbeKind::UncachedStore => "uncached store",
        }
    }

    fn cached(self) -> bool {
        matches!(self, ProbeKind::CachedLoad | ProbeKind::CachedStore)
    }

    fn store(self) -> bool {
        matches!(self, ProbeKind::CachedStore | ProbeKind::UncachedStore)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeResult {
    pub kind: ProbeKind,
    /// Measured cycle deltas, one per trial.
    pub samples: Vec<u64>,
}

impl ProbeResult {
    pub fn min(&self) -> u64 {
        *self.samples.iter().min().expect("at least one trial")
    }

    pub fn max(&self) -> u64 {
        *self.samples.iter().max().expect("at least one trial")
    }
}

/// True per-access hit latency from a cached measurement: the bracket holds
/// the access's execution cycles plus three L1.5 accesses (load fetch, data,
/// second rdcycle fetch).
pub fn derived_hit_cycles(measured: u64, exec_cycles: u64) -> u64 {
    (measured - exec_cycles) / 3
}

/// Emits the mailbox exit sequence: exit(`code`), then spin. Clobbers t0,
/// t1.
pub fn emit_exit(a: &mut Asm, mailbox_base: u32, code: Reg) {
    a.li(Reg::T0, mailbox_base as i32)
        .sw(code, mailbox::ARGS as i32, Reg::T0)
        .li(Reg::T1, SYS_EXIT as i32)
        .sw(Reg::T1, mailbox::NUMBER as i32, Reg::T0)
        .fence()
        .li(Reg::T1, mailbox::Status::Requested as i32)
        .sw(Reg::T1, mailbox::STATUS as i32, Reg::T0)
        .label("__exit_spin")
        .lw(Reg::T1, mailbox::STATUS as i32, Reg::T0)
        .j("__exit_spin");
}

const TARGET_OFFSET: u32 = 0x2_0000;

pub fn probe_program(cfg: &MachineConfig, kind: ProbeKind, trials: u32) -> Result<GuestImage, AsmError> {
    let line = cfg.geometry.line_size_bytes as i32;
    let mailbox = cfg.guest_base + cfg.region_size - mailbox::MAILBOX_BYTES;
    let mut a = Asm::new(cfg.reset_vector);
    a.li(Reg::S0, (cfg.guest_base + TARGET_OFFSET) as i32)
        .la(Reg::S1, "results")
        .li(Reg::S2, trials as i32 + 1)
        .li(Reg::S3, 0)
        .align(16)
        .label("loop");
    if kind.cached() {
        if kind.store() {
            a.sw(Reg::S3, 0, Reg::S0);
        } else {
            a.lw(Reg::T1, 0, Reg::S0);
        }
    }
    a.align(16).rdcycle(Reg::A0);
    if kind.store() {
        a.sw(Reg::S3, 0, Reg::S0);
    } else {
        a.lw(Reg::T1, 0, Reg::S0);
    }
    a.rdcycle(Reg::A1)
        .sub(Reg::A2, Reg::A1, Reg::A0)
        .sw(Reg::A2, 0, Reg::S1)
        .addi(Reg::S1, Reg::S1, 4);
    if !kind.cached() {
        a.addi(Reg::S0, Reg::S0, line);
    }
    a.addi(Reg::S3, Reg::S3, 1).bne(Reg::S3, Reg::S2, "loop");
    emit_exit(&mut a, mailbox, Reg::ZERO);
    a.align(16).label("results").space(4 * (trials as usize + 1));
    Ok(GuestImage::from_assembled(&a.finish()?))
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Run(#[from] StepError),
    #[error("probe ended with {0:?}")]
    Halted(Halt),
    #[error("reading results: {0}")]
    Read(#[from] crate::machine::MachineError),
}

pub fn run_probe(cfg: &MachineConfig, kind: ProbeKind, trials: u32) -> Result<ProbeResult, ProbeError> {
    let image = probe_program(cfg, kind, trials)?;
    let results = image.symbol("results").expect("results label");
    let (mut m, halt) = run_image(cfg.clone(), &image, Completion::Mailbox)?;
    if halt != Halt::Exit(0) {
        return Err(ProbeError::Halted(halt));
    }
    let mut samples = Vec::with_capacity(trials as usize);
    for i in 1..=trials {
        samples.push(m.read_guest_word(results + 4 * i)? as u64);
    }
    Ok(ProbeResult { kind, samples })
}
