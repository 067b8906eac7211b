//! The whole simulated system and its event loop.
//!
//! Actors are the guest cores, the host agent and the interrupt queue. Each
//! iteration runs the actor with the earliest next-action time; ties go to
//! interrupts first, then by tile id. A guest action is one instruction, a
//! host action one mailbox poll.

use thiserror::Error;

use crate::config::{ConfigError, MachineConfig};
use crate::cpu::{AccessKind, CoreState, HaltReason, InstructionTimingTable, RunState, StartOutcome, Trap};
use crate::elf::{GuestImage, GuestRegion};
use crate::endian::{transduce, Direction};
use crate::fabric::{Fabric, FabricError, L15Stats, MemoryTransaction};
use crate::host::{HostAgent, HostError};
use crate::mailbox;
use crate::noc::{InterruptKind, TileId};
use crate::stats::RunStats;

/// A failure, tagged with the boot step it happened in (0 config and
/// binary, 1 pico_setup, 2 load_binary, 3-5 pico_start, 6 running).
#[derive(Debug, Error)]
#[error("step {step} ({name}): {source}")]
pub struct StepError {
    pub step: u8,
    pub name: &'static str,
    #[source]
    pub source: MachineError,
}

#[derive(Debug, Error)]
pub enum MachineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Image(#[from] crate::elf::ImageError),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error("simulation exceeded {0} cycles")]
    CycleLimit(u64),
    #[error("no actor can make progress")]
    Stalled,
}

/// How a run signals completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Completion {
    /// The guest calls exit through the mailbox.
    Mailbox,
    /// Bare-metal test: the guest stores a non-zero word to this address.
    ToHost(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Halt {
    Exit(i32),
    Trap { tile: TileId, trap: Trap },
    ToHost(u32),
}

pub struct Guest {
    pub tile: TileId,
    pub core: CoreState,
}

pub struct Machine {
    pub cfg: MachineConfig,
    pub fabric: Fabric,
    pub guests: Vec<Guest>,
    pub host: HostAgent,
    table: InstructionTimingTable,
    completion: Completion,
    halt: Option<Halt>,
    now: u64,
    request_started: Option<u64>,
    pub syscall_round_trips: Vec<u64>,
    roi_addr: Option<u32>,
    /// Region-of-interest marks: (value stored, cycle, L1.5 counters then).
    pub roi_marks: Vec<(u32, u64, Vec<L15Stats>)>,
}

impl Machine {
    pub fn new(cfg: MachineConfig) -> Result<Machine, MachineError> {
        cfg.validate()?;
        let tiles = cfg.tiles.len();
        let mut fabric = Fabric::new(tiles, &cfg.geometry, &cfg.timing, &cfg.mesh, cfg.dram_size);
        fabric.record_transactions(cfg.record_transactions);
        let guests: Vec<Guest> =
            cfg.guest_tiles().map(|tile| Guest { tile, core: CoreState::new(cfg.reset_vector) }).collect();
        let host = HostAgent::new(&cfg, guests[0].tile);
        Ok(Machine {
            table: cfg.timing.instruction_table(),
            cfg,
            fabric,
            guests,
            host,
            completion: Completion::Mailbox,
            halt: None,
            now: 0,
            request_started: None,
            syscall_round_trips: Vec::new(),
            roi_addr: None,
            roi_marks: Vec::new(),
        })
    }

    pub fn set_completion(&mut self, c: Completion) {
        self.completion = c;
    }

    pub fn halt(&self) -> Option<Halt> {
        self.halt
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn region(&self) -> Option<GuestRegion> {
        self.host.region()
    }

    /// Steps 1 to 5: set up memory, load the image, start the guest.
    pub fn boot(&mut self, image: &GuestImage) -> Result<(), StepError> {
        let tag = |step, name| move |e: HostError| StepError { step, name, source: e.into() };
        self.host.pico_setup(&mut self.fabric, self.cfg.region_size).map_err(tag(1, "pico_setup"))?;
        self.host.load_binary(&mut self.fabric, image).map_err(tag(2, "load_binary"))?;
        self.host.pico_start(&mut self.fabric).map_err(tag(3, "pico_start"))?;
        self.roi_addr = image.symbol("__pico_roi");
        Ok(())
    }

    /// Runs until the guest exits, traps, reports through tohost, or the
    /// cycle limit is reached.
    pub fn run(&mut self) -> Result<Halt, MachineError> {
        while self.halt.is_none() {
            self.step_once()?;
        }
        Ok(self.halt.unwrap())
    }

    fn step_once(&mut self) -> Result<(), MachineError> {
        // (time, class, tile): class 0 interrupts, 1 guests, 2 host
        let mut best: Option<(u64, u8, TileId)> = None;
        let mut consider = |c: (u64, u8, TileId)| {
            if best.is_none_or(|b| c < b) {
                best = Some(c);
            }
        };
        if let Some(t) = self.fabric.next_interrupt() {
            consider((t, 0, 0));
        }
        for (i, g) in self.guests.iter().enumerate() {
            if g.core.run_state == RunState::Running {
                consider((g.core.now(), 1, i));
            }
        }
        if self.completion == Completion::Mailbox && self.host.started() {
            consider((self.host.clock, 2, self.host.tile));
        }
        let Some((time, class, idx)) = best else {
            return Err(MachineError::Stalled);
        };
        if time > self.cfg.max_cycles {
            return Err(MachineError::CycleLimit(self.cfg.max_cycles));
        }
        self.now = self.now.max(time);
        match class {
            0 => self.deliver_interrupts(time),
            1 => self.step_guest(idx)?,
            _ => self.poll_host(time)?,
        }
        Ok(())
    }

    fn deliver_interrupts(&mut self, time: u64) {
        for irq in self.fabric.take_interrupts(time) {
            let Some(g) = self.guests.iter_mut().find(|g| g.tile == irq.dst) else { continue };
            match irq.kind {
                InterruptKind::Start => {
                    if g.core.deliver_start_interrupt() == StartOutcome::Started {
                        g.core.time_base = irq.cycle;
                    }
                    self.fabric.trace_event(irq.cycle, irq.dst, "irq", None, "start");
                }
                InterruptKind::InterProcessor => {
                    self.fabric.trace_event(irq.cycle, irq.dst, "irq", None, "ipi");
                }
            }
        }
    }

    fn step_guest(&mut self, idx: usize) -> Result<(), MachineError> {
        let g = &mut self.guests[idx];
        let tile = g.tile;
        let mut port = self.fabric.guest_port(tile);
        let result = g.core.step(&self.table, &mut port).expect("guest is running");
        if let Some(e) = port.fault.take() {
            return Err(e.into());
        }
        let last = port.last;
        if let Some(trap) = result.trap {
            self.fabric.trace_event(g.core.now(), tile, "trap", None, &format!("{trap:?}"));
            if self.guests.iter().all(|g| g.core.run_state != RunState::Running) {
                self.halt = Some(Halt::Trap { tile, trap });
            }
            return Ok(());
        }
        if let Some(tx) = last {
            self.observe(tile, tx);
        }
        Ok(())
    }

    /// Watches guest data accesses for tohost writes and mailbox hand-offs.
    fn observe(&mut self, tile: TileId, tx: MemoryTransaction) {
        let logical = |v: u32| transduce(v, tx.width, Direction::Inbound);
        match self.completion {
            Completion::ToHost(addr) if tx.kind == AccessKind::Store && tx.addr == addr => {
                let v = logical(tx.payload.unwrap_or(0));
                if v != 0 {
                    self.halt = Some(Halt::ToHost(v));
                }
            }
            _ => {}
        }
        if tx.kind == AccessKind::Store && Some(tx.addr) == self.roi_addr {
            let v = logical(tx.payload.unwrap_or(0));
            self.roi_marks.push((v, tx.complete_cycle, self.fabric.l15_stats.clone()));
        }
        let Some(mb) = self.host.mailbox() else { return };
        if tx.addr != mb.base + mailbox::STATUS || tile != self.host.guest {
            return;
        }
        match tx.kind {
            AccessKind::Store if logical(tx.payload.unwrap_or(0)) == mailbox::Status::Requested as u32 => {
                self.request_started = Some(tx.issue_cycle);
            }
            AccessKind::Load if logical(tx.value) == mailbox::Status::Done as u32 => {
                if let Some(start) = self.request_started.take() {
                    self.syscall_round_trips.push(tx.complete_cycle - start);
                }
            }
            _ => {}
        }
    }

    fn poll_host(&mut self, time: u64) -> Result<(), MachineError> {
        let served = self.host.poll(&mut self.fabric, time)?;
        if let Some(s) = served {
            if let Some(code) = s.outcome.exit {
                let guest = self.host.guest;
                if let Some(g) = self.guests.iter_mut().find(|g| g.tile == guest) {
                    g.core.run_state = RunState::Halted(HaltReason::Exit(code));
                }
                self.halt = Some(Halt::Exit(code));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> RunStats {
        RunStats::collect(self)
    }

    /// Host-side read of a guest word after (or during) a run.
    pub fn read_guest_word(&mut self, addr: u32) -> Result<u32, MachineError> {
        self.host.clock = self.host.clock.max(self.now);
        Ok(self.host.read_word(&mut self.fabric, addr)?)
    }
}

/// Builds a machine, boots `image` and runs it to completion.
pub fn run_image(
    cfg: MachineConfig,
    image: &GuestImage,
    completion: Completion,
) -> Result<(Machine, Halt), StepError> {
    let mut m = Machine::new(cfg).map_err(|e| StepError { step: 0, name: "config", source: e })?;
    m.set_completion(completion);
    m.boot(image)?;
    let halt = m.run().map_err(|e| StepError { step: 6, name: "run", source: e })?;
    Ok((m, halt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::Asm;
    use crate::config::TileKind;
    use crate::isa::Reg;

    fn image(body: impl FnOnce(&mut Asm)) -> GuestImage {
        let mut a = Asm::new(0x10000);
        body(&mut a);
        a.align(16).label("tohost").word(0).label("__pico_roi").word(0);
        GuestImage::from_assembled(&a.finish().unwrap())
    }

    fn store(a: &mut Asm, sym: &str, v: i32) {
        a.li(Reg::T0, v).la(Reg::T1, sym).sw(Reg::T0, 0, Reg::T1);
    }

    #[test]
    fn tohost_store_halts_the_run() {
        let img = image(|a| {
            store(a, "tohost", 5);
            a.label("spin").j("spin");
        });
        let tohost = img.symbol("tohost").unwrap();
        let (m, halt) = run_image(MachineConfig::default(), &img, Completion::ToHost(tohost)).unwrap();
        assert_eq!(halt, Halt::ToHost(5));
        assert_eq!(m.halt(), Some(halt));
        assert!(m.now() > 0);
    }

    #[test]
    fn roi_markers_are_snapshotted() {
        let img = image(|a| {
            store(a, "__pico_roi", 1);
            a.la(Reg::T2, "tohost").lw(Reg::T3, 0, Reg::T2).lw(Reg::T3, 4, Reg::T2);
            store(a, "__pico_roi", 2);
            store(a, "tohost", 1);
            a.label("spin").j("spin");
        });
        let tohost = img.symbol("tohost").unwrap();
        let (m, _) = run_image(MachineConfig::default(), &img, Completion::ToHost(tohost)).unwrap();
        let marks: Vec<u32> = m.roi_marks.iter().map(|r| r.0).collect();
        assert_eq!(marks, [1, 2]);
        let roi = m.stats().roi.unwrap();
        // two loads, then the end-marker store
        assert_eq!(roi.l15[1].load.accesses, 2);
        assert_eq!(roi.l15[1].store.accesses, 1);
        assert!(roi.cycles > 0 && roi.cycles < m.now());
    }

    #[test]
    fn spinning_guest_hits_the_cycle_limit() {
        let img = image(|a| {
            a.label("spin").j("spin");
        });
        let cfg = MachineConfig { max_cycles: 10_000, ..MachineConfig::default() };
        let Err(err) = run_image(cfg, &img, Completion::ToHost(0x10000)) else { panic!("ran forever") };
        assert_eq!(err.step, 6);
        assert!(matches!(err.source, MachineError::CycleLimit(10_000)));
    }

    #[test]
    fn invalid_config_fails_at_step_zero() {
        let cfg = MachineConfig { tiles: vec![TileKind::GuestRv32], ..MachineConfig::default() };
        let Err(err) = run_image(cfg, &image(|_| {}), Completion::Mailbox) else { panic!("accepted") };
        assert_eq!((err.step, err.name), (0, "config"));
    }
}
