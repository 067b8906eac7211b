//! The host agent: sets up guest memory, loads a binary, starts the guest
//! with an interrupt and then proxies its system calls through the mailbox.
//!
//! Every host memory access goes through the host tile's own L1.5, so
//! mailbox polling is coherent with the guest. In big-endian mode the host
//! reads raw fabric words and converts them with the flip helpers; in
//! little-endian mode it uses a byte-lane-swapping port like the guest's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{HostEndianness, MachineConfig, PollInterval};
use crate::cpu::{AccessKind, PortRequest, Width};
use crate::elf::{GuestImage, GuestRegion, ImageError};
use crate::endian::{flip32, transduce, Direction};
use crate::fabric::{Fabric, FabricError};
use crate::mailbox::{Mailbox, MailboxError, Request, WordAccess, MAILBOX_BYTES};
use crate::noc::{InterruptKind, TileId};
use crate::syscall::{self, GuestMemory, Outcome, SyscallHost};

#[derive(Debug, Error)]
pub enum HostError {
    #[error("pico_setup: {0}")]
    Setup(String),
    #[error("load_binary: {0}")]
    Load(#[from] ImageError),
    #[error("run order: {0}")]
    Order(&'static str),
    #[error("host memory access: {0}")]
    Fabric(#[from] FabricError),
    #[error("mailbox: {0}")]
    Mailbox(#[from] MailboxError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    SetUp,
    Loaded,
    Started,
}

/// Host word/byte access to guest memory, charging latency to the host
/// clock.
pub struct HostMem<'a> {
    pub fabric: &'a mut Fabric,
    pub tile: TileId,
    pub endianness: HostEndianness,
    pub clock: &'a mut u64,
    pub error: Option<FabricError>,
}

impl HostMem<'_> {
    fn raw(&mut self, kind: AccessKind, addr: u32, width: Width, data: u32) -> Result<u32, FabricError> {
        let tx = self.fabric.host_access(self.tile, PortRequest { kind, addr, width, data }, *self.clock)?;
        *self.clock = tx.complete_cycle;
        Ok(tx.value)
    }

    pub fn read32(&mut self, addr: u32) -> Result<u32, FabricError> {
        match self.endianness {
            HostEndianness::Big => Ok(flip32(self.raw(AccessKind::Load, addr, Width::Word, 0)?)),
            HostEndianness::Little => {
                let v = self.raw(AccessKind::Load, addr, Width::Word, 0)?;
                Ok(transduce(v, Width::Word, Direction::Inbound))
            }
        }
    }

    pub fn write32(&mut self, addr: u32, value: u32) -> Result<(), FabricError> {
        let raw = match self.endianness {
            HostEndianness::Big => flip32(value),
            HostEndianness::Little => transduce(value, Width::Word, Direction::Outbound),
        };
        self.raw(AccessKind::Store, addr, Width::Word, raw).map(|_| ())
    }

    fn write8(&mut self, addr: u32, value: u8) -> Result<(), FabricError> {
        self.raw(AccessKind::Store, addr, Width::Byte, value as u32).map(|_| ())
    }

    /// Guest memory bytes in address order.
    pub fn read_buf(&mut self, addr: u32, len: u32) -> Result<Vec<u8>, FabricError> {
        let mut out = Vec::with_capacity(len as usize);
        let end = addr as u64 + len as u64;
        let mut word = addr & !3;
        while (word as u64) < end {
            let bytes = self.read32(word)?.to_le_bytes();
            for (i, b) in bytes.iter().enumerate() {
                let a = word as u64 + i as u64;
                if a >= addr as u64 && a < end {
                    out.push(*b);
                }
            }
            word = word.wrapping_add(4);
        }
        Ok(out)
    }

    pub fn write_buf(&mut self, addr: u32, data: &[u8]) -> Result<(), FabricError> {
        let mut i = 0;
        while i < data.len() {
            let a = addr + i as u32;
            if a % 4 == 0 && i + 4 <= data.len() {
                self.write32(a, u32::from_le_bytes(data[i..i + 4].try_into().unwrap()))?;
                i += 4;
            } else {
                self.write8(a, data[i])?;
                i += 1;
            }
        }
        Ok(())
    }
}

impl WordAccess for HostMem<'_> {
    fn read_word(&mut self, addr: u32) -> Result<u32, MailboxError> {
        self.read32(addr).map_err(|e| {
            self.error = Some(e);
            MailboxError::Access(addr)
        })
    }

    fn write_word(&mut self, addr: u32, value: u32) -> Result<(), MailboxError> {
        self.write32(addr, value).map_err(|e| {
            self.error = Some(e);
            MailboxError::Access(addr)
        })
    }
}

impl GuestMemory for HostMem<'_> {
    fn read_bytes(&mut self, addr: u32, len: u32) -> Option<Vec<u8>> {
        self.read_buf(addr, len).ok()
    }

    fn write_bytes(&mut self, addr: u32, data: &[u8]) -> Option<()> {
        self.write_buf(addr, data).ok()
    }
}

/// A serviced syscall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Serviced {
    pub cycle: u64,
    pub request: Request,
    pub outcome: Outcome,
}

pub struct HostAgent {
    pub tile: TileId,
    pub guest: TileId,
    endianness: HostEndianness,
    poll: PollInterval,
    rng: ChaCha8Rng,
    /// Host-local time: the cycle its next action starts.
    pub clock: u64,
    phase: Phase,
    region: Option<GuestRegion>,
    mailbox: Option<Mailbox>,
    guest_base: u32,
    dram_size: u32,
    stack_size: u32,
    reset_vector: u32,
    seed: u64,
    sandbox: Option<std::path::PathBuf>,
    pub sys: Option<SyscallHost>,
    pub echo: bool,
    pub polls: u64,
    pub serviced: Vec<Serviced>,
    pub syscall_trace: Vec<String>,
    pub steps: Vec<(u64, String)>,
}

impl HostAgent {
    pub fn new(cfg: &MachineConfig, guest: TileId) -> HostAgent {
        HostAgent {
            tile: cfg.host_tile(),
            guest,
            endianness: cfg.host_endianness,
            poll: cfg.poll_interval,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            clock: 0,
            phase: Phase::Idle,
            region: None,
            mailbox: None,
            guest_base: cfg.guest_base,
            dram_size: cfg.dram_size,
            stack_size: cfg.stack_size,
            reset_vector: cfg.reset_vector,
            seed: cfg.seed,
            sandbox: cfg.sandbox_dir.clone(),
            sys: None,
            echo: false,
            polls: 0,
            serviced: Vec::new(),
            syscall_trace: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn region(&self) -> Option<GuestRegion> {
        self.region
    }

    pub fn mailbox(&self) -> Option<Mailbox> {
        self.mailbox
    }

    pub fn started(&self) -> bool {
        self.phase == Phase::Started
    }

    fn mem<'a>(&'a mut self, fabric: &'a mut Fabric) -> HostMem<'a> {
        HostMem { fabric, tile: self.tile, endianness: self.endianness, clock: &mut self.clock, error: None }
    }

    fn step(&mut self, fabric: &mut Fabric, label: &str) {
        self.steps.push((self.clock, label.to_string()));
        fabric.trace_event(self.clock, self.tile, "host", None, label);
    }

    /// Allocates, registers and zero-fills the guest region.
    pub fn pico_setup(&mut self, fabric: &mut Fabric, size: u32) -> Result<GuestRegion, HostError> {
        if size == 0 {
            return Err(HostError::Setup("size 0".into()));
        }
        if size < MAILBOX_BYTES || size % MAILBOX_BYTES != 0 {
            return Err(HostError::Setup(format!("size {size:#x} is not a multiple of 64 bytes")));
        }
        if self.guest_base as u64 + size as u64 > self.dram_size as u64 {
            return Err(HostError::Setup(format!(
                "{size:#x} bytes at {:#x} exceed physical memory ({:#x})",
                self.guest_base, self.dram_size
            )));
        }
        if let (Some(r), Phase::SetUp) = (self.region, self.phase) {
            if r.size == size {
                return Ok(r);
            }
        }
        if self.phase != Phase::Idle && self.phase != Phase::SetUp {
            return Err(HostError::Order("pico_setup after the binary was loaded"));
        }
        let region = GuestRegion { base: self.guest_base, size, mailbox_offset: size - MAILBOX_BYTES };
        self.mailbox = Some(Mailbox::new(region.mailbox())?);
        fabric.register_window(region.base, region.size)?;
        fabric.zero_fill(region.base, region.size)?;
        self.region = Some(region);
        self.phase = Phase::SetUp;
        self.step(fabric, "pico_setup");
        Ok(region)
    }

    /// Writes the image into the region through the fabric.
    pub fn load_binary(&mut self, fabric: &mut Fabric, image: &GuestImage) -> Result<(), HostError> {
        if self.phase != Phase::SetUp {
            return Err(HostError::Order("load_binary before pico_setup"));
        }
        let region = self.region.expect("set up");
        image.validate(&region, self.reset_vector)?;
        let stack_bottom = region.mailbox() - self.stack_size;
        if image.end() > stack_bottom {
            return Err(HostError::Setup(format!(
                "image ends at {:#x}, above the stack bottom {stack_bottom:#x}",
                image.end()
            )));
        }
        let seed = self.seed as u32;
        let mut mem = self.mem(fabric);
        for seg in &image.segments {
            mem.write_buf(seg.addr, &seg.bytes)?;
        }
        if let Some(addr) = image.symbol("__pico_seed") {
            mem.write32(addr, seed)?;
        }
        let mut sys = SyscallHost::new(self.sandbox.clone(), image.end().next_multiple_of(16), stack_bottom);
        sys.echo = self.echo;
        self.sys = Some(sys);
        self.phase = Phase::Loaded;
        self.step(fabric, "load_binary");
        Ok(())
    }

    /// Releases the guest from reset. The OS and hypervisor hops collapse
    /// into one action, logged as three steps.
    pub fn pico_start(&mut self, fabric: &mut Fabric) -> Result<(), HostError> {
        if self.phase != Phase::Loaded {
            return Err(HostError::Order("pico_start before load_binary"));
        }
        self.step(fabric, "pico_start:syscall");
        self.step(fabric, "pico_start:hypercall");
        self.step(fabric, "pico_start:interrupt");
        fabric.send_interrupt(self.tile, self.guest, InterruptKind::Start, self.clock);
        self.phase = Phase::Started;
        Ok(())
    }

    pub fn next_interval(&mut self) -> u64 {
        match self.poll {
            PollInterval::Fixed(n) => n,
            PollInterval::Range { min, max } => self.rng.gen_range(min..=max),
        }
    }

    /// One poll of the mailbox at or after `now`. Services a pending request
    /// and returns it.
    pub fn poll(&mut self, fabric: &mut Fabric, now: u64) -> Result<Option<Serviced>, HostError> {
        if self.phase != Phase::Started {
            return Err(HostError::Order("polling before pico_start"));
        }
        self.clock = self.clock.max(now);
        self.polls += 1;
        let mailbox = self.mailbox.expect("set up");
        let mut sys = self.sys.take().expect("loaded");
        let start = self.clock;
        let result = (|| {
            let mut mem = self.mem(fabric);
            let polled = mailbox.host_poll(&mut mem);
            let request = match polled {
                Ok(Some(r)) => r,
                Ok(None) => return Ok(None),
                Err(e) => return Err(mem.error.take().map_or(HostError::Mailbox(e), HostError::Fabric)),
            };
            let outcome = sys.dispatch(&request, &mut mem);
            if let Err(e) = mailbox.host_complete(&mut mem, outcome.ret, outcome.errno) {
                return Err(mem.error.take().map_or(HostError::Mailbox(e), HostError::Fabric));
            }
            Ok(Some(Serviced { cycle: start, request, outcome }))
        })();
        self.sys = Some(sys);
        let served = result?;
        if let Some(s) = &served {
            self.syscall_trace.push(syscall::trace_line(s.cycle, &s.request, &s.outcome));
            self.serviced.push(*s);
        }
        let interval = self.next_interval();
        self.clock += interval;
        Ok(served)
    }

    /// Host-side read of a guest word, e.g. to collect results after a run.
    pub fn read_word(&mut self, fabric: &mut Fabric, addr: u32) -> Result<u32, HostError> {
        Ok(self.mem(fabric).read32(addr)?)
    }

    pub fn read_buf(&mut self, fabric: &mut Fabric, addr: u32, len: u32) -> Result<Vec<u8>, HostError> {
        Ok(self.mem(fabric).read_buf(addr, len)?)
    }

    pub fn stdout(&self) -> &[u8] {
        self.sys.as_ref().map_or(&[], |s| &s.stdout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::Asm;
    use crate::isa::Reg;

    fn setup(cfg: &MachineConfig) -> (HostAgent, Fabric) {
        let fabric = Fabric::new(cfg.tiles.len(), &cfg.geometry, &cfg.timing, &cfg.mesh, cfg.dram_size);
        (HostAgent::new(cfg, 1), fabric)
    }

    fn image() -> GuestImage {
        let mut a = Asm::new(0x10000);
        a.label("spin").j("spin").align(4).label("__pico_seed").word(0);
        GuestImage::from_assembled(&a.finish().unwrap())
    }

    #[test]
    fn steps_must_run_in_order() {
        let cfg = MachineConfig::default();
        let (mut h, mut f) = setup(&cfg);
        assert!(matches!(h.load_binary(&mut f, &image()), Err(HostError::Order(_))));
        assert!(matches!(h.pico_start(&mut f), Err(HostError::Order(_))));
        assert!(matches!(h.poll(&mut f, 0), Err(HostError::Order(_))));
        h.pico_setup(&mut f, cfg.region_size).unwrap();
        // repeating setup with the same size is harmless
        h.pico_setup(&mut f, cfg.region_size).unwrap();
        assert!(matches!(h.pico_start(&mut f), Err(HostError::Order(_))));
        h.load_binary(&mut f, &image()).unwrap();
        assert!(matches!(h.pico_setup(&mut f, cfg.region_size), Err(HostError::Order(_))));
        h.pico_start(&mut f).unwrap();
        assert!(h.started());
        assert_eq!(h.poll(&mut f, 0).unwrap(), None);
    }

    #[test]
    fn bad_region_sizes_are_refused() {
        let cfg = MachineConfig::default();
        for size in [0, 100, cfg.dram_size] {
            let (mut h, mut f) = setup(&cfg);
            assert!(matches!(h.pico_setup(&mut f, size), Err(HostError::Setup(_))), "{size:#x}");
        }
    }

    #[test]
    fn loader_patches_the_seed_word() {
        let cfg = MachineConfig { seed: 0xabcd_1234, ..MachineConfig::default() };
        let (mut h, mut f) = setup(&cfg);
        h.pico_setup(&mut f, cfg.region_size).unwrap();
        let img = image();
        h.load_binary(&mut f, &img).unwrap();
        assert_eq!(h.read_word(&mut f, img.symbol("__pico_seed").unwrap()).unwrap(), 0xabcd_1234);
    }

    #[test]
    fn image_over_the_stack_is_refused() {
        let cfg = MachineConfig { stack_size: 0x3_f000, ..MachineConfig::default() };
        let (mut h, mut f) = setup(&cfg);
        h.pico_setup(&mut f, cfg.region_size).unwrap();
        let mut a = Asm::new(0x10000);
        for _ in 0..0x400 {
            a.word(0);
        }
        a.li(Reg::A0, 0);
        let img = GuestImage::from_assembled(&a.finish().unwrap());
        assert!(matches!(h.load_binary(&mut f, &img), Err(HostError::Setup(_))));
    }

    #[test]
    fn random_poll_intervals_stay_in_range() {
        let cfg = MachineConfig { poll_interval: PollInterval::Range { min: 3, max: 9 }, ..MachineConfig::default() };
        let mut h = HostAgent::new(&cfg, 1);
        let seen: std::collections::BTreeSet<u64> = (0..500).map(|_| h.next_interval()).collect();
        assert_eq!(seen, (3..=9).collect());
    }

    #[test]
    fn both_byte_orders_round_trip_words_and_bytes() {
        for e in [HostEndianness::Big, HostEndianness::Little] {
            let cfg = MachineConfig { host_endianness: e, ..MachineConfig::default() };
            let (mut h, mut f) = setup(&cfg);
            h.pico_setup(&mut f, cfg.region_size).unwrap();
            let mut m = h.mem(&mut f);
            m.write32(0x10100, 0x1122_3344).unwrap();
            assert_eq!(m.read32(0x10100).unwrap(), 0x1122_3344);
            assert_eq!(m.read_buf(0x10100, 4).unwrap(), [0x44, 0x33, 0x22, 0x11]);
            m.write_buf(0x10105, b"abc").unwrap();
            assert_eq!(m.read_buf(0x10104, 5).unwrap(), b"\0abc\0");
        }
    }
}
