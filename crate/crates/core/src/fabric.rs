//! The timed coherent memory system: one L1.5 and one directory slice per
//! tile, L2 tag arrays, DRAM, and the mesh network between them.
//!
//! Each core access runs to completion before the next starts: a miss sends
//! its request and the network is drained until no coherence message is left
//! in flight. Latency is then classified:
//!
//! * L1.5 hit: `l15_hit_cycles`.
//! * Miss whose data came from DRAM (the home L2 slice missed):
//!   `dram_access_cycles` with jitter.
//! * Other misses: `l15_to_l2_cycles` plus the NoC cycles between issuing
//!   the request and receiving the data.
//!
//! Interrupts that arrive while draining are held for the machine loop.

use serde::Serialize;
use thiserror::Error;

use crate::cache::SetAssoc;
use crate::coherence::{
    self, check_swmr, AccessOutcome, Backing, CohMsg, Directory, LineData, Outgoing, ProtocolError,
    L15,
};
use crate::config::{CacheGeometry, MeshConfig, TimingConfig};
use crate::cpu::{AccessKind, MemFault, MemoryPort, PortRequest, PortResponse, Width};
use crate::dram::Dram;
use crate::endian::{transduce, Direction};
use crate::noc::{Channel, ChannelStats, InterruptKind, MessageKind, Network, TileId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ServicedBy {
    L15,
    L2,
    Dram,
}

/// A completed core or host access. Values are in fabric (big-endian) byte
/// order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryTransaction {
    pub origin: TileId,
    pub addr: u32,
    pub width: Width,
    pub kind: AccessKind,
    pub payload: Option<u32>,
    /// Value returned to the requester (loads and fetches).
    pub value: u32,
    pub issue_cycle: u64,
    pub complete_cycle: u64,
    pub serviced_by: ServicedBy,
}

#[derive(Debug, Error)]
pub enum FabricError {
    #[error(transparent)]
    Fault(#[from] MemFault),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("coherence invariant violated: {0}")]
    Invariant(String),
    #[error("invalid shared window {base:#x}+{size:#x}")]
    BadWindow { base: u32, size: u32 },
    #[error("address {addr:#x} is outside every shared window")]
    OutsideWindow { addr: u32 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counter {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
}

impl Counter {
    fn record(&mut self, hit: bool) {
        self.accesses += 1;
        if hit {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
    }

    pub fn add(&self, other: &Counter) -> Counter {
        Counter {
            accesses: self.accesses + other.accesses,
            hits: self.hits + other.hits,
            misses: self.misses + other.misses,
        }
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &Counter) -> Counter {
        Counter {
            accesses: self.accesses - earlier.accesses,
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
        }
    }

    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct L15Stats {
    pub fetch: Counter,
    pub load: Counter,
    pub store: Counter,
    pub dram_serviced: u64,
    pub l2_serviced: u64,
}

impl L15Stats {
    pub fn data(&self) -> Counter {
        self.load.add(&self.store)
    }

    pub fn total(&self) -> Counter {
        self.data().add(&self.fetch)
    }

    pub fn since(&self, earlier: &L15Stats) -> L15Stats {
        L15Stats {
            fetch: self.fetch.since(&earlier.fetch),
            load: self.load.since(&earlier.load),
            store: self.store.since(&earlier.store),
            dram_serviced: self.dram_serviced - earlier.dram_serviced,
            l2_serviced: self.l2_serviced - earlier.l2_serviced,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct L2Stats {
    pub reads: Counter,
    pub writes: u64,
}

/// An interrupt taken off the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeliveredInterrupt {
    pub src: TileId,
    pub dst: TileId,
    pub kind: InterruptKind,
    pub cycle: u64,
}

struct Store<'a> {
    dram: &'a mut Dram,
    l2: &'a mut [SetAssoc<()>],
    stats: &'a mut [L2Stats],
    homes: usize,
    /// Set when a directory read had to go to DRAM.
    dram_read: bool,
    line_bytes: u32,
}

impl Store<'_> {
    fn allocate(&mut self, line: u32) -> bool {
        let slice = coherence::home_of(line, self.homes);
        let tags = &mut self.l2[slice];
        if tags.touch(line) {
            return true;
        }
        if let Some(crate::cache::Slot::Evict { line: victim, .. }) = tags.victim(line, |_, _| false) {
            tags.remove(victim);
        }
        tags.insert(line, ());
        false
    }
}

impl Backing for Store<'_> {
    fn read_line(&mut self, line: u32) -> LineData {
        let hit = self.allocate(line);
        self.stats[coherence::home_of(line, self.homes)].reads.record(hit);
        if !hit {
            self.dram_read = true;
        }
        self.dram.read(line * self.line_bytes, self.line_bytes as usize).to_vec()
    }

    fn write_line(&mut self, line: u32, data: &[u8]) {
        self.allocate(line);
        self.stats[coherence::home_of(line, self.homes)].writes += 1;
        self.dram.write(line * self.line_bytes, data);
    }
}

pub struct Fabric {
    timing: TimingConfig,
    line_bytes: u32,
    caches: Vec<L15>,
    dirs: Vec<Directory>,
    l2: Vec<SetAssoc<()>>,
    dram: Dram,
    network: Network<Option<CohMsg>>,
    held: Vec<DeliveredInterrupt>,
    windows: Vec<(u32, u32)>,
    pub l15_stats: Vec<L15Stats>,
    pub l2_stats: Vec<L2Stats>,
    log: Option<Vec<MemoryTransaction>>,
    trace: Option<Vec<String>>,
    /// Run the full cache/directory agreement check after every drain.
    pub check_quiescence: bool,
}

impl Fabric {
    pub fn new(
        tiles: usize,
        geometry: &CacheGeometry,
        timing: &TimingConfig,
        mesh: &MeshConfig,
        dram_size: u32,
    ) -> Fabric {
        let line = geometry.line_size_bytes;
        Fabric {
            timing: timing.clone(),
            line_bytes: line,
            caches: (0..tiles)
                .map(|t| {
                    L15::new(t, tiles, geometry.l15_sets(), geometry.l15_associativity as usize, line)
                })
                .collect(),
            dirs: (0..tiles).map(Directory::new).collect(),
            l2: (0..tiles)
                .map(|_| SetAssoc::new(geometry.l2_sets(), geometry.l2_associativity as usize, line))
                .collect(),
            dram: Dram::new(
                dram_size as usize,
                timing.dram_access_cycles,
                timing.dram_jitter_cycles,
                timing.rng_seed,
            ),
            network: Network::new(mesh.clone()),
            held: Vec::new(),
            windows: Vec::new(),
            l15_stats: vec![L15Stats::default(); tiles],
            l2_stats: vec![L2Stats::default(); tiles],
            log: None,
            trace: None,
            check_quiescence: false,
        }
    }

    pub fn line_bytes(&self) -> u32 {
        self.line_bytes
    }

    pub fn tiles(&self) -> usize {
        self.caches.len()
    }

    pub fn cache(&self, tile: TileId) -> &L15 {
        &self.caches[tile]
    }

    pub fn directory(&self, tile: TileId) -> &Directory {
        &self.dirs[tile]
    }

    pub fn network(&self) -> &Network<Option<CohMsg>> {
        &self.network
    }

    pub fn channel_stats(&self) -> [ChannelStats; 3] {
        Channel::ALL.map(|c| self.network.stats(c))
    }

    pub fn record_transactions(&mut self, on: bool) {
        self.log = on.then(Vec::new);
    }

    pub fn transactions(&self) -> &[MemoryTransaction] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace_lines(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Appends a free-form event in the trace format.
    pub fn trace_event(&mut self, cycle: u64, tile: TileId, kind: &str, addr: Option<u32>, what: &str) {
        if let Some(t) = &mut self.trace {
            let addr = addr.map_or("-".to_string(), |a| format!("{a:#010x}"));
            t.push(format!("{cycle} {tile} {kind} {addr} {what}"));
        }
    }

    /// Registers `[base, base + size)` for host-agent access.
    pub fn register_window(&mut self, base: u32, size: u32) -> Result<(), FabricError> {
        if size == 0 || self.dram.check(base, size).is_err() {
            return Err(FabricError::BadWindow { base, size });
        }
        if !self.windows.contains(&(base, size)) {
            self.windows.push((base, size));
        }
        Ok(())
    }

    fn in_window(&self, addr: u32, len: u32) -> bool {
        self.windows
            .iter()
            .any(|&(b, s)| addr >= b && addr as u64 + len as u64 <= b as u64 + s as u64)
    }

    /// Zeroes memory that no cache holds. Fails if any line in the range is
    /// tracked by a directory.
    pub fn zero_fill(&mut self, base: u32, size: u32) -> Result<(), FabricError> {
        self.dram.check(base, size)?;
        let (first, last) = (base / self.line_bytes, (base + size - 1) / self.line_bytes);
        for d in &self.dirs {
            if let Some((line, _)) = d
                .entries()
                .find(|(l, e)| (first..=last).contains(l) && e.state != coherence::DirState::Invalid)
            {
                return Err(FabricError::Invariant(format!("zero-fill over cached line {line:#x}")));
            }
        }
        self.dram.write(base, &vec![0; size as usize]);
        Ok(())
    }

    /// Direct backing-store read, bypassing caches (for diagnostics).
    pub fn peek_dram(&self, addr: u32, len: usize) -> &[u8] {
        self.dram.read(addr, len)
    }

    /// One access by `tile`'s L1.5, in fabric byte order.
    pub fn access(&mut self, tile: TileId, req: PortRequest, now: u64) -> Result<MemoryTransaction, FabricError> {
        self.dram.check(req.addr, req.width.bytes())?;
        let mut out = Vec::new();
        let before = self.trace.as_ref().map(|_| self.state_name(tile, req.addr / self.line_bytes));
        let outcome = self.caches[tile].access(req, &mut out)?;
        let (value, latency, serviced_by) = match outcome {
            AccessOutcome::Hit { value } => (value, self.timing.l15_hit_cycles, ServicedBy::L15),
            AccessOutcome::Miss => {
                let (value, done, dram_read) = self.drain_miss(tile, req, out, now)?;
                if dram_read {
                    (value, self.dram.latency(), ServicedBy::Dram)
                } else {
                    (value, self.timing.l15_to_l2_cycles + (done - now), ServicedBy::L2)
                }
            }
        };
        let stats = &mut self.l15_stats[tile];
        let hit = serviced_by == ServicedBy::L15;
        match req.kind {
            AccessKind::InstrFetch => stats.fetch.record(hit),
            AccessKind::Load => stats.load.record(hit),
            AccessKind::Store => stats.store.record(hit),
        }
        match serviced_by {
            ServicedBy::Dram => stats.dram_serviced += 1,
            ServicedBy::L2 => stats.l2_serviced += 1,
            ServicedBy::L15 => {}
        }
        let tx = MemoryTransaction {
            origin: tile,
            addr: req.addr,
            width: req.width,
            kind: req.kind,
            payload: (req.kind == AccessKind::Store).then_some(req.data),
            value,
            issue_cycle: now,
            complete_cycle: now + latency,
            serviced_by,
        };
        if let Some(before) = before {
            let after = self.state_name(tile, req.addr / self.line_bytes);
            let what = format!("{before}->{after} {serviced_by:?} {latency}");
            self.trace_event(now, tile, &req.kind.to_string(), Some(req.addr), &what);
        }
        if let Some(log) = &mut self.log {
            log.push(tx);
        }
        Ok(tx)
    }

    fn state_name(&self, tile: TileId, line: u32) -> String {
        self.caches[tile].state(line).map_or("I", |s| s.name()).to_string()
    }

    fn send_all(&mut self, src: TileId, out: Vec<Outgoing>, at: u64) {
        for o in out {
            let kind = o.msg.body.kind();
            self.network.send(src, o.dst, kind, Some(o.msg), at);
        }
    }

    /// Drains the network after a miss. Returns the loaded value, the cycle
    /// the requester received its data, and whether DRAM was read.
    fn drain_miss(
        &mut self,
        tile: TileId,
        req: PortRequest,
        out: Vec<Outgoing>,
        now: u64,
    ) -> Result<(u32, u64, bool), FabricError> {
        self.send_all(tile, out, now);
        let mut done = None;
        let mut dram_read = false;
        while let Some(m) = self.network.deliver_next() {
            let at = m.deliver_cycle;
            let Some(msg) = m.payload else {
                let MessageKind::Interrupt(kind) = m.kind else { unreachable!("empty payload") };
                self.held.push(DeliveredInterrupt { src: m.src, dst: m.dst, kind, cycle: at });
                continue;
            };
            let line = msg.line;
            let name = msg.body.name();
            let mut out = Vec::new();
            if msg.body.to_directory() {
                let before = self.dirs[m.dst].state(line);
                let mut store = Store {
                    dram: &mut self.dram,
                    l2: &mut self.l2,
                    stats: &mut self.l2_stats,
                    homes: self.caches.len(),
                    dram_read: false,
                    line_bytes: self.line_bytes,
                };
                self.dirs[m.dst].handle(m.src, msg, &mut store, &mut out)?;
                dram_read |= store.dram_read;
                if self.trace.is_some() {
                    let what = format!("{before}->{} from {}", self.dirs[m.dst].state(line), m.src);
                    self.trace_event(at, m.dst, &format!("dir:{name}"), Some(line * self.line_bytes), &what);
                }
            } else {
                let before = self.state_name(m.dst, line);
                if let Some(c) = self.caches[m.dst].handle(msg, &mut out)? {
                    if m.dst != tile || c.req != req || done.is_some() {
                        return Err(FabricError::Invariant(format!(
                            "unexpected completion at tile {} for {:#x}",
                            m.dst, c.req.addr
                        )));
                    }
                    done = Some((c.value, at));
                }
                if self.trace.is_some() {
                    let what = format!("{before}->{}", self.state_name(m.dst, line));
                    self.trace_event(at, m.dst, &format!("l15:{name}"), Some(line * self.line_bytes), &what);
                }
            }
            self.send_all(m.dst, out, at);
            check_swmr(&self.caches, line).map_err(FabricError::Invariant)?;
        }
        if self.check_quiescence {
            self.check_quiescent()?;
        }
        let (value, at) =
            done.ok_or_else(|| FabricError::Invariant(format!("miss at {:#x} never completed", req.addr)))?;
        Ok((value, at, dram_read))
    }

    pub fn check_quiescent(&self) -> Result<(), FabricError> {
        let caches: Vec<&L15> = self.caches.iter().collect();
        let dirs: Vec<&Directory> = self.dirs.iter().collect();
        coherence::check_quiescent(&caches, &dirs).map_err(FabricError::Invariant)
    }

    /// Host-agent access through `tile`'s L1.5, restricted to shared windows.
    pub fn host_access(&mut self, tile: TileId, req: PortRequest, now: u64) -> Result<MemoryTransaction, FabricError> {
        if !self.in_window(req.addr, req.width.bytes()) {
            return Err(FabricError::OutsideWindow { addr: req.addr });
        }
        self.access(tile, req, now)
    }

    pub fn send_interrupt(&mut self, src: TileId, dst: TileId, kind: InterruptKind, now: u64) {
        self.network.send(src, dst, MessageKind::Interrupt(kind), None, now);
    }

    /// Cycle of the earliest interrupt waiting for delivery.
    pub fn next_interrupt(&self) -> Option<u64> {
        let held = self.held.iter().map(|i| i.cycle).min();
        let queued = self.network.next_lane().and_then(|k| {
            self.network.heads().find(|(h, _)| *h == k).map(|(_, m)| m.deliver_cycle)
        });
        match (held, queued) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Removes and returns every interrupt due at or before `cycle`, in
    /// delivery order.
    pub fn take_interrupts(&mut self, cycle: u64) -> Vec<DeliveredInterrupt> {
        while let Some(k) = self.network.next_lane() {
            let due = self.network.heads().any(|(h, m)| h == k && m.deliver_cycle <= cycle);
            if !due {
                break;
            }
            let m = self.network.pop(k).expect("lane head");
            match (m.kind, m.payload) {
                (MessageKind::Interrupt(kind), None) => self.held.push(DeliveredInterrupt {
                    src: m.src,
                    dst: m.dst,
                    kind,
                    cycle: m.deliver_cycle,
                }),
                _ => unreachable!("coherence message outside a drain"),
            }
        }
        let mut due: Vec<_> = self.held.iter().copied().filter(|i| i.cycle <= cycle).collect();
        self.held.retain(|i| i.cycle > cycle);
        due.sort_by_key(|i| (i.cycle, i.dst, i.src));
        due
    }

    pub fn guest_port(&mut self, tile: TileId) -> GuestPort<'_> {
        GuestPort { fabric: self, tile, last: None, fault: None }
    }
}

/// A guest core's view of the fabric: the transducer flips byte lanes in
/// both directions so the little-endian guest's data lands little-endian in
/// the big-endian fabric.
pub struct GuestPort<'a> {
    fabric: &'a mut Fabric,
    tile: TileId,
    pub last: Option<MemoryTransaction>,
    /// A fabric failure that is not a plain address fault.
    pub fault: Option<FabricError>,
}

impl MemoryPort for GuestPort<'_> {
    fn access(&mut self, req: PortRequest, now: u64) -> Result<PortResponse, MemFault> {
        let mut fabric_req = req;
        fabric_req.data = transduce(req.data, req.width, Direction::Outbound);
        match self.fabric.access(self.tile, fabric_req, now) {
            Ok(tx) => {
                self.last = Some(tx);
                let data = transduce(tx.value, req.width, Direction::Inbound);
                Ok(PortResponse { data, latency: tx.complete_cycle - tx.issue_cycle })
            }
            Err(FabricError::Fault(f)) => Err(f),
            Err(e) => {
                let addr = req.addr;
                self.fault = Some(e);
                Err(MemFault { addr })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fabric() -> Fabric {
        Fabric::new(
            2,
            &CacheGeometry::default(),
            &TimingConfig { dram_jitter_cycles: 0, ..TimingConfig::default() },
            &MeshConfig::default(),
            0x10_0000,
        )
    }

    fn req(kind: AccessKind, addr: u32, data: u32) -> PortRequest {
        PortRequest { kind, addr, width: Width::Word, data }
    }

    #[test]
    fn hit_costs_l15_hit_cycles() {
        let mut f = fabric();
        let cold = f.access(1, req(AccessKind::Load, 0x1000, 0), 0).unwrap();
        assert_eq!(cold.serviced_by, ServicedBy::Dram);
        assert_eq!(cold.complete_cycle - cold.issue_cycle, 100);
        let warm = f.access(1, req(AccessKind::Load, 0x1004, 0), 200).unwrap();
        assert_eq!(warm.serviced_by, ServicedBy::L15);
        assert_eq!(warm.complete_cycle - warm.issue_cycle, 4);
    }

    #[test]
    fn remote_owner_is_serviced_by_l2() {
        let mut f = fabric();
        f.access(0, req(AccessKind::Store, 0x1000, 0xdead_beef), 0).unwrap();
        let tx = f.access(1, req(AccessKind::Load, 0x1000, 0), 500).unwrap();
        assert_eq!(tx.value, 0xdead_beef);
        assert_eq!(tx.serviced_by, ServicedBy::L2);
        assert!(tx.complete_cycle - tx.issue_cycle >= 20);
        f.check_quiescent().unwrap();
    }

    #[test]
    fn guest_port_stores_little_endian() {
        let mut f = fabric();
        let mut port = f.guest_port(1);
        port.access(req(AccessKind::Store, 0x2000, 0xdead_beef), 0).unwrap();
        let raw = f.access(0, req(AccessKind::Load, 0x2000, 0), 1000).unwrap();
        assert_eq!(raw.value, 0xefbe_adde);
        assert_eq!(crate::endian::flip32(raw.value), 0xdead_beef);
        let mut port = f.guest_port(1);
        let back = port.access(req(AccessKind::Load, 0x2000, 0), 2000).unwrap();
        assert_eq!(back.data, 0xdead_beef);
    }

    #[test]
    fn host_read_downgrades_guest_owner() {
        let mut f = fabric();
        f.register_window(0x1000, 0x1000).unwrap();
        f.access(1, req(AccessKind::Store, 0x1010, 7), 0).unwrap();
        let tx = f.host_access(0, req(AccessKind::Load, 0x1010, 0), 300).unwrap();
        assert_eq!(tx.value, 7);
        assert_eq!(f.cache(1).state(0x101), Some(coherence::LineState::S));
    }

    #[test]
    fn windows_are_enforced() {
        let mut f = fabric();
        assert!(matches!(f.register_window(0x1000, 0), Err(FabricError::BadWindow { .. })));
        f.register_window(0x1000, 0x40).unwrap();
        assert!(matches!(
            f.host_access(0, req(AccessKind::Load, 0x1040, 0), 0),
            Err(FabricError::OutsideWindow { .. })
        ));
    }

    #[test]
    fn out_of_range_is_a_fault() {
        let mut f = fabric();
        assert!(matches!(
            f.access(1, req(AccessKind::Load, 0x10_0000, 0), 0),
            Err(FabricError::Fault(_))
        ));
    }

    #[test]
    fn interrupts_are_held_until_due() {
        let mut f = fabric();
        f.send_interrupt(0, 1, InterruptKind::Start, 10);
        assert_eq!(f.next_interrupt(), Some(11));
        assert!(f.take_interrupts(10).is_empty());
        let got = f.take_interrupts(11);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].kind, InterruptKind::Start);
        assert_eq!(f.next_interrupt(), None);
    }
}
