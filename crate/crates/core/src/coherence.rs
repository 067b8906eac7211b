//! Directory MSI protocol: private L1.5 controllers and per-tile directory
//! slices.
//!
//! Both sides are pure message handlers: they consume one message and push
//! the messages they send. The timed fabric and the untimed interleaving
//! explorer drive the very same code.
//!
//! Directory slices block per line: while a line waits for acks, new
//! GetShared/GetModified requests for it queue in arrival order. Writebacks
//! never wait behind requests and are always acknowledged, and a cache does
//! not re-request a line while its writeback is unacknowledged. A writeback
//! from a cache the directory is waiting on is acked only after that
//! cache's Inv/Downgrade ack.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::cache::{SetAssoc, Slot};
use crate::cpu::{AccessKind, PortRequest, Width};
use crate::noc::{MessageKind, TileId};

pub type LineData = Vec<u8>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Grant {
    Shared,
    Modified,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Body {
    GetShared,
    GetModified,
    /// Eviction. `None` for a clean shared copy.
    Writeback { data: Option<LineData> },
    /// `owner` is set when the target was granted the line exclusively; its
    /// Data may still be in flight, so it must answer with the line.
    Invalidate { owner: bool },
    Downgrade,
    Data { grant: Grant, data: LineData },
    InvalidateAck { data: Option<LineData> },
    /// `retained` is false when the owner had already started evicting the
    /// line and keeps no copy.
    DowngradeAck { data: LineData, retained: bool },
    WritebackAck,
}

impl Body {
    pub fn kind(&self) -> MessageKind {
        match self {
            Body::GetShared | Body::GetModified | Body::Invalidate { .. } | Body::Downgrade => {
                MessageKind::CoherenceReq
            }
            Body::Data { .. }
            | Body::InvalidateAck { .. }
            | Body::DowngradeAck { .. }
            | Body::WritebackAck => MessageKind::CoherenceResp,
            Body::Writeback { .. } => MessageKind::Writeback,
        }
    }

    /// True for messages consumed by a directory slice rather than an L1.5.
    pub fn to_directory(&self) -> bool {
        matches!(
            self,
            Body::GetShared
                | Body::GetModified
                | Body::Writeback { .. }
                | Body::InvalidateAck { .. }
                | Body::DowngradeAck { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Body::GetShared => "GetS",
            Body::GetModified => "GetM",
            Body::Writeback { data: Some(_) } => "PutM",
            Body::Writeback { data: None } => "PutS",
            Body::Invalidate { owner: false } => "Inv",
            Body::Invalidate { owner: true } => "InvOwner",
            Body::Downgrade => "Downgrade",
            Body::Data { grant: Grant::Shared, .. } => "DataS",
            Body::Data { grant: Grant::Modified, .. } => "DataM",
            Body::InvalidateAck { .. } => "InvAck",
            Body::DowngradeAck { .. } => "DowngradeAck",
            Body::WritebackAck => "WbAck",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CohMsg {
    pub line: u32,
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Outgoing {
    pub dst: TileId,
    pub msg: CohMsg,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("protocol violation at tile {tile}, line {line:#x}: {detail}")]
pub struct ProtocolError {
    pub tile: TileId,
    pub line: u32,
    pub detail: String,
}

fn violation<T>(tile: TileId, line: u32, detail: impl Into<String>) -> Result<T, ProtocolError> {
    Err(ProtocolError { tile, line, detail: detail.into() })
}

/// Line interleaving across directory slices.
pub fn home_of(line: u32, tiles: usize) -> TileId {
    line as usize % tiles
}

pub fn read_be(data: &[u8], offset: usize, width: Width) -> u32 {
    data[offset..offset + width.bytes() as usize].iter().fold(0, |acc, b| (acc << 8) | *b as u32)
}

pub fn write_be(data: &mut [u8], offset: usize, width: Width, value: u32) {
    let n = width.bytes() as usize;
    for i in 0..n {
        data[offset + i] = (value >> (8 * (n - 1 - i))) as u8;
    }
}

// ---------------------------------------------------------------------------
// L1.5

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LineState {
    S,
    M,
    /// Waiting for shared data.
    IsD,
    /// Waiting for shared data, already invalidated: the load completes with
    /// the data and the line is dropped.
    IsDI,
    /// Waiting for modified data; forwarded requests are stashed.
    ImD,
    /// Upgrading a shared copy.
    SmD,
    /// Modified eviction awaiting its ack.
    MiA,
    /// Shared eviction awaiting its ack.
    SiA,
}

impl LineState {
    pub fn name(self) -> &'static str {
        match self {
            LineState::S => "S",
            LineState::M => "M",
            LineState::IsD => "IS_D",
            LineState::IsDI => "IS_DI",
            LineState::ImD => "IM_D",
            LineState::SmD => "SM_D",
            LineState::MiA => "MI_A",
            LineState::SiA => "SI_A",
        }
    }

    /// Holds data the core may read.
    pub fn readable(self) -> bool {
        matches!(self, LineState::S | LineState::M | LineState::SmD)
    }
}

impl fmt::Display for LineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Entry {
    pub state: LineState,
    pub data: LineData,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct PendingOp {
    req: PortRequest,
    line: u32,
    /// The line's writeback is still unacknowledged; nothing sent yet.
    waiting_wb: bool,
    stashed: Option<Body>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessOutcome {
    Hit { value: u32 },
    Miss,
}

/// A miss that finished. `value` is the loaded value (zero for stores).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Completion {
    pub req: PortRequest,
    pub value: u32,
}

/// A private L1.5 controller with one outstanding miss.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct L15 {
    tile: TileId,
    homes: usize,
    line_bytes: u32,
    tags: SetAssoc<Entry>,
    writebacks: BTreeMap<u32, Entry>,
    pending: Option<PendingOp>,
    pub evictions: u64,
}

impl L15 {
    pub fn new(tile: TileId, homes: usize, sets: usize, ways: usize, line_bytes: u32) -> L15 {
        L15 {
            tile,
            homes,
            line_bytes,
            tags: SetAssoc::new(sets, ways, line_bytes),
            writebacks: BTreeMap::new(),
            pending: None,
            evictions: 0,
        }
    }

    pub fn tile(&self) -> TileId {
        self.tile
    }

    pub fn line_bytes(&self) -> u32 {
        self.line_bytes
    }

    pub fn busy(&self) -> bool {
        self.pending.is_some()
    }

    pub fn state(&self, line: u32) -> Option<LineState> {
        self.tags
            .get(line)
            .or_else(|| self.writebacks.get(&line))
            .map(|e| e.state)
    }

    pub fn entry(&self, line: u32) -> Option<&Entry> {
        self.tags.get(line).or_else(|| self.writebacks.get(&line))
    }

    /// Every line with a state, including evictions in flight.
    pub fn lines(&self) -> impl Iterator<Item = (u32, &Entry)> + '_ {
        self.tags.lines().chain(self.writebacks.iter().map(|(l, e)| (*l, e)))
    }

    fn home(&self, line: u32) -> TileId {
        home_of(line, self.homes)
    }

    fn send(&self, out: &mut Vec<Outgoing>, line: u32, body: Body) {
        out.push(Outgoing { dst: self.home(line), msg: CohMsg { line, body } });
    }

    /// Starts a core access. A hit completes at once; a miss sends its
    /// request (or waits for a pending writeback) and completes later
    /// through [`L15::handle`].
    pub fn access(
        &mut self,
        req: PortRequest,
        out: &mut Vec<Outgoing>,
    ) -> Result<AccessOutcome, ProtocolError> {
        let line = req.addr / self.line_bytes;
        if self.pending.is_some() {
            return violation(self.tile, line, "access issued with a miss outstanding");
        }
        let offset = (req.addr % self.line_bytes) as usize;
        let store = req.kind == AccessKind::Store;
        if let Some(state) = self.tags.get(line).map(|e| e.state) {
            match (state, store) {
                (LineState::M, _) | (LineState::S, false) => {
                    self.tags.touch(line);
                    let value = self.perform(line, offset, req);
                    return Ok(AccessOutcome::Hit { value });
                }
                (LineState::S, true) => {
                    self.tags.touch(line);
                    self.set_state(line, LineState::SmD);
                    self.pending = Some(PendingOp { req, line, waiting_wb: false, stashed: None });
                    self.send(out, line, Body::GetModified);
                    return Ok(AccessOutcome::Miss);
                }
                (s, _) => return violation(self.tile, line, format!("access to line in {s}")),
            }
        }
        let waiting_wb = self.writebacks.contains_key(&line);
        self.pending = Some(PendingOp { req, line, waiting_wb, stashed: None });
        if !waiting_wb {
            self.issue_miss(line, store, out)?;
        }
        Ok(AccessOutcome::Miss)
    }

    fn perform(&mut self, line: u32, offset: usize, req: PortRequest) -> u32 {
        let entry = self.tags.get_mut(line).expect("line present");
        if req.kind == AccessKind::Store {
            write_be(&mut entry.data, offset, req.width, req.data);
            0
        } else {
            read_be(&entry.data, offset, req.width)
        }
    }

    fn set_state(&mut self, line: u32, state: LineState) {
        self.tags.get_mut(line).expect("line present").state = state;
    }

    fn issue_miss(&mut self, line: u32, store: bool, out: &mut Vec<Outgoing>) -> Result<(), ProtocolError> {
        match self.tags.victim(line, |_, e| !matches!(e.state, LineState::S | LineState::M)) {
            Some(Slot::Free) => {}
            Some(Slot::Evict { line: victim, state }) => {
                self.tags.remove(victim);
                self.evictions += 1;
                let (wb_state, data) = match state.state {
                    LineState::S => (LineState::SiA, None),
                    LineState::M => (LineState::MiA, Some(state.data.clone())),
                    s => return violation(self.tile, victim, format!("evicting line in {s}")),
                };
                self.writebacks.insert(victim, Entry { state: wb_state, data: state.data });
                self.send(out, victim, Body::Writeback { data });
            }
            None => return violation(self.tile, line, "no evictable way"),
        }
        let (state, body) =
            if store { (LineState::ImD, Body::GetModified) } else { (LineState::IsD, Body::GetShared) };
        self.tags.insert(line, Entry { state, data: vec![0; self.line_bytes as usize] });
        self.send(out, line, body);
        Ok(())
    }

    /// Evicts a stable line on demand (used by the explorer and by flushes).
    /// Returns false if the line is absent or in a transient state.
    pub fn evict(&mut self, line: u32, out: &mut Vec<Outgoing>) -> bool {
        let data = match self.tags.get(line).map(|e| e.state) {
            Some(LineState::S) => None,
            Some(LineState::M) => Some(self.tags.get(line).unwrap().data.clone()),
            _ => return false,
        };
        let entry = self.tags.remove(line).unwrap();
        self.evictions += 1;
        let state = if data.is_some() { LineState::MiA } else { LineState::SiA };
        self.writebacks.insert(line, Entry { state, data: entry.data });
        self.send(out, line, Body::Writeback { data });
        true
    }

    /// Handles a message from the directory. Returns the completed access,
    /// if this message finished one.
    pub fn handle(
        &mut self,
        msg: CohMsg,
        out: &mut Vec<Outgoing>,
    ) -> Result<Option<Completion>, ProtocolError> {
        let line = msg.line;
        let tile = self.tile;
        match msg.body {
            Body::Data { grant, data } => self.fill(line, grant, data, out),
            Body::Invalidate { owner } => {
                let held = self.tags.get(line).map(|e| e.state);
                let buffered = self.writebacks.get(&line).map(|e| (e.state, e.data.clone()));
                match (held, buffered, owner) {
                    (Some(LineState::S), _, false) => {
                        self.tags.remove(line);
                        self.send(out, line, Body::InvalidateAck { data: None });
                    }
                    (Some(LineState::IsD), _, false) => {
                        self.set_state(line, LineState::IsDI);
                        self.send(out, line, Body::InvalidateAck { data: None });
                    }
                    (Some(LineState::SmD), _, false) => {
                        self.set_state(line, LineState::ImD);
                        self.send(out, line, Body::InvalidateAck { data: None });
                    }
                    (Some(LineState::M), _, true) => {
                        let e = self.tags.remove(line).unwrap();
                        self.send(out, line, Body::InvalidateAck { data: Some(e.data) });
                    }
                    // Granted M but the data has not arrived yet.
                    (Some(LineState::ImD | LineState::SmD), _, true) => self.stash(line, msg.body)?,
                    (None, Some((LineState::SiA, _)), false) => {
                        self.send(out, line, Body::InvalidateAck { data: None })
                    }
                    (None, Some((LineState::MiA, data)), true) => {
                        self.send(out, line, Body::InvalidateAck { data: Some(data) })
                    }
                    (h, b, _) => {
                        let state = h.or(b.map(|b| b.0)).map_or("I", LineState::name);
                        return violation(tile, line, format!("{} in {state}", msg.body.name()));
                    }
                }
                Ok(None)
            }
            Body::Downgrade => {
                match self.tags.get(line).map(|e| e.state) {
                    Some(LineState::M) => {
                        self.set_state(line, LineState::S);
                        let data = self.tags.get(line).unwrap().data.clone();
                        self.send(out, line, Body::DowngradeAck { data, retained: true });
                    }
                    Some(LineState::ImD | LineState::SmD) => self.stash(line, Body::Downgrade)?,
                    Some(s) => return violation(tile, line, format!("Downgrade in {s}")),
                    None => match self.writebacks.get(&line).map(|e| (e.state, e.data.clone())) {
                        Some((LineState::MiA, data)) => {
                            self.send(out, line, Body::DowngradeAck { data, retained: false })
                        }
                        _ => return violation(tile, line, "Downgrade for line not owned"),
                    },
                }
                Ok(None)
            }
            Body::WritebackAck => {
                if self.writebacks.remove(&line).is_none() {
                    return violation(tile, line, "WbAck without writeback");
                }
                let resume = matches!(&self.pending, Some(p) if p.waiting_wb && p.line == line);
                if resume {
                    let p = self.pending.as_mut().unwrap();
                    p.waiting_wb = false;
                    let store = p.req.kind == AccessKind::Store;
                    self.issue_miss(line, store, out)?;
                }
                Ok(None)
            }
            other => violation(tile, line, format!("{} sent to a cache", other.name())),
        }
    }

    fn stash(&mut self, line: u32, body: Body) -> Result<(), ProtocolError> {
        match &mut self.pending {
            Some(p) if p.line == line && p.stashed.is_none() => {
                p.stashed = Some(body);
                Ok(())
            }
            _ => violation(self.tile, line, "cannot stash forwarded request"),
        }
    }

    fn fill(
        &mut self,
        line: u32,
        grant: Grant,
        data: LineData,
        out: &mut Vec<Outgoing>,
    ) -> Result<Option<Completion>, ProtocolError> {
        let tile = self.tile;
        let pending = match self.pending.take() {
            Some(p) if p.line == line && !p.waiting_wb => p,
            other => {
                self.pending = other;
                return violation(tile, line, "unexpected data");
            }
        };
        let state = self.tags.get(line).map(|e| e.state);
        let offset = (pending.req.addr % self.line_bytes) as usize;
        let next = match (state, grant) {
            (Some(LineState::IsD), Grant::Shared) => LineState::S,
            (Some(LineState::IsDI), Grant::Shared) => {
                self.tags.remove(line);
                let value = read_be(&data, offset, pending.req.width);
                return Ok(Some(Completion { req: pending.req, value }));
            }
            (Some(LineState::ImD | LineState::SmD), Grant::Modified) => LineState::M,
            (s, g) => {
                self.pending = Some(pending);
                return violation(tile, line, format!("{g:?} data in {s:?}"));
            }
        };
        {
            let e = self.tags.get_mut(line).unwrap();
            e.state = next;
            e.data = data;
        }
        self.tags.touch(line);
        let value = self.perform(line, offset, pending.req);
        match pending.stashed {
            None => {}
            Some(Body::Invalidate { .. }) => {
                let e = self.tags.remove(line).unwrap();
                self.send(out, line, Body::InvalidateAck { data: Some(e.data) });
            }
            Some(Body::Downgrade) => {
                self.set_state(line, LineState::S);
                let data = self.tags.get(line).unwrap().data.clone();
                self.send(out, line, Body::DowngradeAck { data, retained: true });
            }
            Some(b) => return violation(tile, line, format!("stashed {}", b.name())),
        }
        Ok(Some(Completion { req: pending.req, value }))
    }
}

// ---------------------------------------------------------------------------
// Directory

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum DirState {
    #[default]
    Invalid,
    Shared(BTreeSet<TileId>),
    Modified(TileId),
}

impl fmt::Display for DirState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirState::Invalid => f.write_str("I"),
            DirState::Shared(s) => {
                f.write_str("S{")?;
                for (i, t) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str("}")
            }
            DirState::Modified(o) => write!(f, "M{{{o}}}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Transaction {
    requester: TileId,
    grant: Grant,
    awaiting: BTreeSet<TileId>,
    data: Option<LineData>,
    keep: BTreeSet<TileId>,
    /// Writebacks from awaited caches, acked only after their Inv or
    /// Downgrade ack so the WbAck cannot overtake the forwarded request.
    /// The flag marks a clean (PutS) writeback: that cache downgraded and
    /// then dropped the line, so its DowngradeAck no longer holds.
    deferred: BTreeMap<TileId, bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct DirectoryEntry {
    pub state: DirState,
    busy: Option<Transaction>,
    queue: VecDeque<(TileId, Body)>,
}

impl DirectoryEntry {
    pub fn is_busy(&self) -> bool {
        self.busy.is_some()
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Stable-state shape: Modified has one owner and no sharers, Shared has
    /// at least one sharer.
    pub fn well_formed(&self) -> bool {
        match &self.state {
            DirState::Shared(s) => !s.is_empty(),
            _ => true,
        }
    }
}

/// The memory behind a directory slice.
pub trait Backing {
    fn read_line(&mut self, line: u32) -> LineData;
    fn write_line(&mut self, line: u32, data: &[u8]);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct DirectoryStats {
    pub requests: u64,
    pub grants: u64,
    pub invalidations: u64,
    pub downgrades: u64,
    pub writebacks: u64,
    pub stale_writebacks: u64,
}

/// One directory slice. Full-map and never evicts: every line a cache holds
/// has an entry here.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Directory {
    tile: TileId,
    entries: BTreeMap<u32, DirectoryEntry>,
    pub stats: DirectoryStats,
}

impl Directory {
    pub fn new(tile: TileId) -> Directory {
        Directory { tile, entries: BTreeMap::new(), stats: DirectoryStats::default() }
    }

    pub fn tile(&self) -> TileId {
        self.tile
    }

    pub fn entry(&self, line: u32) -> Option<&DirectoryEntry> {
        self.entries.get(&line)
    }

    pub fn state(&self, line: u32) -> DirState {
        self.entries.get(&line).map(|e| e.state.clone()).unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, &DirectoryEntry)> + '_ {
        self.entries.iter().map(|(l, e)| (*l, e))
    }

    pub fn idle(&self) -> bool {
        self.entries.values().all(|e| e.busy.is_none() && e.queue.is_empty())
    }

    pub fn handle(
        &mut self,
        src: TileId,
        msg: CohMsg,
        backing: &mut dyn Backing,
        out: &mut Vec<Outgoing>,
    ) -> Result<(), ProtocolError> {
        let line = msg.line;
        let tile = self.tile;
        let entry = self.entries.entry(line).or_default();
        match msg.body {
            body @ (Body::GetShared | Body::GetModified) => {
                self.stats.requests += 1;
                if entry.busy.is_some() {
                    entry.queue.push_back((src, body));
                    return Ok(());
                }
                self.start(line, src, body, backing, out)?;
            }
            Body::Writeback { data } => {
                self.stats.writebacks += 1;
                if let Some(t) = entry.busy.as_mut().filter(|t| t.awaiting.contains(&src)) {
                    self.stats.stale_writebacks += 1;
                    t.deferred.insert(src, data.is_none());
                    if let DirState::Shared(sharers) = &mut entry.state {
                        sharers.remove(&src);
                    }
                    return Ok(());
                }
                match (&mut entry.state, data) {
                    (DirState::Modified(owner), Some(data)) if *owner == src => {
                        if entry.busy.is_some() {
                            return violation(tile, line, "owner writeback during unrelated transaction");
                        }
                        backing.write_line(line, &data);
                        entry.state = DirState::Invalid;
                    }
                    (DirState::Shared(sharers), None) if sharers.contains(&src) => {
                        sharers.remove(&src);
                        if sharers.is_empty() {
                            entry.state = DirState::Invalid;
                        }
                    }
                    _ => self.stats.stale_writebacks += 1,
                }
                out.push(Outgoing { dst: src, msg: CohMsg { line, body: Body::WritebackAck } });
            }
            Body::InvalidateAck { data } => {
                let t = match entry.busy.as_mut() {
                    Some(t) if t.awaiting.contains(&src) => t,
                    _ => return violation(tile, line, format!("unexpected InvAck from {src}")),
                };
                t.awaiting.remove(&src);
                if t.deferred.remove(&src).is_some() {
                    out.push(Outgoing { dst: src, msg: CohMsg { line, body: Body::WritebackAck } });
                }
                if let Some(d) = data {
                    backing.write_line(line, &d);
                    t.data = Some(d);
                }
                self.maybe_finish(line, backing, out)?;
            }
            Body::DowngradeAck { data, retained } => {
                let t = match entry.busy.as_mut() {
                    Some(t) if t.awaiting.contains(&src) => t,
                    _ => return violation(tile, line, format!("unexpected DowngradeAck from {src}")),
                };
                t.awaiting.remove(&src);
                let dropped = t.deferred.remove(&src);
                if dropped.is_some() {
                    out.push(Outgoing { dst: src, msg: CohMsg { line, body: Body::WritebackAck } });
                }
                backing.write_line(line, &data);
                t.data = Some(data);
                if retained && dropped != Some(true) {
                    t.keep.insert(src);
                }
                self.maybe_finish(line, backing, out)?;
            }
            other => return violation(tile, line, format!("{} sent to a directory", other.name())),
        }
        Ok(())
    }

    fn start(
        &mut self,
        line: u32,
        src: TileId,
        body: Body,
        backing: &mut dyn Backing,
        out: &mut Vec<Outgoing>,
    ) -> Result<(), ProtocolError> {
        let tile = self.tile;
        let entry = self.entries.get_mut(&line).expect("entry exists");
        let grant = if body == Body::GetShared { Grant::Shared } else { Grant::Modified };
        let mut t = Transaction {
            requester: src,
            grant,
            awaiting: BTreeSet::new(),
            data: None,
            keep: BTreeSet::new(),
            deferred: BTreeMap::new(),
        };
        match (&entry.state, grant) {
            (DirState::Invalid, _) => {}
            (DirState::Shared(s), Grant::Shared) => {
                if s.contains(&src) {
                    return violation(tile, line, format!("GetS from sharer {src}"));
                }
                t.keep = s.clone();
            }
            (DirState::Shared(s), Grant::Modified) => {
                for &sharer in s.iter().filter(|&&x| x != src) {
                    self.stats.invalidations += 1;
                    t.awaiting.insert(sharer);
                    out.push(Outgoing { dst: sharer, msg: CohMsg { line, body: Body::Invalidate { owner: false } } });
                }
            }
            (DirState::Modified(owner), _) if *owner == src => {
                return violation(tile, line, format!("{} from owner {src}", body.name()));
            }
            (DirState::Modified(owner), Grant::Shared) => {
                self.stats.downgrades += 1;
                t.awaiting.insert(*owner);
                out.push(Outgoing { dst: *owner, msg: CohMsg { line, body: Body::Downgrade } });
            }
            (DirState::Modified(owner), Grant::Modified) => {
                self.stats.invalidations += 1;
                t.awaiting.insert(*owner);
                out.push(Outgoing { dst: *owner, msg: CohMsg { line, body: Body::Invalidate { owner: true } } });
            }
        }
        entry.busy = Some(t);
        self.maybe_finish(line, backing, out)
    }

    fn maybe_finish(
        &mut self,
        line: u32,
        backing: &mut dyn Backing,
        out: &mut Vec<Outgoing>,
    ) -> Result<(), ProtocolError> {
        let entry = self.entries.get_mut(&line).expect("entry exists");
        match &entry.busy {
            Some(t) if t.awaiting.is_empty() => {}
            _ => return Ok(()),
        }
        let t = entry.busy.take().unwrap();
        let data = match t.data {
            Some(d) => d,
            None => backing.read_line(line),
        };
        entry.state = match t.grant {
            Grant::Modified => DirState::Modified(t.requester),
            Grant::Shared => {
                let mut s = t.keep;
                s.insert(t.requester);
                DirState::Shared(s)
            }
        };
        let next = entry.queue.pop_front();
        self.stats.grants += 1;
        out.push(Outgoing {
            dst: t.requester,
            msg: CohMsg { line, body: Body::Data { grant: t.grant, data } },
        });
        match next {
            Some((src, body)) => self.start(line, src, body, backing, out),
            None => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Invariants

/// At most one cache may hold a line writable, and then no other cache may
/// hold it readable.
pub fn check_swmr<'a>(caches: impl IntoIterator<Item = &'a L15>, line: u32) -> Result<(), String> {
    let mut writers = Vec::new();
    let mut readers = Vec::new();
    for c in caches {
        match c.tags.get(line).map(|e| e.state) {
            Some(LineState::M) => writers.push(c.tile),
            Some(s) if s.readable() => readers.push(c.tile),
            _ => {}
        }
    }
    if writers.len() > 1 || (!writers.is_empty() && !readers.is_empty()) {
        return Err(format!("line {line:#x}: writers {writers:?}, readers {readers:?}"));
    }
    Ok(())
}

/// With no messages in flight, caches and directories must agree exactly:
/// every valid L1.5 line is tracked by its home directory entry and nothing
/// else is.
pub fn check_quiescent(caches: &[&L15], dirs: &[&Directory]) -> Result<(), String> {
    let homes = dirs.len();
    for c in caches {
        if c.pending.is_some() || !c.writebacks.is_empty() {
            return Err(format!("tile {} has transactions in flight", c.tile));
        }
        for (line, e) in c.tags.lines() {
            let dir = dirs[home_of(line, homes)].state(line);
            let ok = match (e.state, &dir) {
                (LineState::S, DirState::Shared(s)) => s.contains(&c.tile),
                (LineState::M, DirState::Modified(o)) => *o == c.tile,
                _ => false,
            };
            if !ok {
                return Err(format!("tile {} line {line:#x} {} vs directory {dir}", c.tile, e.state));
            }
        }
    }
    for d in dirs {
        for (line, entry) in d.entries() {
            if entry.is_busy() || entry.queued() > 0 {
                return Err(format!("directory {} line {line:#x} busy", d.tile));
            }
            if !entry.well_formed() {
                return Err(format!("directory {} line {line:#x} malformed", d.tile));
            }
            let holders: Vec<TileId> = match &entry.state {
                DirState::Invalid => vec![],
                DirState::Shared(s) => s.iter().copied().collect(),
                DirState::Modified(o) => vec![*o],
            };
            for h in holders {
                let held = caches.iter().find(|c| c.tile == h).and_then(|c| c.state(line));
                if held.is_none() {
                    return Err(format!("directory {} lists tile {h} for line {line:#x}", d.tile));
                }
            }
        }
    }
    Ok(())
}
