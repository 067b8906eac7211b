//! Three-channel 2D mesh network.
//!
//! Messages are routed X then Y; delivery takes `hops * hop_cycles`. Each
//! channel keeps its own per-source router buffer, so a full channel never
//! holds back the other two. Messages that find their buffer full wait in the
//! source's network interface and enter the buffer as slots drain.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::MeshConfig;

pub type TileId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Request = 1,
    Response = 2,
    Writeback = 3,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Request, Channel::Response, Channel::Writeback];

    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterruptKind {
    Start,
    InterProcessor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    CoherenceReq,
    CoherenceResp,
    Writeback,
    Interrupt(InterruptKind),
}

impl MessageKind {
    /// Requests (including directory forwards) on 1, responses and data on
    /// 2, writebacks and interrupts on 3.
    pub fn channel(self) -> Channel {
        match self {
            MessageKind::CoherenceReq => Channel::Request,
            MessageKind::CoherenceResp => Channel::Response,
            MessageKind::Writeback | MessageKind::Interrupt(_) => Channel::Writeback,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub x: u32,
    pub y: u32,
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mesh {
    cfg: MeshConfig,
}

impl Mesh {
    pub fn new(cfg: MeshConfig) -> Mesh {
        Mesh { cfg }
    }

    pub fn config(&self) -> &MeshConfig {
        &self.cfg
    }

    pub fn tiles(&self) -> usize {
        (self.cfg.width * self.cfg.height) as usize
    }

    pub fn coord(&self, tile: TileId) -> Coord {
        Coord { x: tile as u32 % self.cfg.width, y: tile as u32 / self.cfg.width }
    }

    /// Dimension-ordered path from `src` to `dst`, excluding `src`.
    pub fn route(&self, src: TileId, dst: TileId) -> Vec<Coord> {
        let (from, to) = (self.coord(src), self.coord(dst));
        let mut path = Vec::new();
        let mut at = from;
        while at.x != to.x {
            at.x = if to.x > at.x { at.x + 1 } else { at.x - 1 };
            path.push(at);
        }
        while at.y != to.y {
            at.y = if to.y > at.y { at.y + 1 } else { at.y - 1 };
            path.push(at);
        }
        path
    }

    pub fn hops(&self, src: TileId, dst: TileId) -> u64 {
        let (a, b) = (self.coord(src), self.coord(dst));
        (a.x.abs_diff(b.x) + a.y.abs_diff(b.y)) as u64
    }

    pub fn latency(&self, src: TileId, dst: TileId) -> u64 {
        self.hops(src, dst) * self.cfg.hop_cycles
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NocMessage<P> {
    pub kind: MessageKind,
    pub src: TileId,
    pub dst: TileId,
    pub payload: P,
    pub inject_cycle: u64,
    pub deliver_cycle: u64,
}

impl<P> NocMessage<P> {
    pub fn channel(&self) -> Channel {
        self.kind.channel()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub injected: u64,
    pub delivered: u64,
    pub peak_occupancy: usize,
    pub backlogged: u64,
}

#[derive(Clone, Debug)]
struct Pending<P> {
    kind: MessageKind,
    dst: TileId,
    payload: P,
    ready: u64,
}

#[derive(Clone, Debug)]
struct ChannelQueues<P> {
    lanes: BTreeMap<(TileId, TileId), VecDeque<NocMessage<P>>>,
    occupancy: Vec<usize>,
    backlog: Vec<VecDeque<Pending<P>>>,
    last_delivery: BTreeMap<(TileId, TileId), u64>,
    stats: ChannelStats,
}

impl<P> ChannelQueues<P> {
    fn new(tiles: usize) -> Self {
        ChannelQueues {
            lanes: BTreeMap::new(),
            occupancy: vec![0; tiles],
            backlog: (0..tiles).map(|_| VecDeque::new()).collect(),
            last_delivery: BTreeMap::new(),
            stats: ChannelStats::default(),
        }
    }
}

/// Identifies the head of one (channel, src, dst) FIFO lane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneKey {
    pub channel: Channel,
    pub src: TileId,
    pub dst: TileId,
}

#[derive(Clone, Debug)]
pub struct Network<P> {
    mesh: Mesh,
    channels: [ChannelQueues<P>; 3],
}

impl<P> Network<P> {
    pub fn new(cfg: MeshConfig) -> Network<P> {
        let mesh = Mesh::new(cfg);
        let tiles = mesh.tiles();
        Network {
            channels: [ChannelQueues::new(tiles), ChannelQueues::new(tiles), ChannelQueues::new(tiles)],
            mesh,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Queues a message that becomes ready to inject at `ready`.
    ///
    /// Panics if `dst` or `src` is not a tile of the mesh; tile ids are
    /// validated when the machine is built.
    pub fn send(&mut self, src: TileId, dst: TileId, kind: MessageKind, payload: P, ready: u64) {
        assert!(src < self.mesh.tiles() && dst < self.mesh.tiles(), "tile outside mesh");
        let depth = self.mesh.config().buffer_depth;
        let ch = &mut self.channels[kind.channel().index()];
        if ch.occupancy[src] < depth && ch.backlog[src].is_empty() {
            self.inject(kind, src, dst, payload, ready);
        } else {
            ch.stats.backlogged += 1;
            ch.backlog[src].push_back(Pending { kind, dst, payload, ready });
        }
    }

    fn inject(&mut self, kind: MessageKind, src: TileId, dst: TileId, payload: P, at: u64) {
        let latency = self.mesh.latency(src, dst);
        let ch = &mut self.channels[kind.channel().index()];
        let prev = ch.last_delivery.get(&(src, dst)).copied().unwrap_or(0);
        let deliver = (at + latency).max(prev);
        ch.last_delivery.insert((src, dst), deliver);
        ch.occupancy[src] += 1;
        ch.stats.injected += 1;
        ch.stats.peak_occupancy = ch.stats.peak_occupancy.max(ch.occupancy[src]);
        ch.lanes.entry((src, dst)).or_default().push_back(NocMessage {
            kind,
            src,
            dst,
            payload,
            inject_cycle: at,
            deliver_cycle: deliver,
        });
    }

    /// Heads of every non-empty lane.
    pub fn heads(&self) -> impl Iterator<Item = (LaneKey, &NocMessage<P>)> + '_ {
        Channel::ALL.into_iter().flat_map(move |channel| {
            self.channels[channel.index()].lanes.iter().filter_map(move |(&(src, dst), q)| {
                q.front().map(|m| (LaneKey { channel, src, dst }, m))
            })
        })
    }

    /// The next message to deliver: earliest delivery cycle, then
    /// destination tile, channel, and source.
    pub fn next_lane(&self) -> Option<LaneKey> {
        self.heads()
            .min_by_key(|(k, m)| (m.deliver_cycle, k.dst, k.channel, k.src))
            .map(|(k, _)| k)
    }

    pub fn pop(&mut self, key: LaneKey) -> Option<NocMessage<P>> {
        let depth = self.mesh.config().buffer_depth;
        let ch = &mut self.channels[key.channel.index()];
        let lane = ch.lanes.get_mut(&(key.src, key.dst))?;
        let msg = lane.pop_front()?;
        if lane.is_empty() {
            ch.lanes.remove(&(key.src, key.dst));
        }
        ch.occupancy[key.src] -= 1;
        ch.stats.delivered += 1;
        if ch.occupancy[key.src] < depth {
            if let Some(p) = ch.backlog[key.src].pop_front() {
                let at = p.ready.max(msg.deliver_cycle);
                self.inject(p.kind, key.src, p.dst, p.payload, at);
            }
        }
        Some(msg)
    }

    pub fn deliver_next(&mut self) -> Option<NocMessage<P>> {
        let key = self.next_lane()?;
        self.pop(key)
    }

    pub fn is_idle(&self) -> bool {
        self.channels.iter().all(|c| c.lanes.is_empty() && c.backlog.iter().all(VecDeque::is_empty))
    }

    pub fn occupancy(&self, channel: Channel, src: TileId) -> usize {
        self.channels[channel.index()].occupancy[src]
    }

    pub fn stats(&self, channel: Channel) -> ChannelStats {
        self.channels[channel.index()].stats
    }
}
