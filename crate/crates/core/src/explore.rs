//! Exhaustive, untimed interleaving exploration of the coherence protocol.
//!
//! The explorer drives the same L1.5 and directory handlers as the timed
//! fabric, but every enabled action is a branch point: any core may issue
//! its next access, the head of any network lane may be delivered, and a
//! bounded number of spontaneous evictions may happen. Lanes are FIFO per
//! (channel, source, destination), which is all the mesh guarantees.
//!
//! Along every path it checks single-writer/multiple-reader, that every
//! value a cache returns or ships equals a shadow memory updated in store
//! order, and that no reachable state is stuck.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::coherence::{
    check_quiescent, check_swmr, home_of, read_be, AccessOutcome, Backing, Body, CohMsg, Directory, LineData,
    LineState, Outgoing, L15,
};
use crate::cpu::{AccessKind, PortRequest, Width};
use crate::noc::TileId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Load { addr: u32 },
    Store { addr: u32, value: u32 },
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Load { addr } => write!(f, "ld [{addr:#x}]"),
            Op::Store { addr, value } => write!(f, "st [{addr:#x}] = {value}"),
        }
    }
}

/// Load results per thread, in program order.
pub type Outcome = Vec<Vec<u32>>;

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    /// Spontaneous evictions allowed along one path.
    pub evictions: u32,
    pub max_states: usize,
    pub line_bytes: u32,
}

impl Default for Limits {
    fn default() -> Limits {
        Limits { evictions: 2, max_states: 2_000_000, line_bytes: 16 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub states: usize,
    pub transitions: usize,
    pub terminals: usize,
    pub outcomes: BTreeSet<Outcome>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Failure {
    Protocol(String),
    Invariant(String),
    Deadlock(String),
    StateLimit(usize),
}

#[derive(Clone, Debug)]
pub struct ExploreError {
    pub failure: Failure,
    /// Actions from the initial state to the failing one.
    pub trace: Vec<String>,
}

impl fmt::Display for ExploreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:?}", self.failure)?;
        for (i, a) in self.trace.iter().enumerate() {
            writeln!(f, "  {i:3}: {a}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ExploreError {}

type Lane = (u8, TileId, TileId);

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    caches: Vec<L15>,
    dirs: Vec<Directory>,
    memory: BTreeMap<u32, LineData>,
    lanes: BTreeMap<Lane, VecDeque<CohMsg>>,
    pcs: Vec<usize>,
    waiting: Vec<bool>,
    results: Outcome,
    shadow: BTreeMap<u32, LineData>,
    evictions_left: u32,
}

#[derive(Clone, Copy, Debug)]
enum Action {
    Issue(usize),
    Deliver(Lane),
    Evict(usize, u32),
}

struct Memory<'a> {
    lines: &'a mut BTreeMap<u32, LineData>,
    line_bytes: u32,
}

impl Backing for Memory<'_> {
    fn read_line(&mut self, line: u32) -> LineData {
        self.lines.get(&line).cloned().unwrap_or_else(|| vec![0; self.line_bytes as usize])
    }

    fn write_line(&mut self, line: u32, data: &[u8]) {
        self.lines.insert(line, data.to_vec());
    }
}

pub struct Explorer<'p> {
    threads: &'p [Vec<Op>],
    limits: Limits,
    lines: Vec<u32>,
    visited: HashSet<State>,
    report: Report,
    trace: Vec<String>,
}

/// Explores every interleaving of `threads`, one core per thread, each
/// tile also hosting a directory slice.
pub fn explore(threads: &[Vec<Op>], limits: Limits) -> Result<Report, ExploreError> {
    let n = threads.len();
    let lb = limits.line_bytes;
    let mut lines: Vec<u32> = threads
        .iter()
        .flatten()
        .map(|op| match op {
            Op::Load { addr } | Op::Store { addr, .. } => addr / lb,
        })
        .collect();
    lines.sort_unstable();
    lines.dedup();
    let ways = lines.len().max(1);
    let init = State {
        caches: (0..n).map(|t| L15::new(t, n, 1, ways, lb)).collect(),
        dirs: (0..n).map(Directory::new).collect(),
        memory: BTreeMap::new(),
        lanes: BTreeMap::new(),
        pcs: vec![0; n],
        waiting: vec![false; n],
        results: vec![Vec::new(); n],
        shadow: lines.iter().map(|&l| (l, vec![0; lb as usize])).collect(),
        evictions_left: limits.evictions,
    };
    let mut ex = Explorer { threads, limits, lines, visited: HashSet::new(), report: Report::default(), trace: vec![] };
    ex.dfs(init)?;
    ex.report.states = ex.visited.len();
    Ok(ex.report)
}

impl Explorer<'_> {
    fn fail(&self, failure: Failure) -> ExploreError {
        ExploreError { failure, trace: self.trace.clone() }
    }

    fn dfs(&mut self, s: State) -> Result<(), ExploreError> {
        if self.visited.contains(&s) {
            return Ok(());
        }
        if self.visited.len() >= self.limits.max_states {
            return Err(self.fail(Failure::StateLimit(self.limits.max_states)));
        }
        self.visited.insert(s.clone());
        let actions = self.enabled(&s);
        if !actions.iter().any(|a| !matches!(a, Action::Evict(..))) {
            return self.terminal(&s);
        }
        for a in actions {
            self.report.transitions += 1;
            self.trace.push(self.describe(&s, a));
            let next = self.apply(&s, a).map_err(|f| self.fail(f))?;
            self.dfs(next)?;
            self.trace.pop();
        }
        Ok(())
    }

    fn enabled(&self, s: &State) -> Vec<Action> {
        let mut v = Vec::new();
        for (t, ops) in self.threads.iter().enumerate() {
            if !s.waiting[t] && s.pcs[t] < ops.len() {
                v.push(Action::Issue(t));
            }
        }
        v.extend(s.lanes.iter().filter(|(_, q)| !q.is_empty()).map(|(k, _)| Action::Deliver(*k)));
        if s.evictions_left > 0 && !v.is_empty() {
            for (t, c) in s.caches.iter().enumerate() {
                for &line in &self.lines {
                    if matches!(c.state(line), Some(LineState::S | LineState::M)) {
                        v.push(Action::Evict(t, line));
                    }
                }
            }
        }
        v
    }

    fn describe(&self, s: &State, a: Action) -> String {
        match a {
            Action::Issue(t) => format!("core {t} issues {}", self.threads[t][s.pcs[t]]),
            Action::Deliver((ch, src, dst)) => {
                let m = &s.lanes[&(ch, src, dst)][0];
                format!("deliver {} line {} {src}->{dst} (channel {ch})", m.body.name(), m.line)
            }
            Action::Evict(t, line) => format!("core {t} evicts line {line}"),
        }
    }

    fn terminal(&mut self, s: &State) -> Result<(), ExploreError> {
        let done = self.threads.iter().enumerate().all(|(t, ops)| s.pcs[t] == ops.len() && !s.waiting[t]);
        if !done {
            let stuck: Vec<usize> = (0..s.pcs.len()).filter(|&t| s.waiting[t]).collect();
            return Err(self.fail(Failure::Deadlock(format!("cores {stuck:?} wait forever"))));
        }
        let caches: Vec<&L15> = s.caches.iter().collect();
        let dirs: Vec<&Directory> = s.dirs.iter().collect();
        check_quiescent(&caches, &dirs).map_err(|e| self.fail(Failure::Invariant(e)))?;
        for &line in &self.lines {
            let owner = s.caches.iter().find(|c| c.state(line) == Some(LineState::M));
            let data = match owner {
                Some(c) => c.entry(line).unwrap().data.clone(),
                None => s.memory.get(&line).cloned().unwrap_or_else(|| vec![0; self.limits.line_bytes as usize]),
            };
            if data != s.shadow[&line] {
                return Err(self.fail(Failure::Invariant(format!("line {line} ends with stale data"))));
            }
        }
        self.report.terminals += 1;
        self.report.outcomes.insert(s.results.clone());
        Ok(())
    }

    fn apply(&self, s: &State, a: Action) -> Result<State, Failure> {
        let mut s = s.clone();
        let mut out = Vec::new();
        match a {
            Action::Issue(t) => {
                let req = request(self.threads[t][s.pcs[t]]);
                let r = s.caches[t].access(req, &mut out).map_err(|e| Failure::Protocol(e.to_string()))?;
                match r {
                    AccessOutcome::Hit { value } => self.complete(&mut s, t, req, value)?,
                    AccessOutcome::Miss => s.waiting[t] = true,
                }
                self.route(&mut s, t, out)?;
            }
            Action::Deliver(lane) => {
                let (_, src, dst) = lane;
                let msg = s.lanes.get_mut(&lane).unwrap().pop_front().unwrap();
                if msg.body.to_directory() {
                    let mut mem = Memory { lines: &mut s.memory, line_bytes: self.limits.line_bytes };
                    s.dirs[dst].handle(src, msg, &mut mem, &mut out).map_err(|e| Failure::Protocol(e.to_string()))?;
                } else if let Some(c) =
                    s.caches[dst].handle(msg, &mut out).map_err(|e| Failure::Protocol(e.to_string()))?
                {
                    if !s.waiting[dst] {
                        return Err(Failure::Invariant(format!("core {dst} completed an access it never waited on")));
                    }
                    s.waiting[dst] = false;
                    self.complete(&mut s, dst, c.req, c.value)?;
                }
                self.route(&mut s, dst, out)?;
            }
            Action::Evict(t, line) => {
                if !s.caches[t].evict(line, &mut out) {
                    return Err(Failure::Protocol(format!("core {t} could not evict line {line}")));
                }
                s.evictions_left -= 1;
                self.route(&mut s, t, out)?;
            }
        }
        for &line in &self.lines {
            check_swmr(&s.caches, line).map_err(Failure::Invariant)?;
        }
        // Counters are not part of the protocol state.
        for d in &mut s.dirs {
            d.stats = Default::default();
        }
        for c in &mut s.caches {
            c.evictions = 0;
        }
        Ok(s)
    }

    /// Retires core `t`'s access: updates the shadow for stores and checks
    /// what the cache now holds against it.
    fn complete(&self, s: &mut State, t: usize, req: PortRequest, value: u32) -> Result<(), Failure> {
        let lb = self.limits.line_bytes;
        let line = req.addr / lb;
        let offset = (req.addr % lb) as usize;
        let shadow = s.shadow.get_mut(&line).unwrap();
        match req.kind {
            AccessKind::Store => {
                crate::coherence::write_be(shadow, offset, req.width, req.data);
            }
            AccessKind::Load | AccessKind::InstrFetch => {
                // A load that raced with an invalidation read the line as it
                // was when the directory shipped it; that copy was checked.
                if s.caches[t].state(line).is_some() && read_be(shadow, offset, req.width) != value {
                    return Err(Failure::Invariant(format!(
                        "core {t} loaded {value:#x} from {:#x}, latest store wrote {:#x}",
                        req.addr,
                        read_be(shadow, offset, req.width)
                    )));
                }
                s.results[t].push(value);
            }
        }
        if let Some(e) = s.caches[t].entry(line) {
            if matches!(e.state, LineState::S | LineState::M) && e.data != *shadow {
                return Err(Failure::Invariant(format!("core {t} holds stale data for line {line}")));
            }
        }
        s.pcs[t] += 1;
        Ok(())
    }

    /// Puts messages on their lanes, checking every data payload against
    /// the shadow at the moment it is sent.
    fn route(&self, s: &mut State, src: TileId, out: Vec<Outgoing>) -> Result<(), Failure> {
        for o in out {
            let data = match &o.msg.body {
                Body::Data { data, .. } | Body::DowngradeAck { data, .. } => Some(data),
                Body::InvalidateAck { data: Some(d) } | Body::Writeback { data: Some(d) } => Some(d),
                _ => None,
            };
            if let Some(d) = data {
                if *d != s.shadow[&o.msg.line] {
                    return Err(Failure::Invariant(format!(
                        "{} for line {} from {src} carries stale data",
                        o.msg.body.name(),
                        o.msg.line
                    )));
                }
            }
            debug_assert!(!o.msg.body.to_directory() || o.dst == home_of(o.msg.line, s.dirs.len()));
            let ch = o.msg.body.kind().channel().number();
            s.lanes.entry((ch, src, o.dst)).or_default().push_back(o.msg);
        }
        s.lanes.retain(|_, q| !q.is_empty());
        Ok(())
    }
}

fn request(op: Op) -> PortRequest {
    match op {
        Op::Load { addr } => PortRequest { kind: AccessKind::Load, addr, width: Width::Word, data: 0 },
        Op::Store { addr, value } => PortRequest { kind: AccessKind::Store, addr, width: Width::Word, data: value },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ld(addr: u32) -> Op {
        Op::Load { addr }
    }

    fn st(addr: u32, value: u32) -> Op {
        Op::Store { addr, value }
    }

    #[test]
    fn single_thread_reads_its_own_store() {
        let r = explore(&[vec![st(0, 5), ld(0)]], Limits::default()).unwrap();
        assert_eq!(r.outcomes, [vec![vec![5]]].into());
    }

    #[test]
    fn two_writers_one_line() {
        let threads = [vec![st(0, 1), ld(4)], vec![st(4, 2), ld(0)]];
        let r = explore(&threads, Limits::default()).unwrap();
        assert!(r.states > 100);
        // Sequentially consistent: at least one load sees the other's store.
        assert!(!r.outcomes.contains(&vec![vec![0], vec![0]]));
        assert!(r.outcomes.contains(&vec![vec![2], vec![1]]));
    }

    #[test]
    fn exploration_is_deterministic() {
        let threads = [vec![st(0, 1), st(16, 1)], vec![ld(16), ld(0)]];
        let a = explore(&threads, Limits::default()).unwrap();
        let b = explore(&threads, Limits::default()).unwrap();
        assert_eq!((a.states, a.transitions, &a.outcomes), (b.states, b.transitions, &b.outcomes));
    }
}
