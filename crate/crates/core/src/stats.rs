//! Run statistics, serialized as a flat JSON object of counters.
//!
//! Keys are dotted paths (`l15.tile1.load.misses`) in sorted order, so two
//! identical runs produce byte-identical files. `schema_version` changes
//! whenever a key is renamed or removed.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::cpu::RunState;
use crate::fabric::{Counter, L15Stats};
use crate::machine::{Halt, Machine};
use crate::noc::{Channel, ChannelStats};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    pub total_cycles: u64,
    pub exit_status: Option<i32>,
    pub halt: String,
    pub guest_instructions: u64,
    pub l15: Vec<L15Stats>,
    pub l2: Counter,
    pub l2_writes: u64,
    pub noc: [ChannelStats; 3],
    pub coherence_requests: u64,
    pub coherence_grants: u64,
    pub invalidations: u64,
    pub downgrades: u64,
    pub writebacks: u64,
    pub syscalls: u64,
    pub syscall_round_trip_cycles: u64,
    pub host_polls: u64,
    pub ignored_start_interrupts: u64,
    pub roi: Option<Roi>,
}

/// Counters accumulated between the guest's region-of-interest markers.
#[derive(Clone, Debug, PartialEq)]
pub struct Roi {
    pub cycles: u64,
    pub l15: Vec<L15Stats>,
}

impl Roi {
    fn from_marks(marks: &[(u32, u64, Vec<L15Stats>)]) -> Option<Roi> {
        let begin = marks.iter().position(|m| m.0 == 1)?;
        let end = marks[begin..].iter().find(|m| m.0 == 2)?;
        let start = &marks[begin];
        Some(Roi {
            cycles: end.1 - start.1,
            l15: end.2.iter().zip(&start.2).map(|(e, s)| e.since(s)).collect(),
        })
    }
}

impl RunStats {
    pub fn collect(m: &Machine) -> RunStats {
        let halt = m.halt();
        let f = &m.fabric;
        let dirs: Vec<_> = (0..f.tiles()).map(|t| f.directory(t).stats).collect();
        let l2 = f.l2_stats.iter().fold(Counter::default(), |a, s| a.add(&s.reads));
        RunStats {
            total_cycles: m.now(),
            exit_status: match halt {
                Some(Halt::Exit(c)) => Some(c),
                _ => None,
            },
            halt: match halt {
                Some(Halt::Exit(c)) => format!("exit {c}"),
                Some(Halt::Trap { tile, trap }) => format!("trap tile {tile}: {trap:?}"),
                Some(Halt::ToHost(v)) => format!("tohost {v}"),
                None => "running".into(),
            },
            guest_instructions: m.guests.iter().map(|g| g.core.retired).sum(),
            l15: f.l15_stats.clone(),
            l2,
            l2_writes: f.l2_stats.iter().map(|s| s.writes).sum(),
            noc: f.channel_stats(),
            coherence_requests: dirs.iter().map(|d| d.requests).sum(),
            coherence_grants: dirs.iter().map(|d| d.grants).sum(),
            invalidations: dirs.iter().map(|d| d.invalidations).sum(),
            downgrades: dirs.iter().map(|d| d.downgrades).sum(),
            writebacks: dirs.iter().map(|d| d.writebacks).sum(),
            syscalls: m.host.serviced.len() as u64,
            syscall_round_trip_cycles: m.syscall_round_trips.iter().sum(),
            host_polls: m.host.polls,
            ignored_start_interrupts: m
                .guests
                .iter()
                .filter(|g| g.core.run_state != RunState::HeldInReset)
                .map(|g| g.core.ignored_starts)
                .sum(),
            roi: Roi::from_marks(&m.roi_marks),
        }
    }

    /// L1.5 data (load + store) counters of one tile.
    pub fn data(&self, tile: usize) -> Counter {
        self.l15[tile].data()
    }

    /// L1.5 data counters of one tile inside the region of interest, or
    /// over the whole run when the guest marked none.
    pub fn steady_data(&self, tile: usize) -> Counter {
        match &self.roi {
            Some(r) => r.l15[tile].data(),
            None => self.data(tile),
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        let mut put = |k: String, v: Value| {
            m.insert(k, v);
        };
        put("schema_version".into(), SCHEMA_VERSION.into());
        put("total_cycles".into(), self.total_cycles.into());
        put("exit_status".into(), self.exit_status.map_or(Value::Null, Value::from));
        put("halt".into(), self.halt.clone().into());
        put("guest_instructions".into(), self.guest_instructions.into());
        let counter = |put: &mut dyn FnMut(String, Value), prefix: &str, c: &Counter| {
            put(format!("{prefix}.accesses"), c.accesses.into());
            put(format!("{prefix}.hits"), c.hits.into());
            put(format!("{prefix}.misses"), c.misses.into());
        };
        for (tile, s) in self.l15.iter().enumerate() {
            let p = format!("l15.tile{tile}");
            counter(&mut put, &format!("{p}.fetch"), &s.fetch);
            counter(&mut put, &format!("{p}.load"), &s.load);
            counter(&mut put, &format!("{p}.store"), &s.store);
            counter(&mut put, &format!("{p}.data"), &s.data());
            counter(&mut put, &format!("{p}.total"), &s.total());
            put(format!("{p}.serviced_by_l2"), s.l2_serviced.into());
            put(format!("{p}.serviced_by_dram"), s.dram_serviced.into());
        }
        counter(&mut put, "l2.reads", &self.l2);
        put("l2.writes".into(), self.l2_writes.into());
        for (c, s) in Channel::ALL.iter().zip(&self.noc) {
            let p = format!("noc.channel{}", c.number());
            put(format!("{p}.injected"), s.injected.into());
            put(format!("{p}.delivered"), s.delivered.into());
            put(format!("{p}.backlogged"), s.backlogged.into());
            put(format!("{p}.peak_occupancy"), (s.peak_occupancy as u64).into());
        }
        put("coherence.requests".into(), self.coherence_requests.into());
        put("coherence.grants".into(), self.coherence_grants.into());
        put("coherence.invalidations".into(), self.invalidations.into());
        put("coherence.downgrades".into(), self.downgrades.into());
        put("coherence.writebacks".into(), self.writebacks.into());
        put("syscalls.count".into(), self.syscalls.into());
        put("syscalls.round_trip_cycles".into(), self.syscall_round_trip_cycles.into());
        put("host.polls".into(), self.host_polls.into());
        put("guest.ignored_start_interrupts".into(), self.ignored_start_interrupts.into());
        if let Some(r) = &self.roi {
            put("roi.cycles".into(), r.cycles.into());
            for (tile, s) in r.l15.iter().enumerate() {
                let p = format!("roi.l15.tile{tile}");
                counter(&mut put, &format!("{p}.fetch"), &s.fetch);
                counter(&mut put, &format!("{p}.data"), &s.data());
            }
        }
        m
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_map()).expect("serializable");
        s.push('\n');
        s
    }
}
