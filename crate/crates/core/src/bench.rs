//! The microbenchmark corpus: hanoi, binsearch and quicksort.
//!
//! Each program marks its measured phase with region-of-interest stores, so
//! the reported miss rates exclude table setup and printing.

use std::fmt;
use std::str::FromStr;

use crate::config::MachineConfig;
use crate::corpus;
use crate::elf::GuestImage;
use crate::fabric::MemoryTransaction;
use crate::machine::{Completion, Halt, Machine, MachineError, StepError};
use crate::stats::RunStats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bench {
    Hanoi,
    Binsearch,
    Quicksort,
}

impl Bench {
    pub const ALL: [Bench; 3] = [Bench::Hanoi, Bench::Binsearch, Bench::Quicksort];

    pub fn name(self) -> &'static str {
        match self {
            Bench::Hanoi => "hanoi",
            Bench::Binsearch => "binsearch",
            Bench::Quicksort => "quicksort",
        }
    }

    pub fn image(self) -> GuestImage {
        let bytes = match self {
            Bench::Hanoi => corpus::HANOI,
            Bench::Binsearch => corpus::BINSEARCH,
            Bench::Quicksort => corpus::QUICKSORT,
        };
        corpus::image(bytes).expect("embedded corpus binary is valid")
    }
}

impl fmt::Display for Bench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bench {
    type Err = String;

    fn from_str(s: &str) -> Result<Bench, String> {
        Bench::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown benchmark {s:?} (expected hanoi, binsearch or quicksort)"))
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub bench: Bench,
    pub halt: Halt,
    pub stats: RunStats,
    pub stdout: Vec<u8>,
    /// hanoi: the recorded moves as (from, to) pegs.
    pub moves: Vec<(u8, u8)>,
    /// binsearch: comparison probes across all keys.
    pub probes: Option<u32>,
    pub transactions: Vec<MemoryTransaction>,
}

impl BenchReport {
    /// L1.5 data miss rate of the guest tile over the measured phase.
    pub fn data_miss_rate(&self, tile: usize) -> f64 {
        self.stats.steady_data(tile).miss_rate()
    }

    pub fn summary(&self, tile: usize) -> String {
        let d = self.stats.steady_data(tile);
        let mut s = format!(
            "{}: {:?}, {} cycles, {} instructions\n  L1.5 data (measured phase): {} accesses, {} misses, miss rate {:.4}\n",
            self.bench,
            self.halt,
            self.stats.total_cycles,
            self.stats.guest_instructions,
            d.accesses,
            d.misses,
            d.miss_rate(),
        );
        if !self.moves.is_empty() {
            s += &format!("  moves: {}\n", self.moves.len());
        }
        if let Some(p) = self.probes {
            s += &format!("  probes: {p}\n");
        }
        s
    }
}

pub fn run_bench(cfg: &MachineConfig, bench: Bench) -> Result<BenchReport, StepError> {
    let image = bench.image();
    let run = |e: MachineError| StepError { step: 6, name: "run", source: e };
    let mut m = Machine::new(cfg.clone()).map_err(|e| StepError { step: 0, name: "config", source: e })?;
    m.set_completion(Completion::Mailbox);
    m.boot(&image)?;
    let halt = m.run().map_err(run)?;
    let mut moves = Vec::new();
    let mut probes = None;
    match bench {
        Bench::Hanoi => {
            let count = read_symbol(&mut m, &image, "move_count", 0).map_err(run)?;
            let base = image.symbol("moves").expect("hanoi defines moves");
            let bytes = m.host.read_buf(&mut m.fabric, base, 2 * count).map_err(|e| run(e.into()))?;
            moves = bytes.chunks(2).map(|c| (c[0], c[1])).collect();
        }
        Bench::Binsearch => probes = Some(read_symbol(&mut m, &image, "probes", 0).map_err(run)?),
        Bench::Quicksort => {}
    }
    Ok(BenchReport {
        bench,
        halt,
        stats: m.stats(),
        stdout: m.host.stdout().to_vec(),
        moves,
        probes,
        transactions: m.fabric.transactions().to_vec(),
    })
}

fn read_symbol(m: &mut Machine, image: &GuestImage, name: &str, offset: u32) -> Result<u32, MachineError> {
    let addr = image.symbol(name).unwrap_or_else(|| panic!("benchmark defines {name}"));
    m.read_guest_word(addr + offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in Bench::ALL {
            assert_eq!(b.name().parse::<Bench>().unwrap(), b);
        }
        assert!("fib".parse::<Bench>().is_err());
    }

    #[test]
    fn hanoi_records_every_move() {
        let r = run_bench(&MachineConfig::default(), Bench::Hanoi).unwrap();
        assert_eq!(r.halt, Halt::Exit(0));
        assert_eq!(r.moves.len(), 127);
        assert!(String::from_utf8_lossy(&r.stdout).contains("127 moves"));
    }
}
