//! Flat big-endian memory: what every access would see with no caches at all.

#![allow(dead_code)]

use std::collections::HashMap;

use hetmesh::cpu::AccessKind;
use hetmesh::fabric::MemoryTransaction;

#[derive(Default)]
pub struct FlatOracle {
    bytes: HashMap<u32, u8>,
}

#[derive(Debug)]
pub struct Mismatch {
    pub index: usize,
    pub tx: MemoryTransaction,
    pub expected: u32,
}

impl FlatOracle {
    fn read(&self, addr: u32, n: u32) -> u32 {
        (0..n).fold(0, |v, i| v << 8 | *self.bytes.get(&(addr + i)).unwrap_or(&0) as u32)
    }

    fn write(&mut self, addr: u32, n: u32, value: u32) {
        for i in 0..n {
            self.bytes.insert(addr + i, (value >> (8 * (n - 1 - i))) as u8);
        }
    }

    /// Applies the log in order and returns every load or fetch whose value
    /// disagrees with the flat memory at that point.
    pub fn replay(&mut self, log: &[MemoryTransaction]) -> Vec<Mismatch> {
        let mut bad = Vec::new();
        for (index, tx) in log.iter().enumerate() {
            let n = tx.width.bytes();
            match tx.kind {
                AccessKind::Store => self.write(tx.addr, n, tx.payload.expect("store payload")),
                AccessKind::Load | AccessKind::InstrFetch => {
                    let expected = self.read(tx.addr, n);
                    if expected != tx.value {
                        bad.push(Mismatch { index, tx: *tx, expected });
                    }
                }
            }
        }
        bad
    }
}

/// Runs every benchmark with transaction recording and replays each log.
/// Returns the number of transactions checked.
pub fn check_benches(cfg: &hetmesh::config::MachineConfig) -> Result<usize, String> {
    use hetmesh::bench::{run_bench, Bench};
    use hetmesh::machine::Halt;
    let cfg = hetmesh::config::MachineConfig { record_transactions: true, ..cfg.clone() };
    let mut total = 0;
    for bench in Bench::ALL {
        let r = run_bench(&cfg, bench).map_err(|e| format!("{bench}: {e}"))?;
        if r.halt != Halt::Exit(0) {
            return Err(format!("{bench}: {:?}", r.halt));
        }
        let bad = FlatOracle::default().replay(&r.transactions);
        if let Some(first) = bad.first() {
            return Err(format!("{bench}: {} of {} mismatch, first {first:?}", bad.len(), r.transactions.len()));
        }
        total += r.transactions.len();
    }
    Ok(total)
}
