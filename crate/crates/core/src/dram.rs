//! Flat backing store with a jittered access latency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpu::MemFault;

#[derive(Clone, Debug)]
pub struct Dram {
    bytes: Vec<u8>,
    access_cycles: u64,
    jitter: u64,
    rng: ChaCha8Rng,
}

impl Dram {
    pub fn new(size: usize, access_cycles: u64, jitter: u64, seed: u64) -> Dram {
        Dram { bytes: vec![0; size], access_cycles, jitter, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn size(&self) -> usize {
        self.bytes.len()
    }

    pub fn check(&self, addr: u32, len: u32) -> Result<(), MemFault> {
        if addr as u64 + len as u64 > self.bytes.len() as u64 {
            return Err(MemFault { addr });
        }
        Ok(())
    }

    /// Next access latency: base plus a uniform draw in `[-jitter, +jitter]`.
    pub fn latency(&mut self) -> u64 {
        if self.jitter == 0 {
            return self.access_cycles;
        }
        let j = self.jitter as i64;
        (self.access_cycles as i64 + self.rng.gen_range(-j..=j)).max(1) as u64
    }

    pub fn read(&self, addr: u32, len: usize) -> &[u8] {
        &self.bytes[addr as usize..addr as usize + len]
    }

    pub fn write(&mut self, addr: u32, data: &[u8]) {
        self.bytes[addr as usize..addr as usize + data.len()].copy_from_slice(data);
    }
}
