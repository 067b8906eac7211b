//! Machine configuration. The on-disk form is TOML whose keys mirror the
//! structs below; every field has a default, so an empty file is valid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpu::InstructionTimingTable;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheGeometry {
    pub l15_size_bytes: u32,
    pub l15_associativity: u32,
    pub line_size_bytes: u32,
    pub l2_slice_size_bytes: u32,
    pub l2_associativity: u32,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        CacheGeometry {
            l15_size_bytes: 8192,
            l15_associativity: 4,
            line_size_bytes: 16,
            l2_slice_size_bytes: 64 * 1024,
            l2_associativity: 4,
        }
    }
}

impl CacheGeometry {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("l15_size_bytes", self.l15_size_bytes),
            ("line_size_bytes", self.line_size_bytes),
            ("l2_slice_size_bytes", self.l2_slice_size_bytes),
        ] {
            if !v.is_power_of_two() {
                return Err(invalid(format!("{name} must be a power of two, got {v}")));
            }
        }
        if self.line_size_bytes < 4 {
            return Err(invalid("line_size_bytes must be at least 4"));
        }
        for (name, size, ways) in [
            ("l15", self.l15_size_bytes, self.l15_associativity),
            ("l2", self.l2_slice_size_bytes, self.l2_associativity),
        ] {
            let lines = size / self.line_size_bytes;
            if ways == 0 || lines == 0 || lines % ways != 0 {
                return Err(invalid(format!(
                    "{name} associativity {ways} must divide its line count {lines}"
                )));
            }
        }
        Ok(())
    }

    pub fn l15_sets(&self) -> usize {
        (self.l15_size_bytes / self.line_size_bytes / self.l15_associativity) as usize
    }

    pub fn l2_sets(&self) -> usize {
        (self.l2_slice_size_bytes / self.line_size_bytes / self.l2_associativity) as usize
    }
}

/// Execution cycles for the non-memory instruction classes. Loads and stores
/// take [`TimingConfig::load_store_exec_cycles`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecCycles {
    pub lui: u32,
    pub auipc: u32,
    pub jal: u32,
    pub jalr: u32,
    pub branch_taken: u32,
    pub branch_not_taken: u32,
    pub op_imm: u32,
    pub op: u32,
    pub fence: u32,
    pub system: u32,
}

impl Default for ExecCycles {
    fn default() -> Self {
        let t = InstructionTimingTable::default();
        ExecCycles {
            lui: t.lui,
            auipc: t.auipc,
            jal: t.jal,
            jalr: t.jalr,
            branch_taken: t.branch_taken,
            branch_not_taken: t.branch_not_taken,
            op_imm: t.op_imm,
            op: t.op,
            fence: t.fence,
            system: t.system,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub l15_hit_cycles: u64,
    /// End-to-end latency of an L1.5 miss serviced by DRAM.
    pub dram_access_cycles: u64,
    /// DRAM latency varies uniformly in `[-jitter, +jitter]`.
    pub dram_jitter_cycles: u64,
    pub load_store_exec_cycles: u32,
    /// Base latency of an L1.5 miss serviced by an L2 slice; NoC hop cycles
    /// of the coherence exchange are added on top.
    pub l15_to_l2_cycles: u64,
    pub rng_seed: u64,
    pub instructions: ExecCycles,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            l15_hit_cycles: 4,
            dram_access_cycles: 100,
            dram_jitter_cycles: 1,
            load_store_exec_cycles: 5,
            l15_to_l2_cycles: 20,
            rng_seed: 1,
            instructions: ExecCycles::default(),
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("l15_hit_cycles", self.l15_hit_cycles),
            ("dram_access_cycles", self.dram_access_cycles),
            ("l15_to_l2_cycles", self.l15_to_l2_cycles),
            ("load_store_exec_cycles", self.load_store_exec_cycles as u64),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be at least 1")));
            }
        }
        if self.dram_jitter_cycles >= self.dram_access_cycles {
            return Err(invalid("dram_jitter_cycles must be smaller than dram_access_cycles"));
        }
        self.instruction_table().validate().map_err(|e| invalid(e.to_string()))
    }

    pub fn instruction_table(&self) -> InstructionTimingTable {
        let e = &self.instructions;
        InstructionTimingTable {
            lui: e.lui,
            auipc: e.auipc,
            jal: e.jal,
            jalr: e.jalr,
            branch_taken: e.branch_taken,
            branch_not_taken: e.branch_not_taken,
            load: self.load_store_exec_cycles,
            store: self.load_store_exec_cycles,
            op_imm: e.op_imm,
            op: e.op,
            fence: e.fence,
            system: e.system,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub width: u32,
    pub height: u32,
    pub hop_cycles: u64,
    pub buffer_depth: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { width: 2, height: 1, hop_cycles: 1, buffer_depth: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TileKind {
    HostAgent,
    GuestRv32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HostEndianness {
    #[default]
    Big,
    Little,
}

/// Cycles between host mailbox polls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PollInterval {
    Fixed(u64),
    /// Drawn uniformly per poll from the host's seeded generator.
    Range { min: u64, max: u64 },
}

impl Default for PollInterval {
    fn default() -> Self {
        PollInterval::Fixed(50)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub tiles: Vec<TileKind>,
    pub mesh: MeshConfig,
    pub geometry: CacheGeometry,
    pub timing: TimingConfig,
    pub guest_base: u32,
    pub reset_vector: u32,
    pub region_size: u32,
    pub stack_size: u32,
    pub dram_size: u32,
    pub poll_interval: PollInterval,
    pub sandbox_dir: Option<PathBuf>,
    /// Seeds the benchmark corpus generator and the host's poll jitter.
    pub seed: u64,
    pub host_endianness: HostEndianness,
    pub max_cycles: u64,
    /// Record every memory transaction for oracle replay.
    pub record_transactions: bool,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            tiles: vec![TileKind::HostAgent, TileKind::GuestRv32],
            mesh: MeshConfig::default(),
            geometry: CacheGeometry::default(),
            timing: TimingConfig::default(),
            guest_base: 0x0001_0000,
            reset_vector: 0x0001_0000,
            region_size: 0x0004_0000,
            stack_size: 0x0001_0000,
            dram_size: 0x0040_0000,
            poll_interval: PollInterval::default(),
            sandbox_dir: None,
            seed: 0x2545_f491,
            host_endianness: HostEndianness::Big,
            max_cycles: 2_000_000_000,
            record_transactions: false,
        }
    }
}

impl MachineConfig {
    pub fn from_toml_str(text: &str) -> Result<MachineConfig, ConfigError> {
        let cfg: MachineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<MachineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        MachineConfig::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry.validate()?;
        self.timing.validate()?;
        let hosts = self.tiles.iter().filter(|k| **k == TileKind::HostAgent).count();
        if hosts != 1 {
            return Err(invalid(format!("exactly one host-agent tile required, found {hosts}")));
        }
        if !self.tiles.contains(&TileKind::GuestRv32) {
            return Err(invalid("at least one guest-rv32 tile required"));
        }
        let m = &self.mesh;
        if m.width == 0 || m.height == 0 || ((m.width * m.height) as usize) < self.tiles.len() {
            return Err(invalid(format!(
                "{}x{} mesh cannot hold {} tiles",
                m.width,
                m.height,
                self.tiles.len()
            )));
        }
        if m.hop_cycles == 0 || m.buffer_depth == 0 {
            return Err(invalid("mesh hop_cycles and buffer_depth must be at least 1"));
        }
        if self.region_size == 0 {
            return Err(invalid("region_size must be non-zero"));
        }
        if self.guest_base % 64 != 0 || self.region_size % 64 != 0 {
            return Err(invalid("guest region must be 64-byte aligned"));
        }
        let region_end = self.guest_base as u64 + self.region_size as u64;
        if region_end > self.dram_size as u64 {
            return Err(invalid("guest region exceeds dram_size"));
        }
        if self.reset_vector < self.guest_base || self.reset_vector as u64 >= region_end {
            return Err(invalid("reset_vector must lie inside the guest region"));
        }
        if let PollInterval::Range { min, max } = self.poll_interval {
            if min == 0 || min > max {
                return Err(invalid("poll_interval range must satisfy 1 <= min <= max"));
            }
        }
        if self.poll_interval == PollInterval::Fixed(0) {
            return Err(invalid("poll_interval must be at least 1"));
        }
        Ok(())
    }

    pub fn host_tile(&self) -> usize {
        self.tiles.iter().position(|k| *k == TileKind::HostAgent).expect("validated")
    }

    pub fn guest_tiles(&self) -> impl Iterator<Item = usize> + '_ {
        self.tiles.iter().enumerate().filter(|(_, k)| **k == TileKind::GuestRv32).map(|(i, _)| i)
    }
}
