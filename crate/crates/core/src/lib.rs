//! Cycle-level model of a heterogeneous manycore: an RV32I guest core and a
//! host agent sharing one coherent memory system over a 2D mesh.

pub mod asm;
pub mod bench;
pub mod cache;
pub mod coherence;
pub mod config;
pub mod corpus;
pub mod cpu;
pub mod dram;
pub mod elf;
pub mod endian;
pub mod explore;
pub mod fabric;
pub mod host;
pub mod isa;
pub mod litmus;
pub mod machine;
pub mod mailbox;
pub mod noc;
pub mod probe;
pub mod rv32ui;
pub mod stats;
pub mod syscall;
