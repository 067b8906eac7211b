//! Guest binaries built from `corpus/` and embedded so every harness runs
//! without touching the filesystem.

use crate::elf::{GuestImage, ImageError};

macro_rules! elf {
    ($name:literal) => {
        include_bytes!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/bin/", $name, ".elf"))
    };
}

pub const HELLO: &[u8] = elf!("hello");
pub const FILEIO: &[u8] = elf!("fileio");
pub const HANOI: &[u8] = elf!("hanoi");
pub const BINSEARCH: &[u8] = elf!("binsearch");
pub const QUICKSORT: &[u8] = elf!("quicksort");
pub const MBFUZZ: &[u8] = elf!("mbfuzz");
pub const TRAP: &[u8] = elf!("trap");

pub fn image(bytes: &[u8]) -> Result<GuestImage, ImageError> {
    GuestImage::parse(bytes)
}
