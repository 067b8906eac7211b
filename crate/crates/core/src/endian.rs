//! Byte-lane flipping between the little-endian guest and the big-endian
//! fabric.
//!
//! The fabric stores values big-endian, like the host ISA. The guest's
//! transducer flips every outbound store payload and inbound load value, so
//! the bytes a guest writes land in memory in little-endian order.

use crate::cpu::Width;

pub fn flip16(x: u16) -> u16 {
    x.swap_bytes()
}

pub fn flip32(x: u32) -> u32 {
    x.swap_bytes()
}

/// Reverses the low `width` bytes of `value`.
pub fn flip(value: u32, width: Width) -> u32 {
    match width {
        Width::Byte => value & 0xff,
        Width::Half => flip16(value as u16) as u32,
        Width::Word => flip32(value),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Core to fabric (store payloads).
    Outbound,
    /// Fabric to core (load and fetch data).
    Inbound,
}

/// Converts a data value crossing the guest transducer. Address, width and
/// kind pass through unchanged, so only the value is transformed.
pub fn transduce(value: u32, width: Width, _direction: Direction) -> u32 {
    flip(value, width)
}
