//! A guest issuing 1000 random syscalls against a host polling at random
//! intervals. The guest logs what it asked for and what came back; the host
//! logs what it serviced. The two logs must pair up one to one.

#![allow(dead_code)]

use std::collections::BTreeSet;

use hetmesh::config::{MachineConfig, PollInterval};
use hetmesh::corpus;
use hetmesh::cpu::AccessKind;
use hetmesh::mailbox::{MAILBOX_BYTES, RESERVED};
use hetmesh::machine::{run_image, Completion, Halt, Machine};
use hetmesh::syscall::SYS_EXIT;

pub const CALLS: usize = 1000;
const ENTRY_BYTES: u32 = 36;

struct Entry {
    number: u32,
    args: [u32; 6],
    ret: i32,
    err: u32,
}

fn guest_log(m: &mut Machine, base: u32) -> Vec<Entry> {
    let bytes = m.host.read_buf(&mut m.fabric, base, CALLS as u32 * ENTRY_BYTES).unwrap();
    bytes
        .chunks(ENTRY_BYTES as usize)
        .map(|c| {
            let w: Vec<u32> = c.chunks(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
            Entry { number: w[0], args: w[1..7].try_into().unwrap(), ret: w[7] as i32, err: w[8] }
        })
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Returns the number of syscalls serviced.
pub fn fuzz(poll: PollInterval, seed: u64) -> Result<usize, String> {
    let image = corpus::image(corpus::MBFUZZ).unwrap();
    let cfg = MachineConfig { poll_interval: poll, seed, record_transactions: true, ..MachineConfig::default() };
    let (mut m, halt) = run_image(cfg, &image, Completion::Mailbox).map_err(|e| e.to_string())?;
    ensure(halt == Halt::Exit(0), || format!("seed {seed}: {halt:?}"))?;
    let count = m.read_guest_word(image.symbol("log_count").unwrap()).unwrap() as usize;
    ensure(count == CALLS, || format!("seed {seed}: guest logged {count} calls"))?;

    let log = guest_log(&mut m, image.symbol("log").unwrap());
    let served = m.host.serviced.clone();
    ensure(served.len() == CALLS + 1, || format!("seed {seed}: host serviced {} requests", served.len()))?;
    ensure(served[CALLS].request.number == SYS_EXIT, || "last request is not exit".into())?;
    for (i, (g, h)) in log.iter().zip(&served).enumerate() {
        let same = g.number == h.request.number
            && g.args == h.request.args
            && (g.ret, g.err) == (h.outcome.ret, h.outcome.errno);
        ensure(same, || format!("seed {seed} call {i}: guest and host logs disagree"))?;
    }
    let distinct: BTreeSet<u32> = log.iter().map(|e| e.number).collect();
    ensure(distinct.len() >= 8, || format!("seed {seed}: only {distinct:?}"))?;
    ensure(m.host.polls > served.len() as u64, || "the host never polled an empty mailbox".into())?;

    let mb = m.host.mailbox().unwrap().base;
    let reserved = mb + RESERVED..mb + MAILBOX_BYTES;
    let touched = m
        .fabric
        .transactions()
        .iter()
        .filter(|t| t.kind == AccessKind::Store && t.addr < reserved.end && t.addr + t.width.bytes() > reserved.start)
        .count();
    ensure(touched == 0, || format!("seed {seed}: {touched} stores into the reserved bytes"))?;
    let bytes = m.host.read_buf(&mut m.fabric, reserved.start, reserved.len() as u32).unwrap();
    ensure(bytes.iter().all(|&b| b == 0), || "reserved bytes are not zero".into())?;
    Ok(served.len())
}
