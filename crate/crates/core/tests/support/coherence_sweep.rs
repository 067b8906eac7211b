//! Exhaustive explorer runs over every small two-core program on one line,
//! each checked against the SC enumerator. The includer must also declare
//! `mod sc`.

#![allow(dead_code)]

use hetmesh::explore::{explore, Limits, Op};

use super::sc;

/// Every load/store pattern for a split of `a` + `b` operations. Thread t's
/// i-th operation touches word (i + t) % 2 of line 0; store values are
/// unique so every outcome names the store it observed.
pub fn programs(a: usize, b: usize) -> Vec<Vec<Vec<Op>>> {
    let mut v = Vec::new();
    for mask in 0u32..1 << (a + b) {
        let mut threads = vec![Vec::new(), Vec::new()];
        for i in 0..a + b {
            let (t, idx) = if i < a { (0, i) } else { (1, i - a) };
            let addr = 4 * ((idx + t) % 2) as u32;
            let op = if mask >> i & 1 == 1 {
                Op::Store { addr, value: 1 + i as u32 }
            } else {
                Op::Load { addr }
            };
            threads[t].push(op);
        }
        v.push(threads);
    }
    v
}

/// Every program of 2 to `max_ops` operations with both cores active.
pub fn up_to(max_ops: usize) -> Vec<Vec<Vec<Op>>> {
    let mut progs = Vec::new();
    for total in 2..=max_ops {
        for a in 1..total {
            progs.extend(programs(a, total - a));
        }
    }
    progs
}

/// Explores each program; fails on a protocol error, invariant violation,
/// deadlock, or any outcome set differing from SC. Returns total states.
pub fn check_all(progs: &[Vec<Vec<Op>>], evictions: u32) -> Result<usize, String> {
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let chunk = progs.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = progs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    let mut states = 0;
                    for threads in part {
                        let r = explore(threads, Limits { evictions, ..Limits::default() })
                            .map_err(|e| format!("{threads:?}\n{e}"))?;
                        if r.outcomes != sc::sc_outcomes(threads) {
                            return Err(format!("{threads:?}: outcomes differ from SC"));
                        }
                        states += r.states;
                    }
                    Ok(states)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    })
}
