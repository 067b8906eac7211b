//! Brute-force sequential-consistency oracle: every interleaving of the
//! threads' operations over one flat memory, no caches involved.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use hetmesh::explore::{Op, Outcome};

pub fn sc_outcomes(threads: &[Vec<Op>]) -> BTreeSet<Outcome> {
    let mut out = BTreeSet::new();
    let mut pcs = vec![0; threads.len()];
    let mut results = vec![Vec::new(); threads.len()];
    let mut mem = HashMap::new();
    walk(threads, &mut pcs, &mut results, &mut mem, &mut out);
    out
}

fn walk(
    threads: &[Vec<Op>],
    pcs: &mut Vec<usize>,
    results: &mut Outcome,
    mem: &mut HashMap<u32, u32>,
    out: &mut BTreeSet<Outcome>,
) {
    let mut moved = false;
    for t in 0..threads.len() {
        let Some(&op) = threads[t].get(pcs[t]) else { continue };
        moved = true;
        pcs[t] += 1;
        match op {
            Op::Load { addr } => {
                results[t].push(*mem.get(&addr).unwrap_or(&0));
                walk(threads, pcs, results, mem, out);
                results[t].pop();
            }
            Op::Store { addr, value } => {
                let old = mem.insert(addr, value);
                walk(threads, pcs, results, mem, out);
                match old {
                    Some(v) => mem.insert(addr, v),
                    None => mem.remove(&addr),
                };
            }
        }
        pcs[t] -= 1;
    }
    if !moved {
        out.insert(results.clone());
    }
}
