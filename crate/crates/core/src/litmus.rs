//! Built-in two-core litmus tests, run through the interleaving explorer.
//!
//! `x` and `y` live on different lines with different home tiles, so the
//! shapes exercise two directory slices at once.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::explore::{explore, ExploreError, Limits, Op, Outcome, Report};

const X: u32 = 0x00;
const Y: u32 = 0x10;

pub struct Litmus {
    pub name: &'static str,
    pub about: &'static str,
    pub threads: Vec<Vec<Op>>,
    /// Outcome a coherent, sequentially consistent machine never shows.
    pub forbidden: Option<Outcome>,
}

fn ld(addr: u32) -> Op {
    Op::Load { addr }
}

fn st(addr: u32, value: u32) -> Op {
    Op::Store { addr, value }
}

pub fn all() -> Vec<Litmus> {
    vec![
        Litmus {
            name: "mp",
            about: "message passing: data then flag; reader sees flag, then data",
            threads: vec![vec![st(X, 1), st(Y, 1)], vec![ld(Y), ld(X)]],
            forbidden: Some(vec![vec![], vec![1, 0]]),
        },
        Litmus {
            name: "sb",
            about: "store buffering: each core stores, then loads the other location",
            threads: vec![vec![st(X, 1), ld(Y)], vec![st(Y, 1), ld(X)]],
            forbidden: Some(vec![vec![0], vec![0]]),
        },
        Litmus {
            name: "lb",
            about: "load buffering: each core loads, then stores the other location",
            threads: vec![vec![ld(X), st(Y, 1)], vec![ld(Y), st(X, 1)]],
            forbidden: Some(vec![vec![1], vec![1]]),
        },
        Litmus {
            name: "corr",
            about: "read-read coherence: two reads of one location never go back in time",
            threads: vec![vec![st(X, 1), st(X, 2)], vec![ld(X), ld(X)]],
            forbidden: Some(vec![vec![], vec![2, 1]]),
        },
        Litmus {
            name: "mp-line",
            about: "message passing with data and flag in the same line",
            threads: vec![vec![st(X, 1), st(X + 4, 1)], vec![ld(X + 4), ld(X)]],
            forbidden: Some(vec![vec![], vec![1, 0]]),
        },
        Litmus {
            name: "st-ld",
            about: "single-core coherence: each core reads back its own store",
            threads: vec![vec![st(X, 5), ld(X)], vec![st(Y, 7), ld(Y)]],
            forbidden: None,
        },
    ]
}

pub fn find(name: &str) -> Option<Litmus> {
    all().into_iter().find(|l| l.name == name)
}

pub struct LitmusResult {
    pub report: Report,
    pub forbidden_seen: usize,
}

impl Litmus {
    pub fn run(&self, limits: Limits) -> Result<LitmusResult, ExploreError> {
        let report = explore(&self.threads, limits)?;
        let forbidden_seen = self.forbidden.as_ref().map_or(0, |f| usize::from(report.outcomes.contains(f)));
        Ok(LitmusResult { report, forbidden_seen })
    }

    pub fn render(&self, r: &LitmusResult) -> String {
        let mut s = format!("{}: {}\n", self.name, self.about);
        for (t, ops) in self.threads.iter().enumerate() {
            let ops: Vec<String> = ops.iter().map(|o| o.to_string()).collect();
            let _ = writeln!(s, "  core {t}: {}", ops.join("; "));
        }
        let _ = writeln!(
            s,
            "  {} states, {} transitions, {} complete executions",
            r.report.states, r.report.transitions, r.report.terminals
        );
        s += &render_outcomes(&r.report.outcomes);
        if let Some(f) = &self.forbidden {
            let _ = writeln!(s, "  forbidden {} observed {} times", outcome_str(f), r.forbidden_seen);
        }
        s
    }
}

pub fn outcome_str(o: &Outcome) -> String {
    let threads: Vec<String> = o
        .iter()
        .enumerate()
        .map(|(t, rs)| {
            let rs: Vec<String> = rs.iter().map(|v| v.to_string()).collect();
            format!("core{t}=[{}]", rs.join(","))
        })
        .collect();
    threads.join(" ")
}

pub fn render_outcomes(outcomes: &BTreeSet<Outcome>) -> String {
    let mut s = format!("  outcomes ({}):\n", outcomes.len());
    for o in outcomes {
        let _ = writeln!(s, "    {}", outcome_str(o));
    }
    s
}
