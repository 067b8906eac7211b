//! Exhaustive interleaving exploration of two cores sharing one line.

#[path = "support/sc.rs"]
mod sc;
#[path = "support/coherence_sweep.rs"]
mod sweep;

#[test]
fn two_cores_one_line_up_to_six_ops() {
    let progs = sweep::up_to(6);
    assert_eq!(progs.len(), 4 + 2 * 8 + 3 * 16 + 4 * 32 + 5 * 64);
    let states = sweep::check_all(&progs, 1).unwrap();
    assert!(states > 100_000, "explored only {states} states");
}

#[test]
fn three_plus_three_with_two_evictions() {
    sweep::check_all(&sweep::programs(3, 3), 2).unwrap();
}
