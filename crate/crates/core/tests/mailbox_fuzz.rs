#[path = "support/mbfuzz_check.rs"]
mod mbfuzz;

use hetmesh::config::PollInterval;

#[test]
fn random_poll_intervals_service_each_call_once() {
    for seed in [1, 2, 0x2545_f491] {
        assert_eq!(mbfuzz::fuzz(PollInterval::Range { min: 1, max: 200 }, seed).unwrap(), mbfuzz::CALLS + 1);
    }
}

#[test]
fn extreme_fixed_poll_intervals() {
    mbfuzz::fuzz(PollInterval::Fixed(1), 7).unwrap();
    mbfuzz::fuzz(PollInterval::Fixed(200), 8).unwrap();
}
