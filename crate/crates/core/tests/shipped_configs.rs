use std::path::Path;

use hetmesh::config::{MachineConfig, PollInterval};

fn shipped(name: &str) -> MachineConfig {
    MachineConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn default_toml_is_the_built_in_default() {
    assert_eq!(shipped("default.toml"), MachineConfig::default());
}

#[test]
fn fuzz_toml_only_changes_polling_and_seed() {
    let cfg = shipped("fuzz.toml");
    assert_eq!(cfg.poll_interval, PollInterval::Range { min: 1, max: 200 });
    assert_eq!(cfg.seed, 7);
    let d = MachineConfig::default();
    assert_eq!(MachineConfig { poll_interval: d.poll_interval, seed: d.seed, ..cfg }, d);
}
