//! Deterministic instances shared by the criterion benchmarks.

use qsc_core::zoo::{generate_synthetic, SyntheticKind, SyntheticSpec, ZooInstance};

pub fn instance(kind: &str, n: usize, m: usize, seed: u64) -> ZooInstance {
    let kind = SyntheticKind::from_name(kind).expect("known kind");
    generate_synthetic(&SyntheticSpec::new(kind, n, m, seed)).expect("valid spec")
}

pub fn soft_max(mu: f64, n: usize, m: usize, seed: u64) -> ZooInstance {
    generate_synthetic(&SyntheticSpec::new(SyntheticKind::SoftMax { mu }, n, m, seed)).expect("valid spec")
}
