//! Finite-difference checks of every differentiable op and of the full
//! training loss.

mod common;

use common::gradcases;
use rand::rngs::StdRng;
use rand::SeedableRng;

const CASES: u64 = 100;

#[test]
fn every_op_matches_finite_differences() {
    for (name, case) in gradcases::all() {
        let mut worst: f64 = 0.0;
        for seed in 0..CASES {
            let err = case(&mut StdRng::seed_from_u64(seed)).unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err:e}");
            worst = worst.max(err);
        }
        eprintln!("{name:>12}: worst relative error {worst:.2e}");
    }
}

#[test]
fn combined_loss_matches_finite_differences() {
    for seed in 0..5 {
        let err = gradcases::end_to_end(seed).unwrap();
        assert!(err < 1e-3, "seed {seed}: relative error {err:e}");
    }
}
