use lgp::model::{SolveMethod, ThetaPair};
use lgp::systems::{sample_triplets, system_by_name, SamplingBounds};
use lgp::{Dataset, KernelPair, OperatorMode, TrainedLgp, Triplet};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(system: &str, n: usize, seed: u64) -> Dataset {
    let s = system_by_name(system).unwrap();
    sample_triplets(s.as_ref(), n, &SamplingBounds::default_for(s.n_q()), 0.05, seed).unwrap()
}

fn model(d: &Dataset, k: KernelPair, mode: OperatorMode, slack: f64) -> TrainedLgp {
    let norm = k.default_normalization(mode, d);
    TrainedLgp::new(d.clone(), k, ThetaPair::unit(&k), norm, slack, mode).unwrap()
}

fn families(n: usize) -> [KernelPair; 2] {
    [KernelPair::physics(n), KernelPair::generic(n)]
}

const MODES: [OperatorMode; 2] = [OperatorMode::Discrete, OperatorMode::ContinuousMidpoint];

#[test]
fn gram_size() {
    for nq in 1..=3 {
        for n in [1, 4, 9] {
            let d = data(&format!("pendulum{nq}"), n, 3);
            for k in families(nq) {
                let m = model(&d, k, OperatorMode::ContinuousMidpoint, 1e-6);
                assert_eq!(m.gram.size(), (n + 2) * nq + 1);
            }
        }
    }
}

#[test]
fn noiseless_posterior_interpolates_and_hits_anchors() {
    let mut checked = 0;
    for nq in 1..=2 {
        let d = data(&format!("pendulum{nq}"), 8, 11);
        for k in families(nq) {
            for mode in MODES {
                let m = model(&d, k, mode, 0.0);
                if m.gram.method != SolveMethod::Cholesky || m.gram.jitter_used != 0.0 {
                    continue;
                }
                checked += 1;
                for t in &d.triplets {
                    let r = m.residual_mean(t, d.h_train).unwrap();
                    assert!(r.norm() <= 1e-6, "{} {mode:?}: residual {}", k.name(), r.norm());
                }
                let norm = &m.normalization;
                let l = m.posterior_lagrangian(norm.anchor_l.as_slice()).unwrap();
                assert!((l.scalar_mean() - norm.n_l).abs() <= 1e-8, "L at anchor {}", l.scalar_mean());
                let p = m.posterior(&m.prior().momentum(norm.anchor_l.as_slice()).unwrap());
                assert!((&p.mean - &norm.n_m).amax() <= 1e-8, "momentum at anchor {}", p.mean);
                let f = m.posterior_force(norm.anchor_f.as_slice()).unwrap();
                assert!((&f.mean - &norm.n_f).amax() <= 1e-8, "force at anchor {}", f.mean);
            }
        }
    }
    assert!(checked >= 4, "only {checked} configurations factored without jitter");
}

#[test]
fn posterior_variances_are_non_negative() {
    let d = data("pendulum2", 15, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in families(2) {
        let m = model(&d, k, OperatorMode::ContinuousMidpoint, 1e-6);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..4).map(|i| if i < 2 { rng.random_range(-3.5..3.5) } else { rng.random_range(-5.0..5.0) }).collect();
            let l = m.posterior_lagrangian(&z).unwrap();
            assert!(l.scalar_variance() >= 0.0);
            assert!(l.unclamped_min >= -1e-8 * l.prior_trace, "{} vs prior {}", l.unclamped_min, l.prior_trace);
            let h = m.posterior_hamiltonian(&z).unwrap();
            assert!(h.scalar_variance() >= 0.0);
            assert!(h.unclamped_min >= -1e-8 * h.prior_trace);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn slack_never_decreases_residual_variance(
        q in prop::collection::vec(-2.0f64..2.0, 3),
        u in prop::collection::vec(-1.0f64..1.0, 2),
        physics in any::<bool>(),
        discrete in any::<bool>(),
    ) {
        let d = data("pendulum1", 10, 2);
        let k = if physics { KernelPair::physics(1) } else { KernelPair::generic(1) };
        let mode = if discrete { OperatorMode::Discrete } else { OperatorMode::ContinuousMidpoint };
        let v = |x: f64| DVector::from_element(1, x);
        let h = d.h_train;
        let t = Triplet::new(v(q[0]), v(q[0] + h * q[1]), v(q[0] + h * (q[1] + q[2])), v(u[0]), v(u[1])).unwrap();
        let base = model(&d, k, mode, 1e-8);
        let mut last = -f64::INFINITY;
        for s in lgp::training::geometric_grid(1e-8, 1e-1, 8) {
            let var = base.with_slack(s).unwrap().posterior_residual(&t, h).unwrap().trace();
            // allow rounding noise relative to the prior scale
            prop_assert!(var >= last - 1e-9 * var.abs().max(1e-12), "slack {s}: {var} < {last}");
            last = last.max(var);
        }
    }
}

#[test]
fn model_dimension_errors_are_reported() {
    let d = data("pendulum1", 4, 1);
    let m = model(&d, KernelPair::physics(1), OperatorMode::ContinuousMidpoint, 1e-6);
    assert!(m.posterior_lagrangian(&[0.0]).is_err());
    assert!(m.posterior_force(&[0.0, 0.0]).is_err());
    let disc = model(&d, KernelPair::physics(1), OperatorMode::Discrete, 1e-6);
    assert!(disc.posterior_hamiltonian(&[0.0, 0.0]).is_err());
}
