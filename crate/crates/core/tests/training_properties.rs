use lgp::experiments::{BenchmarkPlan, Method};
use lgp::model::{assemble, ThetaPair};
use lgp::systems::{sample_triplets, system_by_name, SamplingBounds};
use lgp::training::{
    fd_gradient, fit, fit_baseline_gp, map_penalty, nlml, objective, optimize_hyperparameters, BaselineGp, TrainConfig,
};
use lgp::{Dataset, HyperParams, KernelPair, KernelSpec, OperatorMode};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(system: &str, n: usize, seed: u64) -> Dataset {
    let s = system_by_name(system).unwrap();
    sample_triplets(s.as_ref(), n, &SamplingBounds::default_for(s.n_q()), 0.05, seed).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig { restarts: 3, max_iter: 25, seed: 5, ..Default::default() }
}

#[test]
fn objective_is_finite_inside_bounds() {
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, n) in [("pendulum1", 300), ("pendulum2", 60), ("pendulum3", 40), ("oscillator", 60)] {
        let d = data(name, n, 2);
        for k in [KernelPair::physics(d.n_q), KernelPair::generic(d.n_q)] {
            for mode in [OperatorMode::Discrete, OperatorMode::ContinuousMidpoint] {
                let norm = k.default_normalization(mode, &d);
                for _ in 0..2 {
                    let x: Vec<f64> = (0..k.n_params()).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let v = objective(&d, &k, &x, &norm, cfg.objective_slack, mode, &cfg);
                    assert!(v.is_finite(), "{name} {} {mode:?}: {v}", k.name());
                }
            }
        }
    }
}

#[test]
fn objective_matches_dense_formula() {
    let d = data("pendulum1", 12, 4);
    let k = KernelPair::physics(1);
    let mode = OperatorMode::ContinuousMidpoint;
    let norm = k.default_normalization(mode, &d);
    let cfg = TrainConfig::default();
    let x: Vec<f64> = (0..k.n_params()).map(|i| 0.1 * i as f64 - 0.4).collect();
    let theta = ThetaPair::from_flat(&k, &x).unwrap();
    let g = assemble(&d, &k, &theta, &norm, cfg.objective_slack, mode).unwrap();
    // the physics force kernel vanishes at zero input, so the force anchor
    // row is empty and the factorization adds its recorded jitter
    let m: DMatrix<f64> = &g.matrix + DMatrix::identity(g.size(), g.size()) * g.jitter_used;
    let y: DVector<f64> = g.rhs.clone();
    let lu = m.clone().lu();
    let want = 0.5 * y.dot(&lu.solve(&y).unwrap()) + 0.5 * lu.determinant().ln();
    assert!((nlml(&g) - want).abs() <= 1e-8 * want.abs().max(1.0), "{} vs {want}", nlml(&g));
    let total = objective(&d, &k, &x, &norm, cfg.objective_slack, mode, &cfg);
    let penalty = map_penalty(&x, cfg.prior_mean, cfg.prior_std);
    assert!((total - want - penalty).abs() <= 1e-8 * total.abs().max(1.0));
}

#[test]
fn finite_difference_gradient_is_self_consistent() {
    let d = data("pendulum1", 30, 6);
    let cfg = TrainConfig::default();
    for k in [KernelPair::physics(1), KernelPair::generic(1)] {
        let mode = OperatorMode::ContinuousMidpoint;
        let norm = k.default_normalization(mode, &d);
        let f = |x: &[f64]| objective(&d, &k, x, &norm, cfg.objective_slack, mode, &cfg);
        let x: Vec<f64> = (0..k.n_params()).map(|i| 0.3 * ((i as f64) * 1.7).sin()).collect();
        let g1 = fd_gradient(&f, &x, cfg.fd_step, cfg.log_bounds);
        let g2 = fd_gradient(&f, &x, cfg.fd_step / 2.0, cfg.log_bounds);
        let scale = g1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-3 * scale, "{}: {a} vs {b}", k.name());
        }
    }
}

#[test]
fn best_restart_is_minimal_and_deterministic() {
    let d = data("pendulum1", 20, 7);
    let k = KernelPair::physics(1);
    let mode = OperatorMode::ContinuousMidpoint;
    let norm = k.default_normalization(mode, &d);
    let (theta, runs, best) = optimize_hyperparameters(&d, &k, &norm, mode, &quick()).unwrap();
    assert_eq!(runs.len(), 3);
    assert!(runs.iter().all(|r| runs[best].value <= r.value || !r.value.is_finite()));
    assert!(runs.iter().all(|r| r.value <= r.initial || !r.initial.is_finite()));
    let (again, _, b2) = optimize_hyperparameters(&d, &k, &norm, mode, &quick()).unwrap();
    assert_eq!(best, b2);
    assert_eq!(theta, again);
}

#[test]
fn fit_without_reference_keeps_training_slack() {
    let d = data("pendulum1", 15, 8);
    let cfg = quick();
    let (m, rep) = fit(&d, &KernelPair::physics(1), &cfg, OperatorMode::ContinuousMidpoint, None).unwrap();
    assert_eq!(rep.slack, cfg.objective_slack);
    assert_eq!(m.slack, cfg.objective_slack);
    assert!(rep.slack_curve.is_empty());
    assert_eq!(rep.theta, m.thetas);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        TrainConfig { restarts: 0, ..Default::default() },
        TrainConfig { log_bounds: (1.0, -1.0), ..Default::default() },
        TrainConfig { prior_std: 0.0, ..Default::default() },
        TrainConfig { slack_grid: vec![], ..Default::default() },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
}

#[test]
fn baseline_matches_dense_gp() {
    let d = data("pendulum1", 25, 9);
    let spec = KernelSpec::separable_baseline(4);
    let theta = HyperParams::unit(&spec);
    let log_noise = (1e-4f64).ln();
    let gp = BaselineGp::with_hyperparameters(&d, &[theta], &[log_noise]).unwrap();

    // population statistics over [q_prev, q_curr, u_prev, u_curr]
    let rows: Vec<Vec<f64>> = d.triplets.iter().map(|t| vec![t.q_prev[0], t.q_curr[0], t.u_prev[0], t.u_curr[0]]).collect();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..4).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..4).map(|c| (rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt()).collect();
    let z = |r: &[f64]| -> Vec<f64> { (0..4).map(|c| (r[c] - mean[c]) / std[c]).collect() };
    let x: Vec<Vec<f64>> = rows.iter().map(|r| z(r)).collect();
    let ys: Vec<f64> = d.triplets.iter().map(|t| t.q_next[0]).collect();
    let ym = ys.iter().sum::<f64>() / n;
    let ysd = (ys.iter().map(|y| (y - ym).powi(2)).sum::<f64>() / n).sqrt();
    let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - ym) / ysd));
    let k = |a: &[f64], b: &[f64]| (-0.5 * a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).exp();
    let km = DMatrix::from_fn(x.len(), x.len(), |i, j| k(&x[i], &x[j]) + if i == j { 1e-4 } else { 0.0 });
    let alpha = km.lu().solve(&y).unwrap();

    let probe = [0.3, 0.32, -0.5, 0.7];
    let xs = z(&probe);
    let want = ym + ysd * x.iter().zip(alpha.iter()).map(|(xi, a)| k(xi, &xs) * a).sum::<f64>();
    let v = |a: f64| DVector::from_element(1, a);
    let got = gp.predict(&v(probe[0]), &v(probe[1]), &v(probe[2]), &v(probe[3]))[0];
    assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
}

#[test]
fn baseline_training_reproduces_training_targets() {
    let d = data("pendulum1", 40, 10);
    let gp = fit_baseline_gp(&d, &quick()).unwrap();
    let err: f64 = d
        .triplets
        .iter()
        .map(|t| (gp.predict(&t.q_prev, &t.q_curr, &t.u_prev, &t.u_curr)[0] - t.q_next[0]).abs())
        .fold(0.0, f64::max);
    assert!(err < 5e-2, "max training error {err}");
    assert!(fit_baseline_gp(&data("pendulum1", 1, 1), &quick()).is_err());
}

#[test]
fn baseline_and_lgp_runs_share_datasets() {
    let plan = BenchmarkPlan { methods: vec![Method::Physics, Method::Generic, Method::Baseline], ..Default::default() };
    let runs = plan.runs();
    let seeds: Vec<u64> = runs.iter().map(|r| plan.dataset_seed(r)).collect();
    assert!(seeds.windows(2).all(|w| w[0] == w[1]));
    let sys = plan.system(1).unwrap();
    let a = plan.heldout(sys.as_ref(), &runs[0]).unwrap();
    let b = plan.heldout(sys.as_ref(), &runs[2]).unwrap();
    assert_eq!(a, b);
}
