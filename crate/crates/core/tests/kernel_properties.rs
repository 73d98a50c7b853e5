use lgp::kernels::{kernel_cross_hessian, kernel_eval, kernel_grad, Arg};
use lgp::{HyperParams, KernelSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn specs() -> Vec<KernelSpec> {
    let mut v = Vec::new();
    for n in 1..=3 {
        v.push(KernelSpec::physics_lagrangian(n));
        v.push(KernelSpec::physics_force(n));
        v.push(KernelSpec::pressure_dissipation(n));
        v.push(KernelSpec::squared_exponential(2 * n));
        v.push(KernelSpec::separable_baseline(2 * n + 1));
    }
    v
}

fn theta_for(spec: &KernelSpec, raw: &[f64]) -> HyperParams {
    let flat: Vec<f64> = (0..spec.n_params()).map(|i| raw[i % raw.len()]).collect();
    HyperParams::from_flat(spec, &flat).unwrap()
}

fn point(raw: &[f64], dim: usize, shift: usize) -> Vec<f64> {
    (0..dim).map(|i| raw[(i + shift) % raw.len()]).collect()
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kernels_are_symmetric(
        raw in prop::collection::vec(-2.0f64..2.0, 12),
        th in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        for spec in specs() {
            let t = theta_for(&spec, &th);
            let a = point(&raw, spec.input_dim, 0);
            let b = point(&raw, spec.input_dim, 5);
            let kab = kernel_eval(&spec, &t, &a, &b).unwrap();
            let kba = kernel_eval(&spec, &t, &b, &a).unwrap();
            prop_assert!((kab - kba).abs() <= 1e-14 * kab.abs().max(1e-300), "{:?}: {kab} vs {kba}", spec.family);
        }
    }

    #[test]
    fn derivatives_match_central_differences(
        raw in prop::collection::vec(-1.5f64..1.5, 12),
        th in prop::collection::vec(-0.5f64..0.5, 7),
    ) {
        let eps = 1e-4;
        for spec in specs() {
            let t = theta_for(&spec, &th);
            let d = spec.input_dim;
            let a = point(&raw, d, 0);
            let b = point(&raw, d, 7);
            let k = |x: &[f64], y: &[f64]| kernel_eval(&spec, &t, x, y).unwrap();
            let bump = |x: &[f64], i: usize, s: f64| { let mut y = x.to_vec(); y[i] += s; y };

            let ga = kernel_grad(&spec, &t, &a, &b, Arg::First).unwrap();
            let gb = kernel_grad(&spec, &t, &a, &b, Arg::Second).unwrap();
            let fa: Vec<f64> = (0..d).map(|i| (k(&bump(&a, i, eps), &b) - k(&bump(&a, i, -eps), &b)) / (2.0 * eps)).collect();
            let fb: Vec<f64> = (0..d).map(|i| (k(&a, &bump(&b, i, eps)) - k(&a, &bump(&b, i, -eps))) / (2.0 * eps)).collect();
            let scale = fa.iter().chain(&fb).fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..d {
                prop_assert!(rel(ga[i], fa[i], scale) < 1e-5, "{:?} grad a[{i}]: {} vs {}", spec.family, ga[i], fa[i]);
                prop_assert!(rel(gb[i], fb[i], scale) < 1e-5, "{:?} grad b[{i}]: {} vs {}", spec.family, gb[i], fb[i]);
            }

            let h = kernel_cross_hessian(&spec, &t, &a, &b).unwrap();
            let fd = DMatrix::from_fn(d, d, |i, j| {
                let pp = k(&bump(&a, i, eps), &bump(&b, j, eps));
                let pm = k(&bump(&a, i, eps), &bump(&b, j, -eps));
                let mp = k(&bump(&a, i, -eps), &bump(&b, j, eps));
                let mm = k(&bump(&a, i, -eps), &bump(&b, j, -eps));
                (pp - pm - mp + mm) / (4.0 * eps * eps)
            });
            let scale = fd.amax();
            for i in 0..d {
                for j in 0..d {
                    prop_assert!(rel(h[(i, j)], fd[(i, j)], scale) < 1e-5, "{:?} H[{i},{j}]: {} vs {}", spec.family, h[(i, j)], fd[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn gram_matrices_are_psd(
        raw in prop::collection::vec(-2.0f64..2.0, 20 * 9),
        th in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        for spec in specs() {
            let t = theta_for(&spec, &th);
            let d = spec.input_dim;
            let pts: Vec<Vec<f64>> = (0..20).map(|p| raw[p * 9..p * 9 + d].to_vec()).collect();
            let g = DMatrix::from_fn(20, 20, |i, j| kernel_eval(&spec, &t, &pts[i], &pts[j]).unwrap());
            let min = g.clone().symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10 * g.trace(), "{:?}: min eigenvalue {min}, trace {}", spec.family, g.trace());
        }
    }

    #[test]
    fn physics_lagrangian_at_origin_is_potential_variance(
        th in prop::collection::vec(-2.0f64..2.0, 3 * 4),
        n in 1usize..=3,
    ) {
        let spec = KernelSpec::physics_lagrangian(n);
        let t = theta_for(&spec, &th);
        let zero = vec![0.0; 2 * n];
        let k = kernel_eval(&spec, &t, &zero, &zero).unwrap();
        prop_assert!((k - t.log_signal_variances[1].exp()).abs() <= 1e-14 * k);
        // every other hyperparameter is irrelevant there
        let mut t2 = t.clone();
        t2.log_signal_variances[0] += 1.0;
        t2.log_signal_variances[2] -= 1.0;
        for ls in &mut t2.log_lengthscales {
            ls.iter_mut().for_each(|l| *l += 0.7);
        }
        prop_assert_eq!(kernel_eval(&spec, &t2, &zero, &zero).unwrap(), k);
    }
}

#[test]
fn se_kernel_known_values() {
    let spec = KernelSpec::squared_exponential(2);
    let t = HyperParams::unit(&spec);
    assert_eq!(kernel_eval(&spec, &t, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
    let v = kernel_eval(&spec, &t, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
    assert!((v - (-0.5f64).exp()).abs() < 1e-15);
    assert!(kernel_eval(&spec, &t, &[1.0], &[0.0, 0.0]).is_err());
}
