use lgp::kernels::{kernel_eval, ResolvedKernel};
use lgp::operators::{InputScales, Prior};
use lgp::{HyperParams, KernelSpec, OperatorMode, Triplet};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const H: f64 = 0.1;

struct Setup {
    kl: KernelSpec,
    kf: KernelSpec,
    tl: HyperParams,
    tf: HyperParams,
    mode: OperatorMode,
}

impl Setup {
    fn new(physics: bool, mode: OperatorMode, n: usize, th: &[f64]) -> Self {
        let (kl, kf) = if physics {
            (KernelSpec::physics_lagrangian(n), KernelSpec::physics_force(n))
        } else {
            (KernelSpec::squared_exponential(2 * n), KernelSpec::squared_exponential(3 * n))
        };
        let pick = |s: &KernelSpec, off: usize| {
            let flat: Vec<f64> = (0..s.n_params()).map(|i| th[(i + off) % th.len()]).collect();
            HyperParams::from_flat(s, &flat).unwrap()
        };
        Setup { tl: pick(&kl, 0), tf: pick(&kf, 3), kl, kf, mode }
    }

    fn prior(&self) -> Prior {
        self.prior_with(&self.tl, &self.tf)
    }

    fn prior_with(&self, tl: &HyperParams, tf: &HyperParams) -> Prior {
        let n = self.kf.input_dim / 3;
        let rl: ResolvedKernel = self.kl.resolve(tl).unwrap();
        let rf: ResolvedKernel = self.kf.resolve(tf).unwrap();
        Prior::new(self.mode, H, InputScales::unit(n), rl, rf).unwrap()
    }

    fn lifted(&self, physics_kernel: bool) -> bool {
        self.mode == OperatorMode::ContinuousMidpoint || physics_kernel
    }
}

fn scaled(t: &HyperParams, dlog: f64) -> HyperParams {
    let mut t = t.clone();
    t.log_signal_variances.iter_mut().for_each(|v| *v += dlog);
    t
}

fn embed(lift: bool, a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    if lift {
        (0..n).map(|i| (a[i] + b[i]) / 2.0).chain((0..n).map(|i| (b[i] - a[i]) / H)).collect()
    } else {
        a.iter().chain(b).copied().collect()
    }
}

/// Residual covariance by finite differences of the discrete action.
///
/// The Lagrangian part of a residual is the gradient in `q_curr` of
/// `L(e(q_prev, x)) + L(e(x, q_next))`, so its covariance is a mixed second
/// derivative of the summed kernel.
fn fd_block(s: &Setup, ti: &Triplet, tj: &Triplet) -> DMatrix<f64> {
    let n = ti.n_q();
    let (cl, cf) = match s.mode {
        OperatorMode::Discrete => (1.0, 1.0),
        OperatorMode::ContinuousMidpoint => (H, H / 2.0),
    };
    let ll = s.lifted(s.kl.family.is_physics());
    let lf = s.lifted(s.kf.family.is_physics());
    let segs = |t: &Triplet, x: &[f64]| {
        [(t.q_prev.as_slice().to_vec(), x.to_vec()), (x.to_vec(), t.q_next.as_slice().to_vec())]
    };
    let action_cov = |x: &[f64], y: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (a, b) in segs(ti, x) {
            for (c, d) in segs(tj, y) {
                acc += kernel_eval(&s.kl, &s.tl, &embed(ll, &a, &b), &embed(ll, &c, &d)).unwrap();
            }
        }
        acc
    };
    let xi = ti.q_curr.as_slice();
    let yj = tj.q_curr.as_slice();
    let bump = |v: &[f64], k: usize, e: f64| {
        let mut w = v.to_vec();
        w[k] += e;
        w
    };
    let mixed = |r: usize, c: usize, eps: f64| {
        let pp = action_cov(&bump(xi, r, eps), &bump(yj, c, eps));
        let pm = action_cov(&bump(xi, r, eps), &bump(yj, c, -eps));
        let mp = action_cov(&bump(xi, r, -eps), &bump(yj, c, eps));
        let mm = action_cov(&bump(xi, r, -eps), &bump(yj, c, -eps));
        (pp - pm - mp + mm) / (4.0 * eps * eps)
    };
    // Richardson step: lifted velocities divide the step by h
    let eps = 1e-3;
    let mut m = DMatrix::from_fn(n, n, |r, c| cl * cl * (4.0 * mixed(r, c, eps / 2.0) - mixed(r, c, eps)) / 3.0);
    let fpts = |t: &Triplet| {
        let p = t.q_prev.as_slice();
        let c = t.q_curr.as_slice();
        let q = t.q_next.as_slice();
        [
            t.u_prev.iter().copied().chain(embed(lf, p, c)).collect::<Vec<f64>>(),
            t.u_curr.iter().copied().chain(embed(lf, c, q)).collect::<Vec<f64>>(),
        ]
    };
    let mut kf = 0.0;
    for a in fpts(ti) {
        for b in fpts(tj) {
            kf += kernel_eval(&s.kf, &s.tf, &a, &b).unwrap();
        }
    }
    for r in 0..n {
        m[(r, r)] += cf * cf * kf;
    }
    m
}

fn triplet(raw: &[f64], n: usize, off: usize) -> Triplet {
    let v = |k: usize| DVector::from_fn(n, |i, _| raw[(off + 5 * i + k) % raw.len()]);
    let qc = v(1);
    // keep finite-difference velocities of order one
    let qp = &qc - v(0) * H;
    let qn = &qc + v(2) * H;
    Triplet::new(qp, qc, qn, v(3), v(4)).unwrap()
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    let scale = a.amax().max(b.amax()).max(1e-12);
    (a - b).amax() <= tol * scale
}

fn modes() -> [OperatorMode; 2] {
    [OperatorMode::Discrete, OperatorMode::ContinuousMidpoint]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn residual_block_matches_finite_differences(
        raw in prop::collection::vec(-1.5f64..1.5, 30),
        th in prop::collection::vec(-0.5f64..0.5, 6),
        n in 1usize..=2,
    ) {
        for physics in [true, false] {
            for mode in modes() {
                let s = Setup::new(physics, mode, n, &th);
                let (ti, tj) = (triplet(&raw, n, 0), triplet(&raw, n, 11));
                let got = s.prior().residual_cov_block(&ti, H, &tj, H).unwrap();
                let want = fd_block(&s, &ti, &tj);
                prop_assert!(close(&got, &want, 1e-5), "physics={physics} {mode:?}\n{got}\n{want}");
            }
        }
    }

    #[test]
    fn residual_blocks_are_transpose_symmetric(
        raw in prop::collection::vec(-1.5f64..1.5, 30),
        th in prop::collection::vec(-0.5f64..0.5, 6),
        n in 1usize..=3,
    ) {
        for physics in [true, false] {
            for mode in modes() {
                let p = Setup::new(physics, mode, n, &th).prior();
                let (ti, tj) = (triplet(&raw, n, 0), triplet(&raw, n, 7));
                let a = p.residual_cov_block(&ti, H, &tj, H).unwrap();
                let b = p.residual_cov_block(&tj, H, &ti, H).unwrap();
                prop_assert!(close(&a, &b.transpose(), 1e-10));
            }
        }
    }

    #[test]
    fn covariance_is_linear_in_the_kernels(
        raw in prop::collection::vec(-1.5f64..1.5, 30),
        th in prop::collection::vec(-0.5f64..0.5, 6),
        n in 1usize..=2,
    ) {
        let ln2 = 2f64.ln();
        for physics in [true, false] {
            for mode in modes() {
                let s = Setup::new(physics, mode, n, &th);
                let (ti, tj) = (triplet(&raw, n, 0), triplet(&raw, n, 4));
                let block = |dl: f64, df: f64| s.prior_with(&scaled(&s.tl, dl), &scaled(&s.tf, df)).residual_cov_block(&ti, H, &tj, H).unwrap();
                let base = block(0.0, 0.0);
                prop_assert!(close(&block(ln2, ln2), &(&base * 2.0), 1e-12));
                // the Lagrangian share grows with c while the force share stays put
                let l1 = block(ln2, 0.0) - &base;
                let l2 = block(3f64.ln(), 0.0) - &base;
                prop_assert!(close(&l2, &(&l1 * 2.0), 1e-9));
            }
        }
    }

    #[test]
    fn continuous_operator_is_scaled_discrete_pullback(
        raw in prop::collection::vec(-1.5f64..1.5, 30),
        th in prop::collection::vec(-0.5f64..0.5, 6),
        n in 1usize..=3,
    ) {
        // physics kernels live on lifted coordinates, so discrete mode uses L∘lift;
        // continuous residuals carry the extra factors h (Lagrangian) and h/2 (force)
        let mut d = Setup::new(true, OperatorMode::Discrete, n, &th);
        let mut c = Setup::new(true, OperatorMode::ContinuousMidpoint, n, &th);
        let (ti, tj) = (triplet(&raw, n, 0), triplet(&raw, n, 9));
        let quiet = scaled(&d.tf, -250.0);
        d.tf = quiet.clone();
        c.tf = quiet;
        let bd = d.prior().residual_cov_block(&ti, H, &tj, H).unwrap();
        let bc = c.prior().residual_cov_block(&ti, H, &tj, H).unwrap();
        prop_assert!(close(&bc, &(&bd * (H * H)), 1e-8));
    }

    #[test]
    fn force_blocks_are_multiples_of_identity(
        raw in prop::collection::vec(-1.5f64..1.5, 30),
        th in prop::collection::vec(-0.5f64..0.5, 6),
        n in 2usize..=3,
    ) {
        for physics in [true, false] {
            for mode in modes() {
                let p = Setup::new(physics, mode, n, &th).prior();
                let tj = triplet(&raw, n, 3);
                let query: Vec<f64> = (0..3 * n).map(|i| raw[(i * 2) % raw.len()]).collect();
                let c = p.cross_cov_force(&query, &tj, H).unwrap();
                for r in 0..n {
                    for k in 0..n {
                        if r == k {
                            prop_assert_eq!(c[(r, k)], c[(0, 0)]);
                        } else {
                            prop_assert_eq!(c[(r, k)], 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn discrete_prior_refuses_other_steps() {
    let s = Setup::new(false, OperatorMode::Discrete, 1, &[0.0]);
    let t = triplet(&[0.1, 0.2, 0.3, 0.4, 0.5], 1, 0);
    assert!(s.prior().residual(&t, 2.0 * H).is_err());
    let c = Setup::new(false, OperatorMode::ContinuousMidpoint, 1, &[0.0]);
    assert!(c.prior().residual(&t, 2.0 * H).is_ok());
}
