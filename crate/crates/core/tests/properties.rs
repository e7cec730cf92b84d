mod common;

use mmwave_gamp::em::update_scale;
use mmwave_gamp::eval::{nmse, waterfill, waterfill_kkt};
use mmwave_gamp::gamp::check_stop;
use mmwave_gamp::laplace::{posterior_stats, LaplacePrior};
use mmwave_gamp::operator::build_real_lifted_operator;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn pilots(mt: usize, k: usize, vals: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(mt, k, |i, j| {
        let t = 2 * (i * k + j);
        Complex64::new(vals[t % vals.len()], vals[(t + 1) % vals.len()])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn posterior_shrinks_and_bounds_variance(r in -50.0..50.0f64, mu in 1e-4..1e2f64, b in 1e-3..1e2f64) {
        let s = posterior_stats(r, mu, LaplacePrior::new(b).unwrap()).unwrap();
        prop_assert!(s.mean.abs() <= r.abs());
        prop_assert!(s.mean == 0.0 || s.mean.signum() == r.signum());
        prop_assert!(s.variance > 0.0 && s.variance <= mu);
        prop_assert!(s.abs_mean >= s.mean.abs() * (1.0 - 1e-12));
    }

    #[test]
    fn posterior_is_odd(r in -30.0..30.0f64, mu in 1e-3..10.0f64, b in 1e-2..10.0f64) {
        let p = LaplacePrior::new(b).unwrap();
        let a = posterior_stats(r, mu, p).unwrap();
        let m = posterior_stats(-r, mu, p).unwrap();
        prop_assert!((a.mean + m.mean).abs() <= 1e-13 * a.mean.abs().max(1e-300));
        prop_assert!((a.variance - m.variance).abs() <= 1e-13 * a.variance);
    }

    #[test]
    fn posterior_mean_is_monotone(r in -20.0..20.0f64, step in 1e-3..5.0f64, mu in 1e-3..10.0f64, b in 1e-2..10.0f64) {
        let p = LaplacePrior::new(b).unwrap();
        let lo = posterior_stats(r, mu, p).unwrap().mean;
        let hi = posterior_stats(r + step, mu, p).unwrap().mean;
        prop_assert!(hi >= lo - 1e-14 * lo.abs().max(hi.abs()));
    }

    #[test]
    fn lifted_operator_adjoint_and_abs2(
        mt in 1usize..5, k in 1usize..6, mr in 1usize..4,
        vals in prop::collection::vec(-2.0..2.0f64, 8..40), seed in any::<u64>(),
        alpha in -3.0..3.0f64,
    ) {
        let b = pilots(mt, k, &vals);
        let op = build_real_lifted_operator(&b, mr).unwrap();
        let mut rng = common::rng(seed);
        let v = common::gaussian_vec(&mut rng, op.cols(), 1.0);
        let w = common::gaussian_vec(&mut rng, op.cols(), 1.0);
        let u = common::gaussian_vec(&mut rng, op.rows(), 1.0);
        let av = op.apply(&v).unwrap();
        let atu = op.apply_adjoint(&u).unwrap();
        let (l, r) = (common::dot(&u, &av), common::dot(&atu, &v));
        let scale = common::dot(&u, &u).sqrt() * common::dot(&av, &av).sqrt() + 1e-300;
        prop_assert!((l - r).abs() <= 1e-12 * scale.max(common::dot(&atu, &atu).sqrt() * common::dot(&v, &v).sqrt()));

        // (A∘A) is linear on nonnegative inputs
        let pv: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let pw: Vec<f64> = w.iter().map(|x| x.abs()).collect();
        let beta = alpha.abs();
        let mix: Vec<f64> = pv.iter().zip(&pw).map(|(a, b)| beta * a + b).collect();
        let lhs = op.apply_abs2(&mix).unwrap();
        let (a1, a2) = (op.apply_abs2(&pv).unwrap(), op.apply_abs2(&pw).unwrap());
        for i in 0..lhs.len() {
            let rhs = beta * a1[i] + a2[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }
    }

    #[test]
    fn waterfill_satisfies_kkt(
        sigma in prop::collection::vec(1e-4..1e2f64, 1..12),
        noise in 1e-4..10.0f64, power in 1e-3..1e3f64,
    ) {
        let p = waterfill(&sigma, noise, power).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let kkt = waterfill_kkt(&sigma, noise, power, &p).unwrap();
        prop_assert!(kkt.max_residual() <= 1e-9, "{kkt:?}");
    }

    #[test]
    fn scale_update_is_equivariant(
        r in prop::collection::vec(-10.0..10.0f64, 1..40),
        mu in 1e-2..5.0f64, b in 1e-2..5.0f64, c in 0.1..10.0f64,
    ) {
        // b'(c·r, c²·μ, c·b) = c·b'(r, μ, b)
        let mus = vec![mu; r.len()];
        let base = update_scale(&r, &mus, b).unwrap();
        let rs: Vec<f64> = r.iter().map(|x| c * x).collect();
        let ms: Vec<f64> = mus.iter().map(|m| c * c * m).collect();
        let scaled = update_scale(&rs, &ms, c * b).unwrap();
        prop_assert!((scaled - c * base).abs() <= 1e-9 * c * base);
    }

    #[test]
    fn check_stop_matches_its_definition(
        old in prop::collection::vec(-1e3..1e3f64, 1..30),
        noise in prop::collection::vec(-1.0..1.0f64, 30), eps in 1e-12..1.0f64, amp in 0.0..2.0f64,
    ) {
        let new: Vec<f64> = old.iter().zip(&noise).map(|(o, n)| o + amp * n).collect();
        let diff: f64 = new.iter().zip(&old).map(|(n, o)| (n - o) * (n - o)).sum();
        let base: f64 = old.iter().map(|o| o * o).sum();
        let stop = check_stop(&new, &old, eps);
        // skip the rounding band around the boundary
        if (diff - eps * base).abs() > 1e-9 * eps * base {
            prop_assert_eq!(stop, diff <= eps * base);
        }
        prop_assert!(check_stop(&old, &old, eps));
    }

    #[test]
    fn nmse_is_scale_invariant(
        x in prop::collection::vec(-5.0..5.0f64, 1..30),
        e in prop::collection::vec(-1.0..1.0f64, 30), c in 1e-3..1e3f64,
    ) {
        prop_assume!(x.iter().any(|v| *v != 0.0));
        let xh: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + b).collect();
        let a = nmse(&xh, &x).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| c * v).collect();
        let xhs: Vec<f64> = xh.iter().map(|v| c * v).collect();
        let b = nmse(&xhs, &xs).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }
}
