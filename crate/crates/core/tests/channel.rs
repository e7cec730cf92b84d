mod common;

use std::f64::consts::PI;

use mmwave_gamp::channel::{
    dft_matrix, from_angular, generate_pilots, lift, noise_var_from_snr_db,
    sample_cluster_geometry, steering_vector, synthesize_channel, synthesize_problem, to_angular,
    unlift, ChannelRealization, Path, SpreadModel,
};
use mmwave_gamp::eval::{nmse, sorted_svd};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

fn single_path(m: usize, omega_t: f64, omega_r: f64) -> DMatrix<Complex64> {
    let path = Path {
        gain: Complex64::new(1.0, 0.0),
        omega_t,
        omega_r,
    };
    ChannelRealization::from_paths(m, m, vec![path]).unwrap().h
}

/// Index of the DFT bin closest to `omega` on the circle of period 2.
fn nearest_bin(omega: f64, m: usize) -> usize {
    ((omega.rem_euclid(2.0) * m as f64 / 2.0).round() as usize) % m
}

fn argmax(h: &DMatrix<Complex64>) -> (usize, usize) {
    let mut best = (0, 0);
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            if h[(i, j)].norm() > h[best].norm() {
                best = (i, j);
            }
        }
    }
    best
}

#[test]
fn steering_vector_matches_elementwise_phases() {
    let a = steering_vector(8, 0.3).unwrap();
    for (m, z) in a.iter().enumerate() {
        let want = Complex64::from_polar(1.0, -PI * m as f64 * 0.3);
        assert!((z - want).norm() <= 1e-15);
    }
}

#[test]
fn broadside_path_is_all_ones() {
    let h = single_path(5, 0.0, 0.0);
    assert!(h
        .iter()
        .all(|z| (z - Complex64::new(1.0, 0.0)).norm() <= 1e-15));
}

#[test]
fn on_grid_path_occupies_one_angular_bin() {
    let m = 16;
    let (m0, n0) = (3, 5);
    let ht = to_angular(&single_path(
        m,
        2.0 * n0 as f64 / m as f64,
        2.0 * m0 as f64 / m as f64,
    ));
    let total = ht.norm_squared();
    assert!((ht[(m0, n0)].norm_sqr() / total - 1.0).abs() <= 1e-10);
    let leak: f64 = ht.iter().map(|z| z.norm_sqr()).sum::<f64>() - ht[(m0, n0)].norm_sqr();
    assert!(leak <= 1e-10 * total);
}

#[test]
fn off_grid_path_peaks_at_nearest_bin() {
    let m = 16;
    let mut rng = common::rng(1);
    for _ in 0..200 {
        let (wt, wr) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let ht = to_angular(&single_path(m, wt, wr));
        let (i, j) = argmax(&ht);
        // the peak lies within half a bin of the path, i.e. at one of the two neighbours
        let near = |got: usize, omega: f64| {
            let d = (got as f64 * 2.0 / m as f64 - omega.rem_euclid(2.0)).rem_euclid(2.0);
            d.min(2.0 - d) <= 2.0 / m as f64
        };
        assert!(
            near(i, wr) && near(j, wt),
            "path ({wt}, {wr}) peak ({i}, {j})"
        );
        if (wr * m as f64 / 2.0).fract().abs() < 0.3 && (wt * m as f64 / 2.0).fract().abs() < 0.3 {
            assert_eq!((i, j), (nearest_bin(wr, m), nearest_bin(wt, m)));
        }
    }
}

#[test]
fn zero_spread_cluster_concentrates_on_grid() {
    let m = 16;
    let path = |g: f64| Path {
        gain: Complex64::new(g, 0.0),
        omega_t: 0.25,
        omega_r: -0.5,
    };
    let h = ChannelRealization::from_paths(m, m, vec![path(0.6), path(0.3), path(-0.2)])
        .unwrap()
        .h;
    let ht = to_angular(&h);
    let peak = ht.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    assert!(peak / ht.norm_squared() > 0.999);
}

#[test]
fn angular_transform_is_unitary() {
    let mut rng = common::rng(2);
    let h = common::complex_matrix(&mut rng, 6, 9);
    let ht = to_angular(&h);
    assert!((ht.norm() - h.norm()).abs() <= 1e-12 * h.norm());
    assert!((from_angular(&ht) - &h).norm() <= 1e-12 * h.norm());
    assert!((to_angular(&from_angular(&h)) - &h).norm() <= 1e-12 * h.norm());
    assert_eq!(
        from_angular(&DMatrix::zeros(3, 4)),
        DMatrix::<Complex64>::zeros(3, 4)
    );

    let (mr, mt) = (5, 7);
    let mut e11 = DMatrix::<Complex64>::zeros(mr, mt);
    e11[(0, 0)] = Complex64::new(1.0, 0.0);
    let h = dft_matrix(mr) * &e11 * dft_matrix(mt).adjoint();
    assert!((to_angular(&h) - e11).norm() <= 1e-14);
}

#[test]
fn lift_round_trip() {
    let mut rng = common::rng(3);
    let h = common::complex_matrix(&mut rng, 4, 3);
    let v = lift(&h);
    assert_eq!(v.len(), 24);
    assert_eq!(v[1], h[(1, 0)].re);
    assert_eq!(v[12 + 4], h[(0, 1)].im);
    assert_eq!(unlift(&v, 4, 3).unwrap(), h);
    assert!(unlift(&v, 4, 4).is_err());
}

#[test]
fn geometry_counts_and_power() {
    let mut rng = common::rng(4);
    let g = sample_cluster_geometry(&mut rng, 4, 10, 3.5, SpreadModel::Uniform, None).unwrap();
    assert_eq!(g.subpath_count(), 40);
    assert!((g.total_power() - 1.0).abs() <= 1e-15);
    let g = sample_cluster_geometry(
        &mut rng,
        3,
        2,
        3.5,
        SpreadModel::Gaussian,
        Some(&[1.0, 2.0, 5.0]),
    )
    .unwrap();
    assert!((g.total_power() - 1.0).abs() <= 1e-15);
    assert!((g.clusters[2].power - 0.625).abs() <= 1e-15);
    assert!(sample_cluster_geometry(&mut rng, 0, 2, 3.5, SpreadModel::Uniform, None).is_err());
    assert!(
        sample_cluster_geometry(&mut rng, 2, 2, 3.5, SpreadModel::Uniform, Some(&[1.0])).is_err()
    );
}

#[test]
fn zero_spread_single_path_sits_at_cluster_mean() {
    let mut rng = common::rng(5);
    let g = sample_cluster_geometry(&mut rng, 1, 1, 0.0, SpreadModel::Uniform, None).unwrap();
    let c = &g.clusters[0];
    assert_eq!(
        (c.subpath_aod[0], c.subpath_aoa[0]),
        (c.mean_aod, c.mean_aoa)
    );
}

#[test]
fn uniform_spread_stays_within_bounds() {
    let mut rng = common::rng(6);
    let spread = 3.5f64.to_radians();
    for _ in 0..200 {
        let g = sample_cluster_geometry(&mut rng, 2, 10, 3.5, SpreadModel::Uniform, None).unwrap();
        for c in &g.clusters {
            assert!(c
                .subpath_aod
                .iter()
                .all(|a| (a - c.mean_aod).abs() <= spread));
            assert!(c
                .subpath_aoa
                .iter()
                .all(|a| (a - c.mean_aoa).abs() <= spread));
        }
    }
}

#[test]
fn mean_angles_are_uniform_on_zero_pi() {
    // Kolmogorov-Smirnov at the 1% level
    let mut rng = common::rng(7);
    let n = 10_000;
    let mut aod: Vec<f64> = (0..n)
        .map(|_| {
            sample_cluster_geometry(&mut rng, 1, 1, 0.0, SpreadModel::Uniform, None)
                .unwrap()
                .clusters[0]
                .mean_aod
        })
        .collect();
    aod.sort_by(f64::total_cmp);
    let d = aod
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let f = a / PI;
            (f - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d <= 1.628 / (n as f64).sqrt(), "KS statistic {d}");
}

#[test]
fn channel_power_is_normalized() {
    let (mr, mt) = (16, 16);
    let mut rng = common::rng(8);
    let draws = 2000;
    let mut total = 0.0;
    for _ in 0..draws {
        let g = sample_cluster_geometry(&mut rng, 4, 10, 3.5, SpreadModel::Uniform, None).unwrap();
        total += synthesize_channel(&g, mr, mt, &mut rng)
            .unwrap()
            .h
            .norm_squared();
    }
    let mean = total / draws as f64 / (mr * mt) as f64;
    assert!((mean - 1.0).abs() <= 0.03, "E|H|^2/(MrMt) = {mean}");
}

#[test]
fn channel_rank_is_bounded_by_path_count() {
    let mut rng = common::rng(9);
    let g = sample_cluster_geometry(&mut rng, 1, 3, 3.5, SpreadModel::Uniform, None).unwrap();
    let ch = synthesize_channel(&g, 12, 12, &mut rng).unwrap();
    let (_, s, _) = sorted_svd(&ch.h).unwrap();
    assert!(s.iter().filter(|&&v| v > 1e-10 * s[0]).count() <= 3);
    let rebuilt = ChannelRealization::from_paths(12, 12, ch.paths.clone()).unwrap();
    assert!((rebuilt.h - &ch.h).norm() <= 1e-14 * ch.h.norm());
}

#[test]
fn pilot_columns_have_unit_energy() {
    let mut rng = common::rng(10);
    let mt = 8;
    let b = generate_pilots(&mut rng, mt, 10_000).unwrap().0;
    let mean: f64 = b.column_iter().map(|c| c.norm_squared()).sum::<f64>() / 10_000.0;
    assert!((mean - 1.0).abs() <= 0.02, "{mean}");
    let cov = (&b * b.adjoint()).unscale(10_000.0);
    for i in 0..mt {
        for j in 0..mt {
            let want = if i == j { 1.0 / mt as f64 } else { 0.0 };
            assert!(
                (cov[(i, j)] - Complex64::new(want, 0.0)).norm() <= 0.01,
                "cov[{i},{j}] = {}",
                cov[(i, j)]
            );
        }
    }
    let scalar = generate_pilots(&mut rng, 1, 20_000).unwrap().0;
    assert!((scalar.norm_squared() / 20_000.0 - 1.0).abs() <= 0.03);
    assert!(generate_pilots(&mut rng, 4, 0).is_err());
}

#[test]
fn noiseless_problem_is_exactly_linear() {
    let mut rng = common::rng(11);
    let g = sample_cluster_geometry(&mut rng, 2, 3, 3.5, SpreadModel::Uniform, None).unwrap();
    let ch = synthesize_channel(&g, 4, 6, &mut rng).unwrap();
    let pilots = generate_pilots(&mut rng, 6, 5).unwrap();
    let p = synthesize_problem(&ch, &pilots, 0.0, &mut rng).unwrap();
    assert_eq!((p.y.len(), p.x_true.len()), (2 * 4 * 5, 2 * 4 * 6));
    assert_eq!(p.y, p.op.apply(&p.x_true).unwrap());
    assert!((p.channel_from_estimate(&p.x_true).unwrap() - &ch.h).norm() <= 1e-12 * ch.h.norm());
}

#[test]
fn empirical_snr_and_noise_whiteness() {
    let (mr, mt, k) = (8, 8, 4);
    let noise_var = noise_var_from_snr_db(6.0);
    let mut rng = common::rng(12);
    let (mut signal, mut noise, mut lag_corr) = (0.0, 0.0, 0.0);
    let draws = 2000;
    for _ in 0..draws {
        let g = sample_cluster_geometry(&mut rng, 2, 5, 3.5, SpreadModel::Uniform, None).unwrap();
        let ch = synthesize_channel(&g, mr, mt, &mut rng).unwrap();
        let pilots = generate_pilots(&mut rng, mt, k).unwrap();
        let p = synthesize_problem(&ch, &pilots, noise_var, &mut rng).unwrap();
        let clean = p.op.apply(&p.x_true).unwrap();
        let w: Vec<f64> = p.y.iter().zip(&clean).map(|(a, b)| a - b).collect();
        signal += common::dot(&clean, &clean);
        noise += common::dot(&w, &w);
        lag_corr += w.windows(2).map(|p| p[0] * p[1]).sum::<f64>();
    }
    let snr = signal / noise;
    assert!(
        (snr * 2.0 * noise_var - 1.0).abs() <= 0.05,
        "SNR {snr} vs {}",
        1.0 / (2.0 * noise_var)
    );
    let per_component = noise / (draws * 2 * mr * k) as f64;
    assert!((per_component / noise_var - 1.0).abs() <= 0.02);
    assert!(lag_corr.abs() / noise <= 0.02);
}

#[test]
fn nmse_is_domain_invariant() {
    let mut rng = common::rng(13);
    let (mr, mt) = (6, 5);
    let ht = common::complex_matrix(&mut rng, mr, mt);
    let est = &ht + common::complex_matrix(&mut rng, mr, mt).scale(0.3);
    let angular = nmse(&lift(&est), &lift(&ht)).unwrap();
    let physical = nmse(&lift(&from_angular(&est)), &lift(&from_angular(&ht))).unwrap();
    assert!((angular - physical).abs() <= 1e-10 * angular);
}
