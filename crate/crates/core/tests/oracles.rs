//! Independent oracles for the worked examples: every check recomputes the
//! quantity by a different route than the library.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcurv_core::config::{FitVariant, RunConfig, Scale};
use qcurv_core::diffusion::{self, GeodesicSource, Operator};
use qcurv_core::geometry::{self, Neighborhood};
use qcurv_core::linalg;
use qcurv_core::pointcloud::{self, GeneratorParams, ManifoldKind, PointCloud};
use qcurv_core::qsim::{self, chebyshev, PowerOptions};
use qcurv_core::stats;
use qcurv_core::Execution;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PointCloud {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    PointCloud::from_rows(&rows).unwrap()
}

#[test]
fn distances_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cloud = random_cloud(&mut rng, 10, 3);
    let d = pointcloud::pairwise_distances(&cloud);
    let p = cloud.points();
    for i in 0..10 {
        for j in 0..10 {
            let mut s = 0.0;
            for c in 0..3 {
                s += (p[(i, c)] - p[(j, c)]).powi(2);
            }
            assert!((d.get(i, j) - s.sqrt()).abs() <= 1e-12);
        }
    }
}

#[test]
fn sphere_meta_curvature_for_radius_two() {
    let params = GeneratorParams {
        radius: 2.0,
        ..GeneratorParams::default()
    };
    let cloud = pointcloud::generate_manifold(ManifoldKind::Sphere, 50, &params, 0.0, 3).unwrap();
    let meta = cloud.meta().unwrap();
    let s = meta.analytic_curvature.at(&[2.0, 0.0, 0.0]);
    assert!((s - 2.0 * 1.0 / 4.0).abs() < 1e-15);
}

#[test]
fn lower_median_matches_sort() {
    assert_eq!(stats::lower_median(&[1.0, 4.0, 9.0, 16.0]), Some(4.0));
    assert_eq!(stats::lower_median_usize(&[1, 2, 3, 4]), Some(2));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let n = rng.random_range(1..40);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(stats::lower_median(&v), Some(s[(n - 1) / 2]));
    }
}

#[test]
fn kernel_and_operator_elementwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cloud = random_cloud(&mut rng, 6, 3);
    let d = pointcloud::pairwise_distances(&cloud);
    let sigma2 = 0.7;
    let k = diffusion::build_kernel(&d, sigma2).unwrap();
    let p = diffusion::build_diffusion_operator(&k);
    let pts = cloud.points();
    for i in 0..6 {
        let mut row = [0.0; 6];
        for (j, r) in row.iter_mut().enumerate() {
            let sq: f64 = (0..3).map(|c| (pts[(i, c)] - pts[(j, c)]).powi(2)).sum();
            *r = (-sq / sigma2).exp();
            assert!((k.matrix()[(i, j)] - *r).abs() <= 1e-15);
        }
        let total: f64 = row.iter().sum();
        for j in 0..6 {
            assert!((p.matrix()[(i, j)] - row[j] / total).abs() <= 1e-15);
        }
    }
}

#[test]
fn two_point_operator_eigenvalues() {
    for a in [0.1, 0.5, 0.9] {
        let k = diffusion::KernelMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0]), 1.0).unwrap();
        let p = diffusion::build_diffusion_operator(&k);
        let spec = diffusion::spectral_decompose(Operator::Diffusion(&p)).unwrap();
        // P = [[1, a], [a, 1]] / (1 + a)
        assert!((spec.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((spec.eigenvalues[1] - (1.0 - a) / (1.0 + a)).abs() < 1e-14);
    }
}

#[test]
fn geodesics_equal_feature_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cloud = random_cloud(&mut rng, 8, 3);
    let d = pointcloud::pairwise_distances(&cloud);
    for source in [GeodesicSource::KSpectrum, GeodesicSource::PSpectrum] {
        let geo = diffusion::classical_geodesics(&d, 0.5, 1.0, source, Execution::Sequential).unwrap();
        let f = diffusion::diffusion_features(&geo.spectrum, 1.0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let direct = (f.row(i) - f.row(j)).norm();
                assert!((geo.field.get(i, j) - direct).abs() <= 1e-12 * direct.max(1.0));
            }
        }
    }
}

#[test]
fn neighborhood_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let n = rng.random_range(5..40);
        let center = rng.random_range(0..n);
        let nn = rng.random_range(2..n);
        // coarse values force ties
        let row: Vec<f64> = (0..n)
            .map(|j| if j == center { 0.0 } else { rng.random_range(1..8) as f64 })
            .collect();
        let nb = geometry::neighborhood_from_row(&row, center, nn).unwrap();
        let mut order: Vec<usize> = (0..n).filter(|&j| j != center).collect();
        order.sort_by(|a, b| row[*a].partial_cmp(&row[*b]).unwrap().then(a.cmp(b)));
        let mut expect = vec![center];
        expect.extend(order.into_iter().take(nn - 1));
        assert_eq!(nb.members, expect);
    }
}

#[test]
fn pca_variances_are_gram_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cloud = random_cloud(&mut rng, 10, 4);
    let nb = Neighborhood {
        center: 0,
        members: (0..10).collect(),
        radii: vec![0.0; 10],
    };
    let pca = geometry::local_pca(&cloud, &nb, 0.95).unwrap();
    let x = cloud.points();
    let mean = x.row_mean();
    let c = DMatrix::from_fn(10, 4, |r, k| x[(r, k)] - mean[k]);
    let eig = linalg::sym_eigen(&(c.transpose() * &c)).unwrap();
    for (s, l) in pca.singular_values.iter().zip(eig.values.iter()) {
        assert!((s * s - l).abs() <= 1e-10 * eig.values[0]);
    }
}

#[test]
fn density_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 12;
    let nbs: Vec<Neighborhood> = (0..n)
        .map(|i| {
            let mut radii = vec![0.0];
            radii.extend((0..4).map(|_| rng.random_range(0.1..2.0)));
            radii.sort_by(f64::total_cmp);
            Neighborhood {
                center: i,
                members: (0..5).map(|k| (i + k) % n).collect(),
                radii,
            }
        })
        .collect();
    let h = 0.8;
    let rho = geometry::density_field(&nbs, h).unwrap();
    for nb in &nbs {
        let mut s = 0.0;
        for r in &nb.radii {
            s += (-r * r / (h * h)).exp();
        }
        assert!((rho.rho[nb.center] - s).abs() <= 1e-14);
    }
}

/// Gamma(d/2 + 1) from factorials: k! for d = 2k, (2k+1)! sqrt(pi) / (4^k k!) / ... for odd d.
fn gamma_half_plus_one(d: usize) -> f64 {
    let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    if d % 2 == 0 {
        fact(d / 2)
    } else {
        // Gamma(k + 3/2) = (2k + 2)! sqrt(pi) / (4^(k+1) (k + 1)!)
        let k = (d - 1) / 2;
        fact(2 * k + 2) * PI.sqrt() / (4f64.powi(k as i32 + 1) * fact(k + 1))
    }
}

#[test]
fn unit_ball_volume_matches_gamma() {
    assert!((geometry::unit_ball_volume(2) - PI).abs() < 1e-15);
    for d in 1..=10 {
        let oracle = PI.powf(d as f64 / 2.0) / gamma_half_plus_one(d);
        let v = geometry::unit_ball_volume(d);
        assert!((v - oracle).abs() <= 1e-12 * oracle, "d = {d}: {v} vs {oracle}");
    }
}

#[test]
fn ball_volumes_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 15;
    let nbs: Vec<Neighborhood> = (0..n)
        .map(|i| {
            let mut radii = vec![0.0];
            radii.extend((0..6).map(|_| rng.random_range(0.1..1.0)));
            radii.sort_by(f64::total_cmp);
            Neighborhood {
                center: i,
                members: (0..7).map(|k| (i + 3 * k) % n).collect(),
                radii,
            }
        })
        .collect();
    let rho = geometry::density_field(&nbs, 0.5).unwrap();
    for d in 1..4 {
        for nb in &nbs {
            let v = geometry::ball_volumes(&rho, nb, d, Default::default()).unwrap();
            for (k, &r) in v.radii.iter().enumerate() {
                let mut vol = 0.0;
                for (m, &rm) in nb.members.iter().zip(&nb.radii) {
                    if rm <= r {
                        vol += 1.0 / rho.rho[*m];
                    }
                }
                assert!((v.raw[k] - vol).abs() <= 1e-12 * vol);
                let nor = vol / (geometry::unit_ball_volume(d) * r.powi(d as i32));
                assert!((v.normalized[k] - nor).abs() <= 1e-12 * nor);
            }
        }
    }
}

#[test]
fn ols_fit_matches_least_squares_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let m = rng.random_range(3..25);
        let r: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..2.0)).collect();
        let v: Vec<f64> = r
            .iter()
            .map(|x| 1.0 + 0.3 * x * x + rng.random_range(-0.2..0.2))
            .collect();
        let a = geometry::fit_quadratic(&r, &v, FitVariant::Ols).unwrap();
        // minimize ||X a - y|| with X = r^2, y = v - 1 by SVD
        let x = DMatrix::from_fn(m, 1, |i, _| r[i] * r[i]);
        let y = DVector::from_fn(m, |i, _| v[i] - 1.0);
        let sol = x.svd(true, true).solve(&y, 1e-15).unwrap();
        assert!((a - sol[0]).abs() <= 1e-10 * sol[0].abs().max(1.0));
    }
}

#[test]
fn chebyshev_degree_thirty_and_decay() {
    assert!(chebyshev::cheb_gaussian(30).sup_error() <= 1e-8);
    // least-squares slope of ln sup_error(p) against p
    let ps: Vec<f64> = (10..=40).step_by(2).map(|p| p as f64).collect();
    let ys: Vec<f64> = ps.iter().map(|&p| chebyshev::cheb_gaussian(p as usize).sup_error().ln()).collect();
    let (mp, my) = (ps.iter().sum::<f64>() / ps.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let slope = ps.iter().zip(&ys).map(|(p, y)| (p - mp) * (y - my)).sum::<f64>()
        / ps.iter().map(|p| (p - mp).powi(2)).sum::<f64>();
    assert!(slope <= -1.0, "decay rate {slope}");
    let c = ps
        .iter()
        .zip(&ys)
        .map(|(p, y)| (y + p).exp())
        .fold(0.0, f64::max);
    for (p, y) in ps.iter().zip(&ys) {
        assert!(y.exp() <= c * (-p).exp());
    }
}

#[test]
fn power_method_top_four_of_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let b = DMatrix::from_fn(16, 16, |_, _| rng.random_range(-1.0..1.0));
    let a = &b * b.transpose() + DMatrix::identity(16, 16) * 0.1;
    let res = qsim::power_method_matrix(&a, 4, &PowerOptions::default()).unwrap();
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..16).collect();
    order.sort_by(|i, j| eig.eigenvalues[*j].total_cmp(&eig.eigenvalues[*i]));
    for (r, pair) in res.pairs.iter().enumerate() {
        let k = order[r];
        assert!((pair.value - eig.eigenvalues[k]).abs() <= 1e-8 * eig.eigenvalues[order[0]]);
        let overlap = pair.vector.dot(&eig.eigenvectors.column(k)).abs();
        assert!(overlap >= 1.0 - 1e-8);
    }
}

#[test]
fn two_point_kernel_gram_is_proportional_to_k_squared() {
    let cloud = PointCloud::from_rows(&[vec![0.0, 0.0], vec![0.6, 0.8]]).unwrap();
    let d = pointcloud::pairwise_distances(&cloud);
    let sigma2 = 0.5;
    let gram = qsim::kernel::build_kernel_gram_encoding(&d, sigma2, &Default::default()).unwrap();
    let e = (-1.0f64 / sigma2).exp();
    let k = DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]);
    let kk = k.transpose() * &k;
    let enc = gram.encoding.encoded();
    let ratio = enc[(0, 0)] / kk[(0, 0)];
    for i in 0..2 {
        for j in 0..2 {
            assert!((enc[(i, j)] / kk[(i, j)] - ratio).abs() <= 1e-8 * ratio);
        }
    }
}

fn small_sphere(n: usize, seed: u64) -> PointCloud {
    pointcloud::generate_manifold(ManifoldKind::Sphere, n, &GeneratorParams::default(), 0.05, seed).unwrap()
}

#[test]
fn simulated_neighbors_and_dimensions_match_classical() {
    for seed in 0..4 {
        let cloud = small_sphere(12, seed);
        let d = pointcloud::pairwise_distances(&cloud);
        let sigma2 = diffusion::median_sigma2(&d).unwrap();
        let config = RunConfig {
            nn: 5,
            sigma2: Scale::Value(sigma2),
            geodesic_source: GeodesicSource::KSpectrum,
            seed,
            ..RunConfig::default()
        };
        let trace = qsim::run_pipeline(&cloud, &config, None, Execution::Sequential).unwrap();
        let est = geometry::estimate_all_with(&cloud, &config, Execution::Sequential).unwrap();
        for (p, r) in trace.points.iter().zip(&est.reports) {
            let mut a = p.neighbors.neighborhood.members.clone();
            let mut b = r.neighborhood.members.clone();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
        assert_eq!(trace.local_dims(), est.local_dims());
        for (s, o) in trace.curvatures().iter().zip(est.curvatures()) {
            assert!((s - o).abs() <= 1e-6 * o.abs(), "{s} vs {o}");
        }
    }
}

#[test]
fn geodesic_diagonal_proportional_to_fourth_powers() {
    let cloud = small_sphere(8, 11);
    let d = pointcloud::pairwise_distances(&cloud);
    let sigma2 = diffusion::median_sigma2(&d).unwrap();
    let config = RunConfig {
        nn: 3,
        sigma2: Scale::Value(sigma2),
        ..RunConfig::default()
    };
    let trace = qsim::run_pipeline(&cloud, &config, None, Execution::Sequential).unwrap();
    let m4 = qsim::pipeline::fourth_power_matrix(&trace).unwrap();
    let geo = diffusion::classical_geodesics(&d, sigma2, 1.0, GeodesicSource::KSpectrum, Execution::Sequential).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let o = geo.field.get(i, j).powi(4);
            assert!((m4[(i, j)] - o).abs() <= 1e-6 * geo.field.matrix().amax().powi(4));
        }
    }
}
