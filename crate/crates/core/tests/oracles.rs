mod common;

use approx::assert_abs_diff_eq;
use common::*;
use lsgpr::baselines::{knn_predict, local_krr, nadaraya_watson};
use lsgpr::gp::{mll_gradient, GpModel};
use lsgpr::kernel::{Covariance, LocalKernelSpec, Profile};
use lsgpr::local::{hetero_predict, local_mll, local_predict, select_neighbors, BandwidthPolicy};
use lsgpr::random::SeededRng;
use nalgebra::DMatrix;
use ndarray::{array, Array2, Axis};

#[test]
fn local_posterior_matches_direct_inverse() {
    let mut rng = SeededRng::new(11);
    for profile in Profile::ALL {
        for _ in 0..25 {
            let inst = random_instance(&mut rng, 25, 4, profile);
            let spec = LocalKernelSpec::new(profile, inst.x.ncols()).unwrap();
            let got = local_predict(
                inst.x.view(),
                &inst.y,
                &inst.params,
                inst.noise,
                &spec,
                BandwidthPolicy::FixedH(inst.h),
                &inst.x0,
            )
            .unwrap();
            let (m, v, s) = local_direct(&inst.x, &inst.y, &inst.params, inst.noise, profile, inst.h, &inst.x0);
            assert_eq!(got.neighbor_count, s);
            assert_eq!(got.empty_neighborhood, s == 0);
            assert_abs_diff_eq!(got.mean, m, epsilon = 1e-8);
            assert_abs_diff_eq!(got.variance, v.max(0.0), epsilon = 1e-8);
        }
    }
}

#[test]
fn global_gp_matches_direct_inverse() {
    let mut rng = SeededRng::new(5);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 30, 3, Profile::Rectangular);
        let model = GpModel::fit(inst.x.view(), &inst.y, inst.params, inst.noise).unwrap();
        let got = model.predict(&inst.x0).unwrap();
        let (m, v) = global_direct(&inst.x, &inst.y, &inst.params, inst.noise, &inst.x0);
        assert_abs_diff_eq!(got.mean, m, epsilon = 1e-9);
        assert_abs_diff_eq!(got.variance, v, epsilon = 1e-9);
    }
}

#[test]
fn global_mll_matches_density() {
    let mut rng = SeededRng::new(8);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 20, 3, Profile::Rectangular);
        let xs = rows(&inst.x);
        let n = xs.len();
        let a = DMatrix::from_fn(n, n, |i, j| cov(&inst.params, &xs[i], &xs[j]) + if i == j { inst.noise } else { 0.0 });
        let model = GpModel::fit(inst.x.view(), &inst.y, inst.params, inst.noise).unwrap();
        assert_abs_diff_eq!(model.log_marginal_likelihood(), mvn_log_density(&a, &inst.y), epsilon = 1e-8);
        let g = mll_gradient(inst.x.view(), &inst.y, &inst.params, inst.noise).unwrap();
        assert_abs_diff_eq!(g.value, model.log_marginal_likelihood(), epsilon = 1e-9);
    }
}

#[test]
fn local_mll_matches_weighted_density() {
    let mut rng = SeededRng::new(21);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 12, 3, Profile::Epanechnikov);
        let n = inst.y.len();
        let w: Vec<f64> = (0..n).map(|_| 0.2 + 3.0 * rng.uniform()).collect();
        let xs = rows(&inst.x);
        let a = DMatrix::from_fn(n, n, |i, j| {
            cov(&inst.params, &xs[i], &xs[j]) + if i == j { inst.noise / w[i] } else { 0.0 }
        });
        let got = local_mll(inst.x.view(), &inst.y, &w, &inst.params, inst.noise).unwrap();
        assert_abs_diff_eq!(got, mvn_log_density(&a, &inst.y), epsilon = 1e-8);
    }
}

#[test]
fn local_mll_with_unit_weights_is_global_mll() {
    let mut rng = SeededRng::new(2);
    let inst = random_instance(&mut rng, 15, 2, Profile::Rectangular);
    let ones = vec![1.0; inst.y.len()];
    let local = local_mll(inst.x.view(), &inst.y, &ones, &inst.params, inst.noise).unwrap();
    let global = GpModel::fit(inst.x.view(), &inst.y, inst.params, inst.noise).unwrap();
    assert_abs_diff_eq!(local, global.log_marginal_likelihood(), epsilon = 1e-10);
}

#[test]
fn hetero_route_agrees_with_direct_inverse() {
    let mut rng = SeededRng::new(3);
    for profile in [Profile::Rectangular, Profile::Epanechnikov, Profile::Gaussian] {
        for _ in 0..10 {
            let inst = random_instance(&mut rng, 20, 3, profile);
            let spec = LocalKernelSpec::new(profile, inst.x.ncols()).unwrap();
            let got = hetero_predict(inst.x.view(), &inst.y, &inst.params, inst.noise, &spec, inst.h, &inst.x0).unwrap();
            let (m, v, _) = local_direct(&inst.x, &inst.y, &inst.params, inst.noise, profile, inst.h, &inst.x0);
            assert_abs_diff_eq!(got.mean, m, epsilon = 1e-8);
            assert_abs_diff_eq!(got.variance, v.max(0.0), epsilon = 1e-8);
        }
    }
}

#[test]
fn nadaraya_watson_is_weighted_average() {
    let mut rng = SeededRng::new(4);
    for profile in [Profile::Rectangular, Profile::Epanechnikov, Profile::Gaussian, Profile::Hilbert] {
        let inst = random_instance(&mut rng, 40, 2, profile);
        let spec = LocalKernelSpec::new(profile, inst.x.ncols()).unwrap();
        let xs = rows(&inst.x);
        let (mut num, mut den) = (0.0, 0.0);
        for (xi, yi) in xs.iter().zip(&inst.y) {
            let r = euclid(xi, &inst.x0);
            if r <= inst.h || profile == Profile::Gaussian {
                let w = weight(profile, inst.x.ncols(), r, inst.h);
                num += w * yi;
                den += w;
            }
        }
        let got = nadaraya_watson(inst.x.view(), &inst.y, &spec, inst.h, &inst.x0).unwrap();
        if den > 0.0 {
            assert!(!got.no_support);
            assert_abs_diff_eq!(got.value, num / den, epsilon = 1e-12);
        } else {
            assert!(got.no_support);
        }
    }
}

#[test]
fn nadaraya_watson_hilbert_at_training_point() {
    let x = array![[0.0], [0.5], [0.5], [0.9]];
    let y = [1.0, 2.0, 4.0, 8.0];
    let spec = LocalKernelSpec::new(Profile::Hilbert, 1).unwrap();
    let got = nadaraya_watson(x.view(), &y, &spec, 0.6, &[0.5]).unwrap();
    assert_eq!(got.value, 3.0);
}

#[test]
fn local_krr_with_wide_rectangle_is_global_krr() {
    let mut rng = SeededRng::new(9);
    let inst = random_instance(&mut rng, 20, 2, Profile::Rectangular);
    let spec = LocalKernelSpec::new(Profile::Rectangular, inst.x.ncols()).unwrap();
    // every pair of points in the unit cube is within distance √d ≤ √2
    let h = 1.0;
    let x0 = vec![0.5; inst.x.ncols()];
    let got = local_krr(inst.x.view(), &inst.y, &inst.params, inst.noise, &spec, h, &x0).unwrap();
    let nb = select_neighbors(inst.x.view(), &x0, h, &spec).unwrap();
    let sub = inst.x.select(Axis(0), &nb.indices);
    let ysub: Vec<f64> = nb.indices.iter().map(|&i| inst.y[i]).collect();
    let (m, _) = global_direct(&sub, &ysub, &inst.params, inst.noise * h, &x0);
    assert_abs_diff_eq!(got, m, epsilon = 1e-9);
}

/// A covariance that is the same constant everywhere.
#[derive(Clone)]
struct Constant(f64);

impl Covariance for Constant {
    fn cov(&self, _: &[f64], _: &[f64]) -> f64 {
        self.0
    }
}

#[test]
fn knn_is_constant_kernel_limit_of_local_krr() {
    let mut rng = SeededRng::new(13);
    for k in [1usize, 3, 7] {
        let n = 30;
        let x = Array2::from_shape_fn((n, 2), |_| rng.uniform());
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let x0 = [0.4, 0.6];
        let mut d: Vec<f64> = rows(&x).iter().map(|r| euclid(r, &x0)).collect();
        d.sort_by(f64::total_cmp);
        // a rectangle that admits exactly the k nearest points
        let h = 0.5 * (d[k - 1] + d[k]);
        let spec = LocalKernelSpec::new(Profile::Rectangular, 2).unwrap();
        let krr = local_krr(x.view(), &y, &Constant(1.0), 1e-9, &spec, h, &x0).unwrap();
        let knn = knn_predict(x.view(), &y, k, &x0).unwrap();
        assert_abs_diff_eq!(krr, knn, epsilon = 1e-6);
    }
}
