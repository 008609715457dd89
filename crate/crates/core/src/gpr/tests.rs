use super::*;
use crate::kernels::{KernelBounds, KernelFamily};
use crate::pilot_probing::{extract_training_set, make_scheme, observe, Case};
use crate::rng::rng_from_seed;
use rand_distr::{Distribution, StandardNormal};

fn pts(coords: &[(usize, usize)]) -> Vec<GridPoint> {
    coords.iter().map(|&(r, c)| GridPoint::new(r, c)).collect()
}

fn spec(family: KernelFamily, gamma: f64, l: f64, alpha: f64) -> KernelSpec {
    KernelSpec::new(family, gamma, l, alpha, KernelBounds::table(family)).unwrap()
}

fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Dense-inverse evaluation of the log marginal likelihood.
fn naive_lml(kernel: &KernelSpec, noise: f64, z: &[GridPoint], h: &DVector<f64>) -> f64 {
    let n = z.len();
    let ky = kernel.gram(z, z) + DMatrix::identity(n, n) * (noise + JITTER * kernel.gamma());
    let inv = ky.clone().try_inverse().unwrap();
    -0.5 * (h.transpose() * inv * h)[(0, 0)] - 0.5 * ky.determinant().ln() - 0.5 * n as f64 * (2.0 * PI).ln()
}

/// Draws real GP targets at `z` via a Cholesky factor of `K + σ² I`.
fn sample_targets(kernel: &KernelSpec, noise: f64, z: &[GridPoint], seed: u64) -> DVector<f64> {
    let n = z.len();
    let k = kernel.gram(z, z) + DMatrix::identity(n, n) * (noise + 1e-9);
    let l = k.cholesky().unwrap().l();
    let mut rng = rng_from_seed(seed);
    let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    l * e
}

#[test]
fn lml_scalar_cases() {
    let k = spec(KernelFamily::Rbf, 1.0, 0.5, 0.5);
    let z = pts(&[(0, 0)]);
    let v = log_marginal_likelihood(&k, 0.0, &z, &dvec(&[0.0])).unwrap();
    assert!((v + 0.5 * (2.0 * PI).ln()).abs() < 1e-9);
    assert!((v + 0.918939).abs() < 1e-6);
    let v = log_marginal_likelihood(&k, 1.0, &z, &dvec(&[2.0])).unwrap();
    let expected = -1.0 - 0.5 * 2f64.ln() - 0.5 * (2.0 * PI).ln();
    assert!((v - expected).abs() < 1e-9);
    assert!((v + 2.265512).abs() < 1e-6);
}

#[test]
fn lml_matches_dense_inverse() {
    let z = pts(&[(0, 0), (1, 2), (3, 1)]);
    let h = dvec(&[0.3, -1.2, 0.8]);
    for f in KernelFamily::ALL {
        let k = spec(f, 1.7, 1.4, 0.9);
        let v = log_marginal_likelihood(&k, 0.2, &z, &h).unwrap();
        assert!((v - naive_lml(&k, 0.2, &z, &h)).abs() < 1e-9);
    }
}

#[test]
fn lml_rejects_bad_inputs() {
    let k = KernelSpec::with_defaults(KernelFamily::Rbf);
    assert!(log_marginal_likelihood(&k, -1.0, &pts(&[(0, 0)]), &dvec(&[1.0])).is_err());
    assert!(log_marginal_likelihood(&k, 1.0, &pts(&[(0, 0)]), &dvec(&[1.0, 2.0])).is_err());
    assert!(log_marginal_likelihood(&k, 1.0, &[], &dvec(&[])).is_err());
}

#[test]
fn duplicate_points_trigger_jitter_escalation_not_failure() {
    // Identical inputs with zero noise make K singular; jitter rescues it.
    let k = spec(KernelFamily::Rbf, 1.0, 2.0, 0.5);
    let z = pts(&[(1, 1), (1, 1), (1, 1)]);
    assert!(log_marginal_likelihood(&k, 0.0, &z, &dvec(&[0.1, 0.1, 0.1])).is_ok());
}

#[test]
fn gradient_stationary_for_unit_target() {
    let k = spec(KernelFamily::Rbf, 1.0, 0.5, 0.5);
    let g = lml_gradient(&k, 0.0, &pts(&[(0, 0)]), &dvec(&[1.0])).unwrap();
    let (h, v) = g[0];
    assert_eq!(h, Hyper::Gamma);
    assert!(v.abs() < 1e-9, "{v}");
}

#[test]
fn gradient_for_zero_targets_is_negative_trace() {
    let z = pts(&[(0, 0), (0, 1), (2, 3), (4, 1)]);
    let noise = 0.3;
    for f in KernelFamily::ALL {
        let k = spec(f, 1.3, 1.2, 2.0);
        let g = lml_gradient(&k, noise, &z, &DVector::zeros(4)).unwrap();
        let kk = k.gram(&z, &z);
        let ky = &kk + DMatrix::identity(4, 4) * (noise + JITTER * k.gamma());
        let expected = -0.5 * (ky.try_inverse().unwrap() * kk).trace();
        assert!(expected < 0.0);
        assert!((g[0].1 - expected).abs() < 1e-10);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let z = pts(&[(0, 0), (1, 0), (2, 1), (0, 3), (4, 4), (3, 2)]);
    let h = dvec(&[0.5, 0.3, -0.2, 1.1, -0.7, 0.4]);
    for f in KernelFamily::ALL {
        let k = spec(f, 0.8, 1.6, 1.2);
        for (hyper, analytic) in lml_gradient(&k, 0.05, &z, &h).unwrap() {
            let step: f64 = 1e-6;
            let v = k.get(hyper);
            let up = log_marginal_likelihood(&k.with(hyper, v * step.exp()), 0.05, &z, &h).unwrap();
            let down = log_marginal_likelihood(&k.with(hyper, v * (-step).exp()), 0.05, &z, &h).unwrap();
            let fd = (up - down) / (2.0 * step);
            assert!((analytic - fd).abs() <= 1e-5 * analytic.abs().max(1e-2), "{f} {hyper:?}: {analytic} vs {fd}");
        }
    }
}

#[test]
fn fit_recovers_generating_lengthscale() {
    let truth = spec(KernelFamily::Rbf, 1.0, 2.0, 0.5);
    let noise = 0.01;
    let mut rng = rng_from_seed(19);
    let mut all: Vec<GridPoint> = crate::grid::full_grid(20, 20);
    // deterministic shuffle, keep 200 points
    for i in (1..all.len()).rev() {
        let j = rng.gen_range(0..=i);
        all.swap(i, j);
    }
    let z: Vec<GridPoint> = all.into_iter().take(200).collect();
    let h_re = sample_targets(&truth, noise, &z, 1);
    let h_im = sample_targets(&truth, noise, &z, 2);
    let init = KernelSpec::with_defaults(KernelFamily::Rbf);
    let model = fit(&init, noise, &z, &h_re, &h_im, &FitOptions::default()).unwrap();
    let l = model.kernel().lengthscale();
    assert!((1.5..=2.7).contains(&l), "recovered lengthscale {l}");
}

#[test]
fn fit_improves_on_init_and_respects_bounds() {
    let z = pts(&[(0, 0), (1, 0), (2, 0), (0, 2), (1, 2), (2, 2), (3, 3)]);
    let h_re = dvec(&[0.9, 0.7, 0.2, -0.3, -0.1, 0.4, 1.0]);
    let h_im = dvec(&[-0.2, 0.1, 0.5, 0.3, 0.0, -0.6, 0.2]);
    for f in KernelFamily::ALL {
        let init = KernelSpec::with_defaults(f);
        let at_init = log_marginal_likelihood(&init, 0.1, &z, &h_re).unwrap()
            + log_marginal_likelihood(&init, 0.1, &z, &h_im).unwrap();
        let model = fit(&init, 0.1, &z, &h_re, &h_im, &FitOptions::default()).unwrap();
        assert!(model.log_marginal_likelihood() >= at_init - 1e-9);
        let k = model.kernel();
        for &h in k.free_params() {
            let (lo, hi) = k.bounds().get(h);
            assert!(k.get(h) >= lo && k.get(h) <= hi, "{f} {h:?} = {}", k.get(h));
        }
    }
}

#[test]
fn fit_is_deterministic_and_needs_a_restart() {
    let z = pts(&[(0, 0), (1, 1), (2, 0)]);
    let h = dvec(&[0.1, 0.2, 0.3]);
    let init = KernelSpec::with_defaults(KernelFamily::RationalQuadratic);
    let opts = FitOptions { seed: 5, ..FitOptions::default() };
    let a = fit(&init, 0.1, &z, &h, &h, &opts).unwrap();
    let b = fit(&init, 0.1, &z, &h, &h, &opts).unwrap();
    assert_eq!(a.kernel(), b.kernel());
    let none = FitOptions { restarts: 0, ..opts };
    assert!(fit(&init, 0.1, &z, &h, &h, &none).is_err());
}

#[test]
fn single_point_fit_keeps_lengthscale() {
    let init = KernelSpec::with_defaults(KernelFamily::Matern);
    let z = pts(&[(2, 3)]);
    let model = fit(&init, 0.1, &z, &dvec(&[1.5]), &dvec(&[-0.5]), &FitOptions::default()).unwrap();
    assert_eq!(model.kernel().lengthscale(), init.lengthscale());
    // optimum of γ for two N(0, γ + σ²) draws: γ + σ² = (1.5² + 0.5²) / 2
    assert!((model.kernel().gamma() - (1.25 - 0.1)).abs() < 1e-4, "{}", model.kernel().gamma());
}

#[test]
fn noiseless_prediction_interpolates() {
    let k = spec(KernelFamily::Matern, 1.2, 1.0, 0.5);
    let z = pts(&[(0, 0), (0, 3), (3, 0), (3, 3), (6, 6)]);
    let h_re = dvec(&[0.5, -0.4, 1.1, 0.2, -0.9]);
    let h_im = dvec(&[0.0, 0.3, -0.7, 0.6, 0.1]);
    let model = GprModel::condition(k, 0.0, &z, &h_re, &h_im).unwrap();
    let post = predict(&model, &z).unwrap();
    assert!((&post.mean_re - &h_re).amax() < 1e-8);
    assert!((&post.mean_im - &h_im).amax() < 1e-8);
    assert!(post.var_re.amax() <= 1e-8 * k.gamma());
}

#[test]
fn far_points_revert_to_prior() {
    for f in KernelFamily::ALL {
        let k = spec(f, 1.7, 0.5, 2.0);
        let z = pts(&[(0, 0), (1, 0), (0, 1)]);
        let model = GprModel::condition(k, 0.1, &z, &dvec(&[1.0, 2.0, 3.0]), &dvec(&[0.0, 1.0, 0.0])).unwrap();
        let far = pts(&[(30, 30)]); // distance > 40 ℓ
        let post = predict(&model, &far).unwrap();
        assert!((post.var_re[0] - k.gamma()).abs() < 1e-6, "{f}: {}", post.var_re[0]);
        let ky = k.gram(&z, &z) + DMatrix::identity(3, 3) * (0.1 + model.jitter());
        let alpha = ky.try_inverse().unwrap() * dvec(&[1.0, 2.0, 3.0]);
        let kmax = k.gram(&z, &far).amax();
        assert!(post.mean_re[0].abs() <= kmax * alpha.lp_norm(1) + 1e-15, "{f}");
        assert!(kmax < 1e-5);
    }
}

#[test]
fn prediction_matches_dense_equations() {
    let z = pts(&[(0, 0), (2, 1), (1, 3)]);
    let zs = pts(&[(1, 1), (3, 3)]);
    let h_re = dvec(&[0.4, -1.0, 0.7]);
    let h_im = dvec(&[1.2, 0.1, -0.3]);
    for f in KernelFamily::ALL {
        let k = spec(f, 1.1, 1.8, 0.7);
        let noise = 0.25;
        let model = GprModel::condition(k, noise, &z, &h_re, &h_im).unwrap();
        let post = predict(&model, &zs).unwrap();
        let ky = k.gram(&z, &z) + DMatrix::identity(3, 3) * (noise + model.jitter());
        let inv = ky.try_inverse().unwrap();
        let ks = k.gram(&z, &zs);
        let mu = ks.transpose() * &inv * &h_re;
        let cov = k.gram(&zs, &zs) - ks.transpose() * &inv * &ks;
        for j in 0..2 {
            assert!((post.mean_re[j] - mu[j]).abs() < 1e-9);
            assert!((post.var_re[j] - cov[(j, j)]).abs() < 1e-9);
        }
    }
}

#[test]
fn real_and_imaginary_share_one_factorization() {
    let k = spec(KernelFamily::Rbf, 1.0, 1.5, 0.5);
    let z = pts(&[(0, 0), (1, 1), (2, 2)]);
    let model = GprModel::condition(k, 0.1, &z, &dvec(&[1.0, 0.0, -1.0]), &dvec(&[3.0, 2.0, 1.0])).unwrap();
    let post = predict(&model, &pts(&[(0, 1), (2, 0)])).unwrap();
    assert_eq!(post.var_re, post.var_im);
    let l = model.chol_factor();
    let ky = k.gram(&z, &z) + DMatrix::identity(3, 3) * (0.1 + model.jitter());
    assert!((&l * l.transpose() - &ky).norm() / ky.norm() < 1e-8);
}

#[test]
fn empty_test_set_gives_empty_posterior() {
    let k = KernelSpec::with_defaults(KernelFamily::Rbf);
    let model = GprModel::condition(k, 0.1, &pts(&[(0, 0)]), &dvec(&[1.0]), &dvec(&[1.0])).unwrap();
    assert!(predict(&model, &[]).unwrap().is_empty());
}

#[test]
fn reconstruction_fills_grid_and_keeps_observations() {
    // Smooth channel drawn from a long-lengthscale GP prior.
    let (nr, nt) = (8, 8);
    let prior = spec(KernelFamily::Rbf, 1.0, 3.0, 0.5);
    let grid = crate::grid::full_grid(nr, nt);
    let re = sample_targets(&prior, 0.0, &grid, 7);
    let im = sample_targets(&prior, 0.0, &grid, 8);
    let h = CMatrix::from_fn(nr, nt, |r, c| C64::new(re[r + c * nr], im[r + c * nr]));
    let channel = ChannelMatrix::new(h.clone()).unwrap();
    let scheme = make_scheme(Case::CaseII, nr, nt).unwrap();
    let obs = observe(&channel, &scheme, 0.0, 0).unwrap();
    let train = extract_training_set(&obs);
    let model = fit(&prior, 0.0, &train.points, &train.real(), &train.imag(), &FitOptions::default()).unwrap();
    let test = scheme.test_indices();
    let post = predict(&model, &test).unwrap();
    let est = reconstruct(&model, &post, &scheme).unwrap();
    assert_eq!((est.n_rx(), est.n_tx()), (nr, nt));
    assert!(est.entries().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    for (p, v) in train.points.iter().zip(train.values.iter()) {
        assert_eq!(est.get(p.row, p.col), *v);
    }
    let err = (est.entries() - &h).norm() / h.norm();
    let mut zero_pred = h.clone();
    for p in &test {
        zero_pred[(p.row, p.col)] = C64::new(0.0, 0.0);
    }
    let baseline = (zero_pred - &h).norm() / h.norm();
    assert!(err < baseline, "{err} vs {baseline}");

    // Dropping one predicted entry leaves a hole.
    let mut partial = post.clone();
    partial.test_points.pop();
    assert!(matches!(reconstruct(&model, &partial, &scheme), Err(Error::CoverageGap { .. })));
}
