//! Prediction-error clouds, mutual information and credible-interval coverage.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};

use crate::channel_models::ChannelMatrix;
use crate::error::{invalid, Error, Result};
use crate::gpr::GprPosterior;
use crate::grid::GridPoint;
use crate::linalg::{check_finite, CMatrix, C64};

/// 0.95 quantile of the chi-square distribution with two degrees of freedom.
pub const CHI2_2DOF_95: f64 = 5.991464547107979;
/// Two-sided 95% standard-normal quantile.
pub const Z_95: f64 = 1.96;
pub const CONFIDENCE: f64 = 0.95;

/// Pooled complex errors `(Re ε, Im ε)` with a 95% confidence ellipse.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCloud {
    pub samples: Vec<(f64, f64)>,
    pub center: [f64; 2],
    /// Unbiased sample covariance `[[s_rr, s_ri], [s_ri, s_ii]]`.
    pub covariance: [[f64; 2]; 2],
    pub level: f64,
}

impl ErrorCloud {
    pub fn from_samples(samples: Vec<(f64, f64)>) -> Result<Self> {
        let n = samples.len();
        if n < 3 {
            return Err(Error::NotEnoughSamples { needed: 3, got: n });
        }
        if samples.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::NonFinite("error samples"));
        }
        let nf = n as f64;
        let mx = samples.iter().map(|s| s.0).sum::<f64>() / nf;
        let my = samples.iter().map(|s| s.1).sum::<f64>() / nf;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for &(x, y) in &samples {
            let (dx, dy) = (x - mx, y - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let d = nf - 1.0;
        Ok(Self {
            samples,
            center: [mx, my],
            covariance: [[sxx / d, sxy / d], [sxy / d, syy / d]],
            level: CONFIDENCE,
        })
    }

    /// Eigenvalues of the covariance, largest first, with the major-axis angle.
    pub fn principal_axes(&self) -> (f64, f64, f64) {
        let [[a, b], [_, c]] = self.covariance;
        let mid = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let angle = 0.5 * (2.0 * b).atan2(a - c);
        ((mid + rad).max(0.0), (mid - rad).max(0.0), angle)
    }

    /// Semi-axis lengths `√(χ²₀.₉₅ λᵢ)`, major first.
    pub fn semi_axes(&self) -> (f64, f64) {
        let (l1, l2, _) = self.principal_axes();
        ((CHI2_2DOF_95 * l1).sqrt(), (CHI2_2DOF_95 * l2).sqrt())
    }

    pub fn angle(&self) -> f64 {
        self.principal_axes().2
    }

    pub fn area(&self) -> f64 {
        let (a, b) = self.semi_axes();
        PI * a * b
    }

    /// Whether `p` lies inside the ellipse (Mahalanobis distance² ≤ χ²₀.₉₅).
    pub fn contains(&self, p: (f64, f64)) -> bool {
        let [[a, b], [_, c]] = self.covariance;
        let det = a * c - b * b;
        let (dx, dy) = (p.0 - self.center[0], p.1 - self.center[1]);
        if det <= 0.0 {
            return dx == 0.0 && dy == 0.0;
        }
        (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det <= CHI2_2DOF_95
    }

    /// Fraction of the cloud's own samples inside its ellipse.
    pub fn containment(&self) -> f64 {
        self.samples.iter().filter(|&&p| self.contains(p)).count() as f64 / self.samples.len() as f64
    }
}

fn check_shapes(truth: &ChannelMatrix, estimate: &ChannelMatrix) -> Result<()> {
    if truth.n_rx() != estimate.n_rx() || truth.n_tx() != estimate.n_tx() {
        return Err(Error::DimensionMismatch(format!(
            "truth is {}x{}, estimate is {}x{}",
            truth.n_rx(),
            truth.n_tx(),
            estimate.n_rx(),
            estimate.n_tx()
        )));
    }
    Ok(())
}

/// `(Re ε, Im ε)` with `ε = H − Ĥ` at each masked entry.
pub fn error_samples(truth: &ChannelMatrix, estimate: &ChannelMatrix, mask: &[GridPoint]) -> Result<Vec<(f64, f64)>> {
    check_shapes(truth, estimate)?;
    mask.iter()
        .map(|p| {
            if p.row >= truth.n_rx() || p.col >= truth.n_tx() {
                return Err(Error::DimensionMismatch(format!("mask entry {p} outside the grid")));
            }
            let e = truth.get(p.row, p.col) - estimate.get(p.row, p.col);
            Ok((e.re, e.im))
        })
        .collect()
}

pub fn error_cloud(truth: &ChannelMatrix, estimate: &ChannelMatrix, mask: &[GridPoint]) -> Result<ErrorCloud> {
    ErrorCloud::from_samples(error_samples(truth, estimate, mask)?)
}

fn check_snr(snr_linear: f64) -> Result<()> {
    if !(snr_linear > 0.0) || !snr_linear.is_finite() {
        return Err(invalid("snr_linear", format!("{snr_linear} must be positive and finite")));
    }
    Ok(())
}

/// `log₂ det(I + (ρ/N_t) H Hᴴ)` in bits.
pub fn mutual_information(channel: &ChannelMatrix, snr_linear: f64) -> Result<f64> {
    check_snr(snr_linear)?;
    let h = channel.entries();
    check_finite(h, "channel")?;
    let nr = h.nrows();
    let scale = C64::new(snr_linear / h.ncols() as f64, 0.0);
    let m = CMatrix::identity(nr, nr) + h * h.adjoint() * scale;
    let chol = m.cholesky().ok_or(Error::NonFinite("I + ρ/N_t H Hᴴ"))?;
    let l = chol.l_dirty();
    Ok((0..nr).map(|i| l[(i, i)].re.ln()).sum::<f64>() * 2.0 / LN_2)
}

/// First-order expansion `ρ tr(H Hᴴ) / (N_t ln 2)`.
pub fn low_snr_mi_approx(channel: &ChannelMatrix, snr_linear: f64) -> Result<f64> {
    check_snr(snr_linear)?;
    let h = channel.entries();
    let power: f64 = h.iter().map(|z| z.norm_sqr()).sum();
    Ok(snr_linear * power / (h.ncols() as f64 * LN_2))
}

fn check_truth_mi(truth_mi: f64) -> Result<()> {
    if !(truth_mi > 0.0) || !truth_mi.is_finite() {
        return Err(invalid("truth_mi", format!("{truth_mi} must be positive")));
    }
    Ok(())
}

/// `100 · estimate / truth`.
pub fn relative_mi(estimate_mi: f64, truth_mi: f64) -> Result<f64> {
    check_truth_mi(truth_mi)?;
    Ok(100.0 * estimate_mi / truth_mi)
}

/// `100 · (1 − |estimate − truth| / truth)`: 100 for a perfect match,
/// penalizing over- and under-estimation alike.
pub fn mi_fidelity(estimate_mi: f64, truth_mi: f64) -> Result<f64> {
    check_truth_mi(truth_mi)?;
    Ok(100.0 * (1.0 - (estimate_mi - truth_mi).abs() / truth_mi))
}

/// Counts of entries inside the 95% marginal intervals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoverageTally {
    pub joint: usize,
    pub re: usize,
    pub im: usize,
    /// `|H − Ĥ| ≤ 1.96 √(var_re + var_im)`.
    pub modulus: usize,
    pub count: usize,
}

impl CoverageTally {
    pub fn merge(&mut self, other: &CoverageTally) {
        self.joint += other.joint;
        self.re += other.re;
        self.im += other.im;
        self.modulus += other.modulus;
        self.count += other.count;
    }

    pub fn report(&self) -> CoverageReport {
        let frac = |k: usize| if self.count == 0 { 0.0 } else { k as f64 / self.count as f64 };
        CoverageReport {
            nominal: CONFIDENCE,
            empirical: frac(self.joint),
            empirical_re: frac(self.re),
            empirical_im: frac(self.im),
            empirical_modulus: frac(self.modulus),
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub nominal: f64,
    /// Both components inside their intervals.
    pub empirical: f64,
    pub empirical_re: f64,
    pub empirical_im: f64,
    pub empirical_modulus: f64,
    pub count: usize,
}

pub fn coverage_tally(truth: &ChannelMatrix, posterior: &GprPosterior, mask: &[GridPoint]) -> Result<CoverageTally> {
    let index: HashMap<GridPoint, usize> = posterior.test_points.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut tally = CoverageTally::default();
    for &p in mask {
        let &i = index.get(&p).ok_or(Error::CoverageGap { row: p.row, col: p.col })?;
        if p.row >= truth.n_rx() || p.col >= truth.n_tx() {
            return Err(Error::DimensionMismatch(format!("mask entry {p} outside the grid")));
        }
        let h = truth.get(p.row, p.col);
        let re = (h.re - posterior.mean_re[i]).abs() <= Z_95 * posterior.var_re[i].max(0.0).sqrt();
        let im = (h.im - posterior.mean_im[i]).abs() <= Z_95 * posterior.var_im[i].max(0.0).sqrt();
        let var = posterior.var_re[i].max(0.0) + posterior.var_im[i].max(0.0);
        let modulus = (h - posterior.mean(i)).norm() <= Z_95 * var.sqrt();
        tally.re += re as usize;
        tally.modulus += modulus as usize;
        tally.im += im as usize;
        tally.joint += (re && im) as usize;
        tally.count += 1;
    }
    Ok(tally)
}

pub fn coverage(truth: &ChannelMatrix, posterior: &GprPosterior, mask: &[GridPoint]) -> Result<CoverageReport> {
    Ok(coverage_tally(truth, posterior, mask)?.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::full_grid;
    use crate::rng::{complex_gaussian_matrix, rng_from_seed};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn cm(nr: usize, nt: usize, f: impl Fn(usize, usize) -> C64) -> ChannelMatrix {
        ChannelMatrix::new(CMatrix::from_fn(nr, nt, f)).unwrap()
    }

    fn eye(n: usize) -> ChannelMatrix {
        ChannelMatrix::new(CMatrix::identity(n, n)).unwrap()
    }

    fn gaussian_cloud(n: usize, sd_re: f64, sd_im: f64, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                (sd_re * a, sd_im * b)
            })
            .collect()
    }

    fn random_unitary(n: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from_seed(seed);
        complex_gaussian_matrix(&mut rng, n, n, 1.0).qr().q()
    }

    #[test]
    fn perfect_estimate_gives_degenerate_ellipse() {
        let h = cm(3, 3, |r, c| C64::new(r as f64, c as f64));
        let cloud = error_cloud(&h, &h, &full_grid(3, 3)).unwrap();
        assert!(cloud.samples.iter().all(|&s| s == (0.0, 0.0)));
        assert_eq!(cloud.area(), 0.0);
        assert_eq!(cloud.level, 0.95);
        assert!(cloud.contains((0.0, 0.0)));
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let h = eye(2);
        let mask = full_grid(2, 2)[..2].to_vec();
        assert!(matches!(error_cloud(&h, &h, &mask), Err(Error::NotEnoughSamples { .. })));
    }

    #[test]
    fn circular_gaussian_cloud_has_95_percent_containment() {
        let cloud = ErrorCloud::from_samples(gaussian_cloud(10_000, 1.0, 1.0, 3)).unwrap();
        let frac = cloud.containment();
        assert!((0.93..=0.97).contains(&frac), "{frac}");
        assert!((frac - 0.95).abs() <= 0.02);
    }

    #[test]
    fn anisotropic_cloud_axis_ratio() {
        let cloud = ErrorCloud::from_samples(gaussian_cloud(10_000, 2.0, 1.0, 4)).unwrap();
        let (a, b) = cloud.semi_axes();
        assert!((a / b - 2.0).abs() < 0.2, "{}", a / b);
        assert!(cloud.angle().abs() < 0.1 || (cloud.angle().abs() - PI).abs() < 0.1);
    }

    #[test]
    fn ellipse_area_matches_closed_form() {
        let cloud = ErrorCloud::from_samples(vec![(1.0, 0.0), (-1.0, 0.0), (0.0, 2.0), (0.0, -2.0)]).unwrap();
        // covariance diag(2/3, 8/3)
        let expected = PI * CHI2_2DOF_95 * ((2.0 / 3.0) * (8.0 / 3.0f64)).sqrt();
        assert!((cloud.area() - expected).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_examples() {
        let zero = ChannelMatrix::zeros(3, 2);
        assert_eq!(mutual_information(&zero, 5.0).unwrap(), 0.0);
        assert!((mutual_information(&eye(1), 1.0).unwrap() - 1.0).abs() < 1e-12);
        let v = mutual_information(&eye(2), 3.0).unwrap();
        assert!((v - 2.0 * 2.5f64.log2()).abs() < 1e-12);
        assert!((v - 2.643856).abs() < 1e-6);
        assert!(mutual_information(&eye(2), 0.0).is_err());
        assert!(mutual_information(&eye(2), -1.0).is_err());
    }

    #[test]
    fn low_snr_expansion_examples() {
        let approx = low_snr_mi_approx(&eye(2), 0.01).unwrap();
        assert!((approx - 0.01 / LN_2).abs() < 1e-15);
        assert!((approx - 0.014427).abs() < 1e-6);
        let exact = mutual_information(&eye(2), 0.01).unwrap();
        assert!((exact - approx).abs() / exact < 0.01);
        assert_eq!(low_snr_mi_approx(&ChannelMatrix::zeros(2, 2), 0.01).unwrap(), 0.0);
    }

    #[test]
    fn low_snr_ratio_approaches_one() {
        let mut rng = rng_from_seed(8);
        let h = ChannelMatrix::new(complex_gaussian_matrix(&mut rng, 4, 4, 1.0)).unwrap();
        let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&rho| (mutual_information(&h, rho).unwrap() / low_snr_mi_approx(&h, rho).unwrap() - 1.0).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-3);
    }

    #[test]
    fn mi_ratios() {
        assert_eq!(relative_mi(3.2, 3.2).unwrap(), 100.0);
        assert_eq!(relative_mi(0.0, 3.2).unwrap(), 0.0);
        assert!((relative_mi(1.5, 1.0).unwrap() - 150.0).abs() < 1e-12);
        assert!(relative_mi(1.0, 0.0).is_err());
        assert_eq!(mi_fidelity(3.2, 3.2).unwrap(), 100.0);
        assert_eq!(mi_fidelity(0.0, 3.2).unwrap(), 0.0);
        assert!((mi_fidelity(1.5, 1.0).unwrap() - 50.0).abs() < 1e-12);
        assert!((mi_fidelity(0.5, 1.0).unwrap() - 50.0).abs() < 1e-12);
        assert!(mi_fidelity(1.0, 0.0).is_err());
    }

    #[test]
    fn mi_is_unitarily_invariant() {
        let mut rng = rng_from_seed(9);
        for trial in 0..10 {
            let h = complex_gaussian_matrix(&mut rng, 5, 4, 1.0);
            let u = random_unitary(5, 100 + trial);
            let v = random_unitary(4, 200 + trial);
            let a = mutual_information(&ChannelMatrix::new(h.clone()).unwrap(), 2.0).unwrap();
            let b = mutual_information(&ChannelMatrix::new(&u * h * v).unwrap(), 2.0).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn posterior_for(points: Vec<GridPoint>, mean: Vec<C64>, var: Vec<f64>) -> GprPosterior {
        GprPosterior {
            test_points: points,
            mean_re: DVector::from_iterator(mean.len(), mean.iter().map(|z| z.re)),
            mean_im: DVector::from_iterator(mean.len(), mean.iter().map(|z| z.im)),
            var_re: DVector::from_vec(var.clone()),
            var_im: DVector::from_vec(var),
        }
    }

    #[test]
    fn coverage_of_exact_mean_is_one() {
        let grid = full_grid(3, 4);
        let h = cm(3, 4, |r, c| C64::new(r as f64 - 1.0, c as f64 * 0.5));
        let post = posterior_for(grid.clone(), grid.iter().map(|p| h.get(p.row, p.col)).collect(), vec![0.0; 12]);
        let rep = coverage(&h, &post, &grid).unwrap();
        assert_eq!((rep.empirical, rep.empirical_re, rep.empirical_im, rep.count), (1.0, 1.0, 1.0, 12));
        assert_eq!(rep.empirical_modulus, 1.0);
        assert_eq!(rep.nominal, 0.95);
    }

    #[test]
    fn coverage_with_tiny_variance_and_large_error_is_zero() {
        let grid = full_grid(2, 2);
        let h = cm(2, 2, |_, _| C64::new(5.0, -5.0));
        let post = posterior_for(grid.clone(), vec![C64::new(0.0, 0.0); 4], vec![1e-12; 4]);
        let rep = coverage(&h, &post, &grid).unwrap();
        assert_eq!(rep.empirical, 0.0);
    }

    #[test]
    fn coverage_requires_posterior_on_mask() {
        let grid = full_grid(2, 2);
        let post = posterior_for(grid[..3].to_vec(), vec![C64::new(0.0, 0.0); 3], vec![1.0; 3]);
        assert!(matches!(coverage(&eye(2), &post, &grid), Err(Error::CoverageGap { .. })));
    }

    #[test]
    fn truth_sampled_from_posterior_is_calibrated() {
        let (nr, nt) = (100, 100);
        let grid = full_grid(nr, nt);
        let mut rng = rng_from_seed(10);
        let var: Vec<f64> = (0..grid.len()).map(|i| 0.1 + (i % 7) as f64 * 0.3).collect();
        let mean: Vec<C64> = (0..grid.len()).map(|i| C64::new((i % 5) as f64 - 2.0, (i % 3) as f64)).collect();
        let mut h = CMatrix::zeros(nr, nt);
        for (i, p) in grid.iter().enumerate() {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            h[(p.row, p.col)] = mean[i] + C64::new(a, b) * var[i].sqrt();
        }
        let rep = coverage(&ChannelMatrix::new(h).unwrap(), &posterior_for(grid.clone(), mean, var), &grid).unwrap();
        assert!((0.94..=0.96).contains(&rep.empirical_re), "{rep:?}");
        assert!((0.94..=0.96).contains(&rep.empirical_im), "{rep:?}");
        assert!((0.89..=0.92).contains(&rep.empirical), "{rep:?}");
        // |ε|² / (var/2) ~ χ²₂, so P(|ε|² ≤ 1.96² var) = 1 − exp(−1.96²)
        let expected = 1.0 - (-Z_95 * Z_95).exp();
        assert!((rep.empirical_modulus - expected).abs() < 0.01, "{rep:?}");
    }

    #[test]
    fn tallies_merge_additively() {
        let mut a = CoverageTally { joint: 1, re: 2, im: 2, modulus: 2, count: 3 };
        a.merge(&CoverageTally { joint: 3, re: 3, im: 4, modulus: 1, count: 5 });
        assert_eq!(a, CoverageTally { joint: 4, re: 5, im: 6, modulus: 3, count: 8 });
        assert_eq!(a.report().empirical, 0.5);
        assert_eq!(CoverageTally::default().report().empirical, 0.0);
    }

    proptest! {
        #[test]
        fn mi_increases_with_snr(seed in 0u64..1000, base in 0.01f64..10.0) {
            let mut rng = rng_from_seed(seed);
            let h = ChannelMatrix::new(complex_gaussian_matrix(&mut rng, 3, 3, 1.0)).unwrap();
            let mut prev = 0.0;
            for k in 0..5 {
                let v = mutual_information(&h, base * 2f64.powi(k)).unwrap();
                prop_assert!(v > prev);
                prev = v;
            }
        }

        #[test]
        fn coverage_is_a_proportion(seed in 0u64..1000, scale in 0.01f64..5.0) {
            let grid = full_grid(4, 4);
            let mut rng = rng_from_seed(seed);
            let h = ChannelMatrix::new(complex_gaussian_matrix(&mut rng, 4, 4, 1.0)).unwrap();
            let post = posterior_for(grid.clone(), vec![C64::new(0.0, 0.0); 16], vec![scale; 16]);
            let rep = coverage(&h, &post, &grid).unwrap();
            prop_assert!((0.0..=1.0).contains(&rep.empirical));
            prop_assert!(rep.empirical <= rep.empirical_re.min(rep.empirical_im));
            prop_assert_eq!(rep, coverage(&h, &post, &grid).unwrap());
        }
    }
}
