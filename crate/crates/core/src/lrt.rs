//! Likelihood-ratio test for `η̃` in the possibly misspecified model
//! `η̃ f_s + (1 - η̃) g̃`, with its `½δ₀ + ½χ²₁` reference law.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::compensator::{compensator_delta, score_geometry};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::optim::golden_section_max;
use crate::quadrature::QuadratureSpec;

/// Distance of the optimization interval from `±1`.
pub const EDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtFit {
    /// Unconstrained maximizer on `(-1, 1)`.
    pub eta_tilde_hat: f64,
    /// `max(η̃̂, 0)`.
    pub eta_tilde_hat_c: f64,
    pub loglik_at_0: f64,
    pub loglik_at_c: f64,
    pub lrt_stat: f64,
    pub boundary_flag: bool,
}

impl LrtFit {
    /// Upper-tail probability under `½δ₀ + ½χ²₁`.
    pub fn p_value(&self) -> f64 {
        chi2bar01_sf(self.lrt_stat)
    }
}

/// Values of `S̃ = f_s/g̃ - 1` at each observation.
pub fn tilde_scores(signal: &DensityModel, g_tilde: &DensityModel, physics: &[f64]) -> Result<Vec<f64>> {
    if signal.region() != g_tilde.region() {
        return Err(Error::SupportMismatch);
    }
    crate::compensator::check_sample(physics, signal.region(), 1)?;
    Ok(physics.iter().map(|&x| signal.pdf(x) / g_tilde.pdf(x) - 1.0).collect())
}

/// Fits `η̃` from precomputed `S̃(X_i)` and `Σ log g̃(X_i)`.
pub fn fit_lrt_scores(scores: &[f64], base_loglik: f64) -> Result<LrtFit> {
    if scores.is_empty() {
        return Err(Error::EmptySample { need: 1, got: 0 });
    }
    if scores.iter().all(|s| s.abs() < 1e-12) {
        return Err(Error::FlatLikelihood);
    }
    // Keep 1 + η S̃ > 0: positive scores bound η from below, negative ones from above.
    let mut lo = -1.0 + EDGE;
    let mut hi = 1.0 - EDGE;
    for &s in scores {
        if s > 0.0 {
            lo = lo.max(-1.0 / s + EDGE);
        } else if s < 0.0 {
            hi = hi.min(-1.0 / s - EDGE);
        }
    }
    if !(lo < hi) {
        return Err(Error::NonFiniteLogLik(vec![lo, hi]));
    }
    let ell = |eta: f64| -> f64 { base_loglik + scores.iter().map(|&s| (eta * s).ln_1p()).sum::<f64>() };
    let best = golden_section_max(ell, lo, hi, 1e-12, 400);
    let eta = best.x[0];
    let boundary_flag = (eta - lo) < 1e-8 || (hi - eta) < 1e-8;
    let eta_c = eta.max(0.0);
    let loglik_at_0 = base_loglik;
    let loglik_at_c = ell(eta_c);
    if !loglik_at_0.is_finite() || !loglik_at_c.is_finite() {
        return Err(Error::NonFiniteLogLik(vec![eta_c]));
    }
    let lrt_stat = if eta_c > 0.0 { (-2.0 * (loglik_at_0 - loglik_at_c)).max(0.0) } else { 0.0 };
    Ok(LrtFit { eta_tilde_hat: eta, eta_tilde_hat_c: eta_c, loglik_at_0, loglik_at_c, lrt_stat, boundary_flag })
}

/// Maximum-likelihood fit of `η̃` and the LRT statistic for `η̃ = 0`.
pub fn fit_lrt(signal: &DensityModel, g_tilde: &DensityModel, physics: &[f64]) -> Result<LrtFit> {
    let scores = tilde_scores(signal, g_tilde, physics)?;
    let base: f64 = physics.iter().map(|&x| g_tilde.ln_pdf(x)).sum();
    fit_lrt_scores(&scores, base)
}

fn chi2_1() -> ChiSquared {
    ChiSquared::new(1.0).expect("one degree of freedom is valid")
}

/// `½ + ½ P(χ²₁ ≤ t)`.
pub fn chi2bar01_cdf(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::DomainError(format!("chi-bar-squared argument {t} is negative")));
    }
    Ok(0.5 + 0.5 * chi2_1().cdf(t))
}

/// `P(T ≥ t)`; equals one at `t = 0` because of the atom.
pub fn chi2bar01_sf(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        0.5 * chi2_1().sf(t)
    }
}

/// Right inverse of [`chi2bar01_cdf`]; zero for `p ≤ ½`.
pub fn chi2bar01_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("probability {p} outside (0, 1)")));
    }
    if p <= 0.5 {
        return Ok(0.0);
    }
    Ok(chi2_1().inverse_cdf(2.0 * p - 1.0))
}

/// `δ̃ = ∫ S̃† dF_b`, the compensator of the misspecified model.
pub fn delta_tilde(signal: &DensityModel, g_tilde: &DensityModel, f_b: &DensityModel, quad: QuadratureSpec) -> Result<f64> {
    let geometry = score_geometry(signal, g_tilde, quad)?;
    compensator_delta(&geometry, f_b, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{normalize, presets, SearchRegion};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear() -> (DensityModel, DensityModel) {
        let r = SearchRegion::new(0.0, 1.0).unwrap();
        (normalize(|x| 2.0 * x, r, QuadratureSpec::default()).unwrap(), DensityModel::uniform(r))
    }

    #[test]
    fn symmetric_scores_give_zero() {
        let (fs, g) = linear();
        let fit = fit_lrt(&fs, &g, &[0.9, 0.1]).unwrap();
        assert!(fit.eta_tilde_hat.abs() < 1e-8);
        assert!(fit.lrt_stat < 1e-15);
    }

    #[test]
    fn two_point_closed_form() {
        let (fs, g) = linear();
        let fit = fit_lrt(&fs, &g, &[0.9, 0.3]).unwrap();
        assert_relative_eq!(fit.eta_tilde_hat, 0.625, epsilon = 1e-8);
        assert_eq!(fit.eta_tilde_hat_c, fit.eta_tilde_hat);
        assert_relative_eq!(fit.lrt_stat, 2.0 * 1.125f64.ln(), epsilon = 1e-10);
        assert!(!fit.boundary_flag);
    }

    #[test]
    fn negative_estimate_is_truncated() {
        let (fs, g) = linear();
        let fit = fit_lrt(&fs, &g, &[0.2]).unwrap();
        assert!(fit.eta_tilde_hat < 0.0);
        assert_eq!(fit.eta_tilde_hat_c, 0.0);
        assert_eq!(fit.lrt_stat, 0.0);
        assert_eq!(fit.p_value(), 1.0);
    }

    #[test]
    fn flat_likelihood_is_rejected() {
        let (_, g) = linear();
        assert_eq!(fit_lrt(&g, &g, &[0.4]).unwrap_err(), Error::FlatLikelihood);
    }

    #[test]
    fn monotone_likelihood_pins_to_edge() {
        let (fs, g) = linear();
        let fit = fit_lrt(&fs, &g, &[0.99, 0.95, 0.97]).unwrap();
        assert!(fit.boundary_flag);
        assert!(fit.eta_tilde_hat > 1.0 - 1e-6);
    }

    #[test]
    fn golden_section_matches_grid_scan() {
        let (fs, g) = linear();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.random_range(2..8);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
            let fit = fit_lrt(&fs, &g, &xs).unwrap();
            let s: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
            let ell = |eta: f64| s.iter().map(|&v| (1.0 + eta * v).ln()).sum::<f64>();
            let grid = 100_000;
            let mut best = (f64::NEG_INFINITY, 0.0);
            for k in 1..grid {
                let eta = -1.0 + 2.0 * k as f64 / grid as f64;
                let v = ell(eta);
                if v.is_finite() && v > best.0 {
                    best = (v, eta);
                }
            }
            // Grid spacing is 2e-5; the golden optimum must beat every grid point.
            assert!((fit.eta_tilde_hat - best.1).abs() <= 2e-5, "{} vs {}", fit.eta_tilde_hat, best.1);
            assert!(ell(fit.eta_tilde_hat) >= best.0 - 1e-6);
            assert_eq!(fit.eta_tilde_hat_c, fit.eta_tilde_hat.max(0.0));
        }
    }

    #[test]
    fn chi_bar_squared_values() {
        assert_eq!(chi2bar01_cdf(0.0).unwrap(), 0.5);
        assert_relative_eq!(chi2bar01_quantile(0.95).unwrap(), 2.705543, epsilon = 1e-5);
        assert_eq!(chi2bar01_quantile(0.4).unwrap(), 0.0);
        assert!(chi2bar01_cdf(-1.0).is_err());
        assert!(chi2bar01_quantile(1.0).is_err());
        let q = chi2bar01_quantile(0.99).unwrap();
        assert_relative_eq!(chi2bar01_cdf(q).unwrap(), 0.99, epsilon = 1e-10);
    }

    #[test]
    fn compensator_signs() {
        let q = QuadratureSpec::default();
        let fs = presets::bump_signal().unwrap();
        let fb = presets::gamma_background().unwrap();
        assert!(delta_tilde(&fs, &fb, &fb, q).unwrap().abs() < 1e-8);
        assert!(delta_tilde(&fs, &presets::spurious_proposal(0.01).unwrap(), &fb, q).unwrap() < 0.0);
        assert!(delta_tilde(&fs, &presets::spurious_proposal(0.005).unwrap(), &fb, q).unwrap() > 0.0);
    }
}
