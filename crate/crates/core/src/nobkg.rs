//! Inference without a background-only sample. The proposal is a baseline
//! `q_α` fitted on the physics data plus a two-bump dominating component of
//! weight `λ`, and the conservative parameter `θ₀ = ∫ S₀ dF` is tested (Z3).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::compensator::{check_sample, mean_and_var, score_geometry, z_report, InferenceReport, Method};
use crate::density::{make_bump_mixture, BumpParams, DensityModel};
use crate::error::{Error, Result};
use crate::optim::{bisect, golden_section_max};
use crate::parametric::{fit_mle, invert_information, mean_score_zero_gradients, MleResult, ParametricProposal};
use crate::stats::{norm_quantile, norm_sf};

/// Symmetric interval `[μ_s - d_ε, μ_s + d_ε]` carrying `1 - ε` of the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalRegion {
    pub mu_s: f64,
    pub d_eps: f64,
    pub epsilon: f64,
}

impl SignalRegion {
    pub fn lo(&self) -> f64 {
        self.mu_s - self.d_eps
    }

    pub fn hi(&self) -> f64 {
        self.mu_s + self.d_eps
    }
}

/// Locates the signal mode on a fine grid, refines it, then solves
/// `F_s(μ + d) - F_s(μ - d) = 1 - ε` for `d`.
pub fn signal_region(signal: &DensityModel, epsilon: f64) -> Result<SignalRegion> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::DomainError(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let region = signal.region();
    let grid = region.grid(10_000);
    let step = region.width() / 9_999.0;
    let (k, _) = grid
        .iter()
        .map(|&x| signal.pdf(x))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let a = region.clamp(grid[k] - step);
    let b = region.clamp(grid[k] + step);
    let mu_s = golden_section_max(|x| signal.pdf(x), a, b, 1e-12, 200).x[0];

    let reach = (mu_s - region.lo).min(region.hi - mu_s);
    let mass = |d: f64| -> Result<f64> { Ok(signal.cdf(mu_s + d)? - signal.cdf(mu_s - d)?) };
    let target = 1.0 - epsilon;
    if mass(reach)? < target - 1e-12 {
        return Err(Error::RegionExceedsSupport);
    }
    let mut failure = None;
    let d_eps = bisect(
        |d| match mass(d) {
            Ok(v) => v - target,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        },
        0.0,
        reach,
        1e-13,
        200,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let d_eps = d_eps.ok_or(Error::RegionExceedsSupport)?;
    Ok(SignalRegion { mu_s, d_eps, epsilon })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta0Estimate {
    pub theta0_hat: f64,
    pub sigma2_theta0: f64,
    pub alpha_hat: Vec<f64>,
    pub lambda_star: f64,
    pub n: usize,
    /// `‖S_β̂‖` at the fitted proposal.
    pub s_norm: f64,
    /// Set when `α̂` sits within one difference step of its box.
    pub at_boundary: bool,
}

/// The bump-augmented proposal `g_(α, λ)`.
pub fn bump_proposal(q_family: &ParametricProposal, alpha: &[f64], lambda: f64, bump: BumpParams) -> Result<DensityModel> {
    let q = q_family.density(alpha)?;
    make_bump_mixture(&q, lambda, bump.mu1, bump.mu2, bump.sigma0, q_family.region)
}

/// Estimates `θ₀` and its plug-in variance given a fit of `q_α` on the
/// physics sample.
pub fn estimate_theta0_given_fit(
    signal: &DensityModel,
    q_family: &ParametricProposal,
    fit: &MleResult,
    lambda_star: f64,
    bump: BumpParams,
    physics: &[f64],
) -> Result<Theta0Estimate> {
    if !(0.0..0.5).contains(&lambda_star) {
        return Err(Error::LambdaOutOfRange(lambda_star));
    }
    check_sample(physics, q_family.region, 2)?;
    let alpha = &fit.beta_hat;
    let proposal = bump_proposal(q_family, alpha, lambda_star, bump)?;
    let geometry = score_geometry(signal, &proposal, q_family.quad)?;
    let s = geometry.s_norm();
    let (theta0_hat, var_s0, _) = mean_and_var(physics.iter().map(|&x| geometry.score_zero(x)));
    // Variance of S₀ equals σ̂²_θ / ‖S‖².
    let mut sigma2 = var_s0;

    let free = q_family.free();
    if !free.is_empty() {
        let coords: Vec<(usize, f64)> = free.iter().map(|&i| (i, q_family.step(alpha, i))).collect();
        let d_hat = mean_score_zero_gradients(
            signal,
            |a| bump_proposal(q_family, a, lambda_star, bump),
            alpha,
            &coords,
            &[physics],
            q_family.quad,
        )?
        .remove(0);
        let der = q_family.derivatives(alpha, physics)?;
        let p = free.len();
        let n = physics.len() as f64;
        let j_hat = -der.mean_hessian.clone();
        let mut v_hat = DMatrix::<f64>::zeros(p, p);
        let mut c_hat = DVector::<f64>::zeros(p);
        for (score, &x) in der.scores.iter().zip(physics) {
            v_hat += score * score.transpose();
            c_hat += score * geometry.score_zero(x);
        }
        v_hat /= n;
        c_hat /= n;
        let jd = invert_information(&j_hat)? * &d_hat;
        sigma2 += jd.dot(&(&v_hat * &jd)) + 2.0 * jd.dot(&c_hat);
    }
    Ok(Theta0Estimate {
        theta0_hat,
        sigma2_theta0: sigma2,
        alpha_hat: alpha.clone(),
        lambda_star,
        n: physics.len(),
        s_norm: s,
        at_boundary: fit.at_boundary,
    })
}

/// Fits `q_α` on the physics sample, then estimates `θ₀` with `λ = λ*`.
pub fn estimate_theta0(
    signal: &DensityModel,
    q_family: &ParametricProposal,
    lambda_star: f64,
    bump: BumpParams,
    physics: &[f64],
) -> Result<Theta0Estimate> {
    let fit = fit_mle(q_family, physics)?;
    estimate_theta0_given_fit(signal, q_family, &fit, lambda_star, bump, physics)
}

/// Z3: `√n θ̂₀ / σ̂_θ₀`.
pub fn test_z3(estimate: &Theta0Estimate, level: f64) -> Result<InferenceReport> {
    z_report(Method::Z3, estimate.theta0_hat, estimate.sigma2_theta0, estimate.n as f64, level)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub lambdas: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `curves[k][i] = g_(α̂, λ_k)(x_i)`.
    pub curves: Vec<Vec<f64>>,
    pub estimates: Vec<Theta0Estimate>,
    pub reports: Vec<InferenceReport>,
}

/// Tabulates `g_(α̂, λ)` and runs Z3 for each `λ`, with `α̂` fitted once.
pub fn sensitivity_scan(
    signal: &DensityModel,
    q_family: &ParametricProposal,
    bump: BumpParams,
    lambdas: &[f64],
    physics: &[f64],
    x_grid: &[f64],
    level: f64,
) -> Result<SensitivityGrid> {
    if lambdas.is_empty() {
        return Err(Error::DomainError("no lambda values supplied".into()));
    }
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::DomainError("lambda values must be strictly increasing".into()));
    }
    if let Some(&bad) = lambdas.iter().find(|l| !(0.0..0.5).contains(*l)) {
        return Err(Error::LambdaOutOfRange(bad));
    }
    let fit = fit_mle(q_family, physics)?;
    let mut curves = Vec::with_capacity(lambdas.len());
    let mut estimates = Vec::with_capacity(lambdas.len());
    let mut reports = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let g = bump_proposal(q_family, &fit.beta_hat, lambda, bump)?;
        curves.push(x_grid.iter().map(|&x| if g.region().contains(x) { g.pdf(x) } else { 0.0 }).collect());
        let est = estimate_theta0_given_fit(signal, q_family, &fit, lambda, bump, physics)?;
        reports.push(test_z3(&est, level)?);
        estimates.push(est);
    }
    Ok(SensitivityGrid { lambdas: lambdas.to_vec(), x_grid: x_grid.to_vec(), curves, estimates, reports })
}

/// Large-sample rejection probability `1 - Φ(z_{1-level} - δ√n/σ)` of Z3
/// when the limit of `θ₀` is `δ` under the null.
pub fn theoretical_type1(delta_beta_star: f64, sigma_theta: f64, n: usize, level: f64) -> f64 {
    let z = norm_quantile(1.0 - level);
    norm_sf(z - delta_beta_star * (n as f64).sqrt() / sigma_theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::presets;
    use crate::parametric::ProposalFamily;
    use crate::stats::norm_cdf;
    use approx::assert_relative_eq;

    fn pareto_family() -> ParametricProposal {
        ParametricProposal::new(ProposalFamily::Pareto1, presets::unit_interval(), vec![0.1], vec![12.0], vec![3.0]).unwrap()
    }

    #[test]
    fn signal_region_of_narrow_gaussian() {
        let fs = presets::bump_signal().unwrap();
        let r = signal_region(&fs, 0.001).unwrap();
        assert_relative_eq!(r.mu_s, 1.28, epsilon = 1e-8);
        // Truncation at [1, 2] is ~14 sd away, so the Gaussian quantile applies.
        let oracle = norm_quantile(1.0 - 0.0005) * 0.02;
        assert_relative_eq!(r.d_eps, oracle, epsilon = 1e-7);
        assert!((r.lo() - 1.214).abs() < 1e-3 && (r.hi() - 1.346).abs() < 1e-3);
        let mass = fs.cdf(r.hi()).unwrap() - fs.cdf(r.lo()).unwrap();
        assert_relative_eq!(mass, 0.999, epsilon = 1e-9);
    }

    #[test]
    fn signal_region_shrinks_as_epsilon_grows() {
        let fs = presets::bump_signal().unwrap();
        let r = signal_region(&fs, 1.0 - 1e-9).unwrap();
        assert!(r.d_eps < 1e-6);
        assert!(signal_region(&fs, 0.0).is_err());
    }

    #[test]
    fn wide_signal_exceeds_support() {
        let fs = DensityModel::catalog(
            crate::density::Kernel::TruncatedGaussian { mean: 1.1, sd: 0.3 },
            presets::unit_interval(),
            Default::default(),
        )
        .unwrap();
        assert_eq!(signal_region(&fs, 0.001).unwrap_err(), Error::RegionExceedsSupport);
    }

    #[test]
    fn theta0_scale_identity() {
        let fs = presets::bump_signal().unwrap();
        let fam = pareto_family();
        let xs = presets::gamma_background().unwrap().sample_seeded(1500, 4).unwrap();
        let est = estimate_theta0(&fs, &fam, 0.01, BumpParams::SIMULATION, &xs).unwrap();
        let g = bump_proposal(&fam, &est.alpha_hat, 0.01, BumpParams::SIMULATION).unwrap();
        let geo = score_geometry(&fs, &g, Default::default()).unwrap();
        let theta: f64 = xs.iter().map(|&x| geo.score_dagger(x)).sum::<f64>() / xs.len() as f64;
        assert!((est.theta0_hat - theta / geo.s_norm()).abs() < 1e-10);
        assert!(est.sigma2_theta0 > 0.0);
    }

    #[test]
    fn self_consistent_null() {
        // Physics drawn from the fitted proposal family itself: θ₀ ≈ 0.
        let fs = presets::bump_signal().unwrap();
        let fam = pareto_family();
        let truth = bump_proposal(&fam, &[3.0], 0.02, BumpParams::SIMULATION).unwrap();
        let xs = truth.sample_seeded(20_000, 9).unwrap();
        let est = estimate_theta0(&fs, &fam, 0.02, BumpParams::SIMULATION, &xs).unwrap();
        let se = (est.sigma2_theta0 / xs.len() as f64).sqrt();
        assert!(est.theta0_hat.abs() <= 3.0 * se, "{} vs se {se}", est.theta0_hat);
    }

    #[test]
    fn zero_theta0_gives_half() {
        let est = Theta0Estimate {
            theta0_hat: 0.0,
            sigma2_theta0: 2.0,
            alpha_hat: vec![1.0],
            lambda_star: 0.0,
            n: 10,
            s_norm: 1.0,
            at_boundary: false,
        };
        assert_eq!(test_z3(&est, 0.05).unwrap().p_value, 0.5);
        let bad = Theta0Estimate { sigma2_theta0: 0.0, ..est };
        assert!(matches!(test_z3(&bad, 0.05), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn zero_lambda_curve_is_baseline() {
        let fs = presets::bump_signal().unwrap();
        let fam = pareto_family();
        let xs = presets::gamma_background().unwrap().sample_seeded(500, 2).unwrap();
        let grid = presets::unit_interval().grid(11);
        let scan = sensitivity_scan(&fs, &fam, BumpParams::SIMULATION, &[0.0], &xs, &grid, 0.05).unwrap();
        let q = fam.density(&scan.estimates[0].alpha_hat).unwrap();
        for (x, v) in grid.iter().zip(&scan.curves[0]) {
            assert_relative_eq!(*v, q.pdf(*x), epsilon = 1e-12);
        }
        assert!(sensitivity_scan(&fs, &fam, BumpParams::SIMULATION, &[0.02, 0.01], &xs, &grid, 0.05).is_err());
        assert!(sensitivity_scan(&fs, &fam, BumpParams::SIMULATION, &[0.5], &xs, &grid, 0.05).is_err());
    }

    #[test]
    fn theoretical_rates() {
        assert_relative_eq!(theoretical_type1(0.0, 1.0, 100, 0.05), 0.05, epsilon = 1e-9);
        let oracle = 1.0 - norm_cdf(norm_quantile(0.95) - 0.01 * 2000f64.sqrt());
        assert_relative_eq!(theoretical_type1(0.01, 1.0, 2000, 0.05), oracle, epsilon = 1e-12);
        assert!((oracle - 0.1155).abs() < 1e-4);
        let ns = [50, 100, 200, 500, 1000, 2000];
        let rates: Vec<f64> = ns.iter().map(|&n| theoretical_type1(-0.02, 1.0, n, 0.05)).collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0]));
    }
}
