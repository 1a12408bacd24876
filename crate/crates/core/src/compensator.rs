//! Score geometry, the compensator, and inference with a fixed proposal.
//!
//! For a signal density `f_s` and a proposal background `g`, the score
//! direction is `S = f_s/g - 1` with norm `‖S‖²_G = ∫ S² dG`. Projecting the
//! background ratio onto `S† = S/‖S‖_G` gives the compensator
//! `δ = ∫ S† dF_b`, and the signal fraction satisfies
//! `η = (θ - δ) / (‖S‖_G - δ)` with `θ = ∫ S† dF`.

use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;
use crate::stats::{norm_quantile, norm_sf};

/// Below this norm the signal is indistinguishable from the proposal.
pub const MIN_SCORE_NORM: f64 = 1e-8;

/// Below this the estimator denominator `‖S‖ - δ̂` is rejected.
pub const MIN_DENOMINATOR: f64 = 1e-12;

/// `(S, ‖S‖_G, S†)` for one signal/proposal pair.
#[derive(Debug, Clone)]
pub struct ScoreGeometry {
    signal: DensityModel,
    proposal: DensityModel,
    s_norm: f64,
}

impl ScoreGeometry {
    pub fn signal(&self) -> &DensityModel {
        &self.signal
    }

    pub fn proposal(&self) -> &DensityModel {
        &self.proposal
    }

    /// `‖S‖_G`.
    pub fn s_norm(&self) -> f64 {
        self.s_norm
    }

    /// `S(x) = f_s(x)/g(x) - 1`.
    #[inline]
    pub fn score(&self, x: f64) -> f64 {
        self.signal.pdf(x) / self.proposal.pdf(x) - 1.0
    }

    /// `S†(x) = S(x)/‖S‖_G`.
    #[inline]
    pub fn score_dagger(&self, x: f64) -> f64 {
        self.score(x) / self.s_norm
    }

    /// `S₀(x) = S(x)/‖S‖²_G`.
    #[inline]
    pub fn score_zero(&self, x: f64) -> f64 {
        self.score(x) / (self.s_norm * self.s_norm)
    }
}

/// Computes `‖S‖_G` by quadrature of `(f_s - g)² / g`.
pub fn score_geometry(signal: &DensityModel, proposal: &DensityModel, quad: QuadratureSpec) -> Result<ScoreGeometry> {
    let region = signal.region();
    if proposal.region() != region {
        return Err(Error::SupportMismatch);
    }
    let norm2 = quad
        .integrate(
            |x| {
                let g = proposal.pdf(x);
                let d = signal.pdf(x) - g;
                d * d / g
            },
            region.lo,
            region.hi,
        )?
        .value;
    let s_norm = norm2.max(0.0).sqrt();
    if !(s_norm >= MIN_SCORE_NORM) {
        return Err(Error::DegenerateSignal(s_norm));
    }
    Ok(ScoreGeometry { signal: signal.clone(), proposal: proposal.clone(), s_norm })
}

/// Population compensator `δ = ∫ S†(x) f_b(x) dx`.
pub fn compensator_delta(geometry: &ScoreGeometry, background: &DensityModel, quad: QuadratureSpec) -> Result<f64> {
    let region = geometry.signal.region();
    if background.region() != region {
        return Err(Error::SupportMismatch);
    }
    Ok(quad
        .integrate(|x| geometry.score_dagger(x) * background.pdf(x), region.lo, region.hi)?
        .value)
}

/// Plug-in estimates from a physics sample and a background-only sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleEstimate {
    pub theta_hat: f64,
    pub delta_hat: f64,
    /// Unclipped `η̂`.
    pub eta_hat: f64,
    pub sigma2_theta: f64,
    pub sigma2_delta: f64,
    pub sigma2_eta: f64,
    pub pi_hat: f64,
    pub n: usize,
    pub m: usize,
    pub s_norm: f64,
    /// Set when `δ̂ > ‖S‖_G`, i.e. the denominator changed sign.
    pub denominator_flipped: bool,
}

impl TwoSampleEstimate {
    /// `mn/(m+n)`, the squared rate of the two-sample CLT.
    pub fn effective_size(&self) -> f64 {
        let (n, m) = (self.n as f64, self.m as f64);
        n * m / (n + m)
    }
}

/// Mean and centered second moment of `values`.
pub(crate) fn mean_and_var(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for v in values {
        count += 1;
        sum += v;
        sum2 += v * v;
    }
    let mean = sum / count as f64;
    let var = (sum2 / count as f64 - mean * mean).max(0.0);
    (mean, var, count)
}

pub(crate) fn check_sample(sample: &[f64], region: crate::density::SearchRegion, need: usize) -> Result<()> {
    if sample.len() < need {
        return Err(Error::EmptySample { need, got: sample.len() });
    }
    if let Some(&value) = sample.iter().find(|&&x| !region.contains(x)) {
        return Err(Error::ObservationOutsideRegion { value, lo: region.lo, hi: region.hi });
    }
    Ok(())
}

/// `θ̂`, `δ̂`, `η̂` and their plug-in variances.
pub fn estimate_two_sample(
    geometry: &ScoreGeometry,
    physics: &[f64],
    background_only: &[f64],
) -> Result<TwoSampleEstimate> {
    let region = geometry.signal.region();
    check_sample(physics, region, 2)?;
    check_sample(background_only, region, 2)?;
    let (theta_hat, sigma2_theta, n) = mean_and_var(physics.iter().map(|&x| geometry.score_dagger(x)));
    let (delta_hat, sigma2_delta, m) = mean_and_var(background_only.iter().map(|&y| geometry.score_dagger(y)));
    let s_norm = geometry.s_norm;
    let denom = s_norm - delta_hat;
    if denom.abs() < MIN_DENOMINATOR {
        return Err(Error::DegenerateDenominator(denom));
    }
    let eta_hat = (theta_hat - delta_hat) / denom;
    let pi_hat = n as f64 / (n + m) as f64;
    let sigma2_eta = (1.0 - pi_hat) * sigma2_theta / denom.powi(2)
        + pi_hat * sigma2_delta * (theta_hat - s_norm).powi(2) / denom.powi(4);
    Ok(TwoSampleEstimate {
        theta_hat,
        delta_hat,
        eta_hat,
        sigma2_theta,
        sigma2_delta,
        sigma2_eta,
        pi_hat,
        n,
        m,
        s_norm,
        denominator_flipped: denom < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Z1,
    Z2,
    Z3,
    #[serde(rename = "LRT")]
    Lrt,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Z1 => "Z1",
            Method::Z2 => "Z2",
            Method::Z3 => "Z3",
            Method::Lrt => "LRT",
        })
    }
}

/// Outcome of one test: estimate, standard error, statistic, one-sided
/// p-value and a two-sided `1 - level` confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub method: Method,
    pub estimate: f64,
    /// Estimate clipped to `[0, 1)`, for display only.
    pub estimate_clipped: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Significance level; the interval has coverage `1 - level`.
    pub level: f64,
}

impl InferenceReport {
    pub fn rejects(&self) -> bool {
        self.p_value < self.level
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::DomainError(format!("level {level} outside (0, 1)")))
    }
}

/// Wald-type report for an asymptotically normal estimate with variance
/// `sigma2 / size`.
pub(crate) fn z_report(method: Method, estimate: f64, sigma2: f64, size: f64, level: f64) -> Result<InferenceReport> {
    check_level(level)?;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::ZeroVariance(sigma2));
    }
    let std_error = (sigma2 / size).sqrt();
    let statistic = estimate / std_error;
    let half = norm_quantile(1.0 - level / 2.0) * std_error;
    Ok(InferenceReport {
        method,
        estimate,
        estimate_clipped: estimate.clamp(0.0, 1.0 - f64::EPSILON),
        std_error,
        statistic,
        p_value: norm_sf(statistic),
        ci_lo: estimate - half,
        ci_hi: estimate + half,
        level,
    })
}

/// Z1: `√(mn/(m+n)) η̂ / σ̂_η`.
pub fn test_z1(estimate: &TwoSampleEstimate, level: f64) -> Result<InferenceReport> {
    z_report(Method::Z1, estimate.eta_hat, estimate.sigma2_eta, estimate.effective_size(), level)
}
