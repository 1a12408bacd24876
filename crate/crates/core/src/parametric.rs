//! Parametric proposal backgrounds `g_β`, their maximum-likelihood fit on a
//! background-only sample, and the delta-method variance of `η̂_β̂` (Z2).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::compensator::{
    check_sample, mean_and_var, score_geometry, z_report, InferenceReport, Method, ScoreGeometry, TwoSampleEstimate,
};
use crate::density::{DensityModel, Kernel, SearchRegion};
use crate::error::{Error, Result};
use crate::optim::{golden_section_max, nelder_mead_box};
use crate::quadrature::QuadratureSpec;

/// Catalog families that can serve as parametric proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalFamily {
    /// `x^-(β+1)`, parameter `[index]`.
    Pareto1,
    /// `(x+1)^-(α+1)`, parameter `[index]`.
    PowerLawShifted,
    /// `exp(-ψ x)`, parameter `[rate]`.
    ExponentialLogscale,
    /// `exp(-(x+1)^2 / (4β))`, parameter `[width]`.
    GaussianTail,
    /// `x^(s-1) exp(-r x)`, parameters `[shape, rate]`.
    TruncatedGamma,
}

impl ProposalFamily {
    pub fn dim(&self) -> usize {
        match self {
            ProposalFamily::TruncatedGamma => 2,
            _ => 1,
        }
    }

    pub fn kernel(&self, beta: &[f64]) -> Kernel {
        match self {
            ProposalFamily::Pareto1 => Kernel::Pareto1 { index: beta[0] },
            ProposalFamily::PowerLawShifted => Kernel::PowerLawShifted { index: beta[0] },
            ProposalFamily::ExponentialLogscale => Kernel::ExponentialLogscale { rate: beta[0] },
            ProposalFamily::GaussianTail => Kernel::GaussianTail { width: beta[0] },
            ProposalFamily::TruncatedGamma => Kernel::TruncatedGamma { shape: beta[0], rate: beta[1] },
        }
    }

    /// Gradient of the log-kernel with respect to the full parameter vector.
    fn grad_ln_kernel(&self, x: f64, beta: &[f64], out: &mut [f64]) {
        match self {
            ProposalFamily::Pareto1 => out[0] = -x.ln(),
            ProposalFamily::PowerLawShifted => out[0] = -(x + 1.0).ln(),
            ProposalFamily::ExponentialLogscale => out[0] = -x,
            ProposalFamily::GaussianTail => out[0] = (x + 1.0).powi(2) / (4.0 * beta[0] * beta[0]),
            ProposalFamily::TruncatedGamma => {
                out[0] = x.ln();
                out[1] = -x;
            }
        }
    }

    /// Hessian of the log-kernel, row-major `dim × dim`.
    fn hess_ln_kernel(&self, x: f64, beta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if let ProposalFamily::GaussianTail = self {
            out[0] = -(x + 1.0).powi(2) / (2.0 * beta[0].powi(3));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    Analytic,
    CentralFd,
}

/// A family `g_β` over a compact parameter box. Coordinates whose bounds
/// coincide are frozen and excluded from estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricProposal {
    pub family: ProposalFamily,
    pub region: SearchRegion,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
    pub grad_mode: GradMode,
    /// Finite-difference step; `None` uses `ε^(1/3) max(1, |β|)`.
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub quad: QuadratureSpec,
}

impl ParametricProposal {
    pub fn new(
        family: ProposalFamily,
        region: SearchRegion,
        lower: Vec<f64>,
        upper: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let p = Self {
            family,
            region,
            lower,
            upper,
            initial,
            grad_mode: GradMode::Analytic,
            fd_step: None,
            quad: QuadratureSpec::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// A family with every coordinate frozen at `beta`.
    pub fn frozen(family: ProposalFamily, region: SearchRegion, beta: Vec<f64>) -> Result<Self> {
        Self::new(family, region, beta.clone(), beta.clone(), beta)
    }

    pub fn with_grad_mode(mut self, mode: GradMode) -> Self {
        self.grad_mode = mode;
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Result<Self> {
        self.fd_step = Some(step);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.family.dim();
        if self.lower.len() != d || self.upper.len() != d || self.initial.len() != d {
            return Err(Error::InvalidParameter(format!("{:?} expects {d} parameter(s)", self.family)));
        }
        for i in 0..d {
            let (lo, hi, x0) = (self.lower[i], self.upper[i], self.initial[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!("parameter box [{lo}, {hi}] is invalid")));
            }
            if !(x0 >= lo && x0 <= hi) {
                return Err(Error::InvalidParameter(format!("initial value {x0} outside [{lo}, {hi}]")));
            }
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::FdStepInvalid(h));
            }
        }
        Ok(())
    }

    /// Indices of the coordinates being estimated.
    pub fn free(&self) -> Vec<usize> {
        (0..self.family.dim()).filter(|&i| self.lower[i] < self.upper[i]).collect()
    }

    pub fn density(&self, beta: &[f64]) -> Result<DensityModel> {
        DensityModel::catalog(self.family.kernel(beta), self.region, self.quad)
    }

    /// Finite-difference step for coordinate `i` at `beta`.
    pub fn step(&self, beta: &[f64], i: usize) -> f64 {
        match self.fd_step {
            Some(h) => h,
            None => f64::EPSILON.cbrt() * beta[i].abs().max(1.0),
        }
    }

    pub fn loglik(&self, beta: &[f64], sample: &[f64]) -> Result<f64> {
        let g = self.density(beta)?;
        Ok(sample.iter().map(|&x| g.ln_pdf(x)).sum())
    }

    /// Per-observation scores and the mean Hessian of `log g_β` over the
    /// free coordinates.
    pub fn derivatives(&self, beta: &[f64], sample: &[f64]) -> Result<LogLikDerivatives> {
        match self.grad_mode {
            GradMode::Analytic => self.analytic_derivatives(beta, sample),
            GradMode::CentralFd => self.fd_derivatives(beta, sample),
        }
    }

    fn analytic_derivatives(&self, beta: &[f64], sample: &[f64]) -> Result<LogLikDerivatives> {
        let free = self.free();
        let p = free.len();
        let d = self.family.dim();
        let g = self.density(beta)?;
        let region = self.region;

        // Moments of the kernel derivatives under g_β give the normalizer terms.
        let mut mean_grad = vec![0.0; p];
        let mut mean_outer = vec![0.0; p * p];
        let mut mean_hess = vec![0.0; p * p];
        for (a, &i) in free.iter().enumerate() {
            mean_grad[a] = self
                .quad
                .integrate(|x| self.kernel_grad(x, beta, d)[i] * g.pdf(x), region.lo, region.hi)?
                .value;
            for (b, &j) in free.iter().enumerate() {
                mean_outer[a * p + b] = self
                    .quad
                    .integrate(
                        |x| {
                            let gr = self.kernel_grad(x, beta, d);
                            gr[i] * gr[j] * g.pdf(x)
                        },
                        region.lo,
                        region.hi,
                    )?
                    .value;
                mean_hess[a * p + b] = self
                    .quad
                    .integrate(|x| self.kernel_hess(x, beta, d)[i * d + j] * g.pdf(x), region.lo, region.hi)?
                    .value;
            }
        }
        let mut scores = Vec::with_capacity(sample.len());
        let mut hess_sum = DMatrix::<f64>::zeros(p, p);
        for &x in sample {
            let gr = self.kernel_grad(x, beta, d);
            let hk = self.kernel_hess(x, beta, d);
            scores.push(DVector::from_iterator(p, free.iter().enumerate().map(|(a, &i)| gr[i] - mean_grad[a])));
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    hess_sum[(a, b)] += hk[i * d + j];
                }
            }
        }
        let n = sample.len() as f64;
        let mut mean_hessian = hess_sum / n;
        for a in 0..p {
            for b in 0..p {
                let cov = mean_outer[a * p + b] - mean_grad[a] * mean_grad[b];
                mean_hessian[(a, b)] -= mean_hess[a * p + b] + cov;
            }
        }
        Ok(LogLikDerivatives { scores, mean_hessian })
    }

    fn kernel_grad(&self, x: f64, beta: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.family.grad_ln_kernel(x, beta, &mut out);
        out
    }

    fn kernel_hess(&self, x: f64, beta: &[f64], d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d * d];
        self.family.hess_ln_kernel(x, beta, &mut out);
        out
    }

    fn shifted(&self, beta: &[f64], moves: &[(usize, f64)]) -> Result<DensityModel> {
        let mut b = beta.to_vec();
        for &(i, h) in moves {
            b[i] += h;
        }
        self.density(&b)
    }

    fn fd_derivatives(&self, beta: &[f64], sample: &[f64]) -> Result<LogLikDerivatives> {
        let free = self.free();
        let p = free.len();
        // Second differences lose ~half the digits of the step; use at least ε^(1/4).
        let hess_step = |i: usize| self.step(beta, i).max(f64::EPSILON.powf(0.25) * beta[i].abs().max(1.0));
        let center = self.density(beta)?;
        let mut scores = vec![DVector::<f64>::zeros(p); sample.len()];
        for (a, &i) in free.iter().enumerate() {
            let h = self.step(beta, i);
            let up = self.shifted(beta, &[(i, h)])?;
            let down = self.shifted(beta, &[(i, -h)])?;
            for (k, &x) in sample.iter().enumerate() {
                scores[k][a] = (up.ln_pdf(x) - down.ln_pdf(x)) / (2.0 * h);
            }
        }
        let mut mean_hessian = DMatrix::<f64>::zeros(p, p);
        let n = sample.len() as f64;
        let sum_ln = |g: &DensityModel| sample.iter().map(|&x| g.ln_pdf(x)).sum::<f64>() / n;
        let base = sum_ln(&center);
        for (a, &i) in free.iter().enumerate() {
            let hi = hess_step(i);
            let up = sum_ln(&self.shifted(beta, &[(i, hi)])?);
            let down = sum_ln(&self.shifted(beta, &[(i, -hi)])?);
            mean_hessian[(a, a)] = (up - 2.0 * base + down) / (hi * hi);
            for (b, &j) in free.iter().enumerate().skip(a + 1) {
                let hj = hess_step(j);
                let pp = sum_ln(&self.shifted(beta, &[(i, hi), (j, hj)])?);
                let pm = sum_ln(&self.shifted(beta, &[(i, hi), (j, -hj)])?);
                let mp = sum_ln(&self.shifted(beta, &[(i, -hi), (j, hj)])?);
                let mm = sum_ln(&self.shifted(beta, &[(i, -hi), (j, -hj)])?);
                let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
                mean_hessian[(a, b)] = v;
                mean_hessian[(b, a)] = v;
            }
        }
        Ok(LogLikDerivatives { scores, mean_hessian })
    }

    fn near_boundary(&self, beta: &[f64]) -> bool {
        self.free().into_iter().any(|i| {
            let h = self.step(beta, i);
            beta[i] - self.lower[i] <= h || self.upper[i] - beta[i] <= h
        })
    }
}

/// Scores `∂_β log g_β(x_i)` and the mean Hessian over a sample.
#[derive(Debug, Clone)]
pub struct LogLikDerivatives {
    pub scores: Vec<DVector<f64>>,
    pub mean_hessian: DMatrix<f64>,
}

impl LogLikDerivatives {
    pub fn score_sum(&self) -> DVector<f64> {
        let p = self.mean_hessian.nrows();
        self.scores.iter().fold(DVector::zeros(p), |acc, s| acc + s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    /// Full parameter vector, frozen coordinates included.
    pub beta_hat: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub at_boundary: bool,
    /// `-(1/m) Σ ∂²_β log g_β(Y_i)` over the free coordinates.
    pub observed_info: DMatrix<f64>,
}

/// Maximizes `Σ log g_β(Y_i)` over the parameter box.
pub fn fit_mle(family: &ParametricProposal, sample: &[f64]) -> Result<MleResult> {
    family.validate()?;
    check_sample(sample, family.region, 1)?;
    let free = family.free();
    let p = free.len();
    let objective = |x: &[f64]| -> f64 {
        let mut beta = family.initial.clone();
        for (a, &i) in free.iter().enumerate() {
            beta[i] = x[a];
        }
        for (i, b) in beta.iter_mut().enumerate() {
            if !free.contains(&i) {
                *b = family.lower[i];
            }
        }
        family.loglik(&beta, sample).unwrap_or(f64::NEG_INFINITY)
    };
    let lower: Vec<f64> = free.iter().map(|&i| family.lower[i]).collect();
    let upper: Vec<f64> = free.iter().map(|&i| family.upper[i]).collect();
    let start: Vec<f64> = free.iter().map(|&i| family.initial[i]).collect();

    let (mut x, converged) = match p {
        0 => (Vec::new(), true),
        1 => {
            let tol = 1e-10 * (upper[0] - lower[0]).max(1.0);
            let m = golden_section_max(|t| objective(&[t]), lower[0], upper[0], tol, 500);
            (m.x, m.converged)
        }
        _ => {
            let m = nelder_mead_box(&objective, &start, &lower, &upper, 1e-13, 4000 * p);
            (m.x, m.converged)
        }
    };
    let assemble = |x: &[f64]| -> Vec<f64> {
        let mut beta: Vec<f64> = family.lower.clone();
        for (a, &i) in free.iter().enumerate() {
            beta[i] = x[a];
        }
        beta
    };

    // Newton polish with analytic derivatives, kept inside the box.
    if p > 0 && family.grad_mode == GradMode::Analytic {
        let mut current = objective(&x);
        for _ in 0..20 {
            let der = family.derivatives(&assemble(&x), sample)?;
            let grad = der.score_sum();
            let hess = der.mean_hessian.clone() * sample.len() as f64;
            let Some(step) = hess.clone().lu().solve(&grad) else { break };
            let candidate: Vec<f64> = (0..p).map(|a| (x[a] - step[a]).clamp(lower[a], upper[a])).collect();
            let value = objective(&candidate);
            if !(value >= current) {
                break;
            }
            let moved = (0..p).map(|a| (candidate[a] - x[a]).abs()).fold(0.0, f64::max);
            x = candidate;
            current = value;
            if moved < 1e-14 {
                break;
            }
        }
    }

    let beta_hat = assemble(&x);
    let loglik = family.loglik(&beta_hat, sample)?;
    if !loglik.is_finite() {
        return Err(Error::NonFiniteLogLik(beta_hat));
    }
    if !converged {
        return Err(Error::OptimizationFailure(format!("no convergence from {:?}", family.initial)));
    }
    let observed_info = -family.derivatives(&beta_hat, sample)?.mean_hessian;
    Ok(MleResult { at_boundary: family.near_boundary(&beta_hat), beta_hat, loglik, converged, observed_info })
}

/// Mean over each sample of `∂_β S₀,β(x)` at `beta`, by central differences
/// through the proposal normalizer and `‖S_β‖`. `build` maps a full
/// parameter vector to the proposal density.
pub(crate) fn mean_score_zero_gradients<B>(
    signal: &DensityModel,
    build: B,
    beta: &[f64],
    coords: &[(usize, f64)],
    samples: &[&[f64]],
    quad: QuadratureSpec,
) -> Result<Vec<DVector<f64>>>
where
    B: Fn(&[f64]) -> Result<DensityModel>,
{
    let p = coords.len();
    let mut out = vec![DVector::<f64>::zeros(p); samples.len()];
    for (a, &(i, h)) in coords.iter().enumerate() {
        let mut up = beta.to_vec();
        up[i] += h;
        let mut down = beta.to_vec();
        down[i] -= h;
        let geo_up = score_geometry(signal, &build(&up)?, quad)?;
        let geo_down = score_geometry(signal, &build(&down)?, quad)?;
        for (s, sample) in samples.iter().enumerate() {
            let total: f64 = sample.iter().map(|&x| geo_up.score_zero(x) - geo_down.score_zero(x)).sum();
            out[s][a] = total / (2.0 * h * sample.len() as f64);
        }
    }
    Ok(out)
}

/// Sample-average ingredients of the Z2 variance, evaluated at `β̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMethodPieces {
    pub a_hat: f64,
    pub b_hat: f64,
    pub gamma_hat: DVector<f64>,
    pub j_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub c_hat: DVector<f64>,
    pub sigma2_theta: f64,
    pub sigma2_delta: f64,
}

/// Inverts a small information matrix, rejecting near-singular ones.
pub(crate) fn invert_information(j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if j.nrows() == 0 {
        return Ok(j.clone());
    }
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || !(min / max > 1e-10) {
        return Err(Error::SingularInformation);
    }
    j.clone().try_inverse().ok_or(Error::SingularInformation)
}

impl DeltaMethodPieces {
    /// `σ̂²_{β̂,η}` for sample sizes `n` (physics) and `m` (background).
    pub fn sigma2_eta(&self, n: usize, m: usize) -> Result<f64> {
        let (nf, mf) = (n as f64, m as f64);
        let j_inv = invert_information(&self.j_hat)?;
        let jg = &j_inv * &self.gamma_hat;
        let sandwich = jg.dot(&(&self.v_hat * &jg));
        let cross = 2.0 * self.b_hat * jg.dot(&self.c_hat);
        Ok(mf / (mf + nf) * self.a_hat.powi(2) * self.sigma2_theta
            + nf / (mf + nf) * (self.b_hat.powi(2) * self.sigma2_delta + sandwich + cross))
    }
}

/// Builds `Â, B̂, Γ̂, Ĵ, V̂, Ĉ, σ̂²_θ, σ̂²_δ` at `beta_hat`.
pub fn delta_method_pieces(
    family: &ParametricProposal,
    beta_hat: &[f64],
    geometry: &ScoreGeometry,
    physics: &[f64],
    background_only: &[f64],
) -> Result<DeltaMethodPieces> {
    family.validate()?;
    let region = family.region;
    check_sample(physics, region, 1)?;
    check_sample(background_only, region, 1)?;
    let s = geometry.s_norm();
    let (theta, sigma2_theta, _) = mean_and_var(physics.iter().map(|&x| geometry.score_dagger(x)));
    let (delta, sigma2_delta, _) = mean_and_var(background_only.iter().map(|&y| geometry.score_dagger(y)));
    let a_hat = 1.0 / (s - delta);
    let b_hat = (theta - s) / (s - delta).powi(2);

    let free = family.free();
    let coords: Vec<(usize, f64)> = free.iter().map(|&i| (i, family.step(beta_hat, i))).collect();
    let grads = mean_score_zero_gradients(
        geometry.signal(),
        |b| family.density(b),
        beta_hat,
        &coords,
        &[physics, background_only],
        family.quad,
    )?;
    let (theta0, delta0) = (theta / s, delta / s);
    let gamma_hat = &grads[0] / (1.0 - delta0) + &grads[1] * ((theta0 - 1.0) / (1.0 - delta0).powi(2));

    let der = family.derivatives(beta_hat, background_only)?;
    let p = free.len();
    let m = background_only.len() as f64;
    let j_hat = -der.mean_hessian.clone();
    let mut v_hat = DMatrix::<f64>::zeros(p, p);
    let mut c_hat = DVector::<f64>::zeros(p);
    for (score, &y) in der.scores.iter().zip(background_only) {
        v_hat += score * score.transpose();
        c_hat += score * geometry.score_dagger(y);
    }
    v_hat /= m;
    c_hat /= m;
    Ok(DeltaMethodPieces { a_hat, b_hat, gamma_hat, j_hat, v_hat, c_hat, sigma2_theta, sigma2_delta })
}

/// Z2: `√(mn/(m+n)) η̂_β̂ / σ̂_{β̂,η}`.
pub fn test_z2(pieces: &DeltaMethodPieces, estimate: &TwoSampleEstimate, level: f64) -> Result<InferenceReport> {
    let sigma2 = pieces.sigma2_eta(estimate.n, estimate.m)?;
    z_report(Method::Z2, estimate.eta_hat, sigma2, estimate.effective_size(), level)
}

/// Everything produced by a Z2 analysis.
#[derive(Debug, Clone)]
pub struct Z2Analysis {
    pub mle: MleResult,
    pub geometry: ScoreGeometry,
    pub estimate: TwoSampleEstimate,
    pub pieces: DeltaMethodPieces,
    pub report: InferenceReport,
}

/// Fit on the background-only sample, then estimate and test with `g_β̂`.
pub fn analyze_z2(
    signal: &DensityModel,
    family: &ParametricProposal,
    physics: &[f64],
    background_only: &[f64],
    level: f64,
) -> Result<Z2Analysis> {
    let mle = fit_mle(family, background_only)?;
    let proposal = family.density(&mle.beta_hat)?;
    let geometry = score_geometry(signal, &proposal, family.quad)?;
    let estimate = crate::compensator::estimate_two_sample(&geometry, physics, background_only)?;
    let pieces = delta_method_pieces(family, &mle.beta_hat, &geometry, physics, background_only)?;
    let report = test_z2(&pieces, &estimate, level)?;
    Ok(Z2Analysis { mle, geometry, estimate, pieces, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensator::{estimate_two_sample, test_z1};
    use crate::density::{normalize, presets};
    use crate::optim::bisect;
    use approx::assert_relative_eq;

    fn pareto(lo: f64, hi: f64, init: f64) -> ParametricProposal {
        ParametricProposal::new(ProposalFamily::Pareto1, presets::unit_interval(), vec![lo], vec![hi], vec![init]).unwrap()
    }

    #[test]
    fn pareto_two_point_fit_matches_score_root() {
        // Score of Σ log g_β: -Σ ln y - m d/dβ ln Z(β), Z(β) = (1 - 2^-β)/β.
        let ys = [1.2f64, 1.5];
        let score = |b: f64| {
            let dlnz = (2f64.powf(-b) * 2f64.ln()) / (1.0 - 2f64.powf(-b)) - 1.0 / b;
            -ys.iter().map(|y| y.ln()).sum::<f64>() - ys.len() as f64 * dlnz
        };
        let oracle = bisect(score, 0.01, 10.0, 1e-13, 200).unwrap();
        assert_relative_eq!(oracle, 1.334_412_168_619_86, epsilon = 1e-10);
        let fit = fit_mle(&pareto(-5.0, 10.0, 1.0), &ys).unwrap();
        assert_relative_eq!(fit.beta_hat[0], oracle, epsilon = 1e-8);
        assert!(!fit.at_boundary && fit.converged);
    }

    #[test]
    fn analytic_and_fd_agree_for_pareto() {
        let fam = pareto(0.0, 10.0, 2.0);
        let ys = [1.05, 1.3, 1.7, 1.99];
        let a = fam.derivatives(&[2.0], &ys).unwrap();
        let f = fam.clone().with_grad_mode(GradMode::CentralFd).derivatives(&[2.0], &ys).unwrap();
        for (sa, sf) in a.scores.iter().zip(&f.scores) {
            assert!((sa[0] - sf[0]).abs() < 1e-6);
        }
        assert!((a.mean_hessian[(0, 0)] - f.mean_hessian[(0, 0)]).abs() < 1e-6);
    }

    #[test]
    fn analytic_and_fd_agree_for_two_parameter_gamma() {
        let fam = ParametricProposal::new(
            ProposalFamily::TruncatedGamma,
            presets::unit_interval(),
            vec![0.1, 0.1],
            vec![5.0, 10.0],
            vec![0.5, 3.3],
        )
        .unwrap();
        let ys = [1.05, 1.3, 1.7];
        let a = fam.derivatives(&[0.5, 3.3], &ys).unwrap();
        let f = fam.clone().with_grad_mode(GradMode::CentralFd).derivatives(&[0.5, 3.3], &ys).unwrap();
        assert!((a.mean_hessian.clone() - f.mean_hessian.clone()).amax() < 1e-5);
        assert!((a.mean_hessian.clone() - a.mean_hessian.transpose()).amax() < 1e-15);
    }

    #[test]
    fn gamma_fit_recovers_parameters() {
        let truth = presets::gamma_background().unwrap();
        let ys = truth.sample_seeded(20_000, 11).unwrap();
        let fam = ParametricProposal::new(
            ProposalFamily::TruncatedGamma,
            presets::unit_interval(),
            vec![0.05, 0.0],
            vec![5.0, 10.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let fit = fit_mle(&fam, &ys).unwrap();
        let cov = fit.observed_info.clone().try_inverse().unwrap() / ys.len() as f64;
        for (k, truth) in [0.5, 3.3].into_iter().enumerate() {
            let se = cov[(k, k)].sqrt();
            assert!((fit.beta_hat[k] - truth).abs() < 4.0 * se, "coord {k}: {} ± {se}", fit.beta_hat[k]);
        }
        let der = fam.derivatives(&fit.beta_hat, &ys).unwrap();
        assert!(der.score_sum().amax() <= 1e-6 * ys.len() as f64);
    }

    #[test]
    fn self_consistent_fit() {
        let fam = pareto(0.0, 10.0, 1.0);
        let ys = presets::power_law(3.0).unwrap().sample_seeded(100_000, 5).unwrap();
        let fit = fit_mle(&fam, &ys).unwrap();
        let se = (1.0 / (fit.observed_info[(0, 0)] * ys.len() as f64)).sqrt();
        assert!((fit.beta_hat[0] - 3.0).abs() < 3.0 * se);
        let der = fam.derivatives(&fit.beta_hat, &ys).unwrap();
        assert!(der.score_sum().amax() <= 1e-6 * ys.len() as f64);
    }

    #[test]
    fn boundary_fit_is_flagged() {
        // Data piled near x = 1 push the index to the upper bound.
        let fam = pareto(0.0, 2.0, 1.0);
        let fit = fit_mle(&fam, &[1.0, 1.001, 1.002]).unwrap();
        assert!(fit.at_boundary);
        assert_relative_eq!(fit.beta_hat[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_step_validation() {
        assert!(matches!(pareto(0.0, 5.0, 1.0).with_fd_step(0.0), Err(Error::FdStepInvalid(_))));
        assert!(ParametricProposal::new(ProposalFamily::Pareto1, presets::unit_interval(), vec![2.0], vec![1.0], vec![1.5])
            .is_err());
    }

    #[test]
    fn frozen_family_reduces_to_z1() {
        let fs = presets::bump_signal().unwrap();
        let fam = ParametricProposal::frozen(ProposalFamily::Pareto1, presets::unit_interval(), vec![2.0]).unwrap();
        let fb = presets::gamma_background().unwrap();
        let truth = DensityModel::signal_plus_background(&fs, &fb, 0.02).unwrap();
        let xs = truth.sample_seeded(800, 1).unwrap();
        let ys = fb.sample_seeded(1600, 2).unwrap();
        let z2 = analyze_z2(&fs, &fam, &xs, &ys, 0.05).unwrap();
        assert!(z2.pieces.gamma_hat.is_empty());
        let geo = score_geometry(&fs, &presets::power_law(2.0).unwrap(), QuadratureSpec::default()).unwrap();
        let z1 = test_z1(&estimate_two_sample(&geo, &xs, &ys).unwrap(), 0.05).unwrap();
        assert!((z1.statistic - z2.report.statistic).abs() < 1e-10);
    }

    /// Brute-force re-implementation of every sample average for an
    /// exponential family on [0, 1] with a linear signal, using closed-form
    /// normalizers, Simpson integrals and finite differences.
    #[test]
    fn pieces_match_brute_force_oracle() {
        let region = SearchRegion::new(0.0, 1.0).unwrap();
        let fs = normalize(|x| 2.0 * x, region, QuadratureSpec::default()).unwrap();
        let fam = ParametricProposal::new(ProposalFamily::ExponentialLogscale, region, vec![-3.0], vec![3.0], vec![0.5])
            .unwrap();
        let xs = [0.2, 0.55, 0.9];
        let ys = [0.1, 0.35, 0.6];
        let psi = 0.7;
        let geo = score_geometry(&fs, &fam.density(&[psi]).unwrap(), QuadratureSpec::default()).unwrap();
        let pieces = delta_method_pieces(&fam, &[psi], &geo, &xs, &ys).unwrap();

        let simpson = |f: &dyn Fn(f64) -> f64| {
            let k = 20_000;
            let h = 1.0 / k as f64;
            let mut acc = f(0.0) + f(1.0);
            for i in 1..k {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(h * i as f64);
            }
            acc * h / 3.0
        };
        let g = |p: f64, x: f64| p * (-p * x).exp() / (1.0 - (-p).exp());
        let snorm = |p: f64| simpson(&|x| (2.0 * x - g(p, x)).powi(2) / g(p, x)).sqrt();
        let s0 = |p: f64, x: f64| (2.0 * x / g(p, x) - 1.0) / snorm(p).powi(2);
        let sd = |p: f64, x: f64| (2.0 * x / g(p, x) - 1.0) / snorm(p);
        let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64;
        let h = 1e-5;
        let dlog = |x: f64| (g(psi + h, x).ln() - g(psi - h, x).ln()) / (2.0 * h);
        let d2log = |x: f64| (g(psi + h, x).ln() - 2.0 * g(psi, x).ln() + g(psi - h, x).ln()) / (h * h);

        let s = snorm(psi);
        let theta = mean(&xs, &|x| sd(psi, x));
        let delta = mean(&ys, &|x| sd(psi, x));
        let a = 1.0 / (s - delta);
        let b = (theta - s) / (s - delta).powi(2);
        let ds0x = mean(&xs, &|x| (s0(psi + h, x) - s0(psi - h, x)) / (2.0 * h));
        let ds0y = mean(&ys, &|x| (s0(psi + h, x) - s0(psi - h, x)) / (2.0 * h));
        let (t0, d0) = (theta / s, delta / s);
        let gamma = ds0x / (1.0 - d0) + (t0 - 1.0) / (1.0 - d0).powi(2) * ds0y;
        let j = -mean(&ys, &d2log);
        let v = mean(&ys, &|y| dlog(y).powi(2));
        let c = mean(&ys, &|y| sd(psi, y) * dlog(y));
        let s2t = mean(&xs, &|x| sd(psi, x).powi(2)) - theta * theta;
        let s2d = mean(&ys, &|y| sd(psi, y).powi(2)) - delta * delta;

        let tol = 1e-6;
        assert!((pieces.a_hat - a).abs() < tol);
        assert!((pieces.b_hat - b).abs() < tol);
        assert!((pieces.gamma_hat[0] - gamma).abs() < tol, "{} vs {gamma}", pieces.gamma_hat[0]);
        assert!((pieces.j_hat[(0, 0)] - j).abs() < tol, "{} vs {j}", pieces.j_hat[(0, 0)]);
        assert!((pieces.v_hat[(0, 0)] - v).abs() < tol);
        assert!((pieces.c_hat[0] - c).abs() < tol);
        assert!((pieces.sigma2_theta - s2t).abs() < tol);
        assert!((pieces.sigma2_delta - s2d).abs() < tol);
    }

    #[test]
    fn zero_estimate_gives_half_p_value() {
        let pieces = DeltaMethodPieces {
            a_hat: 1.0,
            b_hat: -1.0,
            gamma_hat: DVector::from_vec(vec![0.1]),
            j_hat: DMatrix::from_element(1, 1, 2.0),
            v_hat: DMatrix::from_element(1, 1, 2.0),
            c_hat: DVector::from_vec(vec![0.0]),
            sigma2_theta: 1.0,
            sigma2_delta: 1.0,
        };
        let est = TwoSampleEstimate {
            theta_hat: 0.0,
            delta_hat: 0.0,
            eta_hat: 0.0,
            sigma2_theta: 1.0,
            sigma2_delta: 1.0,
            sigma2_eta: 1.0,
            pi_hat: 0.5,
            n: 100,
            m: 100,
            s_norm: 1.0,
            denominator_flipped: false,
        };
        let r = test_z2(&pieces, &est, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_relative_eq!(r.p_value, 0.5, epsilon = 1e-15);
        let singular = DeltaMethodPieces { j_hat: DMatrix::zeros(1, 1), ..pieces };
        assert!(matches!(test_z2(&singular, &est, 0.05), Err(Error::SingularInformation)));
    }
}
