use proptest::prelude::*;
use sigdetect::lrt::{chi2bar01_cdf, chi2bar01_quantile, chi2bar01_sf, fit_lrt_scores};
use sigdetect::stats::{norm_cdf, norm_quantile};
use sigdetect::{estimate_two_sample, score_geometry, DensityModel, Kernel, QuadratureSpec, SearchRegion};

fn region() -> SearchRegion {
    SearchRegion::new(1.0, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chi2bar_cdf_is_monotone(a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(chi2bar01_cdf(lo).unwrap() <= chi2bar01_cdf(hi).unwrap());
        prop_assert!((chi2bar01_cdf(hi).unwrap() + chi2bar01_sf(hi) - 1.0).abs() < 1e-12 || hi == 0.0);
    }

    #[test]
    fn chi2bar_quantile_inverts_cdf(p in 0.5001f64..0.9999) {
        let t = chi2bar01_quantile(p).unwrap();
        prop_assert!((chi2bar01_cdf(t).unwrap() - p).abs() < 1e-9);
    }

    #[test]
    fn normal_quantile_round_trip(p in 1e-10f64..(1.0 - 1e-10)) {
        prop_assert!((norm_cdf(norm_quantile(p)) / p - 1.0).abs() < 1e-8);
    }

    /// `η̂` solves `θ̂ = η̂‖S‖ + (1-η̂)δ̂` for any samples.
    #[test]
    fn eta_identity(seed in 0u64..1000, index in 0.5f64..6.0) {
        let quad = QuadratureSpec::default();
        let fs = DensityModel::catalog(Kernel::TruncatedGaussian { mean: 1.4, sd: 0.1 }, region(), quad).unwrap();
        let g = DensityModel::catalog(Kernel::Pareto1 { index }, region(), quad).unwrap();
        let geo = score_geometry(&fs, &g, quad).unwrap();
        let xs = g.sample_seeded(300, seed).unwrap();
        let ys = g.sample_seeded(200, seed + 1).unwrap();
        let e = estimate_two_sample(&geo, &xs, &ys).unwrap();
        let rebuilt = e.eta_hat * e.s_norm + (1.0 - e.eta_hat) * e.delta_hat;
        prop_assert!((rebuilt - e.theta_hat).abs() < 1e-10);
    }

    /// The score is orthogonal to constants under the proposal.
    #[test]
    fn score_has_zero_mean_under_proposal(index in 0.5f64..6.0, mean in 1.1f64..1.9) {
        let quad = QuadratureSpec::default();
        let fs = DensityModel::catalog(Kernel::TruncatedGaussian { mean, sd: 0.05 }, region(), quad).unwrap();
        let g = DensityModel::catalog(Kernel::Pareto1 { index }, region(), quad).unwrap();
        let geo = score_geometry(&fs, &g, quad).unwrap();
        let m = quad.integrate(|x| geo.score(x) * g.pdf(x), 1.0, 2.0).unwrap().value;
        prop_assert!(m.abs() < 1e-8, "mean {m}");
        let norm2 = quad.integrate(|x| geo.score_dagger(x).powi(2) * g.pdf(x), 1.0, 2.0).unwrap().value;
        prop_assert!((norm2 - 1.0).abs() < 1e-6);
    }

    /// The constrained fit is the truncation of the unconstrained one.
    #[test]
    fn lrt_is_truncated_and_nonnegative(scores in prop::collection::vec(-0.9f64..3.0, 5..60)) {
        prop_assume!(scores.iter().any(|s| s.abs() > 1e-3));
        let fit = fit_lrt_scores(&scores, 0.0).unwrap();
        prop_assert!((fit.eta_tilde_hat_c - fit.eta_tilde_hat.max(0.0)).abs() < 1e-9);
        prop_assert!(fit.lrt_stat >= 0.0);
        prop_assert!(fit.p_value() > 0.0 && fit.p_value() <= 1.0);
    }
}
