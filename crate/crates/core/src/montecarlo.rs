//! Seeded replicate campaigns for calibration and power studies.
//!
//! Replicate `i` of a campaign draws from the ChaCha8 stream `i` of the
//! campaign seed, so results do not depend on scheduling or worker count,
//! and campaigns sharing a seed see the same physics samples.

use std::collections::BTreeMap;
use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compensator::{estimate_two_sample, score_geometry, test_z1, Method, ScoreGeometry};
use crate::density::{BumpParams, DensityModel};
use crate::error::{Error, Result};
use crate::lrt::{chi2bar01_quantile, fit_lrt_scores};
use crate::nobkg::{estimate_theta0, test_z3};
use crate::parametric::{analyze_z2, ParametricProposal};

/// Probabilities at which statistic quantiles are reported.
pub const REPORTED_QUANTILES: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 0.999];

/// Method-specific inputs.
#[derive(Debug, Clone)]
pub enum MethodConfig {
    /// Fixed proposal background.
    Z1 { proposal: DensityModel },
    /// Parametric proposal fitted on the background-only sample.
    Z2 { family: ParametricProposal },
    /// Baseline family fitted on the physics sample plus a bump of weight `lambda`.
    Z3 { q_family: ParametricProposal, lambda: f64, bump: BumpParams },
    /// Likelihood ratio under the working background `g_tilde`.
    Lrt { g_tilde: DensityModel },
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Z1 { .. } => Method::Z1,
            MethodConfig::Z2 { .. } => Method::Z2,
            MethodConfig::Z3 { .. } => Method::Z3,
            MethodConfig::Lrt { .. } => Method::Lrt,
        }
    }

    fn lambda(&self) -> Option<f64> {
        match self {
            MethodConfig::Z3 { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }
}

/// One simulation design: truth `η f_s + (1 - η) f_b`, sample sizes and method.
#[derive(Debug, Clone)]
pub struct McScenario {
    pub label: String,
    pub signal: DensityModel,
    pub background: DensityModel,
    pub eta: f64,
    pub n: usize,
    pub m: Option<usize>,
    pub method: MethodConfig,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl McScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidScenario(format!("{}: {msg}", self.label)));
        if self.replicates < 1 {
            return bad("replicates must be at least 1");
        }
        if !(0.0..1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1)");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)");
        }
        if self.n < 1 {
            return bad("n must be positive");
        }
        if matches!(self.method, MethodConfig::Z1 { .. } | MethodConfig::Z2 { .. }) && self.m.is_none() {
            return bad("Z1 and Z2 need a background-only sample size m");
        }
        if self.signal.region() != self.background.region() {
            return bad("signal and background regions differ");
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<DensityModel> {
        DensityModel::signal_plus_background(&self.signal, &self.background, self.eta)
    }
}

/// Per-replicate result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub estimate: f64,
    /// Plug-in variance of the estimate (squared standard error); NaN for the LRT.
    pub plugin_variance: f64,
    pub statistic: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub replicates: usize,
    pub successes: usize,
    pub failures: usize,
    /// Error code → count over failed replicates.
    pub failure_codes: BTreeMap<String, usize>,
    pub rejection_rate: f64,
    pub mc_se: f64,
    pub mean_estimate: f64,
    pub var_estimate: f64,
    pub mean_plugin_variance: f64,
    pub statistic_quantiles: Vec<QuantilePoint>,
    /// Statistic of every successful replicate, in replicate order.
    #[serde(skip)]
    pub statistics: Vec<f64>,
    /// Estimate of every successful replicate, in replicate order.
    #[serde(skip)]
    pub estimates: Vec<f64>,
}

impl McSummary {
    /// Share of successful replicates whose statistic exceeds `threshold`.
    pub fn exceedance(&self, threshold: f64) -> f64 {
        self.statistics.iter().filter(|&&s| s > threshold).count() as f64 / self.successes.max(1) as f64
    }
}

/// Objects shared by every replicate of a campaign.
enum Prepared {
    Z1(ScoreGeometry),
    Z2 { signal: DensityModel, family: ParametricProposal },
    Z3 { signal: DensityModel, q_family: ParametricProposal, lambda: f64, bump: BumpParams },
    Lrt { signal: DensityModel, g_tilde: DensityModel, critical: f64 },
}

fn prepare(scenario: &McScenario) -> Result<Prepared> {
    Ok(match &scenario.method {
        MethodConfig::Z1 { proposal } => {
            Prepared::Z1(score_geometry(&scenario.signal, proposal, scenario.signal.quadrature())?)
        }
        MethodConfig::Z2 { family } => Prepared::Z2 { signal: scenario.signal.clone(), family: family.clone() },
        MethodConfig::Z3 { q_family, lambda, bump } => Prepared::Z3 {
            signal: scenario.signal.clone(),
            q_family: q_family.clone(),
            lambda: *lambda,
            bump: *bump,
        },
        MethodConfig::Lrt { g_tilde } => Prepared::Lrt {
            signal: scenario.signal.clone(),
            g_tilde: g_tilde.clone(),
            critical: chi2bar01_quantile(1.0 - scenario.level)?,
        },
    })
}

/// Independent stream for replicate `index`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_one(scenario: &McScenario, generator: &DensityModel, prepared: &Prepared, index: u64) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(scenario.seed, index);
    let physics = generator.sample(scenario.n, &mut rng)?;
    let background = match scenario.m {
        Some(m) => scenario.background.sample(m, &mut rng)?,
        None => Vec::new(),
    };
    let level = scenario.level;
    let report = match prepared {
        Prepared::Z1(geometry) => test_z1(&estimate_two_sample(geometry, &physics, &background)?, level)?,
        Prepared::Z2 { signal, family } => analyze_z2(signal, family, &physics, &background, level)?.report,
        Prepared::Z3 { signal, q_family, lambda, bump } => {
            test_z3(&estimate_theta0(signal, q_family, *lambda, *bump, &physics)?, level)?
        }
        Prepared::Lrt { signal, g_tilde, critical } => {
            let scores = crate::lrt::tilde_scores(signal, g_tilde, &physics)?;
            let base: f64 = physics.iter().map(|&x| g_tilde.ln_pdf(x)).sum();
            let fit = fit_lrt_scores(&scores, base)?;
            return Ok(ReplicateOutcome {
                estimate: fit.eta_tilde_hat,
                plugin_variance: f64::NAN,
                statistic: fit.lrt_stat,
                reject: fit.lrt_stat > *critical,
            });
        }
    };
    Ok(ReplicateOutcome {
        estimate: report.estimate,
        plugin_variance: report.std_error * report.std_error,
        statistic: report.statistic,
        reject: report.rejects(),
    })
}

/// Runs replicates `range` of a scenario in index order on the current thread pool.
pub fn run_replicates(scenario: &McScenario, range: std::ops::Range<usize>) -> Result<Vec<Result<ReplicateOutcome>>> {
    scenario.validate()?;
    let generator = scenario.generator()?;
    let prepared = prepare(scenario)?;
    Ok(range
        .into_par_iter()
        .map(|i| run_one(scenario, &generator, &prepared, i as u64))
        .collect())
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    // Type-7 linear interpolation.
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregates outcomes in replicate order.
pub fn summarize(outcomes: &[Result<ReplicateOutcome>]) -> Result<McSummary> {
    let replicates = outcomes.len();
    let mut failure_codes = BTreeMap::new();
    let mut statistics = Vec::with_capacity(replicates);
    let mut estimates = Vec::with_capacity(replicates);
    let mut rejections = 0usize;
    let mut plugin_sum = 0.0;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                statistics.push(o.statistic);
                estimates.push(o.estimate);
                plugin_sum += o.plugin_variance;
                rejections += o.reject as usize;
            }
            Err(e) => *failure_codes.entry(e.code().to_string()).or_insert(0) += 1,
        }
    }
    let successes = statistics.len();
    let failures = replicates - successes;
    if 2 * failures > replicates {
        return Err(Error::CampaignDegenerate { failures, replicates });
    }
    let r = successes as f64;
    let rejection_rate = rejections as f64 / r;
    let mean_estimate = estimates.iter().sum::<f64>() / r;
    let var_estimate = if successes > 1 {
        estimates.iter().map(|e| (e - mean_estimate).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    let mut sorted = statistics.clone();
    sorted.sort_by(f64::total_cmp);
    let statistic_quantiles =
        REPORTED_QUANTILES.iter().map(|&p| QuantilePoint { p, value: empirical_quantile(&sorted, p) }).collect();
    Ok(McSummary {
        replicates,
        successes,
        failures,
        failure_codes,
        rejection_rate,
        mc_se: (rejection_rate * (1.0 - rejection_rate) / r).sqrt(),
        mean_estimate,
        var_estimate,
        mean_plugin_variance: plugin_sum / r,
        statistic_quantiles,
        statistics,
        estimates,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidScenario(format!("thread pool: {e}")))
}

/// Runs every replicate of `scenario` on `workers` threads.
pub fn run_campaign(scenario: &McScenario, workers: usize) -> Result<McSummary> {
    let outcomes = pool(workers)?.install(|| run_replicates(scenario, 0..scenario.replicates))?;
    summarize(&outcomes)
}

/// One table row: scenario description plus its summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub label: String,
    pub method: Method,
    pub n: usize,
    pub m: Option<usize>,
    pub eta: f64,
    pub lambda: Option<f64>,
    pub level: f64,
    pub seed: u64,
    pub summary: McSummary,
}

/// Runs each scenario in turn; replicates within a scenario run in parallel.
pub fn run_grid(scenarios: &[McScenario], workers: usize) -> Result<Vec<GridRow>> {
    let pool = pool(workers)?;
    scenarios
        .iter()
        .map(|s| {
            let outcomes = pool.install(|| run_replicates(s, 0..s.replicates))?;
            Ok(GridRow {
                label: s.label.clone(),
                method: s.method.method(),
                n: s.n,
                m: s.m,
                eta: s.eta,
                lambda: s.method.lambda(),
                level: s.level,
                seed: s.seed,
                summary: summarize(&outcomes)?,
            })
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes grid rows as comma-separated values with a header.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], mut out: W) -> Result<()> {
    write!(
        out,
        "label,method,n,m,eta,lambda,level,seed,replicates,successes,failures,rejection_rate,mc_se,mean_estimate,var_estimate,mean_plugin_variance"
    )?;
    for q in REPORTED_QUANTILES {
        write!(out, ",q{q}")?;
    }
    writeln!(out)?;
    for row in rows {
        let s = &row.summary;
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            row.label,
            row.method,
            row.n,
            opt(row.m),
            row.eta,
            opt(row.lambda),
            row.level,
            row.seed,
            s.replicates,
            s.successes,
            s.failures,
            s.rejection_rate,
            s.mc_se,
            s.mean_estimate,
            s.var_estimate,
            s.mean_plugin_variance
        )?;
        for q in &s.statistic_quantiles {
            write!(out, ",{:.12e}", q.value)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes one statistic per line.
pub fn write_statistics<W: Write>(values: &[f64], mut out: W) -> Result<()> {
    for v in values {
        writeln!(out, "{v:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::presets;
    use rand::Rng;

    fn z1_null(replicates: usize, seed: u64) -> McScenario {
        McScenario {
            label: "z1-null".into(),
            signal: presets::bump_signal().unwrap(),
            background: presets::gamma_background().unwrap(),
            eta: 0.0,
            n: 200,
            m: Some(400),
            method: MethodConfig::Z1 { proposal: DensityModel::uniform(presets::unit_interval()) },
            replicates,
            level: 0.05,
            seed,
        }
    }

    #[test]
    fn single_replicate_matches_direct_analysis() {
        let sc = z1_null(1, 17);
        let summary = run_campaign(&sc, 1).unwrap();
        let mut rng = replicate_rng(17, 0);
        let gen = sc.generator().unwrap();
        let xs = gen.sample(sc.n, &mut rng).unwrap();
        let ys = sc.background.sample(400, &mut rng).unwrap();
        let geo = score_geometry(&sc.signal, &DensityModel::uniform(presets::unit_interval()), Default::default()).unwrap();
        let rep = test_z1(&estimate_two_sample(&geo, &xs, &ys).unwrap(), 0.05).unwrap();
        assert_eq!(summary.rejection_rate, if rep.rejects() { 1.0 } else { 0.0 });
        assert_eq!(summary.statistics, vec![rep.statistic]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let sc = z1_null(40, 5);
        let a = run_campaign(&sc, 1).unwrap();
        let b = run_campaign(&sc, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.statistics, b.statistics);
    }

    #[test]
    fn streams_do_not_collide() {
        // 1000 streams x 1000 draws of u64: any repeat would signal overlap.
        let mut seen = std::collections::HashSet::with_capacity(1_000_000);
        for i in 0..1000u64 {
            let mut rng = replicate_rng(99, i);
            for _ in 0..1000 {
                assert!(seen.insert(rng.random::<u64>()));
            }
        }
    }

    #[test]
    fn scenario_validation() {
        let mut sc = z1_null(10, 1);
        sc.m = None;
        assert!(matches!(run_campaign(&sc, 1), Err(Error::InvalidScenario(_))));
        let mut sc = z1_null(0, 1);
        assert!(run_campaign(&sc, 1).is_err());
        sc.replicates = 5;
        sc.eta = 1.0;
        assert!(run_campaign(&sc, 1).is_err());
    }

    #[test]
    fn failures_are_counted_and_degenerate_campaigns_rejected() {
        let ok = Ok(ReplicateOutcome { estimate: 0.1, plugin_variance: 0.01, statistic: 2.0, reject: true });
        let bad: Result<ReplicateOutcome> = Err(Error::DegenerateDenominator(0.0));
        let s = summarize(&[ok.clone(), bad.clone(), ok.clone()]).unwrap();
        assert_eq!((s.successes, s.failures), (2, 1));
        assert_eq!(s.rejection_rate, 1.0);
        assert_eq!(s.failure_codes["degenerate_denominator"], 1);
        assert!(matches!(summarize(&[ok, bad.clone(), bad]), Err(Error::CampaignDegenerate { .. })));
    }

    #[test]
    fn empty_grid_is_empty() {
        assert!(run_grid(&[], 1).unwrap().is_empty());
    }

    #[test]
    fn grid_csv_has_header_and_rows() {
        let rows = run_grid(&[z1_null(4, 2)], 1).unwrap();
        let mut buf = Vec::new();
        write_grid_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].starts_with("z1-null,Z1,200,400,0,"));
    }
}
