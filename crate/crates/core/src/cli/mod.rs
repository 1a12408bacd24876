//! File-driven front end: reads a JSON config and event files, runs one
//! analysis mode and writes `report.json` plus CSV tables to an output
//! directory.

pub mod config;
pub mod events;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::compensator::{estimate_two_sample, score_geometry, test_z1, InferenceReport};
use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::lrt::{delta_tilde, fit_lrt};
use crate::montecarlo::{run_grid, write_grid_csv, write_statistics, McScenario, MethodConfig};
use crate::nobkg::{estimate_theta0, sensitivity_scan, signal_region, test_z3};
use crate::parametric::analyze_z2;

pub use config::{AnalysisConfig, Mode, Transform};
pub use events::{check_events, convert_table, parse_events, read_events};

/// Inputs of one invocation.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: PathBuf,
    pub physics: Option<PathBuf>,
    pub background: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

/// Report fields common to every test.
#[derive(Debug, Clone, Serialize)]
pub struct ReportOut {
    #[serde(flatten)]
    pub report: InferenceReport,
    /// p-value with four significant digits.
    pub p_value_display: String,
}

impl From<InferenceReport> for ReportOut {
    fn from(report: InferenceReport) -> Self {
        Self { p_value_display: format_p(report.p_value), report }
    }
}

/// Scientific notation with four significant digits.
pub fn format_p(p: f64) -> String {
    format!("{p:.3e}")
}

fn load_sample(path: Option<&PathBuf>, what: &str, cfg: &AnalysisConfig) -> Result<(Vec<f64>, String)> {
    let path = path.ok_or_else(|| Error::ConfigError(format!("mode {:?} needs --{what}", cfg.mode)))?;
    let values = read_events(path, cfg.transform)?;
    check_events(&values, cfg.search_region()?)?;
    Ok((values, path.display().to_string()))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs the configured mode; returns the paths written.
pub fn run(args: &RunArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = AnalysisConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&args.out)?;
    let region = cfg.search_region()?;
    let quad = cfg.quadrature;
    let signal = cfg.signal.build(region, quad)?;
    let mut written = Vec::new();
    let mut inputs = serde_json::Map::new();

    let result = match cfg.mode {
        Mode::WithBackground => {
            let (xs, xp) = load_sample(args.physics.as_ref(), "physics", &cfg)?;
            let (ys, yp) = load_sample(args.background.as_ref(), "background", &cfg)?;
            inputs.insert("physics".into(), json!({ "path": xp, "count": xs.len() }));
            inputs.insert("background".into(), json!({ "path": yp, "count": ys.len() }));
            match cfg.proposal.as_ref().expect("validated") {
                config::ProposalSpec::Fixed { density } => {
                    let g = density.build(region, quad)?;
                    let geometry = score_geometry(&signal, &g, quad)?;
                    let est = estimate_two_sample(&geometry, &xs, &ys)?;
                    let report = test_z1(&est, cfg.level)?;
                    json!({ "report": ReportOut::from(report), "diagnostics": est })
                }
                config::ProposalSpec::Parametric(spec) => {
                    let family = spec.build(region, quad)?;
                    let z2 = analyze_z2(&signal, &family, &xs, &ys, cfg.level)?;
                    json!({
                        "report": ReportOut::from(z2.report),
                        "diagnostics": {
                            "estimate": z2.estimate,
                            "mle": z2.mle,
                            "pieces": z2.pieces,
                        }
                    })
                }
            }
        }
        Mode::NoBackground => {
            let block = cfg.no_background.as_ref().expect("validated");
            let (xs, xp) = load_sample(args.physics.as_ref(), "physics", &cfg)?;
            inputs.insert("physics".into(), json!({ "path": xp, "count": xs.len() }));
            let family = block.q_family.build(region, quad)?;
            let est = estimate_theta0(&signal, &family, block.lambda_star, block.bump, &xs)?;
            let report = test_z3(&est, cfg.level)?;
            let sr = block.epsilon.map(|e| signal_region(&signal, e)).transpose()?;
            json!({ "report": ReportOut::from(report), "diagnostics": est, "signal_region": sr })
        }
        Mode::Lrt => {
            let (xs, xp) = load_sample(args.physics.as_ref(), "physics", &cfg)?;
            inputs.insert("physics".into(), json!({ "path": xp, "count": xs.len() }));
            let Some(config::ProposalSpec::Fixed { density }) = cfg.proposal.as_ref() else {
                unreachable!("validated")
            };
            let g_tilde = density.build(region, quad)?;
            let fit = fit_lrt(&signal, &g_tilde, &xs)?;
            let dt = match cfg.reference_background.as_ref() {
                Some(fb) => Some(delta_tilde(&signal, &g_tilde, &fb.build(region, quad)?, quad)?),
                None => None,
            };
            json!({
                "fit": fit,
                "p_value": fit.p_value(),
                "p_value_display": format_p(fit.p_value()),
                "delta_tilde": dt,
            })
        }
        Mode::Sensitivity => {
            let block = cfg.sensitivity.as_ref().expect("validated");
            let (xs, xp) = load_sample(args.physics.as_ref(), "physics", &cfg)?;
            inputs.insert("physics".into(), json!({ "path": xp, "count": xs.len() }));
            let family = block.q_family.build(region, quad)?;
            let grid = region.grid(block.grid_points);
            let scan = sensitivity_scan(&signal, &family, block.bump, &block.lambdas, &xs, &grid, cfg.level)?;
            written.push(write_curves(&args.out, &scan)?);
            written.push(write_scan_reports(&args.out, &scan)?);
            let rows: Vec<Value> = scan
                .estimates
                .iter()
                .zip(&scan.reports)
                .map(|(e, r)| json!({ "lambda": e.lambda_star, "estimate": e, "report": ReportOut::from(*r) }))
                .collect();
            json!({ "alpha_hat": scan.estimates[0].alpha_hat, "rows": rows })
        }
        Mode::Simulate => {
            let block = cfg.simulate.as_ref().expect("validated");
            let background = block.background.build(region, quad)?;
            let scenarios = block
                .scenarios
                .iter()
                .enumerate()
                .map(|(k, s)| build_scenario(k, s, block, &signal, &background, &cfg))
                .collect::<Result<Vec<_>>>()?;
            let workers = args.workers.unwrap_or(1);
            let rows = run_grid(&scenarios, workers)?;
            let grid_path = args.out.join("grid.csv");
            write_grid_csv(&rows, BufWriter::new(fs::File::create(&grid_path)?))?;
            written.push(grid_path);
            if block.spool_statistics {
                for (k, row) in rows.iter().enumerate() {
                    let p = args.out.join(format!("statistics_{k}.txt"));
                    write_statistics(&row.summary.statistics, BufWriter::new(fs::File::create(&p)?))?;
                    written.push(p);
                }
            }
            json!({ "rows": rows })
        }
    };

    let report = json!({
        "mode": cfg.mode,
        "seed": cfg.seed,
        "inputs": inputs,
        "result": result,
        "config": cfg,
    });
    let path = args.out.join("report.json");
    write_json(&path, &report)?;
    written.insert(0, path);
    Ok(written)
}

fn build_scenario(
    k: usize,
    spec: &config::ScenarioSpec,
    block: &config::SimulateBlock,
    signal: &DensityModel,
    background: &DensityModel,
    cfg: &AnalysisConfig,
) -> Result<McScenario> {
    let region = cfg.search_region()?;
    let quad = cfg.quadrature;
    let method = match &spec.method {
        config::MethodSpec::Z1 { proposal } => MethodConfig::Z1 { proposal: proposal.build(region, quad)? },
        config::MethodSpec::Z2 { family } => MethodConfig::Z2 { family: family.build(region, quad)? },
        config::MethodSpec::Z3 { q_family, lambda, bump } => {
            MethodConfig::Z3 { q_family: q_family.build(region, quad)?, lambda: *lambda, bump: *bump }
        }
        config::MethodSpec::Lrt { g_tilde } => MethodConfig::Lrt { g_tilde: g_tilde.build(region, quad)? },
    };
    Ok(McScenario {
        label: spec.label.clone().unwrap_or_else(|| format!("scenario{k}")),
        signal: signal.clone(),
        background: background.clone(),
        eta: spec.eta,
        n: spec.n,
        m: spec.m,
        method,
        replicates: spec.replicates.unwrap_or(block.replicates),
        level: cfg.level,
        seed: spec.seed.unwrap_or(cfg.seed),
    })
}

fn write_curves(out: &Path, scan: &crate::nobkg::SensitivityGrid) -> Result<PathBuf> {
    let path = out.join("sensitivity_curves.csv");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    write!(w, "x")?;
    for l in &scan.lambdas {
        write!(w, ",lambda_{l}")?;
    }
    writeln!(w)?;
    for (i, x) in scan.x_grid.iter().enumerate() {
        write!(w, "{x}")?;
        for curve in &scan.curves {
            write!(w, ",{}", curve[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(path)
}

fn write_scan_reports(out: &Path, scan: &crate::nobkg::SensitivityGrid) -> Result<PathBuf> {
    let path = out.join("sensitivity_reports.csv");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "lambda,theta0_hat,std_error,z3,p_value")?;
    for (e, r) in scan.estimates.iter().zip(&scan.reports) {
        writeln!(w, "{},{},{},{},{}", e.lambda_star, e.theta0_hat, r.std_error, r.statistic, format_p(r.p_value))?;
    }
    w.flush()?;
    Ok(path)
}

/// Machine-readable error payload for stderr.
pub fn error_json(e: &Error) -> String {
    json!({ "error": e.code(), "message": e.to_string() }).to_string()
}
