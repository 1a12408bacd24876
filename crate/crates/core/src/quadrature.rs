//! One-dimensional quadrature on compact intervals.
//!
//! The adaptive rule is a Gauss–Kronrod (10/21 point) bisection scheme that
//! always splits the panel with the largest error estimate. The fixed rule
//! applies the same 21-point formula on equal panels.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Abscissae of the 21-point Kronrod rule; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_059,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_114,
    0.562_757_134_668_604_683_339_000_099_272,
    0.433_395_394_129_247_190_799_265_943_165,
    0.294_392_862_701_460_198_131_126_603_103,
    0.148_874_338_981_631_210_884_826_001_129,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_244,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_325,
    0.123_491_976_262_065_851_077_600_525_706,
    0.134_709_217_311_473_325_928_054_001_771,
    0.142_775_938_577_060_080_797_094_273_138,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_389,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_657,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Adaptive,
    FixedComposite,
}

/// Tolerances and rule used for every integral over the search region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::Adaptive,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 200,
        }
    }
}

/// Value of an integral together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Applies the 21-point Kronrod rule on `[a, b]`, returning the Kronrod value
/// and `|K - G|` against the embedded Gauss rule.
fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = eval(f, center)?;
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let s = eval(f, center - dx)? + eval(f, center + dx)?;
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

#[inline]
fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let y = f(x);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::NonFiniteKernel { x })
    }
}

/// 10-point Gauss–Legendre rule on `[a, b]`; no error estimate.
pub fn gauss_legendre10<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (k, w) in WG.iter().enumerate() {
        let dx = half * XGK[2 * k + 1];
        acc += w * (f(center - dx) + f(center + dx));
    }
    acc * half
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) || self.max_subdivisions < 1 {
            return Err(Error::InvalidQuadrature(format!(
                "abs_tol={}, rel_tol={}, max_subdivisions={}",
                self.abs_tol, self.rel_tol, self.max_subdivisions
            )));
        }
        Ok(())
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        self.validate()?;
        if a == b {
            return Ok(Integral { value: 0.0, error: 0.0, evaluations: 0 });
        }
        match self.rule {
            QuadratureRule::Adaptive => self.adaptive(&f, a, b),
            QuadratureRule::FixedComposite => self.composite(&f, a, b),
        }
    }

    fn composite<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> Result<Integral> {
        let panels = self.max_subdivisions;
        let h = (b - a) / panels as f64;
        let mut value = 0.0;
        let mut error = 0.0;
        for k in 0..panels {
            let lo = a + h * k as f64;
            let hi = if k + 1 == panels { b } else { lo + h };
            let (v, e) = kronrod21(f, lo, hi)?;
            value += v;
            error += e;
        }
        let evaluations = 21 * panels;
        if error > self.target(value) {
            return Err(Error::QuadratureFailure { subdivisions: panels, error });
        }
        Ok(Integral { value, error, evaluations })
    }

    fn adaptive<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> Result<Integral> {
        let (v0, e0) = kronrod21(f, a, b)?;
        let mut heap = BinaryHeap::new();
        heap.push(Panel { a, b, value: v0, error: e0 });
        let mut value = v0;
        let mut error = e0;
        let mut evaluations = 21;
        let mut subdivisions = 1;
        loop {
            if error <= self.target(value) || error <= 50.0 * f64::EPSILON * value.abs() {
                return Ok(Integral { value, error, evaluations });
            }
            if subdivisions >= self.max_subdivisions {
                return Err(Error::QuadratureFailure { subdivisions, error });
            }
            let worst = heap.pop().expect("heap holds at least one panel");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Panel collapsed to floating-point resolution.
                return Err(Error::QuadratureFailure { subdivisions, error });
            }
            let (vl, el) = kronrod21(f, worst.a, mid)?;
            let (vr, er) = kronrod21(f, mid, worst.b)?;
            evaluations += 42;
            subdivisions += 1;
            value += vl + vr - worst.value;
            error += el + er - worst.error;
            heap.push(Panel { a: worst.a, b: mid, value: vl, error: el });
            heap.push(Panel { a: mid, b: worst.b, value: vr, error: er });
            // Re-sum to stop drift from incremental updates.
            if subdivisions % 32 == 0 {
                value = heap.iter().map(|p| p.value).sum();
                error = heap.iter().map(|p| p.error).sum();
            }
        }
    }
}
