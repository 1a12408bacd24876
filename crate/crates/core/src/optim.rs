//! Small derivative-free optimizers and a bracketing root finder.

/// Result of a maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Stops when the bracket is narrower than `tol`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Maximum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while (b - a) > tol && iterations < max_iter {
        iterations += 1;
        // Ties (including -inf on both sides) move toward the larger value only if defined.
        if fc > fd || (fc == fd && fc.is_nan()) {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (x, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    // The endpoints can beat interior probes when the maximum is pinned to them.
    let (fa, fb) = (f(a), f(b));
    let (x, value) = [(x, value), (a, fa), (b, fb)]
        .into_iter()
        .fold((x, value), |best, cand| if cand.1 > best.1 { cand } else { best });
    Maximum { x: vec![x], value, iterations, converged: (b - a) <= tol }
}

/// Nelder–Mead maximization with every vertex projected onto the box
/// `[lower, upper]`.
pub fn nelder_mead_box<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol: f64,
    max_iter: usize,
) -> Maximum {
    let p = start.len();
    let project = |x: &mut Vec<f64>| {
        for i in 0..p {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    // Minimize -f; non-finite values rank last.
    let mut cost = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
    let mut x0 = start.to_vec();
    project(&mut x0);
    simplex.push(x0.clone());
    for i in 0..p {
        let mut v = x0.clone();
        let span = upper[i] - lower[i];
        let step = 0.1 * span.max(1e-8);
        v[i] = if v[i] + step <= upper[i] { v[i] + step } else { v[i] - step };
        project(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| cost(v)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=p).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[p] - values[0]).abs();
        let size = (1..=p)
            .map(|k| simplex[k].iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= tol * (1.0 + values[0].abs()) && size <= tol.sqrt() {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..p).map(|i| simplex[..p].iter().map(|v| v[i]).sum::<f64>() / p as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            let mut v: Vec<f64> = (0..p).map(|i| centroid[i] + t * (simplex[p][i] - centroid[i])).collect();
            project(&mut v);
            v
        };
        let reflected = along(-1.0);
        let fr = cost(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = cost(&expanded);
            if fe < fr {
                simplex[p] = expanded;
                values[p] = fe;
            } else {
                simplex[p] = reflected;
                values[p] = fr;
            }
        } else if fr < values[p - 1] {
            simplex[p] = reflected;
            values[p] = fr;
        } else {
            let contracted = if fr < values[p] { along(-0.5) } else { along(0.5) };
            let fc = cost(&contracted);
            if fc < values[p].min(fr) {
                simplex[p] = contracted;
                values[p] = fc;
            } else {
                for k in 1..=p {
                    let mut v: Vec<f64> = (0..p).map(|i| simplex[0][i] + 0.5 * (simplex[k][i] - simplex[0][i])).collect();
                    project(&mut v);
                    values[k] = cost(&v);
                    simplex[k] = v;
                }
            }
        }
    }
    let best = (0..=p).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    Maximum { x: simplex[best].clone(), value: -values[best], iterations, converged }
}

/// Bisection root of a continuous `f` with `f(a)` and `f(b)` of opposite sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return None;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 || (b - a) < tol {
            return Some(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}
