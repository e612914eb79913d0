//! Shared numerics: deterministic summation and quadrature kernels.

use std::sync::OnceLock;

/// Fixed-shape pairwise summation. The reduction tree depends only on the
/// slice length, so results are bit-identical however the inputs were
/// produced (serially or by any number of workers).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error (sample standard deviation / sqrt(n)) with the
/// same deterministic reduction as `pairwise_sum`.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 2, "need at least two samples");
    let mean = pairwise_sum(values) / n as f64;
    let sq: Vec<f64> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Least-squares slope and intercept of y against w.
pub fn least_squares_slope(w: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(w.len(), y.len());
    let n = w.len() as f64;
    let wbar = pairwise_sum(w) / n;
    let ybar = pairwise_sum(y) / n;
    let num: Vec<f64> = w
        .iter()
        .zip(y)
        .map(|(&wi, &yi)| (wi - wbar) * (yi - ybar))
        .collect();
    let den: Vec<f64> = w.iter().map(|&wi| (wi - wbar) * (wi - wbar)).collect();
    let slope = pairwise_sum(&num) / pairwise_sum(&den);
    (slope, ybar - slope * wbar)
}

/// Gauss-Legendre nodes and weights on [-1, 1], found by Newton iteration on
/// the Legendre polynomial recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gl16() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| gauss_legendre(16))
}

fn gl32() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| gauss_legendre(32))
}

fn gl_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for &(x, w) in rule {
        acc += w * f(c + h * x);
    }
    acc * h
}

/// Outcome of an adaptive quadrature pass.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Adaptive Gauss-Legendre integration of `f` on [a, b].
///
/// The interval is pre-split into `initial_panels` pieces (callers pass an
/// oscillation-aware count) and each panel is accepted once the GL32 value
/// agrees with the sum of GL32 on its halves. `abs_tol` is the target for
/// the whole interval; the local budget scales with panel width.
pub fn adaptive_gauss_legendre<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    initial_panels: usize,
    max_evaluations: usize,
) -> QuadResult {
    let range = b - a;
    let panels = initial_panels.max(1);
    let mut stack: Vec<(f64, f64, f64, usize)> = Vec::new();
    let mut evals = 0usize;
    for i in (0..panels).rev() {
        let pa = a + range * i as f64 / panels as f64;
        let pb = a + range * (i + 1) as f64 / panels as f64;
        let coarse = gl_panel(&mut f, pa, pb, gl32());
        evals += 32;
        stack.push((pa, pb, coarse, 0));
    }
    let mut value = 0.0;
    let mut error = 0.0;
    let mut converged = true;
    while let Some((pa, pb, coarse, depth)) = stack.pop() {
        let mid = 0.5 * (pa + pb);
        let left = gl_panel(&mut f, pa, mid, gl32());
        let right = gl_panel(&mut f, mid, pb, gl32());
        evals += 64;
        let fine = left + right;
        let diff = (fine - coarse).abs();
        let budget = abs_tol * ((pb - pa) / range).max(1e-300);
        if diff <= budget || depth >= 48 || evals >= max_evaluations {
            if diff > budget {
                converged = false;
            }
            value += fine;
            error += diff;
        } else {
            stack.push((pa, mid, left, depth + 1));
            stack.push((mid, pb, right, depth + 1));
        }
    }
    QuadResult {
        value,
        error_estimate: error,
        evaluations: evals,
        converged,
    }
}

/// Composite GL16 with panel doubling on [a, b]; stops once doubling changes
/// the value by less than `rel_tol` relative, or the node cap is reached.
pub fn doubling_gauss_legendre<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_nodes: usize,
) -> QuadResult {
    let mut panels = 1usize;
    let mut prev = f64::NAN;
    let mut evals = 0usize;
    loop {
        let mut acc = Vec::with_capacity(panels);
        for i in 0..panels {
            let pa = a + (b - a) * i as f64 / panels as f64;
            let pb = a + (b - a) * (i + 1) as f64 / panels as f64;
            acc.push(gl_panel(&mut f, pa, pb, gl16()));
        }
        evals += panels * 16;
        let value = pairwise_sum(&acc);
        if prev.is_finite() {
            let change = (value - prev).abs();
            let scale = value.abs().max(f64::MIN_POSITIVE);
            if change <= rel_tol * scale {
                return QuadResult {
                    value,
                    error_estimate: change,
                    evaluations: evals,
                    converged: true,
                };
            }
            if panels * 32 > max_nodes {
                return QuadResult {
                    value,
                    error_estimate: change,
                    evaluations: evals,
                    converged: false,
                };
            }
        }
        prev = value;
        panels *= 2;
    }
}

/// Uniform-grid average of a 2*pi-periodic function (the trapezoid rule,
/// spectrally accurate for smooth periodic integrands), doubling the node
/// count from `start_nodes` until the relative change drops below `rel_tol`.
pub fn periodic_mean_doubling<F: FnMut(f64) -> f64>(
    mut f: F,
    start_nodes: usize,
    rel_tol: f64,
    max_nodes: usize,
) -> QuadResult {
    let tau = 2.0 * std::f64::consts::PI;
    let mut nodes = start_nodes.max(2);
    let mut prev = f64::NAN;
    let mut evals = 0usize;
    loop {
        let vals: Vec<f64> = (0..nodes).map(|k| f(tau * k as f64 / nodes as f64)).collect();
        evals += nodes;
        let value = pairwise_sum(&vals) / nodes as f64;
        if prev.is_finite() {
            let change = (value - prev).abs();
            let scale = value.abs().max(f64::MIN_POSITIVE);
            if change <= rel_tol * scale {
                return QuadResult {
                    value,
                    error_estimate: change,
                    evaluations: evals,
                    converged: true,
                };
            }
            if nodes * 2 > max_nodes {
                return QuadResult {
                    value,
                    error_estimate: change,
                    evaluations: evals,
                    converged: false,
                };
            }
        }
        prev = value;
        nodes *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_order_free() {
        let v: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let s = pairwise_sum(&v);
        let naive: f64 = v.iter().sum();
        assert!((s - naive).abs() < 1e-10);
    }

    #[test]
    fn gl_nodes_integrate_polynomials_exactly() {
        // GL16 is exact through degree 31
        let rule = gauss_legendre(16);
        let int: f64 = rule.iter().map(|&(x, w)| w * x.powi(20)).sum();
        assert!((int - 2.0 / 21.0).abs() < 1e-14);
        let weight_sum: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((weight_sum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let r = adaptive_gauss_legendre(|t: f64| (10.0 * t).sin().powi(2), 0.0, 20.0, 1e-10, 16, 1 << 22);
        // integral of sin^2(10 t) over [0, 20] = 10 - sin(400)/40
        let exact = 10.0 - (400.0_f64).sin() / 40.0;
        assert!((r.value - exact).abs() < 1e-8, "got {} want {}", r.value, exact);
    }

    #[test]
    fn adaptive_handles_spike_near_zero() {
        let sigma = 0.1;
        let r = adaptive_gauss_legendre(|t: f64| 1.0 / (sigma * sigma + t * t), 0.0, 1e7, 1e-10, 8, 1 << 22);
        let exact = (1e7 / sigma).atan() / sigma;
        assert!((r.value - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn periodic_mean_spectral() {
        // mean over the circle of exp(cos(theta)) = I_0(1)
        let r = periodic_mean_doubling(|t: f64| t.cos().exp(), 8, 1e-12, 1 << 16);
        let bessel_i0_1 = 1.2660658777520084;
        assert!((r.value - bessel_i0_1).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn doubling_gl_constant_is_width() {
        let r = doubling_gauss_legendre(|_| 1.0, 2.0, 4.0, 1e-9, 1 << 14);
        assert!((r.value - 2.0).abs() < 1e-13);
    }
}
