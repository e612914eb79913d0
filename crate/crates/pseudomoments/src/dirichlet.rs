//! Dirichlet-polynomial and Euler-product evaluation for a fixed Steinhaus
//! realization, plus the Plancherel identity checker.
//!
//! Sign convention used everywhere: evaluations happen at s = 1/2 + sigma + it
//! with `sigma` a signed shift off the half-line (negative sigma moves left).

use crate::error::{Error, Result};
use crate::multfun::{eval_g, MultiplicativeSpec};
use crate::primes::{enumerate_smooth, PrimeTable};
use crate::quad::{adaptive_gauss_legendre, doubling_gauss_legendre, pairwise_sum};
use crate::steinhaus::SteinhausSample;
use num_complex::Complex64;

/// Prime window, shift and frequency of an Euler-product evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EulerProductParams {
    /// Lower prime cutoff, inclusive.
    pub y: f64,
    /// Upper prime cutoff, inclusive.
    pub z: f64,
    /// Signed shift: the evaluation point is s = 1/2 + sigma + it.
    pub sigma: f64,
    /// Frequency t.
    pub t: f64,
    /// Absolute tolerance for truncating each local factor's series.
    pub series_tolerance: f64,
}

impl EulerProductParams {
    pub fn new(y: f64, z: f64, sigma: f64, t: f64) -> Self {
        EulerProductParams {
            y,
            z,
            sigma,
            t,
            series_tolerance: 1e-9,
        }
    }

    pub fn with_series_tolerance(mut self, tol: f64) -> Self {
        self.series_tolerance = tol;
        self
    }

    pub fn validate(&self, spec: &MultiplicativeSpec) -> Result<()> {
        if !(self.y >= 2.0) {
            return Err(Error::Domain(format!("lower prime cutoff y = {} must be >= 2", self.y)));
        }
        // y > z is legal: the window is empty and the product is 1
        if !(self.series_tolerance > 0.0 && self.series_tolerance <= 1e-6) {
            return Err(Error::Domain(format!(
                "series_tolerance {} must lie in (0, 1e-6]",
                self.series_tolerance
            )));
        }
        check_contraction_guard(spec, self.sigma)?;
        Ok(())
    }
}

/// The local series contracts when 1/2 + sigma > 2 theta: the majorant term
/// ratio is p^(theta - 1/2 - sigma) <= p^(-theta) < 1 uniformly in p.
pub(crate) fn check_contraction_guard(spec: &MultiplicativeSpec, sigma: f64) -> Result<()> {
    if 0.5 + sigma <= 2.0 * spec.theta {
        return Err(Error::DivergentSeries {
            prime: 2,
            ratio: 2f64.powf(spec.theta - 0.5 - sigma),
        });
    }
    Ok(())
}

/// One local Euler factor F_p(s) = 1 + sum_j g(p^j) X(p)^j p^(-js), with the
/// series pre-truncated so the discarded mass is below the tolerance.
pub(crate) struct LocalFactor {
    pub prime: u64,
    pub log_p: f64,
    /// coeffs[j-1] = g(p^j) p^(-j(1/2+sigma))
    coeffs: Vec<Complex64>,
    /// Geometric-majorant bound on the truncated series mass.
    pub tail: f64,
}

pub(crate) fn local_factor(
    spec: &MultiplicativeSpec,
    p: u64,
    sigma: f64,
    tol: f64,
) -> Result<LocalFactor> {
    check_contraction_guard(spec, sigma)?;
    let pf = p as f64;
    let r = pf.powf(-(0.5 + sigma));
    let ratio_a = pf.powf(spec.theta - 0.5 - sigma);
    debug_assert!(ratio_a < 1.0);
    let mut coeffs = Vec::new();
    let mut rj = 1.0f64;
    let mut tail;
    let mut j = 0u32;
    loop {
        j += 1;
        rj *= r;
        if j > 100_000 {
            return Err(Error::Domain(format!(
                "local factor at p = {p} needed more than 1e5 series terms"
            )));
        }
        coeffs.push(spec.value_at_prime_power(p, j)? * rj);
        let next_majorant = spec.prime_power_majorant(p, j + 1) * rj * r;
        tail = next_majorant / (1.0 - ratio_a);
        if tail <= tol {
            break;
        }
    }
    Ok(LocalFactor {
        prime: p,
        log_p: pf.ln(),
        coeffs,
        tail,
    })
}

impl LocalFactor {
    /// F_p evaluated with X(p)^j p^(-ijt log p) = cis(j * phase).
    pub fn eval(&self, phase: f64) -> Complex64 {
        let w = Complex64::cis(phase);
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = (acc + c) * w;
        }
        acc + 1.0
    }
}

/// Coefficient table for the partial sum sum_{n <= x} g(n) X(n) n^(-1/2-sigma-it).
///
/// Built once per (spec, x, sigma, t); evaluating a realization walks n
/// ascending with X(n) = X(n/p) X(p), so repeated evaluation over samples is
/// linear in x. The ascending order also fixes the floating-point reduction,
/// making results independent of how samples are scheduled over workers.
pub struct PartialSumTable {
    x_int: u64,
    spf_rank: Vec<u32>,
    coeffs: Vec<Complex64>,
    small_primes: Vec<u32>,
}

/// Per-evaluation scratch; reuse across calls to avoid reallocation.
#[derive(Default)]
pub struct PartialSumScratch {
    x_values: Vec<Complex64>,
    prime_units: Vec<Complex64>,
}

impl PartialSumTable {
    pub fn new(
        spec: &MultiplicativeSpec,
        x: f64,
        sigma: f64,
        t: f64,
        primes: &PrimeTable,
    ) -> Result<Self> {
        if !(x >= 1.0) {
            return Err(Error::Domain(format!("partial sum needs x >= 1, got {x}")));
        }
        let x_int = x.floor() as u64;
        if x_int >= 2 {
            primes.require_coverage(x_int as f64)?;
        }
        let spf_rank = crate::primes::spf_rank_table(x_int, primes);
        let plist = primes.primes();
        let prime_count = plist.partition_point(|&p| p <= x_int);
        let mut g = vec![Complex64::new(0.0, 0.0); (x_int + 1) as usize];
        let mut core = vec![0u32; (x_int + 1) as usize];
        let mut cnt = vec![0u8; (x_int + 1) as usize];
        g[1] = Complex64::new(1.0, 0.0);
        for n in 2..=x_int as usize {
            let rank = spf_rank[n] as usize;
            let p = plist[rank] as usize;
            let m = n / p;
            let (c, e) = if m > 1 && spf_rank[m] as usize == rank {
                (core[m] as usize, cnt[m] + 1)
            } else {
                (m, 1)
            };
            core[n] = c as u32;
            cnt[n] = e;
            g[n] = g[c] * spec.value_at_prime_power(p as u64, e as u32)?;
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); (x_int + 1) as usize];
        for n in 1..=x_int as usize {
            let ln_n = (n as f64).ln();
            let magnitude = (-(0.5 + sigma) * ln_n).exp();
            coeffs[n] = g[n] * magnitude * Complex64::cis(-t * ln_n);
        }
        let small_primes = plist[..prime_count].iter().map(|&p| p as u32).collect();
        Ok(PartialSumTable {
            x_int,
            spf_rank,
            coeffs,
            small_primes,
        })
    }

    pub fn x_int(&self) -> u64 {
        self.x_int
    }

    /// Number of prime angles the evaluation consumes (primes up to x).
    pub fn primes_needed(&self) -> usize {
        self.small_primes.len()
    }

    /// Evaluates the partial sum for the realization given by `angles`
    /// (one angle per prime rank of the table used at construction).
    pub fn eval(&self, angles: &[f64], scratch: &mut PartialSumScratch) -> Complex64 {
        assert!(
            angles.len() >= self.small_primes.len(),
            "angle vector does not cover x"
        );
        let n_max = self.x_int as usize;
        scratch.prime_units.clear();
        scratch
            .prime_units
            .extend(angles[..self.small_primes.len()].iter().map(|&a| Complex64::cis(a)));
        scratch.x_values.resize(n_max + 1, Complex64::new(0.0, 0.0));
        let x = &mut scratch.x_values;
        let mut sum = self.coeffs[1.min(n_max)];
        if n_max >= 1 {
            x[1] = Complex64::new(1.0, 0.0);
        }
        for n in 2..=n_max {
            let rank = self.spf_rank[n] as usize;
            let xn = x[n / self.small_primes[rank] as usize] * scratch.prime_units[rank];
            x[n] = xn;
            sum += self.coeffs[n] * xn;
        }
        sum
    }
}

/// Partial sum sum_{n <= x} g(n) X(n) / n^(1/2 + sigma + it) as an exact
/// finite sum over every integer n <= x.
pub fn partial_sum(
    spec: &MultiplicativeSpec,
    sample: &SteinhausSample,
    x: f64,
    sigma: f64,
    t: f64,
) -> Result<Complex64> {
    let table = PartialSumTable::new(spec, x, sigma, t, sample.primes())?;
    let mut scratch = PartialSumScratch::default();
    Ok(table.eval(sample.angles(), &mut scratch))
}

/// Restricted tail sum over z < n <= cap with P(n) <= y, plus an analytic
/// Rankin-style bound on the discarded mass beyond the cap.
#[derive(Debug, Clone, Copy)]
pub struct TailSum {
    pub value: Complex64,
    /// Bound on |sum over n > cap|; infinite when the bounding Euler product
    /// does not converge (reported, never silently dropped).
    pub tail_bound: f64,
}

pub fn restricted_tail_sum(
    spec: &MultiplicativeSpec,
    sample: &SteinhausSample,
    z: f64,
    y: f64,
    cap: f64,
    sigma: f64,
    t: f64,
) -> Result<TailSum> {
    if z >= cap {
        return Ok(TailSum {
            value: Complex64::new(0.0, 0.0),
            tail_bound: 0.0,
        });
    }
    sample.primes().require_coverage(y.min(cap))?;
    let mut acc = Complex64::new(0.0, 0.0);
    for n in enumerate_smooth(cap, y, z, sample.primes()) {
        let g = eval_g(spec, &n)?;
        if g.norm_sqr() == 0.0 {
            continue;
        }
        let mut phase = 0.0f64;
        for &(p, e) in n.factors() {
            phase += e as f64 * sample.angle_at(p)?;
        }
        let ln_n = (n.value() as f64).ln();
        acc += g * (-(0.5 + sigma) * ln_n).exp() * Complex64::cis(phase - t * ln_n);
    }
    // Rankin step with delta = 1/log y on the first-power smooth sum
    let delta = 1.0 / y.ln();
    let bound = smooth_euler_abs_sum(spec, y, 1.0, 0.5 + sigma - delta / 2.0, sample.primes())?;
    let tail_bound = if bound.divergent {
        f64::INFINITY
    } else {
        cap.powf(-delta / 2.0) * bound.value
    };
    Ok(TailSum {
        value: acc,
        tail_bound,
    })
}

/// Value of the full smooth sum sum_{P(n) <= y} |g(n)|^pow n^(-w) as an
/// Euler product, with per-prime truncation certified by the growth
/// majorant. `divergent` is set when no branch of the majorant contracts.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SmoothAbsSum {
    pub value: f64,
    pub divergent: bool,
}

pub(crate) fn smooth_euler_abs_sum(
    spec: &MultiplicativeSpec,
    y: f64,
    pow: f64,
    w: f64,
    primes: &PrimeTable,
) -> Result<SmoothAbsSum> {
    primes.require_coverage(y)?;
    let mut log_terms = Vec::new();
    for &p in primes.in_window(2.0, y) {
        let pf = p as f64;
        let ratio_a = pf.powf(pow * spec.theta - w);
        let ratio_b = spec.growth_b.powf(pow) * pf.powf(-w);
        if ratio_a >= 1.0 && ratio_b >= 1.0 {
            return Ok(SmoothAbsSum {
                value: f64::INFINITY,
                divergent: true,
            });
        }
        let mut factor = 1.0f64;
        let mut j = 0u32;
        loop {
            j += 1;
            if j > 100_000 {
                return Err(Error::Domain(format!(
                    "smooth-sum local factor at p = {p} needed more than 1e5 terms"
                )));
            }
            let term = spec.value_at_prime_power(p, j)?.norm().powf(pow) * pf.powf(-(j as f64) * w);
            factor += term;
            let m_next = spec.prime_power_majorant(p, j + 1).powf(pow) * pf.powf(-((j + 1) as f64) * w);
            let tail = if ratio_a < 1.0 {
                let t_a = m_next / (1.0 - ratio_a);
                if ratio_b < 1.0 {
                    t_a.min(m_next / (1.0 - ratio_b))
                } else {
                    t_a
                }
            } else {
                m_next / (1.0 - ratio_b)
            };
            if tail <= 1e-14 * factor {
                break;
            }
        }
        log_terms.push(factor.ln());
    }
    Ok(SmoothAbsSum {
        value: pairwise_sum(&log_terms).exp(),
        divergent: false,
    })
}

/// Truncated Euler product over a prime window for one realization.
#[derive(Debug, Clone, Copy)]
pub struct EulerProductValue {
    pub value: Complex64,
    /// First-order bound on the relative error from truncating the local series.
    pub truncation_bound: f64,
}

/// prod over primes in [y, z] of (1 + sum_j g(p^j) X(p)^j p^(-j(1/2+sigma+it))).
pub fn euler_product_g(
    spec: &MultiplicativeSpec,
    sample: &SteinhausSample,
    params: &EulerProductParams,
) -> Result<EulerProductValue> {
    params.validate(spec)?;
    if params.z >= 2.0 {
        sample.primes().require_coverage(params.z)?;
    }
    let mut value = Complex64::new(1.0, 0.0);
    let mut bound = 0.0f64;
    for &p in sample.primes().in_window(params.y, params.z) {
        let lf = local_factor(spec, p, params.sigma, params.series_tolerance)?;
        let phase = sample.angle_at(p)? - params.t * lf.log_p;
        let fp = lf.eval(phase);
        value *= fp;
        let denom = (fp.norm() - lf.tail).max(f64::MIN_POSITIVE);
        bound += lf.tail / denom;
    }
    Ok(EulerProductValue {
        value,
        truncation_bound: bound,
    })
}

/// Quadrature controls for the window integral.
#[derive(Debug, Clone, Copy)]
pub struct WindowQuadrature {
    pub rel_tol: f64,
    pub max_nodes: usize,
    pub series_tolerance: f64,
}

impl Default for WindowQuadrature {
    fn default() -> Self {
        WindowQuadrature {
            rel_tol: 1e-6,
            max_nodes: 1 << 14,
            series_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WindowIntegral {
    pub value: f64,
    /// Change under the last node doubling, relative to the value.
    pub relative_change: f64,
    /// False when the node cap was hit before the doubling criterion; the
    /// value is still returned, carrying this accuracy warning.
    pub converged: bool,
    pub nodes: usize,
}

/// integral over [T, 2T] of |H(t)|^2 dt for one realization, where H(t) is
/// the Euler product over primes up to `prime_hi` at s = 1/2 + sigma + it.
/// Gauss-Legendre panels are doubled until the value moves by less than
/// `rel_tol` relative, with a hard node cap.
pub fn window_integral_h(
    spec: &MultiplicativeSpec,
    sample: &SteinhausSample,
    prime_hi: f64,
    sigma: f64,
    t_lower: f64,
    quad: &WindowQuadrature,
) -> Result<WindowIntegral> {
    if !(t_lower > 0.0) {
        return Err(Error::Domain(format!("window needs T > 0, got {t_lower}")));
    }
    check_contraction_guard(spec, sigma)?;
    if prime_hi >= 2.0 {
        sample.primes().require_coverage(prime_hi)?;
    }
    let mut factors = Vec::new();
    for &p in sample.primes().in_window(2.0, prime_hi) {
        let lf = local_factor(spec, p, sigma, quad.series_tolerance)?;
        let theta_p = sample.angle_at(p)?;
        factors.push((lf, theta_p));
    }
    let integrand = |t: f64| -> f64 {
        let mut h = Complex64::new(1.0, 0.0);
        for (lf, theta_p) in &factors {
            h *= lf.eval(theta_p - t * lf.log_p);
        }
        h.norm_sqr()
    };
    let r = doubling_gauss_legendre(integrand, t_lower, 2.0 * t_lower, quad.rel_tol, quad.max_nodes);
    Ok(WindowIntegral {
        value: r.value,
        relative_change: r.error_estimate / r.value.abs().max(f64::MIN_POSITIVE),
        converged: r.converged,
        nodes: r.evaluations,
    })
}

/// Finitely supported coefficient sequence (a_n), n distinct and >= 1.
#[derive(Debug, Clone)]
pub struct CoefficientVector {
    entries: Vec<(u64, Complex64)>,
}

impl CoefficientVector {
    pub fn new(mut entries: Vec<(u64, Complex64)>) -> Result<Self> {
        if entries.iter().any(|&(n, _)| n == 0) {
            return Err(Error::Domain("coefficient indices must be >= 1".into()));
        }
        entries.sort_by_key(|&(n, _)| n);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain("coefficient indices must be distinct".into()));
        }
        Ok(CoefficientVector { entries })
    }

    pub fn entries(&self) -> &[(u64, Complex64)] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlancherelCheck {
    /// Exact closed form of integral_0^infty |sum_{n <= x} a_n|^2 x^(-1-2 sigma) dx.
    pub lhs: f64,
    /// Quadrature of (1/2 pi) integral over |t| <= t_max of |A(sigma+it) / (sigma+it)|^2 dt.
    pub rhs: f64,
    /// Bound on the |t| > t_max remainder of the right-hand side.
    pub tail_bound: f64,
    pub quadrature_error: f64,
    pub pass: bool,
}

/// Checks the Mellin-Plancherel identity for Dirichlet series on a finitely
/// supported sequence. The left side is evaluated in closed form (the
/// partial sum is a step function of x), the right side by adaptive
/// quadrature, so the identity acts as a one-sided oracle.
pub fn plancherel_check(
    coeffs: &CoefficientVector,
    sigma: f64,
    t_max: f64,
    tol: f64,
) -> Result<PlancherelCheck> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("plancherel check needs sigma > 0, got {sigma}")));
    }
    if coeffs.entries.is_empty() {
        return Ok(PlancherelCheck {
            lhs: 0.0,
            rhs: 0.0,
            tail_bound: 0.0,
            quadrature_error: 0.0,
            pass: true,
        });
    }

    // lhs in closed form: with support n_1 < ... < n_K and prefix sums S_i,
    // the integrand is |S_i|^2 on [n_i, n_{i+1}).
    let k = coeffs.entries.len();
    let mut lhs = 0.0f64;
    let mut prefix = Complex64::new(0.0, 0.0);
    for i in 0..k {
        prefix += coeffs.entries[i].1;
        let ni = coeffs.entries[i].0 as f64;
        let left = ni.powf(-2.0 * sigma);
        let right = if i + 1 < k {
            (coeffs.entries[i + 1].0 as f64).powf(-2.0 * sigma)
        } else {
            0.0
        };
        lhs += prefix.norm_sqr() * (left - right) / (2.0 * sigma);
    }

    // rhs by adaptive quadrature, pre-split against the oscillation bandwidth
    let terms: Vec<(f64, f64, f64)> = coeffs
        .entries
        .iter()
        .map(|&(n, a)| {
            let nf = n as f64;
            let b = a * nf.powf(-sigma);
            (b.re, b.im, nf.ln())
        })
        .collect();
    let integrand = |t: f64| -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for &(br, bi, ln_n) in &terms {
            let (s, c) = (-t * ln_n).sin_cos();
            re += br * c - bi * s;
            im += br * s + bi * c;
        }
        (re * re + im * im) / (sigma * sigma + t * t)
    };
    let omega = 2.0 * (coeffs.entries.last().unwrap().0 as f64).ln();
    let initial_panels = if omega > 0.0 {
        ((2.0 * t_max * omega / 24.0).ceil() as usize).clamp(8, 200_000)
    } else {
        8
    };
    let quad = adaptive_gauss_legendre(integrand, -t_max, t_max, tol / 4.0, initial_panels, 8_000_000);
    let rhs = quad.value / (2.0 * std::f64::consts::PI);

    let abs_sum: f64 = coeffs
        .entries
        .iter()
        .map(|&(n, a)| a.norm() * (n as f64).powf(-sigma))
        .sum();
    let tail_bound = abs_sum * abs_sum / (std::f64::consts::PI * t_max);

    Ok(PlancherelCheck {
        lhs,
        rhs,
        tail_bound,
        quadrature_error: quad.error_estimate / (2.0 * std::f64::consts::PI),
        pass: (lhs - rhs).abs() <= tol + tail_bound,
    })
}
