//! Multiplicative coefficient functions g, including the generalized divisor
//! family d_alpha, the growth-bound validator and the log-log density lambda_g.

use crate::error::{Error, Result};
use crate::primes::{FactoredInteger, PrimeTable};
use crate::quad::{least_squares_slope, pairwise_sum};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Default theta for coefficient families that are bounded by 1; effectively
/// the theta -> 0 calibration.
pub const DEFAULT_THETA: f64 = 1e-9;

/// Calibration constant of the mixed-moment error budget.
pub const DEFAULT_ERROR_CALIBRATION: f64 = 10.0;

type CompositeRule = Arc<dyn Fn(u64, u32) -> Complex64 + Send + Sync>;

/// Value rule at prime powers. g is determined by these values through
/// multiplicativity, with g(1) = 1.
#[derive(Clone)]
pub enum Kind {
    /// d_alpha, the Dirichlet coefficients of zeta^alpha:
    /// d_alpha(p^j) = prod_{i=0}^{j-1} (alpha + i) / (i + 1), prime-independent.
    Divisor(Complex64),
    /// g identically 1.
    Unit,
    /// g(p^j) = 0 for every prime power; g(n) = [n = 1].
    ZeroOnPrimes,
    /// Explicit values per prime power. Missing entries are an error, never
    /// silently zero.
    Table(BTreeMap<(u64, u32), Complex64>),
    /// Caller-supplied rule (p, j) -> g(p^j).
    Rule(CompositeRule),
}

impl std::fmt::Debug for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kind::Divisor(a) => write!(f, "Divisor({a})"),
            Kind::Unit => write!(f, "Unit"),
            Kind::ZeroOnPrimes => write!(f, "ZeroOnPrimes"),
            Kind::Table(t) => write!(f, "Table({} entries)", t.len()),
            Kind::Rule(_) => write!(f, "Rule(..)"),
        }
    }
}

/// A multiplicative function together with its growth metadata
/// (|g(n)| <= min(A n^theta, B^Omega(n))) and log-log density.
///
/// The metadata is advisory until validated by [`check_growth_condition`]
/// and [`fit_lambda`]. For the built-in kinds the defaults are honest at
/// prime powers, which is where the series majorants use them; validity on
/// all n is exactly what the growth checker reports.
#[derive(Debug, Clone)]
pub struct MultiplicativeSpec {
    pub kind: Kind,
    pub growth_a: f64,
    pub growth_b: f64,
    pub theta: f64,
    /// Density of lambda_g(x) against log log x. For d_alpha this is |alpha|^2.
    pub alpha_density: f64,
}

impl MultiplicativeSpec {
    pub fn unit() -> Self {
        MultiplicativeSpec {
            kind: Kind::Unit,
            growth_a: 1.0,
            growth_b: 1.0,
            theta: DEFAULT_THETA,
            alpha_density: 1.0,
        }
    }

    pub fn zero_on_primes() -> Self {
        MultiplicativeSpec {
            kind: Kind::ZeroOnPrimes,
            growth_a: 1.0,
            growth_b: 1.0,
            theta: DEFAULT_THETA,
            alpha_density: 0.0,
        }
    }

    pub fn divisor(alpha: Complex64) -> Self {
        let m = alpha.norm();
        if m <= 1.0 {
            MultiplicativeSpec {
                kind: Kind::Divisor(alpha),
                growth_a: 1.0,
                growth_b: 1.0,
                theta: DEFAULT_THETA,
                alpha_density: m * m,
            }
        } else {
            // |d_alpha(p^j)| <= d_|alpha|(p^j) <= |alpha|^j, and the n^theta
            // bound is tightest at p = 2, so scan p = 2 for the constant A.
            let theta = 1.0 / 50.0;
            let mut a_needed: f64 = 1.0;
            let mut val = 1.0f64;
            for j in 1u32..20_000 {
                val *= (m + (j - 1) as f64) / j as f64;
                let ratio = val / 2f64.powf(j as f64 * theta);
                if ratio > a_needed {
                    a_needed = ratio;
                } else if val < a_needed {
                    break;
                }
            }
            MultiplicativeSpec {
                kind: Kind::Divisor(alpha),
                growth_a: a_needed,
                growth_b: m,
                theta,
                alpha_density: m * m,
            }
        }
    }

    pub fn divisor_real(alpha: f64) -> Self {
        Self::divisor(Complex64::new(alpha, 0.0))
    }

    pub fn table(entries: BTreeMap<(u64, u32), Complex64>) -> Self {
        MultiplicativeSpec {
            kind: Kind::Table(entries),
            growth_a: 1.0,
            growth_b: 1.0,
            theta: DEFAULT_THETA,
            alpha_density: 1.0,
        }
    }

    pub fn rule<F>(f: F) -> Self
    where
        F: Fn(u64, u32) -> Complex64 + Send + Sync + 'static,
    {
        MultiplicativeSpec {
            kind: Kind::Rule(Arc::new(f)),
            growth_a: 1.0,
            growth_b: 1.0,
            theta: DEFAULT_THETA,
            alpha_density: 1.0,
        }
    }

    pub fn with_growth(mut self, a: f64, b: f64, theta: f64) -> Self {
        self.growth_a = a;
        self.growth_b = b;
        self.theta = theta;
        self
    }

    pub fn with_density(mut self, alpha_density: f64) -> Self {
        self.alpha_density = alpha_density;
        self
    }

    /// g at a prime power p^j, j >= 1.
    pub fn value_at_prime_power(&self, p: u64, j: u32) -> Result<Complex64> {
        debug_assert!(j >= 1);
        match &self.kind {
            Kind::Divisor(alpha) => Ok(divisor_prime_power(*alpha, j)),
            Kind::Unit => Ok(Complex64::new(1.0, 0.0)),
            Kind::ZeroOnPrimes => Ok(Complex64::new(0.0, 0.0)),
            Kind::Table(entries) => entries
                .get(&(p, j))
                .copied()
                .ok_or(Error::MissingTableValue { prime: p, exponent: j }),
            Kind::Rule(f) => Ok(f(p, j)),
        }
    }

    /// Majorant for |g(p^j)| from the growth metadata: min(A p^{j theta}, B^j).
    pub fn prime_power_majorant(&self, p: u64, j: u32) -> f64 {
        let a_branch = self.growth_a * (p as f64).powf(j as f64 * self.theta);
        let b_branch = self.growth_b.powi(j as i32);
        a_branch.min(b_branch)
    }

    /// True when the rule gives the same value at every prime (the divisor
    /// family and the constant kinds); lets evaluators cache per-exponent.
    pub fn prime_independent(&self) -> bool {
        !matches!(self.kind, Kind::Table(_) | Kind::Rule(_))
    }
}

/// d_alpha(p^j) by the stable ascending product, never via gamma functions.
pub fn divisor_prime_power(alpha: Complex64, j: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for i in 0..j {
        acc *= (alpha + i as f64) / (i as f64 + 1.0);
    }
    acc
}

/// g(n) from the factorization: product of g(p^e) over the factors.
pub fn eval_g(spec: &MultiplicativeSpec, n: &FactoredInteger) -> Result<Complex64> {
    let mut acc = Complex64::new(1.0, 0.0);
    for &(p, e) in n.factors() {
        acc *= spec.value_at_prime_power(p, e)?;
    }
    Ok(acc)
}

/// Dirichlet convolution (g_a * g_b)(n) = sum over de = n of g_a(d) g_b(e),
/// iterating the divisors of n from its factorization.
pub fn dirichlet_convolve(
    spec_a: &MultiplicativeSpec,
    spec_b: &MultiplicativeSpec,
    n: &FactoredInteger,
) -> Result<Complex64> {
    let factors = n.factors();
    let mut exponents = vec![0u32; factors.len()];
    let mut acc = Complex64::new(0.0, 0.0);
    loop {
        let mut d = FactoredVal::one();
        let mut e = FactoredVal::one();
        for (i, &(p, emax)) in factors.iter().enumerate() {
            let ed = exponents[i];
            if ed > 0 {
                d.push(spec_a.value_at_prime_power(p, ed)?);
            }
            if emax - ed > 0 {
                e.push(spec_b.value_at_prime_power(p, emax - ed)?);
            }
        }
        acc += d.0 * e.0;
        // odometer over divisor exponents
        let mut i = 0;
        loop {
            if i == factors.len() {
                return Ok(acc);
            }
            if exponents[i] < factors[i].1 {
                exponents[i] += 1;
                break;
            }
            exponents[i] = 0;
            i += 1;
        }
    }
}

struct FactoredVal(Complex64);

impl FactoredVal {
    fn one() -> Self {
        FactoredVal(Complex64::new(1.0, 0.0))
    }
    fn push(&mut self, v: Complex64) {
        self.0 *= v;
    }
}

/// Report of the exhaustive growth-condition check over n <= limit.
#[derive(Debug, Clone)]
pub struct GrowthReport {
    /// max over n of |g(n)| / (A n^theta)
    pub max_ratio_power: f64,
    /// max over n of |g(n)| / B^Omega(n)
    pub max_ratio_omega: f64,
    pub witness_power: Option<u64>,
    pub witness_omega: Option<u64>,
    /// Smallest B that would satisfy |g(n)| <= B^Omega(n) over the scanned range.
    pub minimal_feasible_b: f64,
    pub pass: bool,
}

/// Checks |g(n)| <= min(A n^theta, B^Omega(n)) for every n <= limit; both
/// ratio maxima must stay at or below 1 to pass.
pub fn check_growth_condition(
    spec: &MultiplicativeSpec,
    limit: u64,
    primes: &PrimeTable,
) -> Result<GrowthReport> {
    if limit > 10_000_000 {
        return Err(Error::Domain(format!(
            "exhaustive growth check capped at 10^7, got {limit}"
        )));
    }
    primes.require_coverage(limit as f64)?;
    let spf = crate::primes::spf_rank_table(limit, primes);
    let plist = primes.primes();
    let mut max_power = 0.0f64;
    let mut max_omega = 0.0f64;
    let mut witness_power = None;
    let mut witness_omega = None;
    let mut minimal_b = 0.0f64;
    for n in 2..=limit {
        let mut m = n;
        let mut gabs = 1.0f64;
        let mut omega = 0u32;
        while m > 1 {
            let p = plist[spf[m as usize] as usize];
            let mut e = 0u32;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            gabs *= spec.value_at_prime_power(p, e)?.norm();
            omega += e;
        }
        let ratio_power = gabs / (spec.growth_a * (n as f64).powf(spec.theta));
        if ratio_power > max_power {
            max_power = ratio_power;
            witness_power = Some(n);
        }
        let ratio_omega = gabs / spec.growth_b.powi(omega as i32);
        if ratio_omega > max_omega {
            max_omega = ratio_omega;
            witness_omega = Some(n);
        }
        let feasible = gabs.powf(1.0 / omega as f64);
        if feasible > minimal_b {
            minimal_b = feasible;
        }
    }
    Ok(GrowthReport {
        max_ratio_power: max_power,
        max_ratio_omega: max_omega,
        witness_power: if max_power > 1.0 { witness_power } else { None },
        witness_omega: if max_omega > 1.0 { witness_omega } else { None },
        minimal_feasible_b: minimal_b,
        pass: max_power <= 1.0 && max_omega <= 1.0,
    })
}

/// lambda_g(x) = sum over primes p <= x of |g(p)|^2 / p, as an exact finite sum.
pub fn lambda_g(spec: &MultiplicativeSpec, x: f64, primes: &PrimeTable) -> Result<f64> {
    primes.require_coverage(x)?;
    let mut terms = Vec::new();
    for &p in primes.in_window(2.0, x) {
        let g = spec.value_at_prime_power(p, 1)?;
        terms.push(g.norm_sqr() / p as f64);
    }
    Ok(pairwise_sum(&terms))
}

/// One grid point of the lambda_g fit.
#[derive(Debug, Clone, Copy)]
pub struct LambdaReport {
    pub x: f64,
    pub lambda: f64,
    pub fitted_alpha: f64,
    /// lambda_g(x) - fitted_alpha * log log x
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct LambdaFit {
    pub reports: Vec<LambdaReport>,
    pub fitted_alpha: f64,
}

/// Least-squares slope of lambda_g(x) against log log x over the grid.
pub fn fit_lambda(spec: &MultiplicativeSpec, x_grid: &[f64], primes: &PrimeTable) -> Result<LambdaFit> {
    if x_grid.len() < 3 {
        return Err(Error::Domain("lambda fit needs at least 3 grid points".into()));
    }
    if x_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("x grid must be strictly ascending".into()));
    }
    if x_grid[0] < 16.0 {
        return Err(Error::Domain("x grid points must all be >= 16".into()));
    }
    let w: Vec<f64> = x_grid.iter().map(|&x| x.ln().ln()).collect();
    let spread = w.last().unwrap() - w[0];
    if spread.abs() < 1e-9 {
        return Err(Error::IllConditioned(format!(
            "log log x spread {spread:.3e} is below 1e-9"
        )));
    }
    let lambda: Vec<f64> = x_grid
        .iter()
        .map(|&x| lambda_g(spec, x, primes))
        .collect::<Result<_>>()?;
    let (slope, _) = least_squares_slope(&w, &lambda);
    let reports = x_grid
        .iter()
        .zip(&lambda)
        .map(|(&x, &l)| LambdaReport {
            x,
            lambda: l,
            fitted_alpha: slope,
            residual: l - slope * x.ln().ln(),
        })
        .collect();
    Ok(LambdaFit {
        reports,
        fitted_alpha: slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::sieve_primes;
    use approx::assert_relative_eq;

    fn fi(n: u64) -> FactoredInteger {
        FactoredInteger::factor(n)
    }

    #[test]
    fn divisor_one_is_unit() {
        let d1 = MultiplicativeSpec::divisor_real(1.0);
        for n in [1u64, 2, 12, 360, 9973] {
            let v = eval_g(&d1, &fi(n)).unwrap();
            assert_relative_eq!(v.re, 1.0, max_relative = 1e-15);
            assert!(v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn divisor_two_counts_divisors() {
        // tau(12) = 6, by listing 1,2,3,4,6,12
        let d2 = MultiplicativeSpec::divisor_real(2.0);
        let v = eval_g(&d2, &fi(12)).unwrap();
        assert_relative_eq!(v.re, 6.0, max_relative = 1e-14);
    }

    #[test]
    fn divisor_half_at_four() {
        // coefficient of u^2 in (1-u)^{-1/2} is 3/8, by the binomial series
        let dh = MultiplicativeSpec::divisor_real(0.5);
        let v = eval_g(&dh, &fi(4)).unwrap();
        assert_relative_eq!(v.re, 3.0 / 8.0, max_relative = 1e-15);
    }

    /// Binomial-series oracle: the d_{1/2} prime-power values are the
    /// coefficients of (1-u)^{-1/2}, so their Cauchy square must reproduce
    /// the geometric series 1/(1-u) = 1 + u + u^2 + ...
    #[test]
    fn divisor_half_series_squares_to_geometric() {
        let c: Vec<f64> = (0..16u32)
            .map(|j| divisor_prime_power(Complex64::new(0.5, 0.0), j).re)
            .collect();
        for j in 0..16usize {
            let square: f64 = (0..=j).map(|i| c[i] * c[j - i]).sum();
            assert_relative_eq!(square, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn table_missing_value_is_an_error() {
        let mut entries = BTreeMap::new();
        entries.insert((2u64, 1u32), Complex64::new(0.5, 0.0));
        let t = MultiplicativeSpec::table(entries);
        assert!(eval_g(&t, &fi(2)).is_ok());
        assert!(matches!(
            eval_g(&t, &fi(4)),
            Err(Error::MissingTableValue { prime: 2, exponent: 2 })
        ));
    }

    #[test]
    fn multiplicativity_on_coprime_pairs() {
        let specs = [
            MultiplicativeSpec::divisor_real(0.5),
            MultiplicativeSpec::divisor(Complex64::new(0.7, 0.2)),
            MultiplicativeSpec::divisor_real(2.0),
        ];
        for spec in &specs {
            for m in [4u64, 9, 25, 27, 49] {
                for n in [11u64, 13, 121, 169] {
                    if num_integer_gcd(m, n) != 1 {
                        continue;
                    }
                    let lhs = eval_g(spec, &fi(m * n)).unwrap();
                    let rhs = eval_g(spec, &fi(m)).unwrap() * eval_g(spec, &fi(n)).unwrap();
                    assert!((lhs - rhs).norm() < 1e-12);
                }
            }
        }
    }

    fn num_integer_gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }

    #[test]
    fn growth_unit_passes() {
        let primes = sieve_primes(1000).unwrap();
        let unit = MultiplicativeSpec::unit();
        let r = check_growth_condition(&unit, 1000, &primes).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn growth_divisor_two_passes_with_feasible_constants() {
        // over n <= 100 the largest tau(n)/n^theta with theta = 1/96 needs
        // A >= tau(96)/96^(1/96) = 12/1.048..., so A = 12 is feasible
        let primes = sieve_primes(1000).unwrap();
        let d2 = MultiplicativeSpec::divisor_real(2.0).with_growth(12.0, 2.0, 1.0 / 96.0);
        let r = check_growth_condition(&d2, 100, &primes).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.minimal_feasible_b <= 2.0);
    }

    #[test]
    fn growth_divisor_two_fails_with_small_b() {
        let primes = sieve_primes(1000).unwrap();
        let d2 = MultiplicativeSpec::divisor_real(2.0).with_growth(100.0, 1.5, 1.0 / 96.0);
        let r = check_growth_condition(&d2, 100, &primes).unwrap();
        assert!(!r.pass);
        // d_2(2) = 2 > 1.5^1
        assert_eq!(r.witness_omega, Some(2));
    }

    #[test]
    fn lambda_unit_at_ten() {
        let primes = sieve_primes(100).unwrap();
        let v = lambda_g(&MultiplicativeSpec::unit(), 10.0, &primes).unwrap();
        assert_relative_eq!(v, 247.0 / 210.0, max_relative = 1e-14);
    }

    #[test]
    fn lambda_divisor_scales_by_alpha_norm_sq() {
        let primes = sieve_primes(10_000).unwrap();
        let unit = MultiplicativeSpec::unit();
        for alpha in [Complex64::new(0.5, 0.0), Complex64::new(0.7, 0.2), Complex64::new(2.0, 0.0)] {
            let d = MultiplicativeSpec::divisor(alpha);
            for x in [2.0, 100.0, 9999.0] {
                let lu = lambda_g(&unit, x, &primes).unwrap();
                let ld = lambda_g(&d, x, &primes).unwrap();
                assert_relative_eq!(ld, alpha.norm_sqr() * lu, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn lambda_single_prime() {
        let primes = sieve_primes(10).unwrap();
        let d = MultiplicativeSpec::divisor_real(0.5);
        let v = lambda_g(&d, 2.0, &primes).unwrap();
        assert_relative_eq!(v, 0.25 / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn lambda_monotone_in_x() {
        let primes = sieve_primes(10_000).unwrap();
        let d = MultiplicativeSpec::divisor_real(0.7);
        let mut prev = 0.0;
        for x in [10.0, 100.0, 1000.0, 10_000.0] {
            let v = lambda_g(&d, x, &primes).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn lambda_coverage_error() {
        let primes = sieve_primes(10).unwrap();
        assert!(matches!(
            lambda_g(&MultiplicativeSpec::unit(), 100.0, &primes),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn fit_lambda_unit_near_one() {
        let primes = sieve_primes(1_000_000).unwrap();
        let grid = [1e3, 1e4, 1e5, 1e6];
        let fit = fit_lambda(&MultiplicativeSpec::unit(), &grid, &primes).unwrap();
        // Mertens-type behavior: the slope of sum 1/p against log log x
        assert!((fit.fitted_alpha - 1.0).abs() < 0.15, "slope {}", fit.fitted_alpha);
        let dh = fit_lambda(&MultiplicativeSpec::divisor_real(0.5), &grid, &primes).unwrap();
        assert_relative_eq!(dh.fitted_alpha, 0.25 * fit.fitted_alpha, max_relative = 1e-12);
    }

    #[test]
    fn fit_lambda_zero_on_primes_is_zero() {
        let primes = sieve_primes(100_000).unwrap();
        let fit = fit_lambda(&MultiplicativeSpec::zero_on_primes(), &[1e3, 1e4, 1e5], &primes).unwrap();
        assert_eq!(fit.fitted_alpha, 0.0);
    }

    #[test]
    fn fit_lambda_degenerate_grid_errors() {
        let primes = sieve_primes(1000).unwrap();
        let r = fit_lambda(&MultiplicativeSpec::unit(), &[100.0, 100.0 + 1e-9, 100.0 + 2e-9], &primes);
        assert!(matches!(r, Err(Error::IllConditioned(_))));
    }

    #[test]
    fn convolution_of_two_unit_divisors_is_tau() {
        let d1 = MultiplicativeSpec::divisor_real(1.0);
        let d2 = MultiplicativeSpec::divisor_real(2.0);
        let got = dirichlet_convolve(&d1, &d1, &fi(12)).unwrap();
        let want = eval_g(&d2, &fi(12)).unwrap();
        assert_relative_eq!(got.re, want.re, max_relative = 1e-13);
        assert_relative_eq!(got.re, 6.0, max_relative = 1e-13);
    }

    #[test]
    fn convolution_identity_element() {
        let d = MultiplicativeSpec::divisor_real(0.7);
        let eps = MultiplicativeSpec::zero_on_primes();
        for n in [1u64, 2, 12, 60, 121] {
            let got = dirichlet_convolve(&d, &eps, &fi(n)).unwrap();
            let want = eval_g(&d, &fi(n)).unwrap();
            assert!((got - want).norm() < 1e-14);
        }
    }

    #[test]
    fn convolution_halves_reassemble() {
        let dh = MultiplicativeSpec::divisor_real(0.5);
        let got = dirichlet_convolve(&dh, &dh, &fi(4)).unwrap();
        assert_relative_eq!(got.re, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn divisor_family_convolution_identity() {
        // d_alpha * d_beta = d_{alpha+beta}
        let pairs = [(0.5, 0.5), (1.0, 1.0), (0.3, 1.7)];
        for (a, b) in pairs {
            let sa = MultiplicativeSpec::divisor_real(a);
            let sb = MultiplicativeSpec::divisor_real(b);
            let sab = MultiplicativeSpec::divisor_real(a + b);
            for n in 1..=1000u64 {
                let got = dirichlet_convolve(&sa, &sb, &fi(n)).unwrap();
                let want = eval_g(&sab, &fi(n)).unwrap();
                let scale = want.norm().max(1.0);
                assert!(
                    (got - want).norm() / scale < 1e-10,
                    "n = {n}, alpha = {a}, beta = {b}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn default_majorant_covers_prime_powers_for_large_alpha() {
        let d2 = MultiplicativeSpec::divisor_real(2.0);
        let d3 = MultiplicativeSpec::divisor_real(3.0);
        for spec in [&d2, &d3] {
            for p in [2u64, 3, 5, 101] {
                for j in 1..200u32 {
                    let g = spec.value_at_prime_power(p, j).unwrap().norm();
                    let m = spec.prime_power_majorant(p, j);
                    assert!(g <= m * (1.0 + 1e-12), "p={p} j={j}: {g} > {m}");
                }
            }
        }
    }
}
