//! Prime tables and streaming enumeration of smooth integers in factored form.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Hard cap on sieve limits; above this the table would not fit in desk-scale
/// memory and the caller gets a resource error instead of an OOM.
pub const MAX_SIEVE_LIMIT: u64 = 1_000_000_000;

/// Plain sieve below this limit, segmented above (cache behavior).
const SEGMENT_THRESHOLD: u64 = 1 << 22;
const SEGMENT_SIZE: usize = 1 << 20;

/// Ascending table of all primes up to `limit`. Immutable once built and
/// freely shareable across threads.
#[derive(Debug, Clone)]
pub struct PrimeTable {
    limit: u64,
    primes: Vec<u64>,
}

impl PrimeTable {
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// Index of `p` in the table, if `p` is prime and within the limit.
    pub fn rank_of(&self, p: u64) -> Option<usize> {
        self.primes.binary_search(&p).ok()
    }

    /// Primes in the inclusive real window [lo, hi].
    pub fn in_window(&self, lo: f64, hi: f64) -> &[u64] {
        let start = self.primes.partition_point(|&p| (p as f64) < lo);
        let end = self.primes.partition_point(|&p| p as f64 <= hi);
        &self.primes[start..end]
    }

    /// Ensures the table covers real bound `x`.
    pub fn require_coverage(&self, x: f64) -> Result<()> {
        if (self.limit as f64) < x {
            return Err(Error::Coverage {
                limit: self.limit,
                needed: x,
            });
        }
        Ok(())
    }
}

/// Complete ascending prime table up to `limit`.
pub fn sieve_primes(limit: u64) -> Result<PrimeTable> {
    if limit < 2 {
        return Err(Error::EmptyTable(limit));
    }
    if limit > MAX_SIEVE_LIMIT {
        return Err(Error::ResourceLimit {
            requested: limit,
            maximum: MAX_SIEVE_LIMIT,
        });
    }
    let primes = if limit <= SEGMENT_THRESHOLD {
        simple_sieve(limit)
    } else {
        segmented_sieve(limit)
    };
    Ok(PrimeTable { limit, primes })
}

fn simple_sieve(limit: u64) -> Vec<u64> {
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            primes.push(i as u64);
            let mut m = i * i;
            while m <= n {
                composite[m] = true;
                m += i;
            }
        }
    }
    primes
}

fn segmented_sieve(limit: u64) -> Vec<u64> {
    let root = (limit as f64).sqrt() as u64 + 1;
    let base = simple_sieve(root);
    let mut primes = base.clone();
    let mut lo = root + 1;
    let mut mask = vec![false; SEGMENT_SIZE];
    while lo <= limit {
        let hi = (lo + SEGMENT_SIZE as u64 - 1).min(limit);
        let len = (hi - lo + 1) as usize;
        mask[..len].fill(false);
        for &p in &base {
            if p * p > hi {
                break;
            }
            let mut m = lo.div_ceil(p) * p;
            while m <= hi {
                mask[(m - lo) as usize] = true;
                m += p;
            }
        }
        for (i, &c) in mask[..len].iter().enumerate() {
            if !c {
                primes.push(lo + i as u64);
            }
        }
        lo = hi + 1;
    }
    primes
}

/// A positive integer carried together with its full factorization,
/// so g(n), X(n), Omega(n) and P(n) never require factoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoredInteger {
    value: u64,
    factors: Vec<(u64, u32)>,
}

impl FactoredInteger {
    pub fn one() -> Self {
        FactoredInteger {
            value: 1,
            factors: Vec::new(),
        }
    }

    /// Builds from (prime, exponent) pairs; validates ordering and the
    /// multiply-back identity.
    pub fn from_factors(factors: Vec<(u64, u32)>) -> Result<Self> {
        let mut value: u64 = 1;
        let mut last = 0u64;
        for &(p, e) in &factors {
            if p <= last {
                return Err(Error::Domain(format!(
                    "factors must carry strictly increasing primes, got {p} after {last}"
                )));
            }
            if e == 0 {
                return Err(Error::Domain(format!("exponent of {p} must be >= 1")));
            }
            last = p;
            for _ in 0..e {
                value = value
                    .checked_mul(p)
                    .ok_or_else(|| Error::Domain("factored value overflows u64".into()))?;
            }
        }
        Ok(FactoredInteger { value, factors })
    }

    /// Factors `n` by trial division (test and oracle use).
    pub fn factor(mut n: u64) -> Self {
        assert!(n >= 1);
        let value = n;
        let mut factors = Vec::new();
        let mut p = 2u64;
        while p * p <= n {
            if n % p == 0 {
                let mut e = 0;
                while n % p == 0 {
                    n /= p;
                    e += 1;
                }
                factors.push((p, e));
            }
            p += if p == 2 { 1 } else { 2 };
        }
        if n > 1 {
            factors.push((n, 1));
        }
        FactoredInteger { value, factors }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    /// Number of prime factors counted with multiplicity.
    pub fn big_omega(&self) -> u32 {
        self.factors.iter().map(|&(_, e)| e).sum()
    }

    /// Largest prime factor; `None` for n = 1.
    pub fn largest_prime(&self) -> Option<u64> {
        self.factors.last().map(|&(p, _)| p)
    }
}

/// Streaming enumeration of `lower < n <= x` with `P(n) <= y`, each exactly
/// once in factored form. Depth-first over ascending primes, one prime power
/// multiplied in per level; memory stays proportional to the number of
/// primes up to y. No output order is guaranteed; see
/// [`enumerate_smooth_sorted`] for tests.
pub fn enumerate_smooth(x: f64, y: f64, lower: f64, primes: &PrimeTable) -> SmoothIter<'_> {
    let usable = primes.in_window(2.0, y.min(x));
    let mut stack = Vec::new();
    if 1.0 <= x {
        stack.push(Node {
            value: 1,
            next_prime: 0,
            factors: Vec::new(),
        });
    }
    SmoothIter {
        primes: usable,
        x,
        lower,
        stack,
    }
}

struct Node {
    value: u64,
    next_prime: usize,
    factors: Vec<(u64, u32)>,
}

pub struct SmoothIter<'a> {
    primes: &'a [u64],
    x: f64,
    lower: f64,
    stack: Vec<Node>,
}

impl Iterator for SmoothIter<'_> {
    type Item = FactoredInteger;

    fn next(&mut self) -> Option<FactoredInteger> {
        loop {
            let node = self.stack.pop()?;
            for i in node.next_prime..self.primes.len() {
                let p = self.primes[i];
                if let Some(child) = node.value.checked_mul(p) {
                    if child as f64 <= self.x {
                        let mut factors = node.factors.clone();
                        match factors.last_mut() {
                            Some(last) if last.0 == p => last.1 += 1,
                            _ => factors.push((p, 1)),
                        }
                        self.stack.push(Node {
                            value: child,
                            next_prime: i,
                            factors,
                        });
                    }
                }
            }
            if node.value as f64 > self.lower {
                return Some(FactoredInteger {
                    value: node.value,
                    factors: node.factors,
                });
            }
        }
    }
}

/// Sorted-by-value collection of the smooth stream, for tests and for
/// consumers that need a deterministic order.
pub fn enumerate_smooth_sorted(x: f64, y: f64, lower: f64, primes: &PrimeTable) -> Vec<FactoredInteger> {
    let mut all: Vec<FactoredInteger> = enumerate_smooth(x, y, lower, primes).collect();
    all.sort_by_key(FactoredInteger::value);
    all
}

/// Parallel smooth enumeration. The range is partitioned by the largest
/// prime and its exponent, each cell enumerated independently, and the
/// union returned sorted by value, so the result is identical for any
/// worker count.
pub fn enumerate_smooth_parallel(x: f64, y: f64, lower: f64, primes: &PrimeTable) -> Vec<FactoredInteger> {
    let usable = primes.in_window(2.0, y.min(x));
    let mut cells: Vec<(usize, u64)> = Vec::new();
    for (i, &p) in usable.iter().enumerate() {
        let mut power = p;
        while power as f64 <= x {
            cells.push((i, power));
            match power.checked_mul(p) {
                Some(next) => power = next,
                None => break,
            }
        }
    }
    let mut out: Vec<FactoredInteger> = cells
        .into_par_iter()
        .flat_map_iter(|(i, power)| {
            let p = usable[i];
            let e = power.ilog(p);
            let sub_limit = x / power as f64;
            let sub = PrimeTableView {
                primes: &usable[..i],
            };
            sub.iterate(sub_limit)
                .filter_map(move |m| {
                    let value = m.value * power;
                    if value as f64 > lower {
                        let mut factors = m.factors;
                        factors.push((p, e));
                        Some(FactoredInteger { value, factors })
                    } else {
                        None
                    }
                })
                .collect::<Vec<_>>()
                .into_iter()
        })
        .collect();
    if 1.0 > lower && 1.0 <= x {
        out.push(FactoredInteger::one());
    }
    out.sort_by_key(FactoredInteger::value);
    out
}

struct PrimeTableView<'a> {
    primes: &'a [u64],
}

impl<'a> PrimeTableView<'a> {
    fn iterate(&self, x: f64) -> SmoothIter<'a> {
        let mut stack = Vec::new();
        if 1.0 <= x {
            stack.push(Node {
                value: 1,
                next_prime: 0,
                factors: Vec::new(),
            });
        }
        SmoothIter {
            primes: self.primes,
            x,
            lower: 0.0,
            stack,
        }
    }
}

/// Smallest-prime-factor table for 0..=n, stored as the rank of the prime in
/// `primes`. Entry 0 and 1 are unused.
pub(crate) fn spf_rank_table(n: u64, primes: &PrimeTable) -> Vec<u32> {
    let n = n as usize;
    let mut spf = vec![u32::MAX; n + 1];
    for (rank, &p) in primes.primes().iter().enumerate() {
        let p = p as usize;
        if p > n {
            break;
        }
        let mut m = p;
        while m <= n {
            if spf[m] == u32::MAX {
                spf[m] = rank as u32;
            }
            m += p;
        }
    }
    spf
}
