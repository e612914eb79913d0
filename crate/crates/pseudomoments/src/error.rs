use thiserror::Error;

/// Errors surfaced by the numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sieve limit {0} is below 2, no primes to tabulate")]
    EmptyTable(u64),
    #[error("sieve limit {requested} exceeds the configured maximum {maximum}")]
    ResourceLimit { requested: u64, maximum: u64 },
    #[error("prime table covers only {limit} but {needed} is required")]
    Coverage { limit: u64, needed: f64 },
    #[error("prime {prime} is outside the sampled prime set")]
    SampleCoverage { prime: u64 },
    #[error("coefficient table has no value for {prime}^{exponent}")]
    MissingTableValue { prime: u64, exponent: u32 },
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("local Euler factor series does not contract at p = {prime} (majorant ratio {ratio})")]
    DivergentSeries { prime: u64, ratio: f64 },
    #[error("integrand may be singular: |F_p| dips to {min_abs} on the grid with a negative exponent")]
    SingularIntegrand { min_abs: f64 },
    #[error("{count} primes up to {x} exceed the brute-force cap of {cap} angle dimensions")]
    TooManyPrimes { count: usize, x: f64, cap: usize },
    #[error("under-sampled estimate at x = {x}: stderr/mean = {rel} exceeds 0.05, increase samples")]
    UnderSampled { x: f64, rel: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
