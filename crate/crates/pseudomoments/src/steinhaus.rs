//! Steinhaus random multiplicative functions: X is completely multiplicative
//! with X(p) i.i.d. uniform on the complex unit circle. Sampling is
//! counter-based and keyed by (master seed, sample index, prime rank), so a
//! realization is reproducible bit-for-bit however samples are distributed
//! over workers.

use crate::error::{Error, Result};
use crate::primes::{FactoredInteger, PrimeTable};
use num_complex::Complex64;
use std::sync::Arc;

const TAU: f64 = 2.0 * std::f64::consts::PI;
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer; full-avalanche bijection on u64.
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample stream key.
#[inline]
pub(crate) fn stream_key(master_seed: u64, sample_index: u64) -> u64 {
    mix(master_seed ^ mix(sample_index.wrapping_mul(GOLDEN) ^ STREAM_SALT))
}

/// The angle of X at the prime with the given table rank, in [0, 2*pi).
#[inline]
pub(crate) fn angle_from_key(key: u64, prime_rank: u64) -> f64 {
    let bits = mix(key ^ prime_rank.wrapping_mul(GOLDEN).wrapping_add(STREAM_SALT));
    (bits >> 11) as f64 * (TAU / (1u64 << 53) as f64)
}

/// One realization of the random angles (theta_p), one per prime of the
/// table; X(p) = exp(i theta_p).
#[derive(Debug, Clone)]
pub struct SteinhausSample {
    primes: Arc<PrimeTable>,
    angles: Vec<f64>,
    master_seed: u64,
    sample_index: u64,
}

/// Draws the realization indexed by (master_seed, sample_index) over the
/// given prime set. The same inputs always reproduce identical angles.
pub fn sample(primes: &Arc<PrimeTable>, master_seed: u64, sample_index: u64) -> SteinhausSample {
    let key = stream_key(master_seed, sample_index);
    let angles = (0..primes.len() as u64).map(|r| angle_from_key(key, r)).collect();
    SteinhausSample {
        primes: Arc::clone(primes),
        angles,
        master_seed,
        sample_index,
    }
}

/// Fills `buf` with the angles of the realization, without allocating; used
/// by the Monte Carlo hot paths. Produces exactly the bits of [`sample`].
pub(crate) fn fill_angles(buf: &mut [f64], master_seed: u64, sample_index: u64) {
    let key = stream_key(master_seed, sample_index);
    for (r, slot) in buf.iter_mut().enumerate() {
        *slot = angle_from_key(key, r as u64);
    }
}

impl SteinhausSample {
    pub fn primes(&self) -> &PrimeTable {
        &self.primes
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn provenance(&self) -> (u64, u64) {
        (self.master_seed, self.sample_index)
    }

    /// Angle at a given prime; coverage error when p is not in the set.
    pub fn angle_at(&self, p: u64) -> Result<f64> {
        let rank = self.primes.rank_of(p).ok_or(Error::SampleCoverage { prime: p })?;
        Ok(self.angles[rank])
    }

    /// X(p) for a prime of the set.
    pub fn x_at_prime(&self, p: u64) -> Result<Complex64> {
        Ok(Complex64::cis(self.angle_at(p)?))
    }
}

/// X(n) from the factorization: the angles add with multiplicity and one
/// sine/cosine is taken at the end, so |X(n)| = 1 to rounding.
pub fn eval_x(sample: &SteinhausSample, n: &FactoredInteger) -> Result<Complex64> {
    let mut phase = 0.0f64;
    for &(p, e) in n.factors() {
        phase += e as f64 * sample.angle_at(p)?;
    }
    Ok(Complex64::cis(phase))
}
