//! The Kubilius model: independent variables `X_p` with
//! `P(X_p = k) = p^{−k}(1 − 1/p)`, standing in for the exponent of `p` in a
//! random integer.
//!
//! `U_T = #{p ∈ T : X_p ≥ 1}` and `W_T = Σ_{p∈T} X_p` model `ω(n, T)` and
//! `Ω(n, T)`. Their laws are computed exactly by sequential convolution in
//! ascending order of `p`; the law of `U_T` is the coefficient sequence of
//! `Π_{p∈T} (1 − 1/p + z/p)`.

use std::collections::BTreeMap;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{Pmf, TvResult};
use crate::error::{Error, Result};
use crate::factorstats::{smooth_part_distribution, CountMode, MAX_X};
use crate::numeric::CompensatedSum;
use crate::primesets::{is_prime, sieve_primes, PrimeSet};

/// One model variable `X_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVariable {
    p: u64,
}

impl ModelVariable {
    pub fn new(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::domain(format!("{p} is not prime")));
        }
        Ok(Self { p })
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    /// `P(X_p = k)`.
    pub fn pmf(&self, k: u32) -> f64 {
        let pf = self.p as f64;
        pf.powi(-(k as i32)) * (1.0 - 1.0 / pf)
    }

    /// `P(X_p ≥ k) = p^{−k}`.
    pub fn tail(&self, k: u32) -> f64 {
        (self.p as f64).powi(-(k as i32))
    }

    /// Inverse CDF on a uniform 64-bit word: the largest `k` with
    /// `r · p^k < 2^64`, so that `P(X_p ≥ k) = ⌈2^64 / p^k⌉ / 2^64`.
    /// Integer arithmetic only, hence identical on every platform.
    pub fn from_uniform(&self, r: u64) -> u32 {
        const TWO64: u128 = 1 << 64;
        let p = self.p as u128;
        let r = r as u128;
        let mut k = 0;
        let mut pk = p;
        while pk <= TWO64 && r * pk < TWO64 {
            k += 1;
            pk *= p;
        }
        k
    }
}

/// Request for the exact law of `U_T` or `W_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLawRequest {
    pub set: PrimeSet,
    pub mode: CountMode,
    pub tail_eps: f64,
}

impl ModelLawRequest {
    pub fn new(set: PrimeSet, mode: CountMode, tail_eps: f64) -> Self {
        Self {
            set,
            mode,
            tail_eps,
        }
    }
}

/// Exact law of `U_T` (Distinct) or `W_T` (WithMultiplicity).
///
/// `U_T` is exactly supported on `[0, |T|]`. For `W_T` each geometric factor
/// is cut at `k_max(p) = ⌈ln(ε/|T|) / ln(1/p)⌉`, where its tail `p^{−k_max}`
/// is at most `ε/|T|`; the union of the omitted tails is the certificate.
pub fn model_exact_pmf(req: &ModelLawRequest) -> Result<Pmf> {
    if !(req.tail_eps > 0.0 && req.tail_eps < 1.0) {
        return Err(Error::domain(format!(
            "tail_eps must lie in (0, 1), got {}",
            req.tail_eps
        )));
    }
    let primes = req.set.primes();
    if primes.is_empty() {
        return Ok(Pmf::point_mass(0));
    }
    match req.mode {
        CountMode::Distinct => {
            let mut poly = vec![1.0f64];
            for &p in primes {
                let hit = 1.0 / p as f64;
                let miss = 1.0 - hit;
                poly.push(0.0);
                for k in (1..poly.len()).rev() {
                    poly[k] = poly[k] * miss + poly[k - 1] * hit;
                }
                poly[0] *= miss;
            }
            Ok(Pmf::from_parts(poly, 0.0))
        }
        CountMode::WithMultiplicity => {
            let share = (req.tail_eps / primes.len() as f64).ln();
            let mut law = vec![1.0f64];
            let mut tail = CompensatedSum::new();
            for &p in primes {
                let var = ModelVariable { p };
                let pf = p as f64;
                let kmax = (share / (-pf.ln())).ceil().max(1.0) as u32;
                let factor: Vec<f64> = (0..kmax).map(|k| var.pmf(k)).collect();
                tail.add(var.tail(kmax));
                let mut next = vec![0.0; law.len() + factor.len() - 1];
                for (i, &a) in law.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (k, &b) in factor.iter().enumerate() {
                        next[i + k] += a * b;
                    }
                }
                law = next;
            }
            Ok(Pmf::from_parts(law, tail.value()))
        }
    }
}

/// One draw of the vector `X_y = (X_p : p ≤ y)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSample {
    pub sample_id: u64,
    /// Exponents in ascending order of `p`.
    pub exponents: Vec<u32>,
}

/// Deterministic sampler for `X_y`.
///
/// Sample `i` uses ChaCha8 stream `i` under `seed`, with the `j`-th word
/// assigned to the `j`-th prime, so any sample can be regenerated on its own
/// and samples can be drawn in parallel.
#[derive(Debug, Clone)]
pub struct ModelSampler {
    primes: Vec<ModelVariable>,
    seed: [u8; 32],
    next: u64,
    end: u64,
}

impl ModelSampler {
    pub fn primes(&self) -> Vec<u64> {
        self.primes.iter().map(|v| v.p).collect()
    }

    /// Sample `id`, independent of iteration state.
    pub fn sample(&self, id: u64) -> ModelSample {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(id);
        let exponents = self
            .primes
            .iter()
            .map(|v| v.from_uniform(rng.next_u64()))
            .collect();
        ModelSample {
            sample_id: id,
            exponents,
        }
    }

    /// Histogram of `U_T` or `W_T` over samples `0..n`, for `T` a subset of
    /// the sampled primes. Drawn in parallel; the result does not depend on
    /// the thread count.
    pub fn histogram(&self, set: &PrimeSet, mode: CountMode, n: u64) -> Result<Vec<u64>> {
        let idx: Vec<usize> = set
            .primes()
            .iter()
            .map(|&p| {
                self.primes
                    .iter()
                    .position(|v| v.p == p)
                    .ok_or_else(|| Error::domain(format!("prime {p} is not sampled")))
            })
            .collect::<Result<_>>()?;
        let hist = (0..n)
            .into_par_iter()
            .fold(BTreeMap::<u64, u64>::new, |mut acc, i| {
                let s = self.sample(i);
                let v: u64 = idx
                    .iter()
                    .map(|&j| match mode {
                        CountMode::Distinct => (s.exponents[j] > 0) as u64,
                        CountMode::WithMultiplicity => s.exponents[j] as u64,
                    })
                    .sum();
                *acc.entry(v).or_insert(0) += 1;
                acc
            })
            .reduce(BTreeMap::new, |mut a, b| {
                for (k, c) in b {
                    *a.entry(k).or_insert(0) += c;
                }
                a
            });
        let len = hist.keys().next_back().map_or(0, |&k| k as usize + 1);
        let mut out = vec![0u64; len];
        for (k, c) in hist {
            out[k as usize] = c;
        }
        Ok(out)
    }
}

impl Iterator for ModelSampler {
    type Item = ModelSample;

    fn next(&mut self) -> Option<ModelSample> {
        if self.next >= self.end {
            return None;
        }
        let s = self.sample(self.next);
        self.next += 1;
        Some(s)
    }
}

/// Stream of `n_samples` independent draws of `(X_p : p ≤ y)`.
pub fn model_sample_vector(y: u64, seed: u64, n_samples: u64) -> Result<ModelSampler> {
    if y < 2 {
        return Err(Error::domain(format!("y must be ≥ 2, got {y}")));
    }
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be ≥ 1"));
    }
    let primes = sieve_primes(y)?
        .primes()
        .iter()
        .map(|&p| ModelVariable { p })
        .collect();
    Ok(ModelSampler {
        primes,
        seed: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        next: 0,
        end: n_samples,
    })
}

/// `d_TV(X_y, V_{x,y})`, exactly.
///
/// Both vectors are determined by a `y`-smooth number `s`: for `V_{x,y}` it
/// is the smooth part of a uniform `n ≤ x`, and `P(X_y ↔ s) = C_y / s` with
/// `C_y = Π_{p≤y}(1 − 1/p)`. The distance is `Σ_s max(0, P_V(s) − C_y/s)`
/// over the observed smooth parts; unobserved `s` contribute nothing.
pub fn model_tv_exact(x: u64, y: u64) -> Result<TvResult> {
    if y < 2 || y > x {
        return Err(Error::domain(format!("need 2 ≤ y ≤ x, got y = {y}, x = {x}")));
    }
    if x > MAX_X {
        return Err(Error::CapExceeded(format!("x = {x} exceeds the cap 2^40")));
    }
    let parts = smooth_part_distribution(x, y)?;
    let ln_c: f64 = sieve_primes(y)?
        .primes()
        .iter()
        .map(|&p| (-1.0 / p as f64).ln_1p())
        .collect::<CompensatedSum>()
        .value();
    let scaled_c = x as f64 * ln_c.exp();
    let xf = x as f64;
    // P_V(s) − P_X(s) = (count·s − x·C_y) / (x·s); count·s ≤ x is exact.
    let total: CompensatedSum = parts
        .iter()
        .map(|(&s, &count)| {
            let sf = s as f64;
            ((count as f64 * sf - scaled_c) / (xf * sf)).max(0.0)
        })
        .collect();
    Ok(TvResult {
        value: total.value().clamp(0.0, 1.0),
        uncertainty: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ps: &[u64]) -> PrimeSet {
        PrimeSet::new(ps.to_vec()).unwrap()
    }

    #[test]
    fn distinct_two_three() {
        let pmf = model_exact_pmf(&ModelLawRequest::new(set(&[2, 3]), CountMode::Distinct, 1e-12)).unwrap();
        let want = [1.0 / 3.0, 0.5, 1.0 / 6.0];
        assert_eq!(pmf.len(), 3);
        for (g, w) in pmf.probs().iter().zip(want) {
            assert!((g - w).abs() < 1e-16);
        }
        assert_eq!(pmf.tail_bound(), 0.0);
    }

    #[test]
    fn geometric_three() {
        let pmf = model_exact_pmf(&ModelLawRequest::new(set(&[3]), CountMode::WithMultiplicity, 1e-12)).unwrap();
        for (k, &p) in pmf.probs().iter().enumerate() {
            let want = (2.0 / 3.0) * (1.0f64 / 3.0).powi(k as i32);
            assert!((p - want).abs() <= 4.0 * f64::EPSILON * want, "k={k}");
        }
        assert!(pmf.tail_bound() <= 1e-12);
        assert!((pmf.mass() + pmf.tail_bound() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_set_and_bad_eps() {
        let pmf = model_exact_pmf(&ModelLawRequest::new(PrimeSet::empty(), CountMode::WithMultiplicity, 1e-12)).unwrap();
        assert_eq!(pmf.probs(), &[1.0]);
        assert!(model_exact_pmf(&ModelLawRequest::new(set(&[2]), CountMode::Distinct, 0.0)).is_err());
        assert!(model_exact_pmf(&ModelLawRequest::new(set(&[2]), CountMode::Distinct, 1.5)).is_err());
    }

    #[test]
    fn inverse_cdf_is_exact_at_boundaries() {
        let v = ModelVariable::new(2).unwrap();
        assert_eq!(v.from_uniform(u64::MAX), 0);
        assert_eq!(v.from_uniform(1 << 63), 0);
        assert_eq!(v.from_uniform((1 << 63) - 1), 1);
        assert_eq!(v.from_uniform((1 << 62) - 1), 2);
        assert_eq!(v.from_uniform(0), 64);
        assert!(ModelVariable::new(4).is_err());
    }

    #[test]
    fn sampler_is_reproducible() {
        let a: Vec<_> = model_sample_vector(30, 7, 50).unwrap().collect();
        let b: Vec<_> = model_sample_vector(30, 7, 50).unwrap().collect();
        assert_eq!(a, b);
        let s = model_sample_vector(30, 7, 50).unwrap();
        assert_eq!(s.sample(17), a[17]);
        let c: Vec<_> = model_sample_vector(30, 8, 50).unwrap().collect();
        assert_ne!(a, c);
        assert!(model_sample_vector(1, 0, 1).is_err());
        assert!(model_sample_vector(2, 0, 0).is_err());
    }

    #[test]
    fn model_tv_dyadic_hand_case() {
        let tv = model_tv_exact(10, 2).unwrap();
        // (0.3 − 0.25) + (0.1 − 0.0625)
        assert!((tv.value - 0.0875).abs() <= 1e-17, "{}", tv.value);
        assert_eq!(tv.uncertainty, 0.0);
        assert!(model_tv_exact(10, 11).is_err());
        assert!(model_tv_exact(10, 1).is_err());
    }

    #[test]
    fn model_tv_y_equals_x() {
        let tv = model_tv_exact(1000, 1000).unwrap();
        assert!(tv.value > 0.5 && tv.value <= 1.0);
    }
}
