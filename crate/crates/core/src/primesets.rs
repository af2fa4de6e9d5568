//! Prime generation and prime sets.
//!
//! Primes come from a segmented sieve of Eratosthenes: base primes up to
//! `√hi` are sieved once, then the range is processed in fixed-size segments
//! (default [`DEFAULT_SEGMENT_SIZE`]) which may run in parallel. Output is
//! independent of the thread count.
//!
//! A [`PrimeSet`] is a strictly ascending list of primes. Its
//! [`HarmonicSums`] are accumulated with compensated summation in ascending
//! order of `p`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Default segment length, in integers.
pub const DEFAULT_SEGMENT_SIZE: usize = 1 << 20;

/// Rounding convention for the doubly-exponential cutoffs `t_k`.
pub const CUTOFF_ROUNDING: &str = "t_k = floor(exp(exp(k)))";

/// A finite, strictly ascending set of primes with an optional label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrimeSet {
    primes: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// `H(T) = Σ 1/p`, `H′(T) = Σ 1/(p−1)` and `H″(T) = Σ 1/p²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HarmonicSums {
    pub h: f64,
    pub h1: f64,
    pub h2: f64,
}

impl HarmonicSums {
    /// Sums of a disjoint union, componentwise.
    pub fn combine(&self, other: &HarmonicSums) -> HarmonicSums {
        HarmonicSums {
            h: self.h + other.h,
            h1: self.h1 + other.h1,
            h2: self.h2 + other.h2,
        }
    }
}

impl PrimeSet {
    /// Builds a set from an arbitrary list, checking order and primality.
    pub fn new(primes: Vec<u64>) -> Result<Self> {
        for w in primes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::domain(format!(
                    "prime set must be strictly ascending ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&bad) = primes.iter().find(|&&p| !is_prime(p)) {
            return Err(Error::domain(format!("{bad} is not prime")));
        }
        Ok(Self {
            primes,
            label: None,
        })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(mut primes: Vec<u64>) -> Result<Self> {
        primes.sort_unstable();
        primes.dedup();
        Self::new(primes)
    }

    /// Wraps primes that are already known to be sorted and prime.
    pub(crate) fn from_sieved(primes: Vec<u64>) -> Self {
        debug_assert!(primes.windows(2).all(|w| w[0] < w[1]));
        Self {
            primes,
            label: None,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
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

    pub fn min(&self) -> Option<u64> {
        self.primes.first().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.primes.last().copied()
    }

    pub fn contains(&self, p: u64) -> bool {
        self.primes.binary_search(&p).is_ok()
    }

    pub fn is_disjoint(&self, other: &PrimeSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.primes.len() && j < other.primes.len() {
            match self.primes[i].cmp(&other.primes[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    /// Union of two sets.
    pub fn union(&self, other: &PrimeSet) -> PrimeSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.primes.len() && j < other.primes.len() {
            let (a, b) = (self.primes[i], other.primes[j]);
            if a < b {
                out.push(a);
                i += 1;
            } else if b < a {
                out.push(b);
                j += 1;
            } else {
                out.push(a);
                i += 1;
                j += 1;
            }
        }
        out.extend_from_slice(&self.primes[i..]);
        out.extend_from_slice(&other.primes[j..]);
        PrimeSet::from_sieved(out)
    }

    /// Elements of `self` not in `other`.
    pub fn difference(&self, other: &PrimeSet) -> PrimeSet {
        PrimeSet::from_sieved(
            self.primes
                .iter()
                .copied()
                .filter(|&p| !other.contains(p))
                .collect(),
        )
    }

    /// Elements `≤ bound`.
    pub fn up_to(&self, bound: u64) -> PrimeSet {
        let end = self.primes.partition_point(|&p| p <= bound);
        PrimeSet::from_sieved(self.primes[..end].to_vec())
    }

    pub fn harmonic_sums(&self) -> HarmonicSums {
        harmonic_sums(self)
    }

    /// Newline-delimited decimal text, one prime per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.primes.len() * 8);
        for p in &self.primes {
            let _ = writeln!(s, "{p}");
        }
        s
    }

    /// Parses the newline-delimited format. Blank lines and `#` comments are
    /// skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.primes {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut primes = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let p = t
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("line {}: {t:?}: {e}", lineno + 1)))?;
            primes.push(p);
        }
        Self::new(primes)
    }
}

/// Compensated harmonic sums over `T` in ascending order.
pub fn harmonic_sums(set: &PrimeSet) -> HarmonicSums {
    let mut h = CompensatedSum::new();
    let mut h1 = CompensatedSum::new();
    let mut h2 = CompensatedSum::new();
    for &p in set.primes() {
        let pf = p as f64;
        h.add(1.0 / pf);
        h1.add(1.0 / (pf - 1.0));
        h2.add(1.0 / (pf * pf));
    }
    HarmonicSums {
        h: h.value(),
        h1: h1.value(),
        h2: h2.value(),
    }
}

/// Deterministic Miller–Rabin, exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &SMALL {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Primes `≤ limit` by a plain (unsegmented) sieve; used for base primes.
fn small_primes(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Sieves the closed range `[lo, hi]` (with `lo ≥ 2`) given all primes up to
/// `√hi`.
fn sieve_segment(lo: u64, hi: u64, base: &[u64]) -> Vec<u64> {
    let len = (hi - lo + 1) as usize;
    let mut composite = vec![false; len];
    for &p in base {
        let p2 = p * p;
        if p2 > hi {
            break;
        }
        let start = p2.max(lo.div_ceil(p) * p);
        let mut m = (start - lo) as usize;
        let step = p as usize;
        while m < len {
            composite[m] = true;
            m += step;
        }
    }
    composite
        .iter()
        .enumerate()
        .filter(|(_, &c)| !c)
        .map(|(i, _)| lo + i as u64)
        .collect()
}

fn segments(lo: u64, hi: u64, segment: usize) -> Vec<(u64, u64)> {
    let seg = segment.max(1) as u64;
    let mut out = Vec::new();
    let mut a = lo;
    while a <= hi {
        let b = a.saturating_add(seg - 1).min(hi);
        out.push((a, b));
        if b == u64::MAX {
            break;
        }
        a = b + 1;
    }
    out
}

/// All primes in `[2, limit]`.
pub fn sieve_primes(limit: u64) -> Result<PrimeSet> {
    if limit < 2 {
        return Err(Error::domain(format!("sieve limit must be ≥ 2, got {limit}")));
    }
    primes_in_interval(1, limit)
}

/// Primes `p` with `lo < p ≤ hi`, using the default segment size.
pub fn primes_in_interval(lo: u64, hi: u64) -> Result<PrimeSet> {
    primes_in_interval_with(lo, hi, DEFAULT_SEGMENT_SIZE)
}

/// Primes `p` with `lo < p ≤ hi`. Memory is bounded by the segment size
/// (per worker) plus the output.
pub fn primes_in_interval_with(lo: u64, hi: u64, segment: usize) -> Result<PrimeSet> {
    if hi < lo {
        return Err(Error::domain(format!("empty interval ({lo}, {hi}]: hi < lo")));
    }
    if segment == 0 {
        return Err(Error::domain("segment size must be positive"));
    }
    let start = lo.saturating_add(1).max(2);
    if start > hi {
        return Ok(PrimeSet::empty());
    }
    let base = small_primes(hi.isqrt());
    let parts: Vec<Vec<u64>> = segments(start, hi, segment)
        .into_par_iter()
        .map(|(a, b)| sieve_segment(a, b, &base))
        .collect();
    Ok(PrimeSet::from_sieved(parts.concat()))
}

/// `π(x)`, counted segment by segment without materialising the primes.
pub fn prime_count(x: u64) -> u64 {
    if x < 2 {
        return 0;
    }
    let base = small_primes(x.isqrt());
    segments(2, x, DEFAULT_SEGMENT_SIZE)
        .into_par_iter()
        .map(|(a, b)| sieve_segment(a, b, &base).len() as u64)
        .sum()
}

/// `floor(exp(exp(k)))`.
///
/// Evaluated in `f64` with an explicit error margin: the result is rejected
/// if `exp(exp(k))` lies too close to an integer for the floor to be certain,
/// or if it does not fit in `u64` (`k ≥ 4`).
pub fn expexp_cutoff(k: u32) -> Result<u64> {
    let e = (k as f64).exp();
    let t = e.exp();
    if !t.is_finite() || t >= u64::MAX as f64 {
        return Err(Error::domain(format!("exp(exp({k})) does not fit in 64 bits")));
    }
    // Relative error of exp(exp(k)) is a few ulps times (1 + e^k).
    let err = t * f64::EPSILON * 8.0 * (1.0 + e);
    let fl = t.floor();
    if t - fl < err || fl + 1.0 - t < err {
        return Err(Error::domain(format!(
            "exp(exp({k})) is within rounding error of an integer"
        )));
    }
    Ok(fl as u64)
}

/// The block `S ∩ (t_k, t_{k+1}]` of all primes between consecutive
/// doubly-exponential cutoffs, labelled `expexp:k`.
pub fn expexp_block(k: u32) -> Result<PrimeSet> {
    let lo = expexp_cutoff(k)?;
    let hi = expexp_cutoff(k + 1)?;
    Ok(primes_in_interval(lo, hi)?.with_label(format!("expexp:{k}")))
}
