//! Discrete distributions on the nonnegative integers.
//!
//! A [`Pmf`] holds explicit probabilities for `0..len` plus `tail_bound`, a
//! certified upper bound on the mass that is not represented in `probs`
//! (either beyond the last index, or lost by truncating the factors of a
//! convolution). Every represented probability is a lower bound on the true
//! one, so total-variation distances computed from the explicit part are
//! exact up to half the combined tail bounds.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, ln_factorials, CompensatedSum};

/// Default tail certificate for Poisson laws feeding a TV computation.
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;

/// Slack allowed on mass invariants.
pub const MASS_SLACK: f64 = 1e-12;

/// Truncated probability mass function on `{0, 1, 2, …}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl Pmf {
    /// Validates `probs ≥ 0` and `1 − tail_bound ≤ Σ probs ≤ 1`.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if !(tail_bound >= 0.0 && tail_bound.is_finite()) {
            return Err(Error::domain(format!("invalid tail bound {tail_bound}")));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::domain(format!("probs[{k}] = {p} is not a probability")));
        }
        let mass = compensated_sum(probs.iter().copied());
        if mass > 1.0 + MASS_SLACK || mass < 1.0 - tail_bound - MASS_SLACK {
            return Err(Error::domain(format!(
                "mass {mass} inconsistent with tail bound {tail_bound}"
            )));
        }
        Ok(Self { probs, tail_bound })
    }

    pub(crate) fn from_parts(probs: Vec<f64>, tail_bound: f64) -> Self {
        Self { probs, tail_bound }
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self {
            probs,
            tail_bound: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Number of explicit entries.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `P(k)`, zero beyond the explicit range.
    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Explicit mass `Σ probs`.
    pub fn mass(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.probs.iter().enumerate().map(|(k, p)| k as f64 * p))
    }

    /// `P(X ≤ m)` over the explicit part.
    pub fn cdf(&self, m: usize) -> f64 {
        compensated_sum(self.probs.iter().take(m + 1).copied())
    }

    /// `P(X ≥ m)` over the explicit part.
    pub fn sf(&self, m: usize) -> f64 {
        compensated_sum(self.probs.iter().skip(m).copied())
    }

    /// Probability generating function `Σ P(k) z^k` by Horner's rule.
    pub fn pgf(&self, z: Complex64) -> Complex64 {
        self.probs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &p| acc * z + p)
    }

    /// Drops trailing entries whose combined mass is at most `eps`, moving
    /// that mass into the tail bound.
    pub fn trim_tail(&self, eps: f64) -> Pmf {
        let mut dropped = 0.0;
        let mut end = self.probs.len();
        while end > 1 && dropped + self.probs[end - 1] <= eps {
            dropped += self.probs[end - 1];
            end -= 1;
        }
        Pmf {
            probs: self.probs[..end].to_vec(),
            tail_bound: self.tail_bound + dropped,
        }
    }

    /// Two-column CSV `index,probability`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,probability\n");
        for (k, p) in self.probs.iter().enumerate() {
            s.push_str(&format!("{k},{p}\n"));
        }
        s
    }
}

/// Sparse joint pmf over `m`-tuples of nonnegative integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    dims: usize,
    entries: BTreeMap<Vec<u32>, f64>,
    tail_bound: f64,
}

impl JointPmf {
    pub fn new(dims: usize, entries: BTreeMap<Vec<u32>, f64>, tail_bound: f64) -> Result<Self> {
        if dims == 0 {
            return Err(Error::domain("joint pmf needs at least one dimension"));
        }
        if let Some(key) = entries.keys().find(|k| k.len() != dims) {
            return Err(Error::domain(format!(
                "tuple {key:?} does not have {dims} coordinates"
            )));
        }
        if entries.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain("joint pmf has a negative or non-finite entry"));
        }
        let mass = compensated_sum(entries.values().copied());
        if mass > 1.0 + MASS_SLACK || mass < 1.0 - tail_bound - MASS_SLACK {
            return Err(Error::domain(format!(
                "joint mass {mass} inconsistent with tail bound {tail_bound}"
            )));
        }
        Ok(Self {
            dims,
            entries,
            tail_bound,
        })
    }

    pub(crate) fn from_parts(dims: usize, entries: BTreeMap<Vec<u32>, f64>, tail_bound: f64) -> Self {
        Self {
            dims,
            entries,
            tail_bound,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn entries(&self) -> &BTreeMap<Vec<u32>, f64> {
        &self.entries
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn get(&self, key: &[u32]) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.entries.values().copied())
    }

    /// Marginal law of coordinate `j`.
    pub fn marginal(&self, j: usize) -> Result<Pmf> {
        if j >= self.dims {
            return Err(Error::domain(format!("coordinate {j} out of range")));
        }
        let mut acc: BTreeMap<u32, CompensatedSum> = BTreeMap::new();
        for (key, &p) in &self.entries {
            acc.entry(key[j]).or_default().add(p);
        }
        let len = acc.keys().next_back().map_or(1, |&k| k as usize + 1);
        let mut probs = vec![0.0; len];
        for (k, s) in acc {
            probs[k as usize] = s.value();
        }
        Ok(Pmf::from_parts(probs, self.tail_bound))
    }
}

/// Total-variation distance together with the mass it could not see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvResult {
    pub value: f64,
    pub uncertainty: f64,
}

impl TvResult {
    fn clamped(value: f64, uncertainty: f64) -> Self {
        let value = value.clamp(0.0, 1.0);
        let uncertainty = uncertainty.clamp(0.0, 1.0 - value);
        Self { value, uncertainty }
    }

    /// Upper end of the certified interval.
    pub fn upper(&self) -> f64 {
        self.value + self.uncertainty
    }
}

/// Chernoff certificate `P(Z ≥ k) ≤ e^{−λ}(eλ/k)^k` for `k > λ`, in log form.
fn ln_poisson_chernoff(lambda: f64, k: u64) -> f64 {
    let kf = k as f64;
    -lambda + kf * (1.0 + lambda.ln() - kf.ln())
}

/// Upper bound on `P(Pois(λ) ≥ k)`; 1 when `k ≤ λ`.
pub fn poisson_tail_certificate(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if (k as f64) <= lambda {
        return 1.0;
    }
    ln_poisson_chernoff(lambda, k).exp().min(1.0)
}

/// `Pois(λ)` truncated at the first `K > λ` whose Chernoff tail certificate
/// is below `tail_eps`.
pub fn poisson_pmf(lambda: f64, tail_eps: f64) -> Result<Pmf> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::domain(format!("Poisson parameter must be ≥ 0, got {lambda}")));
    }
    if !(tail_eps > 0.0 && tail_eps < 1.0) {
        return Err(Error::domain(format!("tail_eps must lie in (0, 1), got {tail_eps}")));
    }
    if lambda == 0.0 {
        return Ok(Pmf::point_mass(0));
    }
    let ln_eps = tail_eps.ln();
    let mut cut = lambda.floor() as u64 + 1;
    while ln_poisson_chernoff(lambda, cut) >= ln_eps {
        cut += 1;
    }
    let lnfact = ln_factorials(cut as usize);
    let ln_lambda = lambda.ln();
    let mut probs = Vec::with_capacity(cut as usize);
    let mut linear = (-lambda).exp();
    for k in 0..cut as usize {
        let p = if lambda <= 30.0 && k <= 30 {
            if k > 0 {
                linear *= lambda / k as f64;
            }
            linear
        } else {
            (k as f64 * ln_lambda - lambda - lnfact[k]).exp()
        };
        probs.push(p);
    }
    let tail = ln_poisson_chernoff(lambda, cut).exp();
    Ok(Pmf::from_parts(probs, tail))
}

/// Pointwise Poisson mass `e^{−λ} λ^k / k!`.
pub fn poisson_mass(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * lambda.ln() - lambda - crate::numeric::ln_factorial(k)).exp()
}

/// `½ Σ_k |p_k − q_k|` over the union of explicit supports.
pub fn tv_distance(p: &Pmf, q: &Pmf) -> TvResult {
    let n = p.len().max(q.len());
    let l1 = compensated_sum((0..n).map(|k| (p.get(k) - q.get(k)).abs()));
    TvResult::clamped(0.5 * l1, 0.5 * (p.tail_bound + q.tail_bound))
}

/// Joint TV over the union of sparse supports.
pub fn tv_distance_joint(p: &JointPmf, q: &JointPmf) -> Result<TvResult> {
    if p.dims != q.dims {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            p.dims, q.dims
        )));
    }
    let mut l1 = CompensatedSum::new();
    let mut qi = q.entries.iter().peekable();
    for (key, &pv) in &p.entries {
        while let Some((qk, &qv)) = qi.peek() {
            if *qk < key {
                l1.add(qv);
                qi.next();
            } else {
                break;
            }
        }
        match qi.peek() {
            Some((qk, &qv)) if *qk == key => {
                l1.add((pv - qv).abs());
                qi.next();
            }
            _ => l1.add(pv),
        }
    }
    for (_, &qv) in qi {
        l1.add(qv);
    }
    Ok(TvResult::clamped(
        0.5 * l1.value(),
        0.5 * (p.tail_bound + q.tail_bound),
    ))
}

/// Product law of independent components over their explicit grids; the
/// omitted mass is certified by the union bound `Σ tail_i`.
pub fn product_joint(components: &[Pmf]) -> Result<JointPmf> {
    if components.is_empty() {
        return Err(Error::domain("product of an empty list of pmfs"));
    }
    let mut entries: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
    for c in components {
        let mut next = Vec::with_capacity(entries.len() * c.len());
        for (key, w) in &entries {
            for (k, &p) in c.probs.iter().enumerate() {
                let v = w * p;
                if v > 0.0 {
                    let mut nk = key.clone();
                    nk.push(k as u32);
                    next.push((nk, v));
                }
            }
        }
        entries = next;
    }
    let tail = compensated_sum(components.iter().map(|c| c.tail_bound));
    Ok(JointPmf::from_parts(
        components.len(),
        entries.into_iter().collect(),
        tail,
    ))
}

/// `Bin(k, α)` on its exact support `[0, k]`.
pub fn binomial_pmf(k: u64, alpha: f64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("binomial parameter must lie in [0, 1], got {alpha}")));
    }
    let n = k as usize;
    if alpha == 0.0 {
        let mut probs = vec![0.0; n + 1];
        probs[0] = 1.0;
        return Ok(Pmf::from_parts(probs, 0.0));
    }
    if alpha == 1.0 {
        return Ok(Pmf::point_mass(n));
    }
    let lnfact = ln_factorials(n);
    let (la, lb) = (alpha.ln(), (-alpha).ln_1p());
    let probs = (0..=n)
        .map(|m| {
            let ln_c = lnfact[n] - lnfact[m] - lnfact[n - m];
            (ln_c + m as f64 * la + (n - m) as f64 * lb).exp()
        })
        .collect();
    Ok(Pmf::from_parts(probs, 0.0))
}

/// The two closed-form tail bounds for `Bin(k, α)` at level `βk`.
///
/// For `β ≤ α` they bound `P(X ≤ βk)`, for `β ≥ α` they bound `P(X ≥ βk)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialTailBounds {
    /// `exp{−k(β log(β/α) + (1−β) log((1−β)/(1−α)))}`.
    pub kullback: f64,
    /// `exp{−(α−β)² k / (3α(1−α))}`.
    pub exponential: f64,
}

/// `x log(x/y)` with `0 log 0 = 0`, via a difference of logarithms.
fn xlogxy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x.ln() - y.ln())
    }
}

/// Binomial tail bounds. Both are 1 when `k = 0` or `β = α`. Otherwise, when
/// `α ∈ {0, 1}` the tail event is impossible and both bounds are 0.
pub fn binomial_tail_bound(k: u64, alpha: f64, beta: f64) -> Result<BinomialTailBounds> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!(
            "alpha and beta must lie in [0, 1], got {alpha}, {beta}"
        )));
    }
    if k == 0 || alpha == beta {
        return Ok(BinomialTailBounds {
            kullback: 1.0,
            exponential: 1.0,
        });
    }
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(BinomialTailBounds {
            kullback: 0.0,
            exponential: 0.0,
        });
    }
    let kf = k as f64;
    let kl = xlogxy(beta, alpha) + xlogxy(1.0 - beta, 1.0 - alpha);
    let d = alpha - beta;
    Ok(BinomialTailBounds {
        kullback: (-kf * kl).exp(),
        exponential: (-(d * d) * kf / (3.0 * alpha * (1.0 - alpha))).exp(),
    })
}
