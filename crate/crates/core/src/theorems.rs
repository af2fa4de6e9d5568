//! Verification reports for the Poisson approximation bounds.
//!
//! Each check assembles an exact left-hand side (from integer counts or from
//! the model laws) and the closed-form right-hand side of the bound it
//! probes, and returns a [`TheoremReport`]. The bounds are asymptotic with
//! unknown constants, so nothing here asserts a constant: ratios are
//! recorded, and regression [`Band`]s frozen from verified runs catch drift.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::{json, Value};

use crate::dist::{
    poisson_mass, poisson_pmf, product_joint, tv_distance, tv_distance_joint, Pmf, TvResult,
    DEFAULT_TAIL_EPS,
};
use crate::error::{Error, Result};
use crate::factorstats::{joint_factor_counts, joint_pmf_of, CountMode, JointCounts, SetSpec, MAX_SETS};
use crate::kubilius::{model_exact_pmf, model_tv_exact, ModelLawRequest};
use crate::numeric::{ln_factorial, CompensatedSum};
use crate::primesets::{
    expexp_cutoff, prime_count, primes_in_interval, sieve_primes, HarmonicSums, PrimeSet,
    CUTOFF_ROUNDING,
};

/// Slack used by numerical inequality checks inside reports.
pub const CHECK_SLACK: f64 = 1e-12;

/// Model pmfs are trimmed to this tail before forming product grids.
const MODEL_TRIM: f64 = 1e-14;

/// `lhs / rhs`, or undefined when `rhs = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    Undefined,
}

impl Ratio {
    pub fn of(lhs: f64, rhs: f64) -> Self {
        if rhs > 0.0 {
            Ratio::Value(lhs / rhs)
        } else {
            Ratio::Undefined
        }
    }

    pub fn value(&self) -> Option<f64> {
        match *self {
            Ratio::Value(v) => Some(v),
            Ratio::Undefined => None,
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => Ok(Ratio::Value(n.as_f64().unwrap_or(f64::NAN))),
            Value::String(s) if s == "undefined" => Ok(Ratio::Undefined),
            other => Err(serde::de::Error::custom(format!("bad ratio {other}"))),
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v}"),
            Ratio::Undefined => f.write_str("undefined"),
        }
    }
}

/// Outcome of one bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub name: String,
    pub params: BTreeMap<String, Value>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Ratio,
    pub uncertainty: f64,
}

impl TheoremReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, uncertainty: f64) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
            lhs,
            rhs,
            ratio: Ratio::of(lhs, rhs),
            uncertainty,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn param(&self, key: &str) -> Option<&Value> {
        self.params.get(key)
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "name,lhs,rhs,ratio,uncertainty";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.name, self.lhs, self.rhs, self.ratio, self.uncertainty
        )
    }
}

/// Largest defined ratio among `reports`.
pub fn max_ratio(reports: &[TheoremReport]) -> Option<f64> {
    reports
        .iter()
        .filter_map(|r| r.ratio.value())
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

fn sums_json(set: &PrimeSet, hs: &HarmonicSums) -> Value {
    json!({
        "label": set.label(),
        "size": set.len(),
        "min": set.min(),
        "max": set.max(),
        "h": hs.h,
        "h1": hs.h1,
        "h2": hs.h2,
    })
}

/// Poisson parameter matched to a count mode: `H` for `ω`, `H′` for `Ω`.
pub fn matched_parameter(hs: &HarmonicSums, mode: CountMode) -> f64 {
    match mode {
        CountMode::Distinct => hs.h,
        CountMode::WithMultiplicity => hs.h1,
    }
}

fn check_disjoint_nonempty(sets: &[&PrimeSet]) -> Result<()> {
    if sets.is_empty() {
        return Err(Error::domain("at least one set is required"));
    }
    if sets.len() > MAX_SETS {
        return Err(Error::CapExceeded(format!(
            "{} sets exceeds the cap of {MAX_SETS}",
            sets.len()
        )));
    }
    for (i, s) in sets.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::domain(format!("set {i} is empty")));
        }
        for (j, t) in sets.iter().enumerate().skip(i + 1) {
            if !s.is_disjoint(t) {
                return Err(Error::domain(format!("sets {i} and {j} overlap")));
            }
        }
    }
    Ok(())
}

/// Configuration of the joint total-variation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Config {
    pub x: u64,
    pub y: u64,
    pub specs: Vec<SetSpec>,
    pub u: f64,
}

impl Thm1Config {
    pub fn new(x: u64, y: u64, specs: Vec<SetSpec>) -> Result<Self> {
        if y < 2 || y > x {
            return Err(Error::domain(format!("need 2 ≤ y ≤ x, got y = {y}, x = {x}")));
        }
        check_disjoint_nonempty(&specs.iter().map(|s| &s.set).collect::<Vec<_>>())?;
        if let Some(p) = specs.iter().filter_map(|s| s.set.max()).max() {
            if p > y {
                return Err(Error::domain(format!("prime {p} exceeds y = {y}")));
            }
        }
        let u = (x as f64).ln() / (y as f64).ln();
        Ok(Self { x, y, specs, u })
    }
}

/// `u^{−u}`.
pub fn u_power(u: f64) -> f64 {
    (-u * u.ln()).exp()
}

fn poisson_components(lambdas: &[f64]) -> Result<Vec<Pmf>> {
    lambdas
        .iter()
        .map(|&l| poisson_pmf(l, DEFAULT_TAIL_EPS))
        .collect()
}

/// Model route: `d_TV((Y_1,…,Y_m), (Z_1,…,Z_m))` with `Y_i = U_{T_i}` or
/// `W_{T_i}` independent and `Z_i ~ Pois(H_i)`, against
/// `Σ H″(T_j)/(1 + H(T_j))`. Also records `Σ_j d_TV(Y_j, Z_j)`, which bounds
/// the joint distance for independent coordinates.
pub fn check_cor33(specs: &[SetSpec]) -> Result<TheoremReport> {
    check_disjoint_nonempty(&specs.iter().map(|s| &s.set).collect::<Vec<_>>())?;
    let mut models = Vec::new();
    let mut poissons = Vec::new();
    let mut rhs = CompensatedSum::new();
    let mut marginal_sum = CompensatedSum::new();
    let mut marginal_unc = CompensatedSum::new();
    let mut sets = Vec::new();
    for s in specs {
        let hs = s.set.harmonic_sums();
        let lambda = matched_parameter(&hs, s.mode);
        let model = model_exact_pmf(&ModelLawRequest::new(s.set.clone(), s.mode, DEFAULT_TAIL_EPS))?
            .trim_tail(MODEL_TRIM);
        let pois = poisson_pmf(lambda, DEFAULT_TAIL_EPS)?;
        let tv = tv_distance(&model, &pois);
        marginal_sum.add(tv.value);
        marginal_unc.add(tv.uncertainty);
        rhs.add(hs.h2 / (1.0 + hs.h));
        sets.push(sums_json(&s.set, &hs));
        models.push(model);
        poissons.push(pois);
    }
    let joint = tv_distance_joint(&product_joint(&models)?, &product_joint(&poissons)?)?;
    let marginal_sum = marginal_sum.value();
    Ok(
        TheoremReport::new("cor33", joint.value, rhs.value(), joint.uncertainty)
            .with("sets", Value::Array(sets))
            .with("modes", specs.iter().map(|s| s.mode.as_str()).collect::<Vec<_>>())
            .with("marginal_tv_sum", marginal_sum)
            .with("marginal_tv_uncertainty", marginal_unc.value())
            .with(
                "subadditivity_holds",
                joint.value <= marginal_sum + joint.uncertainty + marginal_unc.value() + CHECK_SLACK,
            ),
    )
}

/// Joint TV between `(f_1(n), …, f_m(n))` for uniform `n ≤ x` and
/// independent Poisson variables, against `Σ H″/(1+H) + u^{−u}`.
///
/// The report also carries the two legs of the triangle inequality, each
/// computed independently: the model route (`cor33`) and the exact model
/// transfer distance `d_TV(X_y, V_{x,y})`.
pub fn check_thm1(cfg: &Thm1Config) -> Result<TheoremReport> {
    let counts = joint_factor_counts(cfg.x, &cfg.specs)?;
    let empirical = joint_pmf_of(&counts);
    let mut lambdas = Vec::new();
    let mut rhs = CompensatedSum::new();
    let mut sets = Vec::new();
    for s in &cfg.specs {
        let hs = s.set.harmonic_sums();
        lambdas.push(matched_parameter(&hs, s.mode));
        rhs.add(hs.h2 / (1.0 + hs.h));
        sets.push(sums_json(&s.set, &hs));
    }
    let harmonic_part = rhs.value();
    let upow = u_power(cfg.u);
    let poisson = product_joint(&poisson_components(&lambdas)?)?;
    let lhs = tv_distance_joint(&empirical, &poisson)?;

    let model_route = check_cor33(&cfg.specs)?;
    let transfer = model_tv_exact(cfg.x, cfg.y)?;
    let triangle_rhs = model_route.lhs + transfer.value;
    let triangle_holds = lhs.value
        <= triangle_rhs + lhs.uncertainty + model_route.uncertainty + transfer.uncertainty + CHECK_SLACK;

    Ok(
        TheoremReport::new("thm1", lhs.value, harmonic_part + upow, lhs.uncertainty)
            .with("x", cfg.x)
            .with("y", cfg.y)
            .with("u", cfg.u)
            .with("u_pow_neg_u", upow)
            .with("harmonic_term", harmonic_part)
            .with("lambdas", lambdas)
            .with("modes", cfg.specs.iter().map(|s| s.mode.as_str()).collect::<Vec<_>>())
            .with("sets", Value::Array(sets))
            .with("support_size", counts.counts().len())
            .with("model_route_tv", model_route.lhs)
            .with("model_route_uncertainty", model_route.uncertainty)
            .with("model_route_marginal_sum", model_route.param("marginal_tv_sum").cloned().unwrap_or(Value::Null))
            .with("model_transfer_tv", transfer.value)
            .with("triangle_rhs", triangle_rhs)
            .with("triangle_holds", triangle_holds),
    )
}

/// Joint TV of `(ω_k, …, ω_ℓ)` over the blocks `(t_j, t_{j+1}]` against
/// independent `Pois(1)` variables. Only blocks with `t_{j+1}³ ≤ x` are
/// counted; the others are listed as skipped. `exp{−e^{ξ/2}}` is reported as
/// the reference right side.
pub fn check_corollary1(x: u64, xi_lo: u32, xi_hi: u32) -> Result<TheoremReport> {
    if xi_lo > xi_hi {
        return Err(Error::domain(format!("empty block range {xi_lo}..={xi_hi}")));
    }
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    let mut blocks = Vec::new();
    for k in xi_lo..=xi_hi {
        let lo = expexp_cutoff(k)?;
        let hi = match expexp_cutoff(k + 1) {
            Ok(v) => v,
            Err(_) => {
                skipped.push(json!({ "k": k, "reason": "t_{k+1} exceeds 64 bits" }));
                continue;
            }
        };
        let fits = (hi as u128).pow(3) <= x as u128;
        if fits {
            let set = primes_in_interval(lo, hi)?.with_label(format!("expexp:{k}"));
            let hs = set.harmonic_sums();
            blocks.push(json!({
                "k": k, "t_lo": lo, "t_hi": hi, "size": set.len(),
                "h": hs.h, "abs_h_minus_1": (hs.h - 1.0).abs(),
            }));
            used.push(set);
        } else {
            skipped.push(json!({ "k": k, "t_lo": lo, "t_hi": hi, "reason": "t_{k+1}^3 > x" }));
        }
    }
    if used.is_empty() {
        return Err(Error::domain(format!(
            "no block in {xi_lo}..={xi_hi} satisfies t_(k+1)^3 <= x = {x}"
        )));
    }
    let specs: Vec<SetSpec> = used.into_iter().map(SetSpec::distinct).collect();
    let counts = joint_factor_counts(x, &specs)?;
    let poisson = product_joint(&poisson_components(&vec![1.0; specs.len()])?)?;
    let tv = tv_distance_joint(&joint_pmf_of(&counts), &poisson)?;
    let rhs = (-(xi_lo as f64 / 2.0).exp()).exp();
    Ok(TheoremReport::new("cor1", tv.value, rhs, tv.uncertainty)
        .with("x", x)
        .with("xi_lo", xi_lo)
        .with("xi_hi", xi_hi)
        .with("cutoff_rounding", CUTOFF_ROUNDING)
        .with("blocks", Value::Array(blocks))
        .with("skipped", Value::Array(skipped)))
}

/// Configuration of the uniform upper-bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2Config {
    pub x: u64,
    pub sets: Vec<PrimeSet>,
    pub ks: Vec<u32>,
    pub eta: u8,
    pub xi: u8,
}

impl Thm2Config {
    /// Derives `η` (0 iff the sets cover every prime `≤ x`) and `ξ`.
    pub fn new(x: u64, sets: Vec<PrimeSet>, ks: Vec<u32>) -> Result<Self> {
        validate_thm2_sets(x, &sets)?;
        if ks.len() != sets.len() {
            return Err(Error::domain(format!(
                "{} counts given for {} sets",
                ks.len(),
                sets.len()
            )));
        }
        let eta = eta_for(x, &sets);
        let xi = (eta == 0 && ks.iter().all(|&k| k == 0)) as u8;
        Ok(Self { x, sets, ks, eta, xi })
    }
}

fn validate_thm2_sets(x: u64, sets: &[PrimeSet]) -> Result<()> {
    check_disjoint_nonempty(&sets.iter().collect::<Vec<_>>())?;
    if let Some(p) = sets.iter().filter_map(|s| s.max()).max() {
        if p > x {
            return Err(Error::domain(format!("prime {p} exceeds x = {x}")));
        }
    }
    Ok(())
}

fn eta_for(x: u64, sets: &[PrimeSet]) -> u8 {
    let covered: u64 = sets.iter().map(|s| s.len() as u64).sum();
    (covered != prime_count(x)) as u8
}

/// Shared counts for evaluating the uniform upper bound at many `k` vectors.
#[derive(Debug, Clone)]
pub struct Thm2Context {
    counts: JointCounts,
    sums: Vec<HarmonicSums>,
    eta: u8,
}

impl Thm2Context {
    pub fn new(x: u64, sets: &[PrimeSet]) -> Result<Self> {
        validate_thm2_sets(x, sets)?;
        let specs: Vec<SetSpec> = sets.iter().cloned().map(SetSpec::distinct).collect();
        Ok(Self {
            counts: joint_factor_counts(x, &specs)?,
            sums: sets.iter().map(PrimeSet::harmonic_sums).collect(),
            eta: eta_for(x, sets),
        })
    }

    pub fn eta(&self) -> u8 {
        self.eta
    }

    pub fn counts(&self) -> &JointCounts {
        &self.counts
    }

    /// `P_x(ω(n; T_j) = k_j ∀j)` against both right-hand sides.
    pub fn report(&self, ks: &[u32]) -> Result<TheoremReport> {
        if ks.len() != self.sums.len() {
            return Err(Error::domain(format!(
                "{} counts given for {} sets",
                ks.len(),
                self.sums.len()
            )));
        }
        let x = self.counts.x();
        let xi = (self.eta == 0 && ks.iter().all(|&k| k == 0)) as u8;
        let lhs = self.counts.get(ks) as f64 / x as f64;
        let mut ln_first = CompensatedSum::new();
        let mut ln_second = CompensatedSum::new();
        let mut spread = CompensatedSum::new();
        spread.add(self.eta as f64);
        for (hs, &k) in self.sums.iter().zip(ks) {
            let lnf = ln_factorial(k as u64);
            ln_first.add(k as f64 * hs.h1.ln() - lnf - hs.h);
            ln_second.add(k as f64 * (hs.h + 2.0).ln() - lnf - hs.h);
            spread.add(k as f64 / hs.h1);
        }
        let rhs_first = ln_first.value().exp() * spread.value() + xi as f64;
        let rhs_second = ln_second.value().exp();
        let h1_bound_holds = self.sums.iter().all(|hs| hs.h1 <= hs.h + 1.0 + CHECK_SLACK);
        Ok(TheoremReport::new("thm2", lhs, rhs_first, 0.0)
            .with("x", x)
            .with("ks", ks.to_vec())
            .with("eta", self.eta)
            .with("xi", xi)
            .with("count", self.counts.get(ks))
            .with("rhs_second", rhs_second)
            .with("ratio_second", Ratio::of(lhs, rhs_second).value())
            .with(
                "sets",
                self.sums
                    .iter()
                    .zip(self.counts.specs())
                    .map(|(hs, s)| sums_json(&s.set, hs))
                    .collect::<Vec<_>>(),
            )
            .with("h1_le_h_plus_1", h1_bound_holds))
    }
}

pub fn check_thm2(cfg: &Thm2Config) -> Result<TheoremReport> {
    let ctx = Thm2Context::new(cfg.x, &cfg.sets)?;
    if ctx.eta != cfg.eta {
        return Err(Error::domain(format!(
            "eta = {} inconsistent with the sets (expected {})",
            cfg.eta, ctx.eta
        )));
    }
    ctx.report(&cfg.ks)
}

/// Configuration of the conditional binomial tail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm3Config {
    pub x: u64,
    pub t: PrimeSet,
    pub k: u32,
    pub a: f64,
    pub alpha: f64,
    pub psi: f64,
}

impl Thm3Config {
    /// Computes `α = H(T)/H(S)` with `S` the primes `≤ x` and checks
    /// `1 ≤ k ≤ A log log x` and `0 ≤ ψ ≤ √(αk)`.
    pub fn new(x: u64, t: PrimeSet, k: u32, a: f64, psi: f64) -> Result<Self> {
        let ctx = Thm3Context::new(x, &t)?;
        let alpha = ctx.alpha();
        ctx.validate(k, a, psi)?;
        Ok(Self { x, t, k, a, alpha, psi })
    }
}

/// Joint counts of `(ω(n, T), ω(n, S∖T))` for conditional tail queries.
#[derive(Debug, Clone)]
pub struct Thm3Context {
    x: u64,
    counts: JointCounts,
    h_t: f64,
    h_rest: f64,
    h_s: f64,
    // true when T is the set used for the deviation event
    t_is_reference: bool,
}

impl Thm3Context {
    pub fn new(x: u64, t: &PrimeSet) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::domain("T must be nonempty"));
        }
        if t.max().is_some_and(|p| p > x) {
            return Err(Error::domain(format!("T contains primes above x = {x}")));
        }
        let all = sieve_primes(x.max(2))?;
        let rest = all.difference(t);
        let h_t = t.harmonic_sums().h;
        let h_rest = rest.harmonic_sums().h;
        let h_s = all.harmonic_sums().h;
        // The deviation event is symmetric under T ↔ S∖T; always evaluate it
        // through the set with the smaller harmonic sum (ties: the one
        // holding the smallest prime) so both orientations compute the same
        // floating-point quantities.
        let t_is_reference = match h_t.partial_cmp(&h_rest) {
            Some(std::cmp::Ordering::Less) => true,
            Some(std::cmp::Ordering::Greater) => false,
            _ => rest.min().is_none_or(|r| t.min().is_some_and(|m| m < r)),
        };
        let counts = joint_factor_counts(x, &[SetSpec::distinct(t.clone()), SetSpec::distinct(rest)])?;
        Ok(Self {
            x,
            counts,
            h_t,
            h_rest,
            h_s,
            t_is_reference,
        })
    }

    /// `α = H(T)/H(S)`.
    pub fn alpha(&self) -> f64 {
        self.h_t / self.h_s
    }

    fn validate(&self, k: u32, a: f64, psi: f64) -> Result<()> {
        if !(a > 1.0) {
            return Err(Error::domain(format!("A must exceed 1, got {a}")));
        }
        let loglog = (self.x as f64).ln().ln();
        if k < 1 || k as f64 > a * loglog {
            return Err(Error::domain(format!(
                "k = {k} outside 1 ≤ k ≤ A log log x = {}",
                a * loglog
            )));
        }
        let cap = (self.alpha() * k as f64).sqrt();
        if !(0.0..=cap).contains(&psi) {
            return Err(Error::domain(format!("psi = {psi} outside [0, sqrt(alpha k)] = [0, {cap}]")));
        }
        Ok(())
    }

    /// `P(|ω(n,T) − αk| ≥ ψ√(α(1−α)k) | ω(n) = k)` against `e^{−ψ²/3}`.
    pub fn report(&self, k: u32, a: f64, psi: f64) -> Result<TheoremReport> {
        self.validate(k, a, psi)?;
        let (h_ref, coord) = if self.t_is_reference {
            (self.h_t, 0)
        } else {
            (self.h_rest, 1)
        };
        let alpha_ref = h_ref / self.h_s;
        let kf = k as f64;
        let threshold = psi * (alpha_ref * (1.0 - alpha_ref) * kf).sqrt();
        let center = alpha_ref * kf;
        let (mut num, mut den) = (0u64, 0u64);
        for (key, &c) in self.counts.counts() {
            if key[0] + key[1] != k {
                continue;
            }
            den += c;
            if (key[coord] as f64 - center).abs() >= threshold {
                num += c;
            }
        }
        if den == 0 {
            return Err(Error::EmptyCondition(format!(
                "no n ≤ {} has ω(n) = {k}",
                self.x
            )));
        }
        let lhs = num as f64 / den as f64;
        let rhs = (-psi * psi / 3.0).exp();
        Ok(TheoremReport::new("thm3", lhs, rhs, 0.0)
            .with("x", self.x)
            .with("k", k)
            .with("A", a)
            .with("psi", psi)
            .with("alpha", self.alpha())
            .with("h_t", self.h_t)
            .with("h_s", self.h_s)
            .with("conditioning_count", den)
            .with("deviation_count", num))
    }
}

pub fn check_thm3(cfg: &Thm3Config) -> Result<TheoremReport> {
    Thm3Context::new(cfg.x, &cfg.t)?.report(cfg.k, cfg.a, cfg.psi)
}

/// Ratios `P_x(Ω(n,T) = k) / Pois(H)(k)` for `k` in `k_lo..=k_hi`, with the
/// `H′` comparator alongside.
pub fn check_halasz(x: u64, t: &PrimeSet, k_lo: u32, k_hi: u32) -> Result<Vec<TheoremReport>> {
    if t.max().is_some_and(|p| p > x) {
        return Err(Error::domain(format!("T contains primes above x = {x}")));
    }
    if k_lo > k_hi {
        return Err(Error::domain(format!("empty k range {k_lo}..={k_hi}")));
    }
    let counts = joint_factor_counts(x, &[SetSpec::with_multiplicity(t.clone())])?;
    let hs = t.harmonic_sums();
    let shape_base = 1.0 / hs.h.sqrt();
    Ok((k_lo..=k_hi)
        .map(|k| {
            let lhs = counts.get(&[k]) as f64 / x as f64;
            let rhs = poisson_mass(hs.h, k as u64);
            let rhs_h1 = poisson_mass(hs.h1, k as u64);
            let ratio = Ratio::of(lhs, rhs);
            TheoremReport::new("halasz", lhs, rhs, 0.0)
                .with("x", x)
                .with("k", k)
                .with("h", hs.h)
                .with("h1", hs.h1)
                .with("deviation", ratio.value().map(|r| (r - 1.0).abs()))
                .with("error_shape", (k as f64 - hs.h).abs() / hs.h + shape_base)
                .with("rhs_h1", rhs_h1)
                .with("ratio_h1", Ratio::of(lhs, rhs_h1).value())
                .with(
                    "deviation_h1",
                    Ratio::of(lhs, rhs_h1).value().map(|r| (r - 1.0).abs()),
                )
        })
        .collect())
}

/// Default upper end of `k` ranges: `⌈3H⌉ + 10`.
pub fn default_k_max(h: f64) -> u32 {
    (3.0 * h).ceil() as u32 + 10
}

/// Local comparison `|P(Y = k) − P(Z = k)|` between the model law and
/// `Pois(H)` against the two-regime right side, split at `k = 1.9H`.
pub fn check_thm4_local(t: &PrimeSet, mode: CountMode) -> Result<Vec<TheoremReport>> {
    if t.is_empty() {
        return Err(Error::domain("T must be nonempty"));
    }
    let hs = t.harmonic_sums();
    let h = matched_parameter(&hs, mode);
    let model = model_exact_pmf(&ModelLawRequest::new(t.clone(), mode, DEFAULT_TAIL_EPS))?;
    let pois = poisson_pmf(h, DEFAULT_TAIL_EPS)?;
    let unc = model.tail_bound() + pois.tail_bound();
    Ok((0..=default_k_max(h))
        .map(|k| {
            let ku = k as usize;
            let lhs = (model.get(ku) - pois.get(ku)).abs();
            let kf = k as f64;
            let (rhs, regime) = if kf <= 1.9 * h {
                let shape = 1.0 / (kf + 1.0) + ((kf - h) / h).powi(2);
                (hs.h2 * poisson_mass(h, k as u64) * shape, "central")
            } else {
                (hs.h2 * (0.9 * h).exp() / 1.9f64.powi(k as i32), "tail")
            };
            TheoremReport::new("thm4", lhs, rhs, unc)
                .with("k", k)
                .with("mode", mode.as_str())
                .with("h", h)
                .with("h2", hs.h2)
                .with("regime", regime)
        })
        .collect())
}

/// `d_TV(Y, Pois(H))` for the model law `Y` against `H″(T)/(1 + H(T))`.
pub fn check_cor32(t: &PrimeSet, mode: CountMode) -> Result<TheoremReport> {
    if t.is_empty() {
        return Err(Error::domain("T must be nonempty"));
    }
    let hs = t.harmonic_sums();
    let lambda = matched_parameter(&hs, mode);
    let model = model_exact_pmf(&ModelLawRequest::new(t.clone(), mode, DEFAULT_TAIL_EPS))?;
    let tv: TvResult = tv_distance(&model, &poisson_pmf(lambda, DEFAULT_TAIL_EPS)?);
    let rhs = hs.h2 / (1.0 + hs.h);
    let mut report = TheoremReport::new("cor32", tv.value, rhs, tv.uncertainty)
        .with("mode", mode.as_str())
        .with("lambda", lambda)
        .with("set", sums_json(t, &hs));
    if t.len() == 1 {
        let p = t.primes()[0] as f64;
        report = report.with("p2_times_tv", p * p * tv.value);
    }
    Ok(report)
}

/// Closed interval a frozen quantity must stay in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Band {
    fn from(v: [f64; 2]) -> Self {
        Band { lo: v[0], hi: v[1] }
    }
}

impl From<Band> for [f64; 2] {
    fn from(b: Band) -> Self {
        [b.lo, b.hi]
    }
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// `[v(1 − margin), v(1 + margin)]`.
    pub fn around(v: f64, margin: f64) -> Self {
        let (a, b) = (v * (1.0 - margin), v * (1.0 + margin));
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Regression verdict for one band key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Recorded,
}

/// JSON map from sweep name to `[lo, hi]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandFile {
    bands: BTreeMap<String, Band>,
}

impl BandFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load_or_default(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Band> {
        self.bands.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, band: Band) {
        self.bands.insert(name.into(), band);
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Checks `value` against the band for `name`; freezes a new band around
    /// it when none exists yet.
    pub fn check_or_record(&mut self, name: &str, value: f64, margin: f64) -> Verdict {
        match self.get(name) {
            Some(b) if b.contains(value) => Verdict::Pass,
            Some(_) => Verdict::Fail,
            None => {
                self.insert(name, Band::around(value, margin));
                Verdict::Recorded
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ps: &[u64]) -> PrimeSet {
        PrimeSet::new(ps.to_vec()).unwrap()
    }

    #[test]
    fn ratio_serialization() {
        let r = TheoremReport::new("t", 0.5, 0.0, 0.0);
        assert_eq!(r.ratio, Ratio::Undefined);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"ratio\":\"undefined\""));
        let back: TheoremReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        let r = TheoremReport::new("t", 0.5, 2.0, 0.0);
        assert_eq!(r.ratio, Ratio::Value(0.25));
    }

    #[test]
    fn thm2_small_cases() {
        let r = check_thm2(&Thm2Config::new(100, vec![set(&[2])], vec![1]).unwrap()).unwrap();
        assert_eq!(r.lhs, 0.5);
        assert_eq!(r.param("eta"), Some(&json!(1)));

        // every prime ≤ 30 covered, all k = 0: only n = 1
        let all = sieve_primes(30).unwrap();
        let (a, b) = (all.up_to(5), all.difference(&all.up_to(5)));
        let cfg = Thm2Config::new(30, vec![a, b], vec![0, 0]).unwrap();
        assert_eq!((cfg.eta, cfg.xi), (0, 1));
        let r = check_thm2(&cfg).unwrap();
        assert_eq!(r.lhs, 1.0 / 30.0);
        assert_eq!(r.rhs, 1.0);
        assert!(r.ratio.value().unwrap() <= 1.0);
    }

    #[test]
    fn thm2_rejects_overlap() {
        assert!(Thm2Config::new(100, vec![set(&[2, 3]), set(&[3])], vec![0, 0]).is_err());
        assert!(Thm2Config::new(100, vec![set(&[2])], vec![0, 0]).is_err());
        assert!(Thm2Config::new(100, vec![PrimeSet::empty()], vec![0]).is_err());
    }

    #[test]
    fn thm3_psi_zero_is_vacuous() {
        let t = sieve_primes(100).unwrap();
        let ctx = Thm3Context::new(100_000, &t).unwrap();
        let r = ctx.report(3, 3.0, 0.0).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_eq!(r.rhs, 1.0);
        assert!(ctx.report(0, 3.0, 0.0).is_err());
        assert!(ctx.report(3, 1.0, 0.0).is_err());
        assert!(ctx.report(3, 3.0, 10.0).is_err());
    }

    #[test]
    fn thm3_complement_symmetry() {
        let x = 100_000;
        let t = sieve_primes(50).unwrap();
        let rest = sieve_primes(x).unwrap().difference(&t);
        let a = Thm3Context::new(x, &t).unwrap();
        let b = Thm3Context::new(x, &rest).unwrap();
        assert!((a.alpha() + b.alpha() - 1.0).abs() < 1e-12);
        // 2·3·5·7·11·13·17 > 10^5, so k = 7 has an empty condition
        assert!(matches!(a.report(7, 3.5, 0.5), Err(Error::EmptyCondition(_))));
        for k in 1..=6 {
            let cap = (a.alpha().min(b.alpha()) * k as f64).sqrt();
            for psi in [0.0, 0.25, 0.5, 0.75, 1.0, 1.5] {
                if psi > cap {
                    continue;
                }
                let ra = a.report(k, 3.5, psi).unwrap();
                let rb = b.report(k, 3.5, psi).unwrap();
                assert_eq!(ra.lhs.to_bits(), rb.lhs.to_bits(), "k={k} psi={psi}");
            }
        }
    }

    #[test]
    fn thm4_closed_forms() {
        let t = set(&[101]);
        let reports = check_thm4_local(&t, CountMode::WithMultiplicity).unwrap();
        let p = 101f64;
        let lam: f64 = 0.01;
        let want0 = ((1.0 - 1.0 / p) - (-lam).exp()).abs();
        assert!((reports[0].lhs - want0).abs() < 1e-16);
        let want2 = (1.0 / (p * p) * (100.0 / 101.0) - (-lam).exp() * lam * lam / 2.0).abs();
        assert!((reports[2].lhs - want2).abs() < 1e-18);
        assert_eq!(reports[2].param("regime"), Some(&json!("tail")));

        let t = set(&[2, 3, 5, 7]);
        let d = check_thm4_local(&t, CountMode::Distinct).unwrap();
        let prod: f64 = [2.0, 3.0, 5.0, 7.0].iter().map(|p: &f64| 1.0 - 1.0 / p).product();
        let h = t.harmonic_sums().h;
        assert!((d[0].lhs - (prod - (-h).exp()).abs()).abs() < 1e-15);
        assert_eq!(d.len() as u32, default_k_max(h) + 1);
    }

    #[test]
    fn cor32_smallest_case() {
        let r = check_cor32(&set(&[2]), CountMode::WithMultiplicity).unwrap();
        assert!(r.ratio.value().unwrap().is_finite());
        assert!(r.lhs > 0.0);
        assert!(check_cor32(&PrimeSet::empty(), CountMode::Distinct).is_err());
    }

    #[test]
    fn thm1_at_u_equal_one() {
        let cfg = Thm1Config::new(500, 500, vec![SetSpec::distinct(sieve_primes(500).unwrap())]).unwrap();
        assert!((cfg.u - 1.0).abs() < 1e-15);
        let r = check_thm1(&cfg).unwrap();
        assert!(r.rhs >= 1.0);
        assert!(r.ratio.value().unwrap() <= 1.0);
        assert_eq!(r.param("triangle_holds"), Some(&json!(true)));
    }

    #[test]
    fn thm1_config_errors() {
        let s = |ps: &[u64]| SetSpec::distinct(set(ps));
        assert!(Thm1Config::new(100, 200, vec![s(&[2])]).is_err());
        assert!(Thm1Config::new(100, 10, vec![s(&[11])]).is_err());
        assert!(Thm1Config::new(100, 10, vec![s(&[2, 3]), s(&[3])]).is_err());
        assert!(Thm1Config::new(100, 10, vec![SetSpec::distinct(PrimeSet::empty())]).is_err());
    }

    #[test]
    fn corollary1_cutoffs() {
        let r = check_corollary1(100_000, 0, 1).unwrap();
        let blocks = r.param("blocks").unwrap().as_array().unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0]["t_hi"], json!(15));
        assert_eq!(r.param("skipped").unwrap().as_array().unwrap().len(), 1);
        assert!(check_corollary1(100_000, 1, 2).is_err());
        assert!(check_corollary1(100_000, 2, 1).is_err());
    }

    #[test]
    fn band_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("bands-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bands.json");
        let mut f = BandFile::default();
        assert_eq!(f.check_or_record("a", 2.0, 0.1), Verdict::Recorded);
        assert_eq!(f.check_or_record("a", 2.1, 0.1), Verdict::Pass);
        assert_eq!(f.check_or_record("a", 3.0, 0.1), Verdict::Fail);
        f.save(&path).unwrap();
        let g = BandFile::load(&path).unwrap();
        assert_eq!(f, g);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"a\""));
    }
}
