//! Exact joint distributions of prime-factor counts over `1 ≤ n ≤ x`.
//!
//! The counting sieve walks `[1, x]` in segments. Each segment keeps one
//! byte per tracked set per integer; every prime `p` of set `j` adds one to
//! the counters of its multiples, and in [`CountMode::WithMultiplicity`]
//! every prime power `p^a ≤ x` does the same, so the counter ends at
//! `v_p(n)`. The per-integer counter vectors are packed into a `u64` (eight
//! bits per coordinate) and tallied in a per-segment hash map. Segment
//! partials are merged in segment order, so results are identical for any
//! thread count.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::JointPmf;
use crate::error::{Error, Result};
use crate::primesets::{PrimeSet, DEFAULT_SEGMENT_SIZE};

/// Largest number of tracked sets.
pub const MAX_SETS: usize = 8;
/// Largest supported range bound, `2^40`.
pub const MAX_X: u64 = 1 << 40;
/// Largest range accepted by the trial-division oracle.
pub const ORACLE_MAX_X: u64 = 1_000_000;

/// Which count a set contributes: `ω(n, T)` or `Ω(n, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// `ω(n, T)`: number of distinct primes of `T` dividing `n`.
    Distinct,
    /// `Ω(n, T) = Σ_{p∈T} v_p(n)`.
    WithMultiplicity,
}

impl CountMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CountMode::Distinct => "distinct",
            CountMode::WithMultiplicity => "multiplicity",
        }
    }
}

impl std::fmt::Display for CountMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A prime set together with the count it contributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub set: PrimeSet,
    pub mode: CountMode,
}

impl SetSpec {
    pub fn new(set: PrimeSet, mode: CountMode) -> Self {
        Self { set, mode }
    }

    pub fn distinct(set: PrimeSet) -> Self {
        Self::new(set, CountMode::Distinct)
    }

    pub fn with_multiplicity(set: PrimeSet) -> Self {
        Self::new(set, CountMode::WithMultiplicity)
    }
}

/// Exact counts of `n ≤ x` by the vector `(f_1(n), …, f_m(n))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCounts {
    x: u64,
    specs: Vec<SetSpec>,
    #[serde(with = "tuple_counts")]
    counts: BTreeMap<Vec<u32>, u64>,
}

mod tuple_counts {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row {
        k: Vec<u32>,
        count: u64,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<Vec<u32>, u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(m.iter().map(|(k, &count)| Row { k: k.clone(), count }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<Vec<u32>, u64>, D::Error> {
        let rows = Vec::<Row>::deserialize(d)?;
        Ok(rows.into_iter().map(|r| (r.k, r.count)).collect())
    }
}

impl JointCounts {
    pub fn x(&self) -> u64 {
        self.x
    }

    pub fn specs(&self) -> &[SetSpec] {
        &self.specs
    }

    pub fn dims(&self) -> usize {
        self.specs.len()
    }

    pub fn counts(&self) -> &BTreeMap<Vec<u32>, u64> {
        &self.counts
    }

    pub fn get(&self, key: &[u32]) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Counts with coordinate `j` summed out.
    pub fn marginalize(&self, j: usize) -> Result<JointCounts> {
        if j >= self.specs.len() || self.specs.len() < 2 {
            return Err(Error::domain(format!(
                "cannot remove coordinate {j} from a {}-dimensional table",
                self.specs.len()
            )));
        }
        let mut counts = BTreeMap::new();
        for (key, &c) in &self.counts {
            let mut k = key.clone();
            k.remove(j);
            *counts.entry(k).or_insert(0) += c;
        }
        let mut specs = self.specs.clone();
        specs.remove(j);
        Ok(JointCounts {
            x: self.x,
            specs,
            counts,
        })
    }

    /// CSV with one row `k_1,…,k_m,count` per tuple.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for j in 1..=self.specs.len() {
            s.push_str(&format!("k_{j},"));
        }
        s.push_str("count\n");
        for (key, c) in &self.counts {
            for k in key {
                s.push_str(&format!("{k},"));
            }
            s.push_str(&format!("{c}\n"));
        }
        s
    }
}

/// Empirical law `count / x`.
pub fn joint_pmf_of(counts: &JointCounts) -> JointPmf {
    let xf = counts.x as f64;
    let entries = counts
        .counts
        .iter()
        .map(|(k, &c)| (k.clone(), c as f64 / xf))
        .collect();
    JointPmf::from_parts(counts.specs.len().max(1), entries, 0.0)
}

/// Tuning for the counting sieve.
#[derive(Debug, Clone, Copy)]
pub struct CountOptions {
    pub segment_size: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        Self {
            segment_size: DEFAULT_SEGMENT_SIZE,
        }
    }
}

/// Tally of one segment, emitted by [`stream_factor_counts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPartial {
    pub index: usize,
    pub lo: u64,
    pub hi: u64,
    #[serde(with = "tuple_counts")]
    pub counts: BTreeMap<Vec<u32>, u64>,
}

fn validate_specs(x: u64, specs: &[SetSpec]) -> Result<()> {
    if x == 0 {
        return Err(Error::domain("x must be ≥ 1"));
    }
    if x > MAX_X {
        return Err(Error::CapExceeded(format!("x = {x} exceeds the cap 2^40")));
    }
    if specs.is_empty() {
        return Err(Error::domain("at least one set is required"));
    }
    if specs.len() > MAX_SETS {
        return Err(Error::CapExceeded(format!(
            "{} sets exceeds the cap of {MAX_SETS}",
            specs.len()
        )));
    }
    for (i, a) in specs.iter().enumerate() {
        if let Some(p) = a.set.max() {
            if p > x {
                return Err(Error::domain(format!("set {i} contains prime {p} > x = {x}")));
            }
        }
        for (j, b) in specs.iter().enumerate().skip(i + 1) {
            if !a.set.is_disjoint(&b.set) {
                return Err(Error::domain(format!("sets {i} and {j} overlap")));
            }
        }
    }
    Ok(())
}

/// `(modulus, set index)` pairs: primes, plus prime powers for sets counted
/// with multiplicity.
fn sieving_moduli(x: u64, specs: &[SetSpec]) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    for (j, spec) in specs.iter().enumerate() {
        for &p in spec.set.primes() {
            out.push((p, j));
            if spec.mode == CountMode::WithMultiplicity {
                let mut q = p;
                while let Some(next) = q.checked_mul(p).filter(|&v| v <= x) {
                    out.push((next, j));
                    q = next;
                }
            }
        }
    }
    out
}

fn segment_bounds(x: u64, segment: usize) -> Vec<(u64, u64)> {
    let seg = segment.max(1) as u64;
    (0..x.div_ceil(seg))
        .map(|i| {
            let lo = 1 + i * seg;
            (lo, (lo + seg - 1).min(x))
        })
        .collect()
}

fn pack(counters: &[u8]) -> u64 {
    counters
        .iter()
        .enumerate()
        .fold(0u64, |acc, (j, &c)| acc | (c as u64) << (8 * j))
}

fn unpack(key: u64, m: usize) -> Vec<u32> {
    (0..m).map(|j| ((key >> (8 * j)) & 0xff) as u32).collect()
}

fn count_segment(
    lo: u64,
    hi: u64,
    m: usize,
    moduli: &[(u64, usize)],
) -> Result<BTreeMap<Vec<u32>, u64>> {
    let len = (hi - lo + 1) as usize;
    let mut counters = vec![0u8; len * m];
    for &(q, j) in moduli {
        if q > hi {
            continue;
        }
        let first = lo.div_ceil(q) * q;
        let mut n = first;
        while n <= hi {
            let slot = &mut counters[(n - lo) as usize * m + j];
            *slot = slot
                .checked_add(1)
                .ok_or(Error::CounterOverflow { n, set: j })?;
            n += q;
        }
    }
    let mut tally: HashMap<u64, u64> = HashMap::new();
    for chunk in counters.chunks_exact(m) {
        *tally.entry(pack(chunk)).or_insert(0) += 1;
    }
    Ok(tally.into_iter().map(|(k, c)| (unpack(k, m), c)).collect())
}

fn merge_into(total: &mut BTreeMap<Vec<u32>, u64>, part: &BTreeMap<Vec<u32>, u64>) {
    for (k, &c) in part {
        *total.entry(k.clone()).or_insert(0) += c;
    }
}

/// Exact counts of `n ∈ [1, x]` by `(f_1(n), …, f_m(n))`.
pub fn joint_factor_counts(x: u64, specs: &[SetSpec]) -> Result<JointCounts> {
    joint_factor_counts_with(x, specs, CountOptions::default())
}

pub fn joint_factor_counts_with(x: u64, specs: &[SetSpec], opts: CountOptions) -> Result<JointCounts> {
    stream_factor_counts(x, specs, opts, |_| Ok(()))
}

/// Counting sieve that hands every segment partial to `sink`, in segment
/// order, before merging it. Segments are counted in parallel batches.
pub fn stream_factor_counts<F>(
    x: u64,
    specs: &[SetSpec],
    opts: CountOptions,
    mut sink: F,
) -> Result<JointCounts>
where
    F: FnMut(&SegmentPartial) -> Result<()>,
{
    validate_specs(x, specs)?;
    if opts.segment_size == 0 {
        return Err(Error::domain("segment size must be positive"));
    }
    let m = specs.len();
    let moduli = sieving_moduli(x, specs);
    let bounds = segment_bounds(x, opts.segment_size);
    let batch = 2 * rayon::current_num_threads().max(1);
    let mut counts = BTreeMap::new();
    for (b, chunk) in bounds.chunks(batch).enumerate() {
        let parts: Vec<BTreeMap<Vec<u32>, u64>> = chunk
            .par_iter()
            .map(|&(lo, hi)| count_segment(lo, hi, m, &moduli))
            .collect::<Result<_>>()?;
        for (i, (part, &(lo, hi))) in parts.into_iter().zip(chunk).enumerate() {
            let partial = SegmentPartial {
                index: b * batch + i,
                lo,
                hi,
                counts: part,
            };
            sink(&partial)?;
            merge_into(&mut counts, &partial.counts);
        }
    }
    Ok(JointCounts {
        x,
        specs: specs.to_vec(),
        counts,
    })
}

/// Same contract as [`joint_factor_counts`], computed by factoring every
/// `n ≤ x` independently by trial division.
pub fn oracle_factor_counts(x: u64, specs: &[SetSpec]) -> Result<JointCounts> {
    if x > ORACLE_MAX_X {
        return Err(Error::CapExceeded(format!(
            "oracle refuses x = {x} > {ORACLE_MAX_X}"
        )));
    }
    validate_specs(x, specs)?;
    let mut owner: HashMap<u64, usize> = HashMap::new();
    for (j, s) in specs.iter().enumerate() {
        for &p in s.set.primes() {
            owner.insert(p, j);
        }
    }
    let m = specs.len();
    let mut counts = BTreeMap::new();
    let mut key = vec![0u32; m];
    for n in 1..=x {
        key.iter_mut().for_each(|k| *k = 0);
        let mut rest = n;
        let mut d = 2;
        while d * d <= rest {
            if rest % d == 0 {
                let mut e = 0;
                while rest % d == 0 {
                    rest /= d;
                    e += 1;
                }
                record(&owner, specs, &mut key, d, e);
            }
            d += if d == 2 { 1 } else { 2 };
        }
        if rest > 1 {
            record(&owner, specs, &mut key, rest, 1);
        }
        *counts.entry(key.clone()).or_insert(0) += 1;
    }
    Ok(JointCounts {
        x,
        specs: specs.to_vec(),
        counts,
    })
}

fn record(owner: &HashMap<u64, usize>, specs: &[SetSpec], key: &mut [u32], p: u64, e: u32) {
    if let Some(&j) = owner.get(&p) {
        key[j] += match specs[j].mode {
            CountMode::Distinct => 1,
            CountMode::WithMultiplicity => e,
        };
    }
}

/// Counts of the `y`-smooth part `s(n) = Π_{p≤y} p^{v_p(n)}` over `n ≤ x`.
///
/// `y ≥ x` is accepted; every `n` is then its own smooth part.
pub fn smooth_part_distribution(x: u64, y: u64) -> Result<BTreeMap<u64, u64>> {
    if y < 2 {
        return Err(Error::domain(format!("y must be ≥ 2, got {y}")));
    }
    if x == 0 {
        return Err(Error::domain("x must be ≥ 1"));
    }
    if x > MAX_X {
        return Err(Error::CapExceeded(format!("x = {x} exceeds the cap 2^40")));
    }
    let primes = crate::primesets::sieve_primes(y.min(x).max(2))?;
    let mut moduli: Vec<(u64, u64)> = Vec::new();
    for &p in primes.primes() {
        let mut q = p;
        while q <= x {
            moduli.push((q, p));
            match q.checked_mul(p) {
                Some(v) => q = v,
                None => break,
            }
        }
    }
    let bounds = segment_bounds(x, DEFAULT_SEGMENT_SIZE);
    let parts: Vec<HashMap<u64, u64>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let len = (hi - lo + 1) as usize;
            let mut smooth = vec![1u64; len];
            for &(q, p) in &moduli {
                if q > hi {
                    continue;
                }
                let mut n = lo.div_ceil(q) * q;
                while n <= hi {
                    smooth[(n - lo) as usize] *= p;
                    n += q;
                }
            }
            let mut tally = HashMap::new();
            for s in smooth {
                *tally.entry(s).or_insert(0u64) += 1;
            }
            tally
        })
        .collect();
    let mut out = BTreeMap::new();
    for part in parts {
        for (s, c) in part {
            *out.entry(s).or_insert(0) += c;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primesets::sieve_primes;

    fn set(ps: &[u64]) -> PrimeSet {
        PrimeSet::new(ps.to_vec()).unwrap()
    }

    fn as_map(c: &JointCounts) -> Vec<(Vec<u32>, u64)> {
        c.counts().iter().map(|(k, &v)| (k.clone(), v)).collect()
    }

    #[test]
    fn distinct_two_three_to_100() {
        let c = joint_factor_counts(100, &[SetSpec::distinct(set(&[2, 3]))]).unwrap();
        assert_eq!(
            as_map(&c),
            vec![(vec![0], 33), (vec![1], 51), (vec![2], 16)]
        );
        // inclusion–exclusion: 100 − 50 − 33 + 16
        assert_eq!(c.get(&[0]), 100 - 50 - 33 + 16);
        assert_eq!(c.to_csv(), "k_1,count\n0,33\n1,51\n2,16\n");
        let pmf = joint_pmf_of(&c);
        assert_eq!(pmf.get(&[1]), 0.51);
        assert!((pmf.mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn powers_of_two_to_16() {
        let c = joint_factor_counts(16, &[SetSpec::with_multiplicity(set(&[2]))]).unwrap();
        assert_eq!(
            as_map(&c),
            vec![
                (vec![0], 8),
                (vec![1], 4),
                (vec![2], 2),
                (vec![3], 1),
                (vec![4], 1)
            ]
        );
    }

    #[test]
    fn x_equal_one() {
        let specs = [SetSpec::distinct(PrimeSet::empty()), SetSpec::with_multiplicity(PrimeSet::empty())];
        let c = joint_factor_counts(1, &specs).unwrap();
        assert_eq!(as_map(&c), vec![(vec![0, 0], 1)]);
        let c = joint_factor_counts(7, &[SetSpec::distinct(set(&[7]))]).unwrap();
        assert_eq!(joint_pmf_of(&joint_factor_counts(1, &specs).unwrap()).get(&[0, 0]), 1.0);
        assert_eq!(c.get(&[1]), 1);
    }

    #[test]
    fn errors() {
        let overlap = [SetSpec::distinct(set(&[2, 3])), SetSpec::distinct(set(&[3]))];
        assert!(matches!(joint_factor_counts(100, &overlap), Err(Error::Domain(_))));
        assert!(matches!(
            joint_factor_counts(10, &[SetSpec::distinct(set(&[11]))]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            joint_factor_counts(MAX_X + 1, &[SetSpec::distinct(set(&[2]))]),
            Err(Error::CapExceeded(_))
        ));
        let nine: Vec<SetSpec> = [2, 3, 5, 7, 11, 13, 17, 19, 23]
            .iter()
            .map(|&p| SetSpec::distinct(set(&[p])))
            .collect();
        assert!(matches!(joint_factor_counts(100, &nine), Err(Error::CapExceeded(_))));
        assert!(matches!(
            oracle_factor_counts(ORACLE_MAX_X + 1, &[SetSpec::distinct(set(&[2]))]),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn oracle_examples() {
        let c = oracle_factor_counts(30, &[SetSpec::distinct(set(&[29]))]).unwrap();
        assert_eq!(as_map(&c), vec![(vec![0], 29), (vec![1], 1)]);
        let c = oracle_factor_counts(8, &[SetSpec::with_multiplicity(set(&[2]))]).unwrap();
        assert_eq!(
            as_map(&c),
            vec![(vec![0], 4), (vec![1], 2), (vec![2], 1), (vec![3], 1)]
        );
    }

    #[test]
    fn sieve_equals_oracle_mixed_modes() {
        let specs = [
            SetSpec::distinct(set(&[2, 3, 5])),
            SetSpec::with_multiplicity(set(&[7, 11])),
        ];
        let a = joint_factor_counts(10_000, &specs).unwrap();
        let b = oracle_factor_counts(10_000, &specs).unwrap();
        assert_eq!(a, b);
        // small segments cross many boundaries
        let c = joint_factor_counts_with(10_000, &specs, CountOptions { segment_size: 37 }).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn marginalization() {
        let specs = [
            SetSpec::distinct(set(&[2, 3])),
            SetSpec::with_multiplicity(set(&[5, 7])),
            SetSpec::distinct(set(&[11, 13, 17])),
        ];
        let full = joint_factor_counts(5000, &specs).unwrap();
        for j in 0..3 {
            let mut rest = specs.to_vec();
            rest.remove(j);
            assert_eq!(full.marginalize(j).unwrap(), joint_factor_counts(5000, &rest).unwrap());
        }
    }

    #[test]
    fn double_counting_identities() {
        let x = 20_000;
        let all = sieve_primes(x).unwrap();
        let d = joint_factor_counts(x, &[SetSpec::distinct(all.clone())]).unwrap();
        let lhs: u64 = d.counts().iter().map(|(k, c)| k[0] as u64 * c).sum();
        let rhs: u64 = all.primes().iter().map(|p| x / p).sum();
        assert_eq!(lhs, rhs);
        let w = joint_factor_counts(x, &[SetSpec::with_multiplicity(all.clone())]).unwrap();
        let lhs: u64 = w.counts().iter().map(|(k, c)| k[0] as u64 * c).sum();
        let mut rhs = 0;
        for &p in all.primes() {
            let mut q = p;
            while q <= x {
                rhs += x / q;
                q *= p;
            }
        }
        assert_eq!(lhs, rhs);
        assert_eq!(d.total(), x);
    }

    #[test]
    fn streaming_partials_cover_the_range() {
        let specs = [SetSpec::distinct(set(&[2, 3]))];
        let mut seen = Vec::new();
        let c = stream_factor_counts(1000, &specs, CountOptions { segment_size: 128 }, |p| {
            seen.push((p.index, p.lo, p.hi, p.counts.values().sum::<u64>()));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 8);
        assert_eq!(seen[0], (0, 1, 128, 128));
        assert_eq!(seen[7].2, 1000);
        assert!(seen.windows(2).all(|w| w[0].0 + 1 == w[1].0 && w[0].2 + 1 == w[1].1));
        assert_eq!(c, joint_factor_counts(1000, &specs).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let c = joint_factor_counts(200, &[SetSpec::distinct(set(&[2, 3]))]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<JointCounts>(&s).unwrap(), c);
    }

    #[test]
    fn smooth_parts() {
        let d = smooth_part_distribution(10, 2).unwrap();
        assert_eq!(d.into_iter().collect::<Vec<_>>(), vec![(1, 5), (2, 3), (4, 1), (8, 1)]);
        let d = smooth_part_distribution(50, 50).unwrap();
        assert_eq!(d.len(), 50);
        assert!(d.values().all(|&c| c == 1));
        let d = smooth_part_distribution(50, 100).unwrap();
        assert_eq!(d.len(), 50);
        assert!(smooth_part_distribution(10, 1).is_err());
    }

    #[test]
    fn smooth_parts_match_brute_force() {
        let (x, y) = (3000u64, 13u64);
        let d = smooth_part_distribution(x, y).unwrap();
        assert_eq!(d.values().sum::<u64>(), x);
        let small = [2u64, 3, 5, 7, 11, 13];
        for (&s, &c) in &d {
            assert!(s <= x);
            let mut r = s;
            for p in small {
                while r % p == 0 {
                    r /= p;
                }
            }
            assert_eq!(r, 1, "{s} is not 13-smooth");
            let expect = (1..=x / s)
                .filter(|m| small.iter().all(|p| m % p != 0))
                .count() as u64;
            assert_eq!(c, expect, "s = {s}");
        }
    }
}
