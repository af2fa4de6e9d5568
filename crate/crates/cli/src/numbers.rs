//! Integer literals and the set-spec mini-language.

use std::fs::File;
use std::io::BufReader;

use prime_poisson::primesets::{expexp_block, primes_in_interval};
use prime_poisson::{CountMode, PrimeSet, SetSpec};

/// Parses a nonnegative integer, accepting exact scientific notation such as
/// `1e6` or `2.5e3`. Underscores are ignored.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let t: String = s.trim().chars().filter(|&c| c != '_').collect();
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let bad = || format!("not a nonnegative integer: {s:?}");
    let (mant, exp) = t.split_once(['e', 'E']).ok_or_else(bad)?;
    let exp: i64 = exp.strip_prefix('+').unwrap_or(exp).parse().map_err(|_| bad())?;
    let (int_part, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits = format!("{int_part}{frac}");
    if digits.is_empty() || digits.len() > 38 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let mut v: u128 = digits.parse().map_err(|_| bad())?;
    let shift = exp - frac.len() as i64;
    let too_big = || format!("{s:?} does not fit in 64 bits");
    if shift >= 0 {
        let scale = 10u128.checked_pow(u32::try_from(shift).map_err(|_| too_big())?);
        v = scale.and_then(|m| v.checked_mul(m)).ok_or_else(too_big)?;
    } else {
        let d = 10u128.checked_pow((-shift) as u32);
        match d {
            Some(d) if v.is_multiple_of(d) => v /= d,
            None if v == 0 => {}
            _ => return Err(format!("{s:?} is not an exact integer")),
        }
    }
    u64::try_from(v).map_err(|_| too_big())
}

/// Parses a finite real.
pub fn parse_real(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("not a finite number: {s:?}")),
    }
}

fn parse_mode(s: &str) -> Option<CountMode> {
    match s {
        "distinct" | "omega" => Some(CountMode::Distinct),
        "multiplicity" | "with_multiplicity" | "big_omega" => Some(CountMode::WithMultiplicity),
        _ => None,
    }
}

/// Parses `interval:a..b`, `list:p1,p2,…`, `expexp:k` or `file:path`, each
/// with an optional `:distinct` / `:multiplicity` suffix.
///
/// Intervals are closed, so `interval:2..31` holds the primes `2, …, 31`.
/// `expexp:k` is the block `(t_k, t_{k+1}]`.
pub fn parse_set_spec(spec: &str) -> Result<SetSpec, String> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| format!("set spec {spec:?} needs a kind prefix"))?;
    let (body, mode) = match rest.rsplit_once(':') {
        Some((b, m)) => match parse_mode(m) {
            Some(mode) => (b, mode),
            None if kind == "file" => (rest, CountMode::Distinct),
            None => return Err(format!("unknown count mode {m:?} in {spec:?}")),
        },
        None => (rest, CountMode::Distinct),
    };
    let set = match kind {
        "interval" => {
            let (a, b) = body
                .split_once("..")
                .ok_or_else(|| format!("interval {body:?} must look like a..b"))?;
            let (a, b) = (parse_count(a)?, parse_count(b)?);
            if a > b {
                return Err(format!("interval {a}..{b} is reversed"));
            }
            primes_in_interval(a.saturating_sub(1), b).map_err(|e| e.to_string())?
        }
        "list" => {
            let primes = body
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(parse_count)
                .collect::<Result<Vec<_>, _>>()?;
            PrimeSet::from_unsorted(primes).map_err(|e| e.to_string())?
        }
        "expexp" => {
            let k: u32 = body.parse().map_err(|_| format!("bad block index {body:?}"))?;
            expexp_block(k).map_err(|e| e.to_string())?
        }
        "file" => {
            let f = File::open(body).map_err(|e| format!("{body}: {e}"))?;
            PrimeSet::read_from(BufReader::new(f)).map_err(|e| e.to_string())?
        }
        other => return Err(format!("unknown set kind {other:?}")),
    };
    Ok(SetSpec::new(set.with_label(format!("{kind}:{body}")), mode))
}
