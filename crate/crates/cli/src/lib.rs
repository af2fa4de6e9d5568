//! Batch experiment runner for `prime-poisson`.
//!
//! Each subcommand resolves its parameters (flags first, then the optional
//! TOML config), runs one computation, and writes JSON reports, CSV tables
//! and a `manifest.json` into the output directory. Report files never carry
//! timestamps, so identical inputs produce byte-identical reports.
//!
//! ```text
//! $ prime-poisson thm1 --x 1e6 --y 31 --set "interval:2..31:distinct"
//! thm1 lhs=0.08888023805954005 rhs=0.17754776500124045 ratio=0.500599025050634 uncertainty=...
//!
//! $ prime-poisson harmonic --set "list:2,3,5"
//! h=1.0333333333333332
//! h1=1.75
//! h2=0.4011111111111111
//!
//! $ prime-poisson counts --x 100 --set "list:2,3:distinct"
//! k_1,count
//! 0,33
//! 1,51
//! 2,16
//! ```
//!
//! Exit codes: 0 when every band passes or is recorded, 1 on a band failure,
//! 2 on a usage or domain error, 3 when a size cap refuses the input.

mod config;
mod numbers;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use prime_poisson::factorstats::{stream_factor_counts, CountOptions};
use prime_poisson::kubilius::{model_exact_pmf, model_sample_vector, model_tv_exact, ModelLawRequest};
use prime_poisson::primesets::{primes_in_interval, sieve_primes, DEFAULT_SEGMENT_SIZE};
use prime_poisson::theorems::{
    check_cor32, check_corollary1, check_halasz, check_thm1, check_thm2, check_thm3, check_thm4_local,
    default_k_max, max_ratio, u_power, BandFile, Thm1Config, Thm2Config, Thm3Config, Verdict,
};
use prime_poisson::{CountMode, Error, PrimeSet, SetSpec, TheoremReport};

pub use config::Defaults;
pub use numbers::{parse_count, parse_real, parse_set_spec};

/// Relative half-width of a band recorded from a first run.
pub const DEFAULT_BAND_MARGIN: f64 = 0.25;

#[derive(Debug, Parser)]
#[command(
    name = "prime-poisson",
    version,
    about = "Exact prime-factor statistics and Poisson approximation checks"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for reports, tables and the manifest [default: out].
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// JSON map from band name to [lo, hi]; missing bands are recorded.
    #[arg(long, global = true)]
    pub band_file: Option<PathBuf>,
    /// Band name for this run [default: the command name, or the sweep name].
    #[arg(long, global = true)]
    pub band_key: Option<String>,
    /// Relative half-width used when recording a new band.
    #[arg(long, global = true, value_parser = parse_real)]
    pub band_margin: Option<f64>,
    /// TOML file with defaults for any flag, and optionally `command`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Primes up to --limit (or in (--lo, --limit]).
    Sieve(SieveArgs),
    /// Harmonic sums H, H', H'' of each set.
    Harmonic(SetArgs),
    /// Exact joint counts of prime factors for n <= x.
    Counts(CountsArgs),
    /// Exact law of U_T / W_T, optionally with Monte Carlo samples.
    Model(ModelArgs),
    /// Exact d_TV between the model vector X_y and V_{x,y}.
    ModelTv(XyArgs),
    /// Joint TV against independent Poisson variables.
    Thm1(Thm1Args),
    /// Uniform upper bound for P(omega(n; T_j) = k_j).
    Thm2(Thm2Args),
    /// Conditional binomial tail given omega(n) = k.
    Thm3(Thm3Args),
    /// Local ratios P(Omega(n,T) = k) / Pois(H)(k).
    Halasz(HalaszArgs),
    /// Local model-vs-Poisson differences per k.
    Thm4(SetArgs),
    /// Joint TV over doubly-exponential blocks against Pois(1).
    Cor1(Cor1Args),
    /// TV between the model law and its Poisson comparator.
    Cor32(SetArgs),
    /// Run every command line of a grid file and aggregate.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sieve(_) => "sieve",
            Command::Harmonic(_) => "harmonic",
            Command::Counts(_) => "counts",
            Command::Model(_) => "model",
            Command::ModelTv(_) => "model-tv",
            Command::Thm1(_) => "thm1",
            Command::Thm2(_) => "thm2",
            Command::Thm3(_) => "thm3",
            Command::Halasz(_) => "halasz",
            Command::Thm4(_) => "thm4",
            Command::Cor1(_) => "cor1",
            Command::Cor32(_) => "cor32",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SieveArgs {
    #[arg(long, value_parser = parse_count)]
    pub limit: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub lo: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SetArgs {
    /// interval:a..b | list:p1,p2,... | expexp:k | file:path, each with an optional :distinct or :multiplicity suffix.
    #[arg(long = "set")]
    pub sets: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CountsArgs {
    #[arg(long, value_parser = parse_count)]
    pub x: Option<u64>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
    /// Also write per-segment partial counts as JSON lines.
    #[arg(long)]
    pub stream: bool,
    #[arg(long, value_parser = parse_count)]
    pub segment_size: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long = "set")]
    pub sets: Vec<String>,
    #[arg(long, value_parser = parse_real)]
    pub tail_eps: Option<f64>,
    /// Number of Monte Carlo samples to histogram.
    #[arg(long, value_parser = parse_count)]
    pub samples: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub seed: Option<u64>,
    /// Write every sampled (sample_id, p, exponent) row.
    #[arg(long)]
    pub emit_samples: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct XyArgs {
    #[arg(long, value_parser = parse_count)]
    pub x: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub y: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Thm1Args {
    #[arg(long, value_parser = parse_count)]
    pub x: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub y: Option<u64>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Thm2Args {
    #[arg(long, value_parser = parse_count)]
    pub x: Option<u64>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
    /// One target count per set, in order.
    #[arg(long = "k", value_parser = parse_count)]
    pub ks: Vec<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Thm3Args {
    #[arg(long, value_parser = parse_count)]
    pub x: Option<u64>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
    #[arg(long, value_parser = parse_count)]
    pub k: Option<u64>,
    /// The constant A > 1 in k <= A log log x [default: 3].
    #[arg(long, value_parser = parse_real)]
    pub a: Option<f64>,
    #[arg(long, value_parser = parse_real)]
    pub psi: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HalaszArgs {
    #[arg(long, value_parser = parse_count)]
    pub x: Option<u64>,
    #[arg(long = "set")]
    pub sets: Vec<String>,
    #[arg(long, value_parser = parse_count)]
    pub k_lo: Option<u64>,
    /// [default: ceil(3H) + 10]
    #[arg(long, value_parser = parse_count)]
    pub k_hi: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Cor1Args {
    #[arg(long, value_parser = parse_count)]
    pub x: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub xi_lo: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    pub xi_hi: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// File with one command line per row; blank lines and # comments are skipped.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Sweep name, used for output files and the band key [default: grid file stem].
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Parser)]
#[command(no_binary_name = true)]
struct GridRow {
    #[command(subcommand)]
    command: Command,
}

/// A run that could not complete.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Usage(String),
    Cap(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Cap(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Cap(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::CapExceeded(_) => Failure::Cap(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<String> for Failure {
    fn from(m: String) -> Self {
        Failure::Usage(m)
    }
}

impl From<&str> for Failure {
    fn from(m: &str) -> Self {
        Failure::Usage(m.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Everything one command produced, before it is written out.
#[derive(Debug, Default)]
pub struct Outcome {
    pub reports: Vec<TheoremReport>,
    pub files: Vec<(String, String)>,
    pub stdout: String,
    pub stages: Vec<(String, f64)>,
    /// `(band key, value)` to check against the band file.
    pub band_value: Option<(String, f64)>,
}

impl Outcome {
    fn file(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }

    fn say(&mut self, line: impl AsRef<str>) {
        self.stdout.push_str(line.as_ref());
        self.stdout.push('\n');
    }

    fn stage(&mut self, name: &str, started: Instant) {
        self.stages.push((name.to_string(), started.elapsed().as_secs_f64()));
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn resolve_specs(d: &Defaults, flag: &[String]) -> Result<Vec<SetSpec>, Failure> {
    let specs = d
        .strings(flag, "sets")?
        .iter()
        .map(|s| parse_set_spec(s))
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        return Err("missing --set".into());
    }
    Ok(specs)
}

fn single_spec(d: &Defaults, flag: &[String]) -> Result<SetSpec, Failure> {
    let mut specs = resolve_specs(d, flag)?;
    if specs.len() != 1 {
        return Err(format!("expected exactly one --set, got {}", specs.len()).into());
    }
    Ok(specs.remove(0))
}

fn report_line(r: &TheoremReport) -> String {
    let k = r.param("k").map(|k| format!(" k={k}")).unwrap_or_default();
    format!("{}{k} lhs={} rhs={} ratio={} uncertainty={}", r.name, r.lhs, r.rhs, r.ratio, r.uncertainty)
}

fn finish_reports(out: &mut Outcome, name: &str, reports: Vec<TheoremReport>) {
    for r in &reports {
        out.say(report_line(r));
    }
    let body = match reports.as_slice() {
        [one] => one.to_json() + "\n",
        many => pretty(&many),
    };
    out.file(&format!("{name}.json"), body);
    if let Some(m) = max_ratio(&reports) {
        out.band_value = Some((name.to_string(), m));
    }
    out.reports = reports;
}

fn ratio_table(reports: &[TheoremReport], extra: &[&str]) -> String {
    let mut s = String::from("k,lhs,rhs,ratio");
    for e in extra {
        s.push(',');
        s.push_str(e);
    }
    s.push('\n');
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{}",
            r.param("k").cloned().unwrap_or(Value::Null),
            r.lhs,
            r.rhs,
            r.ratio
        ));
        for e in extra {
            match r.param(e) {
                Some(Value::Null) | None => s.push(','),
                Some(v) => s.push_str(&format!(",{v}")),
            }
        }
        s.push('\n');
    }
    s
}

/// Runs one non-sweep command.
pub fn execute(cmd: &Command, d: &Defaults) -> Result<Outcome, Failure> {
    let mut out = Outcome::default();
    let t = Instant::now();
    match cmd {
        Command::Sieve(a) => {
            let limit = d.count(a.limit, "limit")?;
            let lo = d.count_opt(a.lo, "lo")?.unwrap_or(0);
            let set = if lo == 0 { sieve_primes(limit)? } else { primes_in_interval(lo, limit)? };
            out.stage("sieve", t);
            let hs = set.harmonic_sums();
            out.file("primes.txt", set.to_text());
            out.file(
                "sieve.json",
                pretty(&json!({ "lo": lo, "limit": limit, "count": set.len(), "h": hs.h, "h1": hs.h1, "h2": hs.h2 })),
            );
            out.say(format!("count={}", set.len()));
        }
        Command::Harmonic(a) => {
            let specs = resolve_specs(d, &a.sets)?;
            let mut rows = Vec::new();
            for s in &specs {
                let hs = s.set.harmonic_sums();
                if specs.len() > 1 {
                    out.say(format!("# {}", s.set.label().unwrap_or("")));
                }
                out.say(format!("h={}\nh1={}\nh2={}", hs.h, hs.h1, hs.h2));
                rows.push(json!({
                    "set": s.set.label(), "size": s.set.len(),
                    "h": hs.h, "h1": hs.h1, "h2": hs.h2,
                }));
            }
            out.stage("harmonic", t);
            out.file("harmonic.json", pretty(&rows));
        }
        Command::Counts(a) => {
            let x = d.count(a.x, "x")?;
            let specs = resolve_specs(d, &a.sets)?;
            let segment = d.count_opt(a.segment_size, "segment_size")?.unwrap_or(DEFAULT_SEGMENT_SIZE as u64);
            let stream = d.flag(a.stream, "stream")?;
            let mut partials = String::new();
            let opts = CountOptions {
                segment_size: usize::try_from(segment).map_err(|_| "segment size too large")?,
            };
            let counts = stream_factor_counts(x, &specs, opts, |p| {
                if stream {
                    partials.push_str(&serde_json::to_string(p)?);
                    partials.push('\n');
                }
                Ok(())
            })?;
            out.stage("counts", t);
            let csv = counts.to_csv();
            out.stdout.push_str(&csv);
            out.file("counts.csv", csv);
            out.file("counts.json", pretty(&counts));
            if stream {
                out.file("counts.partials.jsonl", partials);
            }
        }
        Command::Model(a) => {
            let spec = single_spec(d, &a.sets)?;
            let eps = d.real_opt(a.tail_eps, "tail_eps")?.unwrap_or(prime_poisson::dist::DEFAULT_TAIL_EPS);
            let pmf = model_exact_pmf(&ModelLawRequest::new(spec.set.clone(), spec.mode, eps))?;
            out.stage("exact law", t);
            let hs = spec.set.harmonic_sums();
            out.say(format!("mean={} tail_bound={} support={}", pmf.mean(), pmf.tail_bound(), pmf.len()));
            out.file(
                "model.json",
                pretty(&json!({
                    "set": spec.set.label(), "mode": spec.mode.as_str(),
                    "h": hs.h, "h1": hs.h1, "h2": hs.h2, "pmf": pmf,
                })),
            );
            out.file("model.csv", pmf.to_csv());
            if let Some(n) = d.count_opt(a.samples, "samples")? {
                let seed = d.count_opt(a.seed, "seed")?.unwrap_or(0);
                let y = spec.set.max().ok_or("sampling needs a nonempty set")?;
                let t = Instant::now();
                let sampler = model_sample_vector(y, seed, n)?;
                let hist = sampler.histogram(&spec.set, spec.mode, n)?;
                let mut csv = String::from("k,count,expected\n");
                for k in 0..hist.len().max(pmf.len()) {
                    let c = hist.get(k).copied().unwrap_or(0);
                    csv.push_str(&format!("{k},{c},{}\n", n as f64 * pmf.get(k)));
                }
                out.file("model_samples.csv", csv);
                if d.flag(a.emit_samples, "emit_samples")? {
                    let primes = sampler.primes();
                    let mut rows = String::from("sample_id,p,exponent\n");
                    for s in sampler {
                        for (p, e) in primes.iter().zip(&s.exponents) {
                            if spec.set.contains(*p) {
                                rows.push_str(&format!("{},{p},{e}\n", s.sample_id));
                            }
                        }
                    }
                    out.file("samples.csv", rows);
                }
                out.stage("sampling", t);
            }
        }
        Command::ModelTv(a) => {
            let x = d.count(a.x, "x")?;
            let y = d.count(a.y, "y")?;
            let tv = model_tv_exact(x, y)?;
            out.stage("model tv", t);
            let u = (x as f64).ln() / (y as f64).ln();
            let r = TheoremReport::new("model_tv", tv.value, u_power(u), tv.uncertainty)
                .with("x", x)
                .with("y", y)
                .with("u", u);
            finish_reports(&mut out, "model-tv", vec![r]);
        }
        Command::Thm1(a) => {
            let cfg = Thm1Config::new(d.count(a.x, "x")?, d.count(a.y, "y")?, resolve_specs(d, &a.sets)?)?;
            let r = check_thm1(&cfg)?;
            out.stage("thm1", t);
            finish_reports(&mut out, "thm1", vec![r]);
        }
        Command::Thm2(a) => {
            let specs = resolve_specs(d, &a.sets)?;
            if specs.iter().any(|s| s.mode != CountMode::Distinct) {
                return Err("thm2 counts distinct prime factors; drop the :multiplicity suffix".into());
            }
            let ks = d
                .counts(&a.ks, "ks")?
                .into_iter()
                .map(|k| u32::try_from(k).map_err(|_| format!("k = {k} is too large")))
                .collect::<Result<Vec<_>, _>>()?;
            let sets: Vec<PrimeSet> = specs.into_iter().map(|s| s.set).collect();
            let cfg = Thm2Config::new(d.count(a.x, "x")?, sets, ks)?;
            let r = check_thm2(&cfg)?;
            out.stage("thm2", t);
            finish_reports(&mut out, "thm2", vec![r]);
        }
        Command::Thm3(a) => {
            let spec = single_spec(d, &a.sets)?;
            let psi = d.real_opt(a.psi, "psi")?.ok_or("missing --psi")?;
            let big_a = d.real_opt(a.a, "a")?.unwrap_or(3.0);
            let cfg = Thm3Config::new(d.count(a.x, "x")?, spec.set, d.small(a.k, "k")?, big_a, psi)?;
            let r = check_thm3(&cfg)?;
            out.stage("thm3", t);
            finish_reports(&mut out, "thm3", vec![r]);
        }
        Command::Halasz(a) => {
            let spec = single_spec(d, &a.sets)?;
            let x = d.count(a.x, "x")?;
            let k_lo = d.small_opt(a.k_lo, "k_lo")?.unwrap_or(0);
            let k_hi = match d.small_opt(a.k_hi, "k_hi")? {
                Some(k) => k,
                None => default_k_max(spec.set.harmonic_sums().h),
            };
            let reports = check_halasz(x, &spec.set, k_lo, k_hi)?;
            out.stage("halasz", t);
            out.file("halasz.csv", ratio_table(&reports, &["ratio_h1"]));
            finish_reports(&mut out, "halasz", reports);
        }
        Command::Thm4(a) => {
            let spec = single_spec(d, &a.sets)?;
            let reports = check_thm4_local(&spec.set, spec.mode)?;
            out.stage("thm4", t);
            out.file("thm4.csv", ratio_table(&reports, &[]));
            finish_reports(&mut out, "thm4", reports);
        }
        Command::Cor1(a) => {
            let r = check_corollary1(d.count(a.x, "x")?, d.small(a.xi_lo, "xi_lo")?, d.small(a.xi_hi, "xi_hi")?)?;
            out.stage("cor1", t);
            finish_reports(&mut out, "cor1", vec![r]);
        }
        Command::Cor32(a) => {
            let spec = single_spec(d, &a.sets)?;
            let r = check_cor32(&spec.set, spec.mode)?;
            out.stage("cor32", t);
            finish_reports(&mut out, "cor32", vec![r]);
        }
        Command::Sweep(_) => return Err("sweeps cannot be nested".into()),
    }
    Ok(out)
}

fn parse_row(line: &str) -> Result<Command, Failure> {
    GridRow::try_parse_from(line.split_whitespace())
        .map(|r| r.command)
        .map_err(|e| Failure::Usage(e.render().to_string().lines().next().unwrap_or("").to_string()))
}

#[derive(Debug, Serialize)]
struct RowRecord {
    line: usize,
    command: String,
    status: &'static str,
    error: Option<String>,
    reports: Vec<TheoremReport>,
}

/// Runs every row of a grid file. Rows fail independently; the sweep itself
/// only fails on a bad grid file.
pub fn run_sweep(a: &SweepArgs, d: &Defaults) -> Result<Outcome, Failure> {
    let grid = match &a.grid {
        Some(p) => p.clone(),
        None => PathBuf::from(d.string_opt(None, "grid")?.ok_or("missing --grid")?),
    };
    let text = std::fs::read_to_string(&grid).map_err(|e| format!("{}: {e}", grid.display()))?;
    let name = match d.string_opt(a.name.as_deref(), "name")? {
        Some(n) => n,
        None => grid
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sweep".into()),
    };
    let rows: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let started = Instant::now();
    let results: Vec<(RowRecord, f64)> = rows
        .par_iter()
        .map(|&(line, row)| {
            let t = Instant::now();
            let (status, error, reports) = match parse_row(row).and_then(|c| execute(&c, d)) {
                Ok(o) => ("ok", None, o.reports),
                Err(f) => ("error", Some(f.message().to_string()), Vec::new()),
            };
            let rec = RowRecord {
                line,
                command: row.to_string(),
                status,
                error,
                reports,
            };
            (rec, t.elapsed().as_secs_f64())
        })
        .collect();

    let mut out = Outcome::default();
    out.stage("sweep", started);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure::Usage(e.to_string());
    w.write_record(["line", "command", "status", "name", "k", "lhs", "rhs", "ratio", "uncertainty", "error"])
        .map_err(csv_err)?;
    let mut all = Vec::new();
    for (rec, secs) in &results {
        out.stages.push((format!("line {}", rec.line), *secs));
        let line = rec.line.to_string();
        if rec.reports.is_empty() {
            w.write_record([&line, &rec.command, rec.status, "", "", "", "", "", "", rec.error.as_deref().unwrap_or("")])
                .map_err(csv_err)?;
        }
        for r in &rec.reports {
            let k = r.param("k").map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                line.as_str(),
                &rec.command,
                rec.status,
                &r.name,
                &k,
                &r.lhs.to_string(),
                &r.rhs.to_string(),
                &r.ratio.to_string(),
                &r.uncertainty.to_string(),
                "",
            ])
            .map_err(csv_err)?;
            all.push(r.clone());
        }
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).expect("csv is utf-8");
    let records: Vec<RowRecord> = results.into_iter().map(|(r, _)| r).collect();
    let errors = records.iter().filter(|r| r.status != "ok").count();
    let max = max_ratio(&all);
    out.say(format!(
        "rows={} ok={} errors={errors} max_ratio={}",
        records.len(),
        records.len() - errors,
        max.map_or("undefined".to_string(), |m| m.to_string())
    ));
    for r in records.iter().filter(|r| r.status != "ok") {
        out.say(format!("line {}: {}", r.line, r.error.as_deref().unwrap_or("")));
    }
    out.file(&format!("{name}.csv"), csv);
    out.file(
        &format!("{name}.json"),
        pretty(&json!({
            "name": name,
            "rows": records.len(),
            "errors": errors,
            "max_ratio": max,
            "results": records,
        })),
    );
    out.band_value = max.map(|m| (name, m));
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Manifest {
    version: &'static str,
    timestamp: String,
    command: &'static str,
    config: Value,
    stages: Vec<Value>,
    verdicts: std::collections::BTreeMap<String, Verdict>,
    outputs: Vec<String>,
}

fn write_outputs(dir: &Path, out: &Outcome) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, content) in &out.files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32, Failure> {
    let defaults = match &cli.config {
        Some(p) => Defaults::load(p)?,
        None => Defaults::default(),
    };
    let command = match cli.command {
        Some(c) => c,
        None => {
            let name = defaults
                .string_opt(None, "command")?
                .ok_or("no command given (pass one, or set `command` in --config)")?;
            GridRow::try_parse_from([name.as_str()])
                .map_err(|e| Failure::Usage(format!("unknown command {name:?}: {}", e.kind())))?
                .command
        }
    };
    let threads = defaults.count_opt(cli.threads.map(|t| t as u64), "threads")?;
    let out_dir = PathBuf::from(
        defaults
            .string_opt(cli.out_dir.as_deref().and_then(Path::to_str), "out_dir")?
            .unwrap_or_else(|| "out".into()),
    );
    let band_file = defaults
        .string_opt(cli.band_file.as_deref().and_then(Path::to_str), "band_file")?
        .map(PathBuf::from);
    let band_key = defaults.string_opt(cli.band_key.as_deref(), "band_key")?;
    let margin = defaults.real_opt(cli.band_margin, "band_margin")?.unwrap_or(DEFAULT_BAND_MARGIN);

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err("--threads must be ≥ 1".into());
        }
        builder = builder.num_threads(n as usize);
    }
    let pool = builder.build().map_err(|e| e.to_string())?;
    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let mut out = pool.install(|| match &command {
        Command::Sweep(a) => run_sweep(a, &defaults),
        c => execute(c, &defaults),
    })?;

    let mut verdicts = std::collections::BTreeMap::new();
    if let (Some(path), Some((default_key, value))) = (&band_file, &out.band_value) {
        let mut bands = BandFile::load_or_default(path)?;
        let key = band_key.unwrap_or_else(|| default_key.clone());
        let v = bands.check_or_record(&key, *value, margin);
        if v == Verdict::Recorded {
            bands.save(path)?;
        }
        out.say(format!("band {key}: {}", serde_json::to_value(v).unwrap_or_default().as_str().unwrap_or("")));
        verdicts.insert(key, v);
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        timestamp,
        command: command.name(),
        config: json!({
            "args": command,
            "file": serde_json::to_value(defaults.table()).unwrap_or(Value::Null),
            "threads": threads,
            "out_dir": out_dir,
            "band_file": band_file,
            "band_margin": margin,
        }),
        stages: out
            .stages
            .iter()
            .map(|(s, secs)| json!({ "stage": s, "seconds": secs }))
            .collect(),
        verdicts: verdicts.clone(),
        outputs: out.files.iter().map(|(n, _)| n.clone()).collect(),
    };
    out.file("manifest.json", pretty(&manifest));
    write_outputs(&out_dir, &out)?;
    print!("{}", out.stdout);
    Ok(if verdicts.values().any(|v| *v == Verdict::Fail) { 1 } else { 0 })
}
