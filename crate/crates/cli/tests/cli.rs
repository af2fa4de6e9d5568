use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prime_poisson::theorems::{check_cor32, check_thm1, Thm1Config};
use prime_poisson::{CountMode, PrimeSet, SetSpec};
use serde_json::Value;
use tempfile::TempDir;

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prime-poisson"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Every output file except the manifest, which carries a timestamp.
fn reports(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn documented_thm1_example() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["thm1", "--x", "1e6", "--y", "31", "--set", "interval:2..31:distinct"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("thm1 lhs=0.08888023805954005 rhs=0.17754776500124045 ratio=0.500599025050634 "));

    let set = PrimeSet::new(vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31]).unwrap().with_label("interval:2..31");
    let want = check_thm1(&Thm1Config::new(1_000_000, 31, vec![SetSpec::distinct(set)]).unwrap()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("thm1.json")).unwrap(), want.to_json() + "\n");

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "thm1");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["args"]["thm1"]["x"], 1_000_000);
    assert_eq!(manifest["outputs"], serde_json::json!(["thm1.json"]));
    assert!(manifest["timestamp"].is_string());
    assert!(manifest["stages"][0]["seconds"].is_number());
}

#[test]
fn documented_harmonic_example() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["harmonic", "--set", "list:2,3,5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "h=1.0333333333333332\nh1=1.75\nh2=0.4011111111111111\n");
}

#[test]
fn documented_counts_example() {
    let dir = TempDir::new().unwrap();
    let o = run_in(dir.path(), &["counts", "--x", "100", "--set", "list:2,3:distinct"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "k_1,count\n0,33\n1,51\n2,16\n");
    assert_eq!(fs::read_to_string(dir.path().join("counts.csv")).unwrap(), stdout(&o));
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let commands: [&[&str]; 4] = [
        &["thm1", "--x", "3e5", "--y", "100", "--set", "interval:2..30", "--set", "interval:31..100:multiplicity"],
        &["model", "--set", "list:2,3,5,7:multiplicity", "--samples", "20000", "--seed", "7", "--emit-samples"],
        &["halasz", "--x", "1e6", "--set", "interval:2..1000:multiplicity"],
        &["counts", "--x", "2e5", "--set", "expexp:1", "--stream", "--segment-size", "10000"],
    ];
    for args in commands {
        let mut seen = Vec::new();
        for threads in ["1", "4", "4"] {
            let dir = TempDir::new().unwrap();
            let mut full = vec!["--threads", threads];
            full.extend_from_slice(args);
            let o = run_in(dir.path(), &full);
            assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            seen.push(reports(dir.path()));
        }
        assert!(!seen[0].is_empty());
        assert_eq!(seen[0], seen[1], "{args:?}");
        assert_eq!(seen[0], seen[2], "{args:?}");
    }
}

#[test]
fn singleton_sweep_reports_max_ratio() {
    let dir = TempDir::new().unwrap();
    let primes = [11u64, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];
    let grid: String = primes.iter().map(|p| format!("cor32 --set list:{p}:multiplicity\n")).collect();
    let grid_path = dir.path().join("singletons.grid");
    fs::write(&grid_path, format!("# singleton primes\n\n{grid}")).unwrap();
    let out = dir.path().join("out");
    let o = run_in(&out, &["sweep", "--grid", grid_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let want = primes
        .iter()
        .map(|&p| {
            check_cor32(&PrimeSet::new(vec![p]).unwrap(), CountMode::WithMultiplicity)
                .unwrap()
                .ratio
                .value()
                .unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(stdout(&o).contains(&format!("rows=11 ok=11 errors=0 max_ratio={want}")), "{}", stdout(&o));

    let mut rdr = csv::Reader::from_path(out.join("singletons.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), primes.len());
    let max_row = rows
        .iter()
        .map(|r| r[7].parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max_row, want);
    assert_eq!(read_json(&out.join("singletons.json"))["max_ratio"], want);
}

#[test]
fn empty_grid_gives_header_only_csv() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("empty.grid");
    fs::write(&grid, "# nothing to run\n").unwrap();
    let o = run_in(dir.path(), &["sweep", "--grid", grid.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("empty.csv")).unwrap(),
        "line,command,status,name,k,lhs,rhs,ratio,uncertainty,error\n"
    );
}

#[test]
fn capped_row_is_isolated() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("mixed.grid");
    fs::write(
        &grid,
        "cor32 --set list:11:multiplicity\nthm1 --x 1e13 --y 31 --set interval:2..31\ncor32 --set list:13\n",
    )
    .unwrap();
    let o = run_in(dir.path(), &["sweep", "--grid", grid.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(dir.path().join("mixed.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let status: Vec<&str> = rows.iter().map(|r| &r[2]).collect();
    assert_eq!(status, ["ok", "error", "ok"]);
    assert!(rows[1][9].contains("cap"), "{:?}", rows[1]);
    assert!(rows[0][7].parse::<f64>().is_ok() && rows[2][7].parse::<f64>().is_ok());
}

#[test]
fn band_file_records_then_checks() {
    let dir = TempDir::new().unwrap();
    let bands = dir.path().join("bands.json");
    let args = ["--band-file", bands.to_str().unwrap(), "cor32", "--set", "expexp:1"];

    let first = run_in(dir.path(), &args);
    assert_eq!(first.status.code(), Some(0));
    assert!(stdout(&first).contains("band cor32: recorded"));
    let recorded = read_json(&bands);
    let (lo, hi) = (recorded["cor32"][0].as_f64().unwrap(), recorded["cor32"][1].as_f64().unwrap());
    assert!(lo < hi);

    let second = run_in(dir.path(), &args);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("manifest.json"))["verdicts"]["cor32"], "pass");

    fs::write(&bands, r#"{"cor32": [0.0, 1e-9]}"#).unwrap();
    let third = run_in(dir.path(), &args);
    assert_eq!(third.status.code(), Some(1));
    assert_eq!(read_json(&dir.path().join("manifest.json"))["verdicts"]["cor32"], "fail");
    // a failing check never rewrites the frozen band
    assert_eq!(read_json(&bands)["cor32"], serde_json::json!([0.0, 1e-9]));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "command = \"counts\"\nx = \"1e2\"\nsets = [\"list:2,3:distinct\"]\n").unwrap();

    let from_file = run_in(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0), "{}", String::from_utf8_lossy(&from_file.stderr));
    assert_eq!(stdout(&from_file), "k_1,count\n0,33\n1,51\n2,16\n");

    let overridden = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "counts", "--x", "10"]);
    assert_eq!(stdout(&overridden), "k_1,count\n0,3\n1,6\n2,1\n");
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["args"]["counts"]["x"], 10);
    assert_eq!(manifest["config"]["file"]["x"], "1e2");

    fs::write(&cfg, "colour = 3\n").unwrap();
    assert_eq!(run_in(dir.path(), &["--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn exit_codes_for_usage_domain_and_cap_errors() {
    let dir = TempDir::new().unwrap();
    let code = |args: &[&str]| run_in(dir.path(), args).status.code();
    assert_eq!(code(&["counts", "--x", "1.5e0", "--set", "list:2"]), Some(2));
    assert_eq!(code(&["counts", "--x", "1.5e1", "--set", "list:2"]), Some(0));
    assert_eq!(code(&["counts", "--x", "100", "--set", "interval:5"]), Some(2));
    assert_eq!(code(&["counts", "--x", "100"]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));
    // 3 log log 10^6 ≈ 7.88, so k = 8 is outside the admissible range
    assert_eq!(code(&["thm3", "--x", "1e6", "--set", "interval:2..100", "--k", "8", "--psi", "1"]), Some(2));
    let cap = run_in(dir.path(), &["counts", "--x", "1e13", "--set", "list:2"]);
    assert_eq!(cap.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&cap.stderr).contains("2^40"));
}
