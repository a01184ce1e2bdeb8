use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ompd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ompd"))
        .args(args)
        .env("OMPD_THREADS", "2")
        .output()
        .expect("spawn ompd")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_example1(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--experiment",
        "example1",
        "--out",
        out.to_str().unwrap(),
        "--horizon",
        "200",
    ];
    args.extend_from_slice(extra);
    ompd(&args)
}

fn verify(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["verify", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    ompd(&args)
}

/// Parses the `key=value` pairs of the line starting with `variant=<v>`.
fn summary(text: &str, variant: &str) -> Vec<(String, String)> {
    let line = text
        .lines()
        .find(|l| {
            l.starts_with(&format!("variant={variant} T="))
                || l.starts_with(&format!("variant={variant} regime="))
        })
        .unwrap_or_else(|| panic!("no summary for {variant} in {text}"));
    line.split_whitespace()
        .map(|kv| {
            let (k, v) = kv.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn value<'a>(pairs: &'a [(String, String)], key: &str) -> &'a str {
    &pairs
        .iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("no {key}"))
        .1
}

/// Rewrites column `col` of data row `k` in a CSV file.
fn edit_csv(path: &Path, k: usize, col: usize, f: impl Fn(f64) -> f64) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[k].split(',').map(str::to_string).collect();
    let v: f64 = cells[col].parse().unwrap();
    cells[col] = format!("{:.16e}", f(v));
    lines[k] = cells.join(",");
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn example1_smoke_writes_four_csvs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("results");
    let o = ompd(&[
        "run",
        "--experiment",
        "example1",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut csvs: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(
        csvs,
        [
            "exact_coefficients.csv",
            "exact_iterates.csv",
            "exact_ledger.csv",
            "exact_trace.csv"
        ]
    );
    let s = summary(&stdout(&o), "exact");
    assert_eq!(value(&s, "T"), "1000");
    let r: f64 = value(&s, "R_T").parse().unwrap();
    let avg: f64 = value(&s, "R_T/T").parse().unwrap();
    assert!((r / 1000.0 - avg).abs() <= 1e-9 * avg.abs());
    assert!(value(&s, "margin").parse::<f64>().unwrap() >= 0.0);
    assert_eq!(value(&s, "certified"), "true");

    let header = fs::read_to_string(out.join("exact_trace.csv")).unwrap();
    assert!(header.starts_with("k,f_k(x_k),f_k(x_k*),instantaneous_regret,norm_e_k,eps_k,dist_x_k_to_opt,cumulative_regret"));
    let coeffs = fs::read_to_string(out.join("exact_coefficients.csv")).unwrap();
    assert!(coeffs.starts_with("t,i,a_true,a_pred"));
}

#[test]
fn verify_after_run_succeeds_and_matches() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let r = run_example1(out, &["--variant", "both", "--seed", "3"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let v = verify(out, &[]);
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    for variant in ["exact", "inexact"] {
        let run = summary(&stdout(&r), variant);
        let ver = summary(&stdout(&v), variant);
        assert_eq!(value(&run, "margin"), value(&ver, "worst_margin"));
        assert_eq!(value(&ver, "certified"), "true");
    }
}

#[test]
fn malformed_config_exits_2_naming_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[stream]\nalpha = 0.9\neta = often\n").unwrap();
    let o = run_example1(
        &dir.path().join("out"),
        &["--config", cfg.to_str().unwrap()],
    );
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(
        err.contains("stream.eta") && err.contains("line 3"),
        "{err}"
    );

    fs::write(&cfg, "[solver]\nstepsize = 0.1\n").unwrap();
    let o = run_example1(
        &dir.path().join("out2"),
        &["--config", cfg.to_str().unwrap()],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("solver.stepsize"));
}

#[test]
fn missing_config_file_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = run_example1(
        &dir.path().join("out"),
        &["--config", "/nonexistent/cfg.ini"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn nonempty_output_requires_overwrite() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    assert_eq!(code(&run_example1(out, &[])), 0);
    let before = fs::read_to_string(out.join("exact_trace.csv")).unwrap();
    let o = run_example1(out, &["--seed", "9"]);
    assert_eq!(code(&o), 3);
    assert_eq!(
        fs::read_to_string(out.join("exact_trace.csv")).unwrap(),
        before
    );
    let o = run_example1(out, &["--seed", "9", "--overwrite"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_ne!(
        fs::read_to_string(out.join("exact_trace.csv")).unwrap(),
        before
    );
}

#[test]
fn verify_without_trace_exits_4() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&verify(dir.path(), &[])), 4);
    assert_eq!(code(&run_example1(dir.path(), &[])), 0);
    fs::remove_file(dir.path().join("exact_trace.csv")).unwrap();
    let o = verify(dir.path(), &[]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("exact_trace.csv"));
}

#[test]
fn doctored_loss_below_optimum_exits_5() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_example1(dir.path(), &[])), 0);
    let trace = dir.path().join("exact_trace.csv");
    let opt: f64 = fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .nth(40)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    edit_csv(&trace, 40, 1, |_| opt - 1.0);
    let o = verify(dir.path(), &[]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("k = 40"));
}

#[test]
fn loss_inconsistent_with_iterates_exits_5() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_example1(dir.path(), &[])), 0);
    edit_csv(&dir.path().join("exact_trace.csv"), 7, 1, |v| v + 0.5);
    assert_eq!(code(&verify(dir.path(), &[])), 5);
}

#[test]
fn stale_smoothness_exits_6() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_example1(dir.path(), &[])), 0);
    let stale = dir.path().join("stale.ini");
    fs::write(&stale, "[constants]\nsmoothness = 1e-3\n").unwrap();
    let o = verify(dir.path(), &["--config", stale.to_str().unwrap()]);
    assert_eq!(code(&o), 6, "{}", stderr(&o));
    assert!(stderr(&o).contains("descent lemma"));
}

#[test]
fn inflated_regret_exits_7() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run_example1(dir.path(), &[])), 0);
    // A far lower comparator value makes the regret exceed any bound.
    edit_csv(&dir.path().join("exact_trace.csv"), 100, 2, |v| v - 1e9);
    let o = verify(dir.path(), &[]);
    assert_eq!(code(&o), 7, "{}", stderr(&o));
    assert!(stdout(&o).contains("certified=false"));
}

#[test]
fn step_size_rule_violation_exits_8() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("big_step.ini");
    fs::write(&cfg, "[solver]\nstep_size = 50\n").unwrap();
    let o = run_example1(
        &dir.path().join("out"),
        &["--config", cfg.to_str().unwrap()],
    );
    assert_eq!(code(&o), 8, "{}", stderr(&o));
    assert!(stderr(&o).contains("step size"));
}

#[test]
fn example2_writes_snapshots_and_verifies() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sep.ini");
    fs::write(
        &cfg,
        "[output]\nsnapshot_every = 10\n[errors]\nerror_std = 0.01\nprox_cap = 0.04\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = ompd(&[
        "run",
        "--experiment",
        "example2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--horizon",
        "30",
        "--variant",
        "both",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for k in ["0010", "0020", "0030"] {
        let grid =
            fs::read_to_string(out.join(format!("inexact_snapshot_{k}_sparse.csv"))).unwrap();
        assert_eq!(grid.lines().count(), 16);
        assert_eq!(grid.lines().next().unwrap().split(',').count(), 64);
    }
    assert!(stdout(&o).contains("support_f1="));
    let v = verify(&out, &[]);
    assert_eq!(code(&v), 0, "{}", stderr(&v));
}

#[test]
fn custom_entropy_simplex_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.ini");
    fs::write(
        &cfg,
        "[solver]\ngenerator = entropy\n[domain]\nkind = simplex\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = ompd(&[
        "run",
        "--experiment",
        "custom",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--variant",
        "inexact",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = verify(&out, &[]);
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    assert_eq!(value(&summary(&stdout(&v), "inexact"), "regime"), "bounded");
}

#[test]
fn runs_are_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        code(&run_example1(&a, &["--variant", "inexact", "--seed", "5"])),
        0
    );
    assert_eq!(
        code(&run_example1(&b, &["--variant", "inexact", "--seed", "5"])),
        0
    );
    for f in [
        "inexact_trace.csv",
        "inexact_iterates.csv",
        "inexact_ledger.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}
