mod common;

use common::{fixture_path, Fixture};
use std::process::{Command, Output};
use ugrec::study::{build_table, Cell, TableOptions};

fn ugrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ugrec")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn moments_means_match_table1() {
    let o = ugrec(&["moments", "--theta", "1.5", "--k", "2", "--n", "6"]);
    assert!(o.status.success());
    let f = Fixture::load("table1.csv");
    let text = stdout(&o);
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("quantity,index,value"));
    let means: Vec<(usize, f64)> = rows
        .filter(|l| l.starts_with("mean,"))
        .map(|l| {
            let v: Vec<&str> = l.split(',').collect();
            (v[1].parse().unwrap(), v[2].parse().unwrap())
        })
        .collect();
    assert_eq!(means.len(), 6);
    for (n, m) in means {
        let i = f.find(&[("k", 2.0), ("n", n as f64)]).unwrap();
        assert!((m - f.get(i, "theta_1.5").unwrap()).abs() <= 5e-5);
    }
}

#[test]
fn analyze_json() {
    let input = fixture_path("covid_andorra.csv");
    let o = ugrec(&[
        "analyze", "--input", input.to_str().unwrap(), "--k", "2", "--theta", "1.5", "--n", "4", "--level", "0.95",
        "--seed", "42", "--reps", "2000", "--format", "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mu = v["estimates"]["mu_blue"].as_f64().unwrap();
    assert!((mu - 0.08321097).abs() <= 1e-3);
    assert_eq!(v["intervals"].as_array().unwrap().len(), 6);
    assert_eq!(v["pivot_seed"].as_u64(), Some(42));
}

#[test]
fn tables_output_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("t3.csv");
    let p2 = dir.path().join("t3b.csv");
    for p in [&p1, &p2] {
        let o = ugrec(&["tables", "--id", "3", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    let a = std::fs::read(&p1).unwrap();
    assert_eq!(a, std::fs::read(&p2).unwrap());

    let mem = build_table(3, &TableOptions::default()).unwrap();
    let mut rdr = csv::Reader::from_path(&p1).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, mem.header);
    for (rec, row) in rdr.records().zip(&mem.rows) {
        let rec = rec.unwrap();
        for (s, c) in rec.iter().zip(row) {
            match c {
                Cell::Empty => assert!(s.is_empty()),
                Cell::Int(i) => assert_eq!(s.parse::<u64>().unwrap(), *i),
                Cell::Num(x) => assert_eq!(s.parse::<f64>().unwrap(), *x),
            }
        }
    }
}

#[test]
fn seeded_pivots_are_byte_identical() {
    let args = ["pivots", "--theta", "2.5", "--k", "1", "--n", "3", "--reps", "1000", "--seed", "8"];
    let a = ugrec(&args);
    let b = ugrec(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 1 + 6 * 4);
}

#[test]
fn exit_codes() {
    assert_eq!(ugrec(&["--help"]).status.code(), Some(0));
    assert_eq!(ugrec(&["--version"]).status.code(), Some(0));
    let bad_flag = ugrec(&["moments", "--theta", "1.5", "--k", "2", "--n", "3", "--bogus"]);
    assert_eq!(bad_flag.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_flag.stderr).contains("Usage"));
    assert_eq!(ugrec(&["moments", "--theta", "-1", "--k", "2", "--n", "3"]).status.code(), Some(1));
    assert_eq!(ugrec(&["estimate", "--input", "/nonexistent", "--k", "1", "--theta", "1"]).status.code(), Some(1));
    assert_eq!(ugrec(&["tables"]).status.code(), Some(1));
    // covariance matrix loses positive definiteness
    assert_eq!(ugrec(&["coeffs", "--theta", "0.2", "--k", "1", "--n", "30"]).status.code(), Some(2));
}

#[test]
fn estimate_and_predict_fidelity_mode() {
    let input = fixture_path("covid_andorra.csv");
    let base = ["--input", input.to_str().unwrap(), "--k", "2", "--theta", "1.5", "--n", "4", "--paper-fidelity"];
    let e = ugrec(&[&["estimate"], &base[..], &["--format", "json"]].concat());
    let v: serde_json::Value = serde_json::from_str(&stdout(&e)).unwrap();
    assert!((v["estimates"]["sigma_blue"].as_f64().unwrap() - 0.2203375).abs() < 5e-7);
    let p = ugrec(&[&["predict"], &base[..]].concat());
    let text = stdout(&p);
    let blip: f64 = text
        .lines()
        .find(|l| l.starts_with("blip,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    // six significant digits in CSV
    assert_eq!(blip, 0.191144);
}

#[test]
fn coeffs_and_study_run() {
    let o = ugrec(&["coeffs", "--theta", "1.5", "--k", "2", "--n", "4", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["coefficients"]["v1"].as_f64().unwrap() - 0.07735).abs() < 5e-6);
    let s = ugrec(&["study", "--theta", "1.5", "--k", "1", "--n", "3", "--reps", "200", "--table-reps", "1000"]);
    assert!(s.status.success());
    let text = stdout(&s);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}
