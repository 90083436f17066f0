use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nashfair::rational::{parse_rational, rat};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nashfair"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn repo_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Writes every fixture into a fresh directory.
fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fixtures", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

fn path_str(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn solve_example1_has_unique_optimum_of_twelve() {
    let dir = fixture_dir();
    let report = dir.path().join("report.json");
    let o = run(&[
        "solve",
        &path_str(dir.path(), "example1.json"),
        "--all-optima",
        "--json-out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("nash welfare: 12"));
    let v = json(&report);
    assert_eq!(v["nash_welfare"], "12");
    assert_eq!(v["maximizers"].as_array().unwrap().len(), 1);
    let expected = json(&dir.path().join("example1.alloc.json"));
    assert_eq!(v["maximizers"][0], expected["bundles"]);
}

#[test]
fn complete_optimum_of_example1_is_below_twelve() {
    let dir = fixture_dir();
    let report = dir.path().join("report.json");
    let o = run(&[
        "solve",
        &path_str(dir.path(), "example1.json"),
        "--complete",
        "--json-out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&report);
    let nw = parse_rational(v["nash_welfare"].as_str().unwrap()).unwrap();
    assert!(nw < rat(12, 1), "{}", nw);
    let goods = v["maximizers"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_array().unwrap().len())
        .sum::<usize>();
    assert_eq!(goods, 8);
}

#[test]
fn empty_goods_instance_has_zero_welfare() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("empty.json");
    fs::write(&file, r#"{"agents": 1, "goods": [], "valuations": [[]]}"#).unwrap();
    let report = dir.path().join("report.json");
    let o = run(&[
        "solve",
        file.to_str().unwrap(),
        "--json-out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&report);
    assert_eq!(v["nash_welfare"], "0");
    assert_eq!(v["maximizers"][0], serde_json::json!([[]]));
}

#[test]
fn negative_valuation_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(
        &file,
        r#"{"agents": 1, "goods": ["g1"], "valuations": [["-1"]]}"#,
    )
    .unwrap();
    let o = run(&["solve", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("negative valuation"));
}

#[test]
fn tightness_k3_is_three_quarters_ef1_but_not_ef1() {
    let dir = fixture_dir();
    let inst = path_str(dir.path(), "tightness-k3.json");
    let alloc = path_str(dir.path(), "tightness-k3.alloc.json");
    let o = run(&["check", &inst, &alloc, "ef1", "--alpha", "3/4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("holds"));

    let report = dir.path().join("report.json");
    let o = run(&[
        "check",
        &inst,
        &alloc,
        "ef1",
        "--alpha",
        "1",
        "--json-out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&report);
    assert_eq!(v["holds"], false);
    assert_eq!(v["witness"]["envious"], 2);
    assert_eq!(v["witness"]["envied"], 1);
}

#[test]
fn round_robin_output_is_not_po() {
    let dir = fixture_dir();
    let report = dir.path().join("report.json");
    let o = run(&[
        "check",
        &path_str(dir.path(), "roundrobin-po.json"),
        &path_str(dir.path(), "roundrobin-po.alloc.json"),
        "po",
        "--json-out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("dominated by"));
    assert_eq!(json(&report)["witness"]["kind"], "dominator");
}

#[test]
fn unknown_property_is_an_error() {
    let dir = fixture_dir();
    let o = run(&[
        "check",
        &path_str(dir.path(), "example1.json"),
        &path_str(dir.path(), "example1.alloc.json"),
        "nonsense",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown property"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["fuzz", "--family", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn fuzz_partition_suite_finds_nothing() {
    let o = run(&[
        "fuzz",
        "--seed",
        "42",
        "--trials",
        "200",
        "--family",
        "partition",
        "--property",
        "half-ef1",
        "--property",
        "po",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("findings: 0, errors: 0"));
}

#[test]
fn fuzz_copies_suite_finds_nothing() {
    let o = run(&[
        "fuzz",
        "--seed",
        "7",
        "--family",
        "copies",
        "--property",
        "ef1wc-half",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn fuzz_findings_are_reproducible_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("found");
    let args = |report: &Path| {
        vec![
            "fuzz".to_string(),
            "--seed".into(),
            "3".into(),
            "--trials".into(),
            "300".into(),
            "--family".into(),
            "laminar".into(),
            "--property".into(),
            "ef1-exact".into(),
            "--goods".into(),
            "3-7".into(),
            "--out-dir".into(),
            out.to_str().unwrap().into(),
            "--json-out".into(),
            report.to_str().unwrap().into(),
        ]
    };
    let (r1, r2) = (dir.path().join("r1.json"), dir.path().join("r2.json"));
    let o1 = bin().args(args(&r1)).output().unwrap();
    let o2 = bin().args(args(&r2)).output().unwrap();
    assert_eq!(o1.stdout, o2.stdout);
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    assert_eq!(o1.status.code(), Some(2));
    let findings = json(&r1)["findings"].as_array().unwrap().clone();
    assert!(!findings.is_empty());
    for f in findings {
        let stem = format!("counterexample-{}-ef1-exact", f["trial"]);
        let o = run(&[
            "check",
            &path_str(&out, &format!("{}.json", stem)),
            &path_str(&out, &format!("{}.alloc.json", stem)),
            "ef1",
        ]);
        assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    }
}

#[test]
fn fixtures_match_the_committed_files() {
    let dir = fixture_dir();
    let again = fixture_dir();
    let committed = repo_fixtures();
    let mut count = 0;
    for entry in fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes, fs::read(again.path().join(name)).unwrap());
        assert_eq!(bytes, fs::read(committed.join(name)).unwrap(), "{:?}", name);
        count += 1;
    }
    assert_eq!(count, fs::read_dir(&committed).unwrap().count());
}

#[test]
fn fixture_rows_match_the_published_tables() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["sdef1-impossible", "roundrobin-po"] {
        let o = run(&["fixtures", name, "--out-dir", dir.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    let row = |file: &str, i: usize| -> Vec<i64> {
        json(&dir.path().join(file))["valuations"][i]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_i64().unwrap())
            .collect()
    };
    assert_eq!(
        row("sdef1-impossible.json", 0),
        vec![8, 4, 7, 5, 6, 1, 3, 2]
    );
    assert_eq!(row("roundrobin-po.json", 1), vec![10, 9, 8, 7, 6, 5, 1, 0]);
    assert_eq!(run(&["fixtures", "no-such-fixture"]).status.code(), Some(1));
}

#[test]
fn lottery_writes_files_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("types.json");
    fs::write(&inst, r#"{"agents": 2, "goods": ["a", "b", "c"], "valuations": [[5, 1, 1], [4, 2, 1]], "supplies": [1, 2, 1]}"#)
        .unwrap();
    for mode in ["copies", "copies-balanced"] {
        let (lot, cert) = (
            dir.path().join("lottery.json"),
            dir.path().join("cert.json"),
        );
        let o = run(&[
            "lottery",
            inst.to_str().unwrap(),
            "--mode",
            mode,
            "--lottery-out",
            lot.to_str().unwrap(),
            "--certificate-out",
            cert.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        let entries = json(&lot);
        let total = entries
            .as_array()
            .unwrap()
            .iter()
            .map(|e| parse_rational(e["weight"].as_str().unwrap()).unwrap())
            .fold(rat(0, 1), |a, w| a + w);
        assert_eq!(total, rat(1, 1));
        let c = json(&cert);
        assert_eq!(c["mode"], mode);
        assert!(c["residuals"]["max"].as_f64().unwrap() <= 1e-6);
    }
}

#[test]
fn lottery_rejects_zero_values() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("types.json");
    fs::write(
        &inst,
        r#"{"agents": 2, "goods": ["a"], "valuations": [[0], [1]]}"#,
    )
    .unwrap();
    let o = run(&["lottery", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn decompose_recovers_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("types.json");
    fs::write(
        &inst,
        r#"{"agents": 2, "goods": ["a", "b"], "valuations": [[2, 1], [1, 2]], "supplies": [1, 2]}"#,
    )
    .unwrap();
    let x = dir.path().join("x.json");
    fs::write(&x, r#"{"x": [["1/3", "1"], ["2/3", "1"]]}"#).unwrap();
    let lot = dir.path().join("lottery.json");
    let o = run(&[
        "decompose",
        inst.to_str().unwrap(),
        x.to_str().unwrap(),
        "--lottery-out",
        lot.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let mut share = rat(0, 1);
    for e in json(&lot).as_array().unwrap() {
        if e["bundles"][0].as_array().unwrap().iter().any(|g| g == "a") {
            share += parse_rational(e["weight"].as_str().unwrap()).unwrap();
        }
    }
    assert_eq!(share, rat(1, 3));

    fs::write(&x, r#"{"x": [["1", "1"], ["1", "1"]]}"#).unwrap();
    assert_eq!(
        run(&["decompose", inst.to_str().unwrap(), x.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}
