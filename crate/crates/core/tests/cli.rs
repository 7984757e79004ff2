use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bilevel-prox"))
}

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Replaces column `col` of each data row where `edit` returns a value.
fn edit_trace(path: &Path, col: usize, edit: impl Fn(usize, &str) -> Option<String>) {
    let text = fs::read_to_string(path).unwrap();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push(line.to_string());
            continue;
        }
        let mut fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if let Some(v) = edit(i - 1, &fields[col]) {
            fields[col] = v;
        }
        out.push(fields.join(","));
    }
    fs::write(path, out.join("\n") + "\n").unwrap();
}

#[test]
fn run_then_verify_round_trips() {
    let dir = TempDir::new().unwrap();
    for name in ["desk_a_sbp.json", "desk_b_smpec.json", "desk_b_penalty.json", "lasso_sbp.json"] {
        let out = dir.path().join(format!("{name}.csv"));
        let o = run(&["run", s(&problem(name)), s(&out), "--max-iter", "100"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("kind="));
        let v = run(&["verify", s(&out), s(&problem(name))]);
        assert_eq!(v.status.code(), Some(0), "{name}: {}", stderr(&v));
    }
}

#[test]
fn runs_are_deterministic_and_seed_is_inert() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let p = problem("lasso_sbp.json");
    assert!(run(&["run", s(&p), s(&a), "--seed", "1", "--quiet"]).status.success());
    let o = run(&["run", s(&p), s(&b), "--seed", "99", "--quiet"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn stopping_rule_and_reference_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.csv");
    let refs = write_json(&dir, "ref.json", "[[1, 0], [0, 0]]");
    let o = run(&["run", s(&problem("desk_a_sbp.json")), s(&out), "--eps0", "0.1", "--ref-file", s(&refs)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("stop=criterion"), "{stdout}");
    let rows = fs::read_to_string(&out).unwrap().lines().count() - 1;
    assert!(rows < 5001);
    let bad = write_json(&dir, "bad.json", "[[1, 0, 0]]");
    let o = run(&["run", s(&problem("desk_a_sbp.json")), s(&out), "--ref-file", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("reference"));
}

#[test]
fn parse_errors_exit_2_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.csv");
    let text = fs::read_to_string(problem("desk_a_sbp.json")).unwrap();
    let no_kind = write_json(&dir, "nokind.json", &text.replace("\"kind\": \"sbp\",", ""));
    let o = run(&["run", s(&no_kind), s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind"), "{}", stderr(&o));

    let skew = write_json(
        &dir,
        "skew.json",
        r#"{"kind": "smpec", "dim": 2, "f": {"type": "affine", "a": [1, 0]},
            "operator": {"type": "affine", "m": [[0, 1], [-1, 0]], "q": [0, 0]},
            "set": {"type": "box", "lo": [0, 0], "hi": [1, 1]}, "x0": [0, 0]}"#,
    );
    let o = run(&["run", s(&skew), s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("operator not monotone plus"), "{}", stderr(&o));

    let o = run(&["run", s(&dir.path().join("missing.json")), s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn solver_failure_exits_3_with_partial_trace() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.csv");
    let p = write_json(
        &dir,
        "stiff.json",
        r#"{"kind": "smpec", "dim": 2, "f": {"type": "affine", "a": [1, 0]},
            "operator": {"type": "affine", "m": [[1, 1000], [-1000, 1]], "q": [0, 0]},
            "set": {"type": "box", "lo": [0, 0], "hi": [1, 1]}, "x0": [1, 1]}"#,
    );
    let o = run(&["run", s(&p), s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("step size infeasible"));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn tampered_certificate_exits_4() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.csv");
    let p = problem("lasso_sbp.json");
    assert!(run(&["run", s(&p), s(&out), "--quiet"]).status.success());

    let text = fs::read_to_string(&out).unwrap();
    let (row, eta1) = text
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(7)?.parse::<f64>().ok())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!(eta1 > 1e-6, "largest eta1 {eta1}");
    let tampered = dir.path().join("eta.csv");
    fs::copy(&out, &tampered).unwrap();
    edit_trace(&tampered, 7, |i, _| (i == row).then(|| "0.0".to_string()));
    let o = run(&["verify", s(&tampered), s(&p)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains(&format!("row {row}")), "{}", stderr(&o));

    let moved = dir.path().join("x.csv");
    fs::copy(&out, &moved).unwrap();
    edit_trace(&moved, 12, |i, x| {
        (i == 5).then(|| {
            let mut c: Vec<f64> = x.split(';').map(|v| v.parse().unwrap()).collect();
            c[0] -= 1e-3;
            c.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(";")
        })
    });
    assert_eq!(run(&["verify", s(&moved), s(&p)]).status.code(), Some(4));

    let negative = dir.path().join("neg.csv");
    fs::copy(&out, &negative).unwrap();
    edit_trace(&negative, 8, |i, _| (i == 0).then(|| "-1.0".to_string()));
    assert_eq!(run(&["verify", s(&negative), s(&p)]).status.code(), Some(4));
}

#[test]
fn verify_rejects_a_trace_of_the_wrong_dimension() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.csv");
    assert!(run(&["run", s(&problem("desk_a_sbp.json")), s(&out), "--max-iter", "5", "--quiet"]).status.success());
    let p3 = write_json(
        &dir,
        "three.json",
        r#"{"kind": "sbp", "dim": 3, "f": {"type": "affine", "a": [1, 0, 0]},
            "g": {"type": "affine", "a": [0, 0, 0]},
            "set": {"type": "box", "lo": [-2, -2, -2], "hi": [2, 2, 2]}, "x0": [0, 0, 0]}"#,
    );
    let o = run(&["verify", s(&out), s(&p3)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension"));
    let junk = write_json(&dir, "junk.csv", "not,a,trace\n");
    assert_eq!(run(&["verify", s(&junk), s(&problem("desk_a_sbp.json"))]).status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(run(&["run"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
