use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn netfn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netfn"))
        .args(args)
        .output()
        .expect("spawn netfn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = netfn(args);
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    stdout(&o)
}

fn golden(args: &[&str], file: &str) {
    let expected = std::fs::read_to_string(data(file)).unwrap();
    assert_eq!(ok(args), expected, "golden {file}");
}

#[test]
fn validate_reports_counts() {
    let out = ok(&["net", "validate", "--net", &data("two_source.net")]);
    assert!(out.contains("8 vertices, 12 edges, 2 sources, min source cut 3"), "{out}");
}

#[test]
fn mincut_from_one_source() {
    let net = data("two_source.net");
    assert_eq!(ok(&["net", "mincut", "--net", &net, "--from", "s1"]).trim(), "3");
    assert_eq!(ok(&["net", "mincut", "--net", &net, "--from", "s1,s2"]).trim(), "3");
    assert_eq!(ok(&["net", "mincut", "--net", &net, "--from", "w", "--to", "x"]).trim(), "1");
}

#[test]
fn distance_of_example_codes() {
    let net = data("two_source.net");
    for code in ["two_source.code", "two_source_gf4.code"] {
        let out = ok(&["code", "distance", "--net", &net, "--code", &data(code), "--target", "sum", "--k", "1"]);
        assert_eq!(out.trim(), "3", "{code}");
    }
}

#[test]
fn distance_golden() {
    golden(
        &[
            "--json",
            "code",
            "distance",
            "--net",
            &data("two_source.net"),
            "--code",
            &data("two_source.code"),
            "--target",
            "sum",
        ],
        "distance_sum.json",
    );
}

#[test]
fn decode_golden() {
    golden(
        &[
            "--json",
            "decode",
            "--net",
            &data("two_source.net"),
            "--code",
            &data("two_source.code"),
            "--target",
            "sum",
            "--word",
            "0,3,0",
            "--tau",
            "1",
        ],
        "decode_030.json",
    );
}

#[test]
fn bounds_golden() {
    golden(
        &["--json", "net", "bounds", "--net", &data("two_source.net"), "--target", "sum", "--tau", "1"],
        "bounds_sum_tau1.json",
    );
}

#[test]
fn plan_golden() {
    golden(
        &["--json", "grad", "plan", "--r", "1,1,1", "--s", "1,1,2", "--tau-s", "1", "--m", "1"],
        "plan_111_112.json",
    );
    let human = ok(&["grad", "plan", "--r", "1,1,1", "--s", "1,1,2", "--tau-s", "1", "--m", "1"]);
    assert!(human.contains("μ = 1/2,1/2,1"), "{human}");
}

#[test]
fn robust_agrees_with_exhaustion() {
    let out = ok(&[
        "--json",
        "code",
        "robust",
        "--net",
        &data("two_source.net"),
        "--code",
        &data("two_source.code"),
        "--target",
        "sum",
        "--tau",
        "1",
        "--exhaustive",
        "100000",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["robust"], true);
    assert_eq!(v["exhaustive"], true);
}

#[test]
fn simulate_single_error_is_corrected() {
    let net = data("two_source.net");
    let code = data("two_source.code");
    for e in ["s1a", "s2w", "wx", "xc", "e1", "e2", "e3"] {
        let errors = format!("{e}=3");
        let out = ok(&[
            "--json", "code", "simulate", "--net", &net, "--code", &code, "--target", "sum", "--x", "2,4", "--errors",
            &errors, "--tau", "1",
        ]);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["correct"], true, "{e}: {out}");
        assert_eq!(v["expected"], serde_json::json!([1]));
    }
}

#[test]
fn construct_sum_then_measure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sum.code");
    let p = path.to_str().unwrap();
    let net = data("two_source.net");
    ok(&["code", "construct-sum", "--net", &net, "--k", "1", "--field", "7", "--seed", "11", "--out", p]);
    let d = ok(&["code", "distance", "--net", &net, "--code", p, "--target", "sum"]);
    assert_eq!(d.trim(), "3");
}

#[test]
fn construct_identity_then_measure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.code");
    let p = path.to_str().unwrap();
    let net = data("two_source.net");
    let summary = ok(&["--json", "code", "construct-identity", "--net", &net, "--k", "1", "--seed", "2", "--out", p]);
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let delta = v["delta"].as_u64().unwrap();
    let d = ok(&["code", "distance", "--net", &net, "--code", p, "--target", "identity"]);
    assert_eq!(d.trim().parse::<u64>().unwrap(), delta + 1);
}

#[test]
fn grad_build_and_simulate_with_byzantine_worker() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scheme.json");
    let p = path.to_str().unwrap();
    ok(&[
        "grad", "build", "--cyclic", "5,3", "--tau-b", "1", "--m", "1", "--p", "3", "--field", "13", "--seed", "4",
        "--out", p,
    ]);
    for w in 0..5 {
        let out = ok(&["--json", "grad", "simulate", "--scheme", p, "--byzantine", &w.to_string(), "--seed", "9"]);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["success"], true, "worker {w}: {out}");
        assert!(v.get("timings").is_none_or(|t| t.is_null()));
    }
}

#[test]
fn insufficient_replication_is_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    let o = netfn(&[
        "grad", "build", "--cyclic", "4,2", "--tau-b", "1", "--p", "2", "--field", "11", "--seed", "1", "--out",
        p.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[gradient]:"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    let net = data("two_source.net");
    let code = data("two_source.code");
    // Unknown flag: clap usage error.
    assert_eq!(netfn(&["net", "validate", "--bogus"]).status.code(), Some(2));
    // Malformed target: usage error from the CLI itself.
    let o = netfn(&["code", "distance", "--net", &net, "--code", &code, "--target", "1,x;2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"));
    // Wrong word length.
    let o = netfn(&["decode", "--net", &net, "--code", &code, "--target", "sum", "--word", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
    // Missing file: domain error.
    let o = netfn(&["net", "validate", "--net", "/nonexistent/net.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[io]:"));
    // Unknown vertex.
    let o = netfn(&["net", "mincut", "--net", &net, "--from", "zz"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[network]:"), "{}", stderr(&o));
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let net = data("two_source.net");
    let mut outs = Vec::new();
    let mut files = Vec::new();
    for run in 0..2 {
        let p = dir.path().join(format!("c{run}.code"));
        outs.push(ok(&[
            "--json", "code", "construct-identity", "--net", &net, "--k", "1", "--seed", "42", "--out",
            p.to_str().unwrap(),
        ]));
        files.push(std::fs::read(&p).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(files[0], files[1]);

    let scheme = dir.path().join("g.json");
    let s = scheme.to_str().unwrap();
    ok(&["grad", "build", "--cyclic", "4,3", "--tau-b", "1", "--p", "2", "--field", "11", "--seed", "3", "--out", s]);
    let a = ok(&["--json", "grad", "simulate", "--scheme", s, "--byzantine", "1", "--seed", "5"]);
    let b = ok(&["--json", "grad", "simulate", "--scheme", s, "--byzantine", "1", "--seed", "5"]);
    assert_eq!(a, b);
}
