use std::process::{Command, Output};

use serde_json::Value;
use smero_core::frobenius::Certificate;
use smero_core::potential::PotentialSpec;
use smero_core::transfer::{Gap, TransferMatrix};

fn smero(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smero"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn smero_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smero"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn json_stdout(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn json_stderr(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("json on stderr")
}

const FREE_PI: &str = r#"{"family":"free","period":3.141592653589793}"#;

#[test]
fn analyze_inverse_square() {
    let v = json_stdout(&smero(&["analyze", "-p", r#"{"family":"inverse_square","n":1}"#, "--interval=-1,1"]));
    assert_eq!(v["verdict"], Value::Bool(true));
    let cert: Certificate = serde_json::from_value(v["poles"][0]["certificate"].clone()).unwrap();
    assert!(cert.verdict);
    assert_eq!(cert.n, 1);
}

#[test]
fn analyze_flags_linear_background() {
    let p = r#"{"family":"inverse_square","n":1,"background":{"poly":[0,1]}}"#;
    let v = json_stdout(&smero(&["analyze", "-p", p, "--interval=-1,1"]));
    assert_eq!(v["verdict"], Value::Bool(false));
}

#[test]
fn discriminant_csv_matches_free_oracle() {
    let o = smero(&["discriminant", "-p", FREE_PI, "--lambda-max", "100", "--step", "0.5"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda_re,lambda_im,delta_re,delta_im"));
    let mut n = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let oracle = 2.0 * (std::f64::consts::PI * f[0].sqrt()).cos();
        assert!((f[2] - oracle).abs() < 1e-8 && f[3].abs() < 1e-8, "{line}");
        n += 1;
    }
    assert_eq!(n, 201);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let args = [
        "discriminant",
        "-p",
        r#"{"family":"csc_squared","m":1}"#,
        "--lambda-max",
        "20",
        "--step",
        "0.25",
    ];
    let one = smero_threads(&args, "1");
    let many = smero_threads(&args, "4");
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    assert_eq!(one.stdout, smero_threads(&args, "4").stdout);
}

#[test]
fn transfer_round_trips() {
    let v = json_stdout(&smero(&[
        "transfer",
        "-p",
        r#"{"family":"inverse_square","n":1}"#,
        "--lambda",
        "1",
        "--x0=-1",
        "--x1",
        "1",
        "--sides",
        "lower",
    ]));
    let m: TransferMatrix = serde_json::from_value(v.clone()).unwrap();
    assert!((m.det() - 1.0).norm() < 1e-10);
    assert!((v["det"][0].as_f64().unwrap() - m.det().re).abs() < 1e-14);
}

#[test]
fn gaps_of_unperturbed_csc_are_closed() {
    let v = json_stdout(&smero(&["gaps", "-p", r#"{"family":"csc_squared","m":1}"#, "--lambda-max", "30"]));
    let gaps: Vec<Gap> = serde_json::from_value(v["gaps"].clone()).unwrap();
    assert!(!gaps.is_empty());
    assert!(gaps.iter().all(|g| g.length < 1e-6));
}

#[test]
fn inner_product_and_residue_gate() {
    let inv = r#"{"kind":"monomial","at":0,"exponent":-1}"#;
    let v = json_stdout(&smero(&["inner-product", "--f", inv, "--g", inv, "--interval=-1,1", "--sides", "lower"]));
    assert!((v["value"][0].as_f64().unwrap() + 2.0).abs() < 1e-8);

    let one = r#"{"kind":"monomial","at":0,"exponent":0}"#;
    let o = smero(&["inner-product", "--f", inv, "--g", one, "--interval=-1,1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json_stderr(&o)["error"], "computation");
}

#[test]
fn gram_of_windowed_basis() {
    for (n, expect) in [(1, 1), (2, 1), (3, 2)] {
        let family = format!(r#"[{{"kind":"basis","at":0,"n":{n},"window":{{"plateau":[-1,1,0.25]}}}}]"#);
        let v = json_stdout(&smero(&["gram", "--family", &family, "--interval=-1,1"]));
        assert_eq!(v["n_minus"], expect);
    }
}

#[test]
fn gram_with_solution_needs_potential() {
    let family = r#"[{"kind":"solution","lambda":1,"anchor":-1,"init":[1,0]}]"#;
    let o = smero(&["gram", "--family", family, "--interval=-1,1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn frobenius_coefficients() {
    let v = json_stdout(&smero(&[
        "frobenius",
        "-p",
        r#"{"family":"inverse_square","n":1}"#,
        "--at",
        "0",
        "--lambda",
        "1",
        "--order",
        "10",
    ]));
    let coeffs = v["series"]["coeffs"].as_array().unwrap();
    let a1 = coeffs.iter().find(|c| c[0] == 1).unwrap();
    assert!((a1[1].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(v["obstruction"][0].as_f64().unwrap(), 0.0);
}

#[test]
fn family_descriptors_round_trip() {
    for args in [
        vec!["family", "free", "--period", "2"],
        vec!["family", "inverse_square", "--n", "3"],
        vec!["family", "csc_squared", "--m", "2", "--a", "0.5"],
        vec!["family", "adler_moser", "--tau", "1.5"],
        vec!["family", "rational_poles", "--poles=-1,2"],
    ] {
        let v = json_stdout(&smero(&args));
        let spec: PotentialSpec = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(serde_json::to_value(&spec).unwrap(), v);
        let text = v.to_string();
        assert!(smero(&["analyze", "-p", &text]).status.success(), "{text}");
    }
}

#[test]
fn input_errors_exit_two() {
    for args in [
        vec!["analyze", "-p", r#"{"family":"free","bogus":1}"#],
        vec!["analyze", "-p", "/nonexistent/potential.json"],
        vec!["transfer", "-p", FREE_PI, "--x0", "0"],
        vec!["gaps", "-p", r#"{"family":"inverse_square","n":1}"#],
        vec!["no-such-command"],
    ] {
        let o = smero(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(json_stderr(&o)["error"], "input");
    }
}

#[test]
fn potential_from_file() {
    let dir = std::env::temp_dir().join(format!("smero-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("u.json");
    std::fs::write(&path, r#"{"family":"csc_squared","m":1}"#).unwrap();
    let out = dir.join("a.json");
    let o = smero(&["analyze", "-p", path.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["verdict"], Value::Bool(true));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn verify_subset() {
    let v = json_stdout(&smero(&["verify", "--check", "3", "--check", "6", "--json"]));
    assert_eq!(v["passed"], Value::Bool(true));
    assert_eq!(v["checks"].as_array().unwrap().len(), 2);
    let o = smero(&["verify", "--check", "11"]);
    assert_eq!(o.status.code(), Some(2));
}
