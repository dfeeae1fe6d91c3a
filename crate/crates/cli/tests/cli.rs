use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(rel: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "core", "fixtures", rel]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_largegame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_run(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let code = out.status.code().expect("exit code");
    let v = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    });
    (code, v)
}

fn f(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

fn verdicts(v: &Value) -> Vec<(String, String)> {
    v["result"]["checks"]
        .as_array()
        .expect("checks")
        .iter()
        .map(|c| {
            (
                c["check"].as_str().unwrap().to_string(),
                c["verdict"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn verdict_of(v: &Value, check: &str) -> String {
    verdicts(v)
        .into_iter()
        .find(|(c, _)| c == check)
        .map(|(_, v)| v)
        .unwrap_or_else(|| panic!("no {check} in {v}"))
}

#[test]
fn wardrop_three_path_reports_the_tie() {
    let (code, v) = json_run(&["wardrop", &fixture("networks/three_path.json")]);
    assert_eq!(code, 0);
    let r = &v["result"];
    assert!((f(&r["flow"][2]) - 1.0 / 6.0).abs() <= 1e-4);
    let tied: Vec<&str> = r["tied"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap())
        .collect();
    assert!(tied.contains(&"a") && tied.contains(&"b"));
    assert_eq!(v["tool"], "largegame");
    assert_eq!(v["config"]["command"], "wardrop");
    assert!(v["version"].is_string());
}

#[test]
fn wardrop_classical_networks() {
    let (_, v) = json_run(&["wardrop", &fixture("networks/pigou.json")]);
    assert!((f(&v["result"]["flow"][0]) - 1.0).abs() < 1e-6);
    assert!((f(&v["result"]["social_cost"]) - 1.0).abs() < 1e-6);
    let (_, v) = json_run(&["wardrop", &fixture("networks/braess.json")]);
    let r = &v["result"];
    let paths = r["paths"].as_array().unwrap();
    let cross = paths.iter().position(|p| p == "e1-e5-e4").unwrap();
    assert!((f(&r["flow"][cross]) - 1.0).abs() < 1e-6);
    assert!((f(&r["social_cost"]) - 2.0).abs() < 1e-6);
}

#[test]
fn price_of_anarchy() {
    let (code, v) = json_run(&["poa", &fixture("networks/pigou.json")]);
    assert_eq!(code, 0);
    assert!((f(&v["result"]["price_of_anarchy"]) - 4.0 / 3.0).abs() < 1e-3);
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.json");
    fs::write(
        &flat,
        r#"{"nodes":["o","t"],"origin":"o","destination":"t",
            "edges":[{"id":"a","from":"o","to":"t","cost":"1"},{"id":"b","from":"o","to":"t","cost":"2"}]}"#,
    )
    .unwrap();
    let (_, v) = json_run(&["poa", flat.to_str().unwrap()]);
    assert!((f(&v["result"]["price_of_anarchy"]) - 1.0).abs() < 1e-9);
}

#[test]
fn rpe_on_networks() {
    let (code, v) = json_run(&["rpe", &fixture("networks/three_path.json")]);
    assert_eq!(code, 0, "{v}");
    let lim: Vec<f64> = v["result"]["limit"]
        .as_array()
        .unwrap()
        .iter()
        .map(f)
        .collect();
    for (a, b) in lim.iter().zip([5.0 / 6.0, 0.0, 1.0 / 6.0]) {
        assert!((a - b).abs() <= 1e-3, "{lim:?}");
    }
    assert!(verdicts(&v).iter().all(|(_, x)| x == "pass"));
    let (code, v) = json_run(&["rpe", &fixture("networks/modified_pigou.json")]);
    assert_eq!(code, 0);
    assert!((f(&v["result"]["limit"][0]) - 1.0).abs() <= 1e-3);
}

#[test]
fn rpe_on_the_counterexample_cites_the_failing_condition() {
    let (code, v) = json_run(&[
        "rpe",
        &fixture("games/abc_counterexample.json"),
        "--schedule",
        "1..40",
    ]);
    let r = &v["result"];
    assert!(code == 3 || r["on_boundary"] == true, "{v}");
    let cond = r["limit_conditions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["target"] == "f")
        .expect("f is tested");
    assert!(!cond["failing"].as_array().unwrap().is_empty());
}

#[test]
fn check_attack_game() {
    let (code, v) = json_run(&[
        "check",
        &fixture("games/attack.json"),
        "--profile",
        "half-half-zero",
        "--all",
    ]);
    assert_eq!(code, 2);
    assert_eq!(verdict_of(&v, "nash"), "pass");
    assert_eq!(verdict_of(&v, "admissible"), "pass");
    assert_eq!(verdict_of(&v, "perturbation_certificate_search"), "fail");
}

#[test]
fn check_inadmissible_three_path_flow() {
    let (code, v) = json_run(&[
        "check",
        &fixture("games/three_path.json"),
        "--profile",
        "2/3,1/6,1/6",
        "--admissible",
    ]);
    assert_eq!(code, 2);
    assert_eq!(
        verdicts(&v),
        vec![("admissible".to_string(), "fail".to_string())]
    );
}

#[test]
fn check_counterexample_profile() {
    let (code, v) = json_run(&[
        "check",
        &fixture("games/abc_counterexample.json"),
        "--profile",
        "f",
        "--all",
    ]);
    assert_eq!(code, 2);
    assert_eq!(verdict_of(&v, "nash"), "pass");
    assert_eq!(verdict_of(&v, "admissible"), "pass");
    assert_eq!(verdict_of(&v, "eps_rpe"), "fail");
    let eps_rpe = v["result"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["check"] == "eps_rpe")
        .unwrap();
    assert_eq!(
        eps_rpe["witnesses"].as_array().unwrap().len(),
        4,
        "every tested ε fails"
    );
}

#[test]
fn check_reads_profile_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g0.json");
    fs::write(&p, r#"{"profiles":{"driver":["5/6",0,"1/6"]}}"#).unwrap();
    let (code, v) = json_run(&[
        "check",
        &fixture("games/three_path.json"),
        "--profile",
        p.to_str().unwrap(),
        "--nash",
        "--admissible",
    ]);
    assert_eq!(code, 0, "{v}");
}

#[test]
fn simulate_matches_the_limit_summary() {
    let (code, v) = json_run(&[
        "simulate",
        &fixture("networks/three_path.json"),
        "--n",
        "100000",
        "--seed",
        "7",
        "--trials",
        "0",
    ]);
    assert_eq!(code, 0);
    let s: Vec<f64> = v["result"]["summary"]
        .as_array()
        .unwrap()
        .iter()
        .map(f)
        .collect();
    for (a, b) in s.iter().zip([5.0 / 6.0, 0.0, 1.0 / 6.0]) {
        assert!((a - b).abs() <= 0.01, "{s:?}");
    }
    let (_, v) = json_run(&[
        "simulate",
        &fixture("games/three_path.json"),
        "--profile",
        "b-sixth",
        "--n",
        "1",
        "--trials",
        "0",
    ]);
    let s: Vec<f64> = v["result"]["summary"]
        .as_array()
        .unwrap()
        .iter()
        .map(f)
        .collect();
    assert_eq!(s.iter().filter(|&&x| x == 1.0).count(), 1);
    assert_eq!(s.iter().filter(|&&x| x == 0.0).count(), 2);
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<(Vec<u8>, Vec<u8>)> = ["one", "two"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = out.to_str().unwrap();
            let args = [
                "simulate",
                &fixture("games/three_path.json"),
                "--profile",
                "g0",
                "--n",
                "5000",
                "--seed",
                "11",
                "--trials",
                "3",
                "--out",
                o,
            ];
            assert!(run(&args).status.success());
            let strip = |b: Vec<u8>| {
                // The config line names the output directory; everything else must match.
                let s = String::from_utf8(b).unwrap();
                s.lines()
                    .filter(|l| !l.starts_with("# config"))
                    .collect::<Vec<_>>()
                    .join("\n")
                    .into_bytes()
            };
            (
                strip(fs::read(out.join("realization.csv")).unwrap()),
                strip(fs::read(out.join("elln.csv")).unwrap()),
            )
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    let out = run(&[
        "simulate",
        &fixture("games/three_path.json"),
        "--profile",
        "g0",
        "--n",
        "500",
        "--seed",
        "11",
        "--format",
        "csv",
        "--trials",
        "0",
    ]);
    let again = run(&[
        "simulate",
        &fixture("games/three_path.json"),
        "--profile",
        "g0",
        "--n",
        "500",
        "--seed",
        "11",
        "--format",
        "csv",
        "--trials",
        "0",
    ]);
    assert_eq!(out.stdout, again.stdout);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# largegame "));
    assert!(text.contains("\nplayer_id,type_id,action\n"));
}

#[test]
fn errors_exit_with_one() {
    let out = run(&["wardrop", "/nonexistent/net.json"]);
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"edges\": [\n    oops\n  ]\n}").unwrap();
    let out = run(&["wardrop", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let out = run(&["rpe", &fixture("networks/pigou.json"), "--schedule", "5..2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["poa", &fixture("games/attack.json")]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&[
        "check",
        &fixture("games/three_path.json"),
        "--profile",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
