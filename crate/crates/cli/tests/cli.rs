//! End-to-end runs of the `imvote` binary: exit codes, determinism, report
//! contents and the golden suite.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn imvote(args: &[&str]) -> Output {
    imvote_env(args, &[])
}

fn imvote_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_imvote"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", stderr(out)))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Row {
    n: usize,
    f_min: f64,
    fidelity: f64,
    method: String,
    hoeffding: Option<f64>,
}

fn parse_sweep(csv: &str) -> Vec<Row> {
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("N,f_min,fidelity,fidelity_stderr,method,hoeffding_bound,contingent_expected_utility")
    );
    lines
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            assert_eq!(c.len(), 7, "{l}");
            Row {
                n: c[0].parse().unwrap(),
                f_min: c[1].parse().unwrap(),
                fidelity: c[2].parse().unwrap(),
                method: c[4].to_string(),
                hoeffding: (!c[5].is_empty()).then(|| c[5].parse().unwrap()),
            }
        })
        .collect()
}

#[test]
fn example4_fixture_loads_with_expected_types() {
    let out = imvote(&[
        "analyze",
        "--instance",
        path_str(&fixture("ex4_setting.json")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&out);
    let inst = &r["instance"];
    assert_eq!(
        (
            inst["friendly"].as_u64(),
            inst["unfriendly"].as_u64(),
            inst["contingent"].as_u64()
        ),
        (Some(4), Some(6), Some(10))
    );
    assert_eq!(inst["win_threshold"], 12);
}

#[test]
fn example9_fixture_loads_with_expected_majority() {
    let out = imvote(&[
        "analyze",
        "--instance",
        path_str(&fixture("ex9_nonbinary.json")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&out);
    assert_eq!(
        r["instance"]["informed_majority"],
        serde_json::json!(["R", "R", "A"])
    );
    assert_eq!(r["instance"]["setting"], "nonbinary");
}

#[test]
fn unnormalized_fractions_are_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("ex4_setting.json")).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        text.replace("\"fraction\": 0.5", "\"fraction\": 0.45"),
    )
    .unwrap();
    let out = imvote(&["analyze", "--instance", path_str(&bad)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("parse error"), "{}", stderr(&out));
}

#[test]
fn exit_codes_for_bad_input() {
    // Unknown flag and missing instance file.
    assert_eq!(code(&imvote(&["analyze", "--bogus"])), 1);
    assert_eq!(
        code(&imvote(&["analyze", "--instance", "/no/such.json"])),
        1
    );
    // Malformed JSON.
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ \"setting\": ").unwrap();
    let out = imvote(&["analyze", "--instance", path_str(&broken)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
    // Explicit profile without a strategy.
    let ex4 = fixture("ex4_setting.json");
    assert_eq!(
        code(&imvote(&[
            "analyze",
            "--instance",
            path_str(&ex4),
            "--profile",
            "explicit"
        ])),
        1
    );
    // Help is not an error.
    assert_eq!(code(&imvote(&["--help"])), 0);
}

#[test]
fn empty_ns_is_a_usage_error() {
    let case1 = fixture("ex5_case1.json");
    let out = imvote(&["sweep", "--instance", path_str(&case1), "--ns", ""]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("usage"), "{}", stderr(&out));
    let out = imvote(&["sweep", "--instance", path_str(&case1)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn oversized_boost_is_rejected() {
    let out = imvote(&[
        "construct",
        "--instance",
        path_str(&fixture("ex5_case2.json")),
        "--delta-l",
        "0.3",
        "--boost",
        "0.5",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("boost"), "{}", stderr(&out));
}

#[test]
fn sweep_case1_fidelity_trends_to_one_within_hoeffding() {
    let out = imvote(&[
        "sweep",
        "--instance",
        path_str(&fixture("ex5_case1.json")),
        "--ns",
        "20..500:10",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = parse_sweep(&stdout(&out));
    assert_eq!(rows.len(), 49);
    assert_eq!(
        rows.iter().map(|r| r.n).collect::<Vec<_>>(),
        (20..=500).step_by(10).collect::<Vec<_>>()
    );
    for r in &rows {
        assert_eq!(r.method, "exact");
        assert!(r.f_min > 0.0);
        let bound = r.hoeffding.expect("positive excess has a bound");
        assert!(bound <= r.fidelity && r.fidelity <= 1.0, "N={}", r.n);
    }
    assert!(rows.windows(2).all(|w| w[1].fidelity >= w[0].fidelity));
    assert!(rows.last().unwrap().fidelity >= 0.99);
}

#[test]
fn sweep_case2_informative_stays_away_from_one() {
    let out = imvote(&[
        "sweep",
        "--instance",
        path_str(&fixture("ex5_case2.json")),
        "--ns",
        "20..500:10",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for r in parse_sweep(&stdout(&out)).iter().filter(|r| r.n >= 100) {
        assert!(r.fidelity <= 0.95, "N={} fidelity {}", r.n, r.fidelity);
        assert!(r.hoeffding.is_none());
    }
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let case2 = fixture("ex5_case2.json");
    let args = [
        "sweep",
        "--instance",
        path_str(&case2),
        "--ns",
        "50,100,7000",
        "--samples",
        "5000",
        "--seed",
        "11",
    ];
    let one = imvote_env(&args, &[("IM_THREADS", "1")]);
    let four = imvote_env(&args, &[("IM_THREADS", "4")]);
    let again = imvote_env(&args, &[("IM_THREADS", "4")]);
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(four.stdout, again.stdout);
    let rows = parse_sweep(&stdout(&one));
    assert_eq!(rows[2].method, "monte_carlo");
    // A different seed changes only the sampled row.
    let mut other = args;
    other[8] = "12";
    let reseeded = parse_sweep(&stdout(&imvote(&other)));
    assert_eq!(reseeded[0].fidelity, rows[0].fidelity);
    assert_ne!(reseeded[2].fidelity, rows[2].fidelity);

    let json_args = ["construct", "--instance", path_str(&case2)];
    assert_eq!(imvote(&json_args).stdout, imvote(&json_args).stdout);
}

#[test]
fn bad_thread_cap_is_a_usage_error() {
    let out = imvote_env(
        &["verify-paper", "--only", "example-4"],
        &[("IM_THREADS", "zero")],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("sweep.csv");
    let out = imvote(&[
        "sweep",
        "--instance",
        path_str(&fixture("ex5_case1.json")),
        "--ns",
        "20,30",
        "--out",
        path_str(&target),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    assert_eq!(
        parse_sweep(&std::fs::read_to_string(&target).unwrap()).len(),
        2
    );
}

#[test]
fn config_file_drives_a_refutation() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("case2.json");
    std::fs::copy(fixture("ex5_case2.json"), &inst).unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "command = \"refute\"\ninstance = \"case2.json\"\nepsilon = 0.4\n[search]\nsingle_agent = false\n",
    )
    .unwrap();
    let out = imvote(&["--config", path_str(&cfg)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&out);
    assert_eq!(r["epsilon"], 0.4);
    assert_eq!(r["refutation"]["outcome"], "refuted");
    assert_eq!(r["refutation"]["source"], "constructed");
    let contingent = r["instance"]["contingent"].as_u64().unwrap() as usize;
    assert_eq!(
        r["refutation"]["coalition"].as_array().unwrap().len(),
        contingent
    );
}

#[test]
fn auto_epsilon_leaves_case1_unrefuted() {
    let out = imvote(&[
        "refute",
        "--instance",
        path_str(&fixture("ex5_case1.json")),
        "--epsilon",
        "auto",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&out);
    assert_eq!(r["epsilon_from_fidelity"], true);
    assert_eq!(r["refutation"]["outcome"], "not_refuted");
}

#[test]
fn construct_reports_hand_picked_adjustments() {
    let out = imvote(&[
        "construct",
        "--instance",
        path_str(&fixture("ex5_case2.json")),
        "--delta-l",
        "0.3",
        "--boost",
        "0.06",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let t = &json(&out)["trace"];
    let prime: Vec<f64> = serde_json::from_value(t["sigma_prime"].clone()).unwrap();
    assert!((prime[0] - 0.5).abs() < 1e-12 && (prime[1] - 0.96).abs() < 1e-12);
    assert!((t["vote_shift"][0].as_f64().unwrap() + 0.208).abs() < 1e-12);
}

#[test]
fn excess_classifies_a_sequence() {
    let out = imvote(&[
        "excess",
        "--instance",
        path_str(&fixture("ex5_case2.json")),
        "--ns",
        "100..500:100",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = json(&out);
    assert_eq!(r["sequence"]["case"], "FailsNegative");
    assert_eq!(r["symmetric"]["verdict"], "NotHighFidelity");
    let out = imvote(&[
        "excess",
        "--instance",
        path_str(&fixture("ex5_case2.json")),
        "--ns",
        "100..500:100",
        "--profile",
        "constructed",
    ]);
    assert_eq!(json(&out)["symmetric"]["verdict"], "HighFidelity");
}

#[test]
fn verify_paper_passes_on_builtin_goldens() {
    let out = imvote(&["verify-paper"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let r = json(&out);
    assert_eq!(r["failed"], 0);
    assert!(r["total"].as_u64().unwrap() > 30);
}

#[test]
fn only_appendix_c_runs_exactly_nine_checks() {
    let out = imvote(&["verify-paper", "--only", "appendix-c"]);
    assert_eq!(code(&out), 0);
    let r = json(&out);
    assert_eq!(r["total"], 9);
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["tag"] == "appendix-c"));
    assert_eq!(code(&imvote(&["verify-paper", "--only", "nonsense"])), 1);
}

#[test]
fn perturbed_golden_fails_only_that_check() {
    let goldens: Value = serde_json::from_str(include_str!("../goldens/paper.json")).unwrap();
    let mut perturbed = goldens.clone();
    let target = "appendix-c/sigma-2/contingent";
    for c in perturbed["checks"].as_array_mut().unwrap() {
        if c["id"] == target {
            c["expected"] = Value::from(c["expected"].as_f64().unwrap() + 1e-3);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("goldens.json");
    std::fs::write(&path, serde_json::to_string(&perturbed).unwrap()).unwrap();
    let out = imvote(&["verify-paper", "--goldens", path_str(&path)]);
    assert_eq!(code(&out), 2);
    let r = json(&out);
    let failed: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert_eq!(failed, vec![target]);
}
