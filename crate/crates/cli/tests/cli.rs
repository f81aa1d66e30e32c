use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn qregret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qregret")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn regret_of(o: &Output) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("regret: "))
        .expect("regret line")
        .to_string()
}

const SMOKE: &[&str] = &["--replications", "1000", "--n-grid", "3", "--w-grid", "6"];

fn smoke(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMOKE);
    args.extend_from_slice(extra);
    qregret(&args)
}

#[test]
fn no_data_rule_in_the_fixed_design() {
    let o = qregret(&["adversary", "const:0.5", "--design", "fixed", "--n0", "0", "--n1", "0", "--alpha", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(regret_of(&o), "1");
    assert!(stdout(&o).contains("certified: yes"));
}

#[test]
fn never_treating_in_the_innovation_design() {
    let o = qregret(&[
        "adversary", "const:0", "--design", "innovation", "--q0", "0.9", "--sample-size", "5", "--alpha", "0.5",
    ]);
    assert!(o.status.success());
    assert_eq!(regret_of(&o), "1/10");
}

#[test]
fn empirical_success_in_the_innovation_design() {
    let o = qregret(&[
        "adversary", "esr", "--design", "innovation", "--q0", "0.5", "--sample-size", "3", "--alpha", "0.5",
    ]);
    assert!(o.status.success());
    assert_eq!(regret_of(&o), "1/2");
}

#[test]
fn exact_certificates_contain_no_decimals() {
    let o = qregret(&["adversary", "const:0.3", "--design", "random", "--sample-size", "2", "--p", "0.25", "--alpha", "0.1", "--exact"]);
    assert!(o.status.success());
    for line in stdout(&o).lines().filter(|l| !l.starts_with("rule:") && !l.starts_with("run:")) {
        assert!(!line.contains('.'), "rounded number in `{line}`");
    }
}

#[test]
fn table_rule_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("rule.txt");
    std::fs::write(&table, "0 -> 0\n1 -> 1/3\n").unwrap();
    let spec = format!("table:{}", table.display());
    let o = qregret(&["adversary", &spec, "--design", "fixed", "--n0", "0", "--n1", "1", "--alpha", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(regret_of(&o), "1");
}

#[test]
fn covariate_adversary_writes_certificate_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert");
    let o = qregret(&[
        "adversary", "const:0.2,0.9", "--covariates", "2", "--fx", "1/4,3/4", "--design", "fixed", "--n0", "1",
        "--n1", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(regret_of(&o), "1");
    let cert = std::fs::read_to_string(out.join("certificate.txt")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(cert.contains(&format!("run: {}", manifest["run_id"].as_str().unwrap())));
}

#[test]
fn smoke_run_is_fast_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = smoke("table1", dir.path(), &[]);
    assert!(start.elapsed() < Duration::from_secs(10));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["per_state.csv", "aggregate.csv", "table1.md", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let md = std::fs::read_to_string(dir.path().join("table1.md")).unwrap();
    assert_eq!(md.matches("### Case").count(), 2);
    assert_eq!(md.matches("| max |").count(), 6);
}

#[test]
fn same_seed_gives_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(smoke("table2", a.path(), &["--mc", "direct", "--threads", "2"]).status.success());
    assert!(smoke("table2", b.path(), &["--mc", "direct", "--threads", "3"]).status.success());
    for f in ["per_state.csv", "comparisons.csv", "table2.md"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn different_seed_changes_the_simulation() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(smoke("table1", a.path(), &["--seed", "1"]).status.success());
    assert!(smoke("table1", b.path(), &["--seed", "2"]).status.success());
    assert_ne!(
        std::fs::read(a.path().join("per_state.csv")).unwrap(),
        std::fs::read(b.path().join("per_state.csv")).unwrap()
    );
}

#[test]
fn manifest_hashes_match_outputs_and_echo_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "alpha = 0.5\nseed = 7\nrules = esr,const:0\n").unwrap();
    let out = dir.path().join("out");
    let o = qregret(&[
        "table1", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap(), "--replications", "500",
        "--n-grid", "2", "--w-grid", "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["alpha"], "0.5");
    assert_eq!(manifest["config"]["seed"], "9");
    assert_eq!(manifest["config"]["q0"], "0.1,0.5,0.9");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["exact"], false);
    for entry in manifest["outputs"].as_array().unwrap() {
        let bytes = std::fs::read(entry["path"].as_str().unwrap()).unwrap();
        use sha2::Digest;
        let digest: String = sha2::Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(entry["sha256"].as_str().unwrap(), digest);
    }
    let run_id = manifest["run_id"].as_str().unwrap();
    let csv = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with(run_id)));
}

#[test]
fn exact_tables_print_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let o = qregret(&[
        "table1", "--exact", "--mc", "exact", "--n-grid", "2", "--w-grid", "3", "--alpha", "1/2", "--q0", "1/3", "--y0-choice",
        "I", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| !l.split(',').skip(2).any(|f| f.contains('.'))), "{csv}");
}

#[test]
fn invalid_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "alpha = 1.5\n").unwrap();
    let out = dir.path().join("out");
    let o = qregret(&["table1", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!out.exists());

    std::fs::write(&cfg, "colour = red\n").unwrap();
    let o = qregret(&["table1", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown setting"));

    let o = smoke("table1", &out, &["--rules", "const:2"]);
    assert!(!o.status.success());
    assert!(!out.exists());
}

#[test]
fn verify_suites_report_passes() {
    for (suite, extra) in [
        ("cardinality", vec![]),
        ("sandwich", vec!["--trials", "1000"]),
        ("oracle", vec!["--max-n", "8"]),
        ("minimax-set", vec![]),
    ] {
        let mut args = vec!["verify", suite];
        args.extend(extra);
        let o = qregret(&args);
        assert!(o.status.success(), "{suite}: {}", stdout(&o));
        for line in stdout(&o).lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["pass"], true, "{line}");
        }
    }
    let o = qregret(&["verify", "cardinality"]);
    assert!(stdout(&o).contains("\"checked\":2"));
}

#[test]
fn unknown_suite_fails() {
    assert!(!qregret(&["verify", "nonsense"]).status.success());
}
