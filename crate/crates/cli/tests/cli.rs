use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmrelay(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mmrelay"));
    cmd.args(args).env_remove("MMRELAY_SEED");
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(&path, r#"{"M": 32, "K": 4, "tau_sr": 0.3, "tau_rd": 0.3, "trials": 3, "seed": 5}"#).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn sweep_writes_csv_svg_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    let o = mmrelay(&["sweep", "--config", &cfg, "--grid", "0,20", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("p_dbm,sumrate_mc_af,stderr_af,sumrate_de_af,sumrate_mc_df,stderr_df,sumrate_de_df")
    );
    assert_eq!(lines.count(), 2);
    let svg = fs::read_to_string(out.join("small.svg")).unwrap();
    assert!(svg.contains("transmit power (dBm)") && svg.contains("sum rate (bit/s/Hz)"));
    assert!(out.join("small.meta.json").exists());
}

#[test]
fn csv_is_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = mmrelay(
            &["sweep", "--config", &cfg, "--grid=-10,30,60", "--format", "csv", "--out", out.to_str().unwrap()],
            Some(threads),
        );
        assert!(o.status.success());
        outputs.push(fs::read(out.join("small.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let read = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = mmrelay(
            &["sweep", "--config", &cfg, "--grid", "30", "--seed", seed, "--format", "csv", "--out", out.to_str().unwrap()],
            None,
        );
        assert!(o.status.success());
        fs::read_to_string(out.join("small.csv")).unwrap()
    };
    assert_ne!(read("1", "a"), read("2", "b"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mmrelay(&["sweep", "--preset", "fig9z"], None).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"M": 2, "K": 4}"#).unwrap();
    let o = mmrelay(&["sweep", "--config", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("M ≥ K violated"));
    assert_eq!(mmrelay(&["quadform", "--preset", "fig2a"], None).status.code(), Some(2));
    assert_eq!(mmrelay(&["verify", "--only", "lemma9"], None).status.code(), Some(2));
    assert_eq!(mmrelay(&["verify", "--ladder", "128,64"], None).status.code(), Some(2));
}

#[test]
fn verify_only_filters() {
    let o = mmrelay(&["verify", "--only", "lemma1"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[PASS] lemma1"));
    assert_eq!(text.matches("[PASS]").count() + text.matches("[FAIL]").count(), 1);
}

#[test]
fn decorrelated_csit_is_a_named_verification_failure() {
    let o = mmrelay(&["verify", "--only", "prop1", "--tau-sq", "1", "--draws", "20"], None);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL] prop1"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("prop1"));
}

#[test]
fn default_verification_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmrelay(&["verify", "--out", dir.path().to_str().unwrap()], None);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    let csv = fs::read_to_string(dir.path().join("verify_lemma3.csv")).unwrap();
    assert!(csv.starts_with("name,m,samples,median,max,exponent\n"));
}

#[test]
fn quadform_preset_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mmrelay(&["quadform", "--preset", "fig7b", "--grid", "10,40", "--trials", "2", "--out", out], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("fig7b_quadform.csv")).unwrap();
    assert!(csv.starts_with("p_dbm,quadform_mc,stderr_mc,quadform_de_iterative,quadform_closed_form\n"));
    assert!(dir.path().join("fig7b_quadform.svg").exists());
}
