//! End-to-end tests of the command-line interface.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gapalign")
}

fn synth_into(dir: &Path) {
    let out = Command::new(bin())
        .args([
            "synth", "--classes", "3", "--per-class", "20", "--p-intra", "0.7", "--p-inter",
            "0.1", "--noise", "0.3", "--seed", "0",
        ])
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_output_passes_load_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let g = gapalign::load_graph(&data).unwrap();
    assert_eq!(g.n_nodes, 60);
    assert_eq!(g.n_classes, 3);
}

#[test]
fn synth_rejects_bad_probability_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .args(["synth", "--p-intra", "1.2"])
        .arg("--out")
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_refuses_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let out = Command::new(bin())
        .args(["synth"])
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    // and succeeds with --force
    let out = Command::new(bin())
        .args(["synth", "--force"])
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn train_without_monitor_writes_exact_epoch_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let run_dir = tmp.path().join("run");
    let out = Command::new(bin())
        .args(["train", "--no-monitor", "--epochs", "5", "--shots", "2", "--seed", "0"])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves = std::fs::read_to_string(run_dir.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 6); // header + 5 epochs
    assert!(curves.starts_with("epoch,"));
    for name in ["curves.jsonl", "params.json", "run_meta.json", "results.csv", "probe.json"] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["epochs"], 5);
    assert_eq!(meta["config"]["monitor"], false);
    assert_eq!(meta["config"]["theta"], 0.10);
    assert!(meta["config_hash"].as_str().unwrap().len() == 64);
    assert!(meta["dataset_fingerprint"].as_str().unwrap().len() == 64);
}

#[test]
fn train_profile_sets_theta_and_explicit_override_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let run_dir = tmp.path().join("run_social");
    let out = Command::new(bin())
        .args([
            "train",
            "--no-monitor",
            "--epochs",
            "2",
            "--shots",
            "2",
            "--profile",
            "social",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["theta"], 0.12);

    let run_dir2 = tmp.path().join("run_theta");
    let out = Command::new(bin())
        .args([
            "train",
            "--no-monitor",
            "--epochs",
            "2",
            "--shots",
            "2",
            "--profile",
            "social",
            "--theta",
            "0.07",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_dir2)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("overrides"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir2.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["theta"], 0.07);
}

#[test]
fn seed_sweep_emits_result_and_summary_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let sweep = tmp.path().join("sweep");
    let out = Command::new(bin())
        .args([
            "train",
            "--no-monitor",
            "--epochs",
            "3",
            "--shots",
            "1",
            "--seeds",
            "0,1,2,3,4",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&sweep)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(sweep.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 6, "header + 5 result rows:\n{results}");
    let summary = std::fs::read_to_string(sweep.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2, "header + 1 summary row:\n{summary}");
    let row = summary.lines().nth(1).unwrap();
    assert!(row.starts_with("data,fused,1,"));
    assert!(row.ends_with(",5"));
    for seed in 0..5 {
        assert!(sweep.join(format!("seed_{seed}")).join("curves.csv").exists());
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let cfg_path = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"epochs": 4, "lr": 0.001, "tau": 0.5, "no_such_key_is_ignored": true}"#,
    )
    .unwrap();
    let run_dir = tmp.path().join("run");
    let out = Command::new(bin())
        .args(["train", "--no-monitor", "--shots", "2", "--tau", "0.25"])
        .arg("--config")
        .arg(&cfg_path)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["epochs"], 4); // from file
    assert_eq!(meta["config"]["lr"], 0.001); // from file
    assert_eq!(meta["config"]["tau"], 0.25); // flag overrides file
}

#[test]
fn eval_and_probe_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let run_dir = tmp.path().join("run");
    let out = Command::new(bin())
        .args(["train", "--no-monitor", "--epochs", "4", "--shots", "3", "--seed", "1"])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success());

    // re-train the probe explicitly (force: train already wrote one)
    let out = Command::new(bin())
        .args(["probe", "--shots", "3", "--seed", "1", "--iters", "100", "--force"])
        .arg("--data")
        .arg(&data)
        .arg("--run")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = Command::new(bin())
        .args(["eval", "--mode", "both", "--shots", "3", "--seed", "1"])
        .arg("--data")
        .arg(&data)
        .arg("--run")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mode=zero_shot accuracy="));
    assert!(stdout.contains("mode=fused accuracy="));
    assert!(stdout.contains("dataset,mode,seed,shots,accuracy"));
}

#[test]
fn eval_fused_without_probe_reports_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let run_dir = tmp.path().join("run");
    let out = Command::new(bin())
        .args(["train", "--no-monitor", "--epochs", "2", "--seed", "0"])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    // zero-shot train writes no probe.json
    let out = Command::new(bin())
        .args(["eval", "--mode", "fused"])
        .arg("--data")
        .arg(&data)
        .arg("--run")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).contains("probe.json"));
}

#[test]
fn report_summarizes_curves_and_compares_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let run_a = tmp.path().join("a");
    let run_b = tmp.path().join("b");
    for (dir, seed) in [(&run_a, "0"), (&run_b, "1")] {
        let out = Command::new(bin())
            .args(["train", "--no-monitor", "--epochs", "4", "--shots", "2", "--seed", seed])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let out = Command::new(bin())
        .args(["report"])
        .arg("--run")
        .arg(&run_a)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("epochs=4"));
    assert!(stdout.contains("final_val_acc="));
    assert!(stdout.contains("stopped_at=none"));
    let report = std::fs::read_to_string(run_a.join("report.csv")).unwrap();
    assert!(report.starts_with("epoch,sim_overall,sim_pos,sim_neg,gap,loss,val_acc"));
    assert_eq!(report.lines().count(), 5);

    // comparison adds the per-epoch gap difference
    let out = Command::new(bin())
        .args(["report", "--force"])
        .arg("--run")
        .arg(&run_a)
        .arg("--compare")
        .arg(&run_a)
        .arg(&run_b)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(run_a.join("report.csv")).unwrap();
    assert!(report.starts_with("epoch,gap_a,gap_b,gap_diff"));
    assert_eq!(report.lines().count(), 5);
}

#[test]
fn report_announces_monitor_stop_epoch() {
    // a run dir whose curves end in a monitor trigger; report reads only the CSV
    let tmp = tempfile::tempdir().unwrap();
    let header = "epoch,sim_overall,sim_pos,sim_neg,gap,var_mean,loss,val_acc,delta,rho,stopped";
    let rows = [
        "0,0.1,0.3,0.2,0.1,0.01,1.5,0.5,0.02,,0",
        "1,0.1,0.35,0.2,0.15,0.01,1.2,0.6,0.05,0.05,0",
        "2,0.1,0.4,0.2,0.2,0.01,1.0,0.7,0.12,0.05,1",
    ];
    std::fs::write(
        tmp.path().join("curves.csv"),
        format!("{header}\n{}\n", rows.join("\n")),
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["report"])
        .arg("--run")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("stopped_at=2"), "{stdout}");
    assert!(stdout.contains("final_delta=0.12"), "{stdout}");
    assert!(stdout.contains("delta_max=0.12"), "{stdout}");
}

#[test]
fn report_on_empty_dir_names_expected_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .args(["report"])
        .arg("--run")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&out.stderr).contains("curves.csv"));
}

#[test]
fn train_on_missing_dataset_uses_data_error_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .args(["train"])
        .arg("--data")
        .arg(tmp.path().join("nope"))
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn monitored_training_on_degenerate_baseline_exits_distinctly() {
    // whether the baseline is legal depends on the random init; scan a few
    // seeds and check that failures use the dedicated exit code
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_into(&data);
    let mut saw_degenerate = false;
    let mut saw_success = false;
    for seed in 0..8 {
        let run_dir = tmp.path().join(format!("run_{seed}"));
        let out = Command::new(bin())
            .args(["train", "--epochs", "3", "--shots", "2"])
            .args(["--seed", &seed.to_string()])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&run_dir)
            .output()
            .unwrap();
        match out.status.code() {
            Some(0) => saw_success = true,
            Some(5) => {
                saw_degenerate = true;
                assert!(String::from_utf8_lossy(&out.stderr).contains("baseline"));
            }
            other => panic!(
                "unexpected exit {other:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            ),
        }
    }
    assert!(saw_degenerate || saw_success);
}
