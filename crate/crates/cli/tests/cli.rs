mod common;

use std::fmt::Write as _;

use common::*;

fn fixture_config() -> std::path::PathBuf {
    fixtures().join("config.toml")
}

#[test]
fn estimate_matches_hand_counts() {
    let out = tempfile::tempdir().unwrap();
    ok(&run("estimate", &fixture_config(), out.path(), &[]));
    let b = bundle(&out.path().join("estimate"));
    // Sessions: plan-monitor-plan, monitor-monitor-plan, plan-plan-monitor, monitor-plan-monitor.
    assert_eq!(b["data"]["n_sequences"], 4);
    assert_eq!(b["data"]["n_events"], 12);
    assert_eq!(b["model"]["counts"]["transitions"], serde_json::json!([[1, 3], [3, 1]]));
    assert_eq!(b["model"]["counts"]["initial"], serde_json::json!([2, 2]));
    assert_eq!(b["model"]["matrix"], serde_json::json!([[0.25, 0.75], [0.75, 0.25]]));
    let csv = std::fs::read_to_string(out.path().join("estimate/matrix.csv")).unwrap();
    assert!(csv.contains("plan,0.25,0.75"), "{csv}");
    assert!(csv.starts_with("# config_hash="));
}

#[test]
fn count_scaling_flag() {
    let out = tempfile::tempdir().unwrap();
    ok(&run("estimate", &fixture_config(), out.path(), &["--scaling", "count"]));
    let b = bundle(&out.path().join("estimate"));
    assert_eq!(b["model"]["matrix"], serde_json::json!([[1.0, 3.0], [3.0, 1.0]]));
    assert_eq!(b["config"]["scaling"], "count");
}

#[test]
fn missing_input_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, "[input]\nevents = \"nowhere.csv\"\n").unwrap();
    let o = run("estimate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.csv"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tna(&["estimate"]).status.code(), Some(2));
    assert_eq!(tna(&["estimate", "--config", "/no/such.toml"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sed = 1\n").unwrap();
    assert_eq!(run("estimate", &cfg, dir.path(), &[]).status.code(), Some(2));
    let o = run("estimate", &fixture_config(), dir.path(), &["--scaling", "odds"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_project(dir.path(), "unit,when,code\nu1,2024-01-01T00:00:00,a\n", "");
    let o = run("estimate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("timestamp"));
}

#[test]
fn repeated_runs_are_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for out in [a.path(), b.path()] {
        ok(&run("estimate", &fixture_config(), out, &[]));
    }
    assert_eq!(
        bundle_without_timestamp(&a.path().join("estimate")),
        bundle_without_timestamp(&b.path().join("estimate"))
    );
    for f in ["matrix.csv", "network.dot", "network.graphml"] {
        assert_eq!(
            std::fs::read(a.path().join("estimate").join(f)).unwrap(),
            std::fs::read(b.path().join("estimate").join(f)).unwrap(),
            "{f}"
        );
    }
}

fn star_events(spokes: &[&str]) -> String {
    let mut s = String::from("unit,timestamp,code\n");
    for (u, spoke) in spokes.iter().enumerate() {
        for k in 0..6 {
            let code = if k % 2 == 0 { spoke } else { "hub" };
            writeln!(s, "u{u},2024-01-01T00:0{k}:00,{code}").unwrap();
        }
    }
    s
}

#[test]
fn star_hub_has_largest_in_strength() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_project(dir.path(), &star_events(&["a", "b", "c", "d"]), "");
    ok(&run("analyze", &cfg, dir.path(), &[]));
    let b = bundle(&dir.path().join("analyze"));
    let states: Vec<String> = serde_json::from_value(b["centralities"]["states"].clone()).unwrap();
    let ins: Vec<f64> = serde_json::from_value(b["centralities"]["in_strength"].clone()).unwrap();
    let hub = states.iter().position(|s| s == "hub").unwrap();
    assert_eq!(ins[hub], 4.0);
    assert!(ins.iter().enumerate().all(|(i, &v)| i == hub || v < ins[hub]));
}

#[test]
fn two_block_log_gives_two_communities() {
    let mut s = String::from("unit,timestamp,code\n");
    let blocks = [["a", "b", "c"], ["x", "y", "z"]];
    for u in 0..12 {
        let block = &blocks[u % 2];
        for k in 0..30 {
            writeln!(s, "u{u},2024-01-01T00:{k:02}:00,{}", block[(k * (u / 2 + 1)) % 3]).unwrap();
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_project(dir.path(), &s, "");
    ok(&run("analyze", &cfg, dir.path(), &[]));
    let b = bundle(&dir.path().join("analyze"));
    assert_eq!(b["communities"]["n_communities"], 2);
    let m: Vec<usize> = serde_json::from_value(b["communities"]["membership"].clone()).unwrap();
    assert_eq!(m, vec![1, 1, 1, 2, 2, 2]);
}

#[test]
fn threshold_flags_are_echoed() {
    let out = tempfile::tempdir().unwrap();
    ok(&run("analyze", &fixture_config(), out.path(), &["--dyad-threshold", "0.5", "--clique-threshold", "0.3"]));
    let b = bundle(&out.path().join("analyze"));
    assert_eq!(b["patterns"]["dyad_threshold"], 0.5);
    assert_eq!(b["patterns"]["clique_threshold"], 0.3);
    assert_eq!(b["config"]["patterns"]["dyad_threshold"], 0.5);
    let dyads = std::fs::read_to_string(out.path().join("analyze/dyads.csv")).unwrap();
    assert!(dyads.contains("plan,monitor,0.75,0.75,0.5"), "{dyads}");
}

#[test]
fn analyze_from_estimate_bundle() {
    let out = tempfile::tempdir().unwrap();
    ok(&run("estimate", &fixture_config(), out.path(), &[]));
    let est = out.path().join("estimate");
    ok(&run("analyze", &fixture_config(), out.path(), &["--bundle", est.to_str().unwrap()]));
    let b = bundle(&out.path().join("analyze"));
    assert_eq!(b["model"]["matrix"], serde_json::json!([[0.25, 0.75], [0.75, 0.25]]));
    assert!(b.get("data").is_none());
}

#[test]
fn validate_and_compare_outputs() {
    let out = tempfile::tempdir().unwrap();
    ok(&run("validate", &fixture_config(), out.path(), &[]));
    let v = out.path().join("validate");
    for f in ["retained.dot", "dropped.dot", "bootstrap_edges.csv", "disparity.csv", "stability.csv"] {
        assert!(v.join(f).is_file(), "{f}");
    }
    ok(&run("compare", &fixture_config(), out.path(), &[]));
    let dot = std::fs::read_to_string(out.path().join("compare/subtraction.dot")).unwrap();
    assert!(dot.contains("label=\"+0.33\"") && dot.contains("label=\"-0.33\""), "{dot}");
    let b = bundle(&out.path().join("compare"));
    assert_eq!(b["comparison"]["n_sequences"], serde_json::json!([2, 2]));
}

#[test]
fn simulate_then_cluster_recovers_components() {
    let out = tempfile::tempdir().unwrap();
    ok(&run("simulate", &fixture_config(), out.path(), &[]));
    let sim = out.path().join("simulate");
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sim.join("truth.json")).unwrap()).unwrap();
    let cfg = sim.join("cluster.toml");
    std::fs::write(
        &cfg,
        "seed = 5\n[input]\nevents = \"events.csv\"\n[mixture]\nk_range = [1, 3]\nrestarts = 10\n",
    )
    .unwrap();
    ok(&run("cluster", &cfg, out.path(), &[]));
    let b = bundle(&out.path().join("cluster"));
    assert_eq!(b["mixture"]["selected_k"], 2);
    let truth: Vec<usize> = serde_json::from_value(truth["membership"].clone()).unwrap();
    let got: Vec<usize> = b["mixture"]["assignments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["cluster"].as_u64().unwrap() as usize)
        .collect();
    let same = truth.iter().zip(&got).filter(|(t, g)| t == g).count();
    let agree = same.max(truth.len() - same);
    assert!(agree as f64 >= 0.95 * truth.len() as f64, "{agree}/{}", truth.len());
    ok(&tna(&["verify", out.path().join("cluster").to_str().unwrap()]));
}

#[test]
fn verify_catches_tampering() {
    let out = tempfile::tempdir().unwrap();
    ok(&run("estimate", &fixture_config(), out.path(), &[]));
    let dir = out.path().join("estimate");
    ok(&tna(&["verify", dir.to_str().unwrap()]));
    let mut b = bundle(&dir);
    b["model"]["matrix"][0][0] = serde_json::json!(0.3);
    std::fs::write(dir.join("bundle.json"), serde_json::to_vec_pretty(&b).unwrap()).unwrap();
    let o = tna(&["verify", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sums to"));

    ok(&run("estimate", &fixture_config(), out.path(), &[]));
    let csv = dir.join("matrix.csv");
    let text = std::fs::read_to_string(&csv).unwrap().replace("seed=2024", "seed=1");
    std::fs::write(&csv, text).unwrap();
    assert_eq!(tna(&["verify", dir.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&run("validate", &fixture_config(), a.path(), &["--threads", "1"]));
    ok(&run("validate", &fixture_config(), b.path(), &["--threads", "3"]));
    assert_eq!(
        bundle_without_timestamp(&a.path().join("validate")),
        bundle_without_timestamp(&b.path().join("validate"))
    );
}
