use std::path::Path;
use std::process::{Command, Output};

fn inspo(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inspo"))
        .args(args)
        .env("INSPO_OUT_DIR", out_root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_data_xor_b_writes_three_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = inspo(&["gen-data", "--env", "xor", "--variant", "xor-b"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("xor-b-seed0.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 4, "header plus three records");
}

#[test]
fn gen_data_bridge_optimal_has_500_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bo.jsonl");
    let o = inspo(
        &["gen-data", "--env", "bridge", "--variant", "bridge-optimal", "--seed", "0", "--out", path.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("500 trajectories"));
}

#[test]
fn unknown_variant_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = inspo(&["gen-data", "--env", "xor", "--variant", "xor-z"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("xor-z"));
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let o = inspo(&["solve", "--variant", "xor-b", "--dataset", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.jsonl"));
}

#[test]
fn bad_flags_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(inspo(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(inspo(&["solve", "--variant", "xor-b", "--order", "sideways"], dir.path()).status.code(), Some(1));
    assert_eq!(inspo(&["solve", "--variant", "xor-b", "--alpha", "-1"], dir.path()).status.code(), Some(1));
    assert_eq!(inspo(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn solve_five_seeds_writes_policy_and_trace_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = inspo(&["solve", "--variant", "xor-b", "--seeds", "0,1,2,3,4", "--max-iters", "50"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for s in 0..5 {
        assert!(dir.path().join(format!("xor-b-exact-seed{s}.policy.json")).exists());
        assert!(dir.path().join(format!("xor-b-exact-seed{s}.trace.csv")).exists());
    }
}

#[test]
fn no_entropy_flag_routes_to_zero_beta() {
    let dir = tempfile::tempdir().unwrap();
    let o = inspo(&["solve", "--variant", "mne-imbalanced", "--ablation", "no-entropy", "--seed", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("return 5.0000"), "{}", stdout(&o));
    let trace = std::fs::read_to_string(dir.path().join("mne-imbalanced-exact-seed0.trace.csv")).unwrap();
    let header: Vec<&str> = trace.lines().next().unwrap().split(',').collect();
    let beta = header.iter().position(|h| *h == "beta");
    if let Some(b) = beta {
        for line in trace.lines().skip(1) {
            assert_eq!(line.split(',').nth(b).unwrap().parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "variant = \"mne-imbalanced\"\nablation = \"no-entropy\"\nseeds = [0]\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_file = inspo(&["solve", "--config", c], dir.path());
    assert!(stdout(&from_file).contains("mean 5.0000"), "{}", stdout(&from_file));
    let flagged = inspo(&["solve", "--config", c, "--ablation", "none"], dir.path());
    assert!(stdout(&flagged).contains("mean 20.0000"), "{}", stdout(&flagged));
    std::fs::write(&cfg, "variant = \"xor-b\"\nbogus_key = 1\n").unwrap();
    assert_eq!(inspo(&["solve", "--config", c], dir.path()).status.code(), Some(1));
}

#[test]
fn solve_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("xb.jsonl");
    let d = data.to_str().unwrap();
    assert!(inspo(&["gen-data", "--env", "xor", "--variant", "xor-b", "--out", d], dir.path()).status.success());
    let o = inspo(&["solve", "--env", "xor", "--dataset", d, "--seed", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let policy = dir.path().join("xb-exact-seed0.policy.json");
    let e = inspo(&["eval", "--policy", policy.to_str().unwrap(), "--env", "xor"], dir.path());
    assert!(e.status.success(), "{}", stderr(&e));
    assert!(stdout(&e).contains("over 32 episodes"));
    assert!(stdout(&e).contains("rollout return 1.0000"), "{}", stdout(&e));
}

#[test]
fn eval_rejects_mismatched_policy() {
    let dir = tempfile::tempdir().unwrap();
    let o = inspo(&["solve", "--variant", "xor-b", "--seed", "0", "--max-iters", "5"], dir.path());
    assert!(o.status.success());
    let policy = dir.path().join("xor-b-exact-seed0.policy.json");
    let e = inspo(&["eval", "--policy", policy.to_str().unwrap(), "--env", "mne"], dir.path());
    assert_eq!(e.status.code(), Some(1));
}

#[test]
fn solve_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["solve", "--variant", "xor-c", "--mode", "practical", "--seed", "3", "--max-iters", "20"];
    assert!(inspo(&args, a.path()).status.success());
    assert!(inspo(&args, b.path()).status.success());
    let name = "xor-c-practical-seed3.trace.csv";
    assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
}

#[test]
fn reproduce_table2_and_figure6() {
    let dir = tempfile::tempdir().unwrap();
    let o = inspo(&["reproduce", "table2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let md = std::fs::read_to_string(dir.path().join("table2.md")).unwrap();
    assert!(md.contains("| InSPO (exact) | 20.00 ± 0.00 | 20.00 ± 0.00 |"), "{md}");
    assert!(md.contains("| BC | -9.78 ± 0.00 | -3.47 ± 0.00 |"), "{md}");
    let o = inspo(&["reproduce", "figure6"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let grids = std::fs::read_to_string(dir.path().join("figure6_grids.csv")).unwrap();
    assert!(grids.starts_with("panel,seed,agent1,agent2,prob"));
    assert!(grids.contains("mne-imbalanced/no-entropy,0,A,A,1.000000"));
    assert_eq!(inspo(&["reproduce", "table9"], dir.path()).status.code(), Some(1));
}

#[test]
fn auto_alpha_takes_on_or_off() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["solve", "--variant", "xor-a", "--mode", "practical", "--seed", "0", "--max-iters", "5"];
    for v in ["on", "off"] {
        let o = inspo(&[&base[..], &["--auto-alpha", v]].concat(), dir.path());
        assert!(o.status.success(), "{v}: {}", stderr(&o));
    }
    assert_eq!(inspo(&[&base[..], &["--auto-alpha", "maybe"]].concat(), dir.path()).status.code(), Some(1));
}

#[test]
fn out_may_name_the_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("runs").join("trace.csv");
    let o = inspo(&["solve", "--variant", "xor-b", "--seed", "1", "--max-iters", "5", "--out", trace.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("iter,state,V,kl,entropy,qre_residual"), "{text}");
    assert!(dir.path().join("runs").join("trace.policy.json").exists());
}

#[test]
fn game_file_overrides_the_builtin_layout() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("xor.json");
    inspo::envs::build_xor().save(&game).unwrap();
    let g = game.to_str().unwrap();
    let data = dir.path().join("d.jsonl");
    let d = data.to_str().unwrap();
    let o = inspo(&["gen-data", "--env", "xor", "--variant", "xor-b", "--game-file", g, "--out", d], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = inspo(&["solve", "--env", "xor", "--game-file", g, "--dataset", d, "--seed", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let policy = dir.path().join("d-exact-seed0.policy.json");
    let e = inspo(&["eval", "--policy", policy.to_str().unwrap(), "--game-file", g], dir.path());
    assert!(stdout(&e).contains("rollout return 1.0000"), "{}{}", stdout(&e), stderr(&e));
    let o = inspo(&["gen-data", "--env", "bridge", "--variant", "bridge-mixed", "--game-file", g], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
