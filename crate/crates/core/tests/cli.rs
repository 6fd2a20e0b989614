//! End-to-end CLI checks: train/eval/plot round trip, the selection
//! benchmark, and exit-code conventions.

use dpp_replay::harness::cli::{cli, CHECKPOINT_FILE, CONFIG_FILE};
use dpp_replay::harness::report::{
    parse_metrics_csv, METRICS_FILE, OVERLAY_SVG, PATH_FILE, SUCCESS_SVG,
};

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["dpp-replay"];
    full.extend_from_slice(args);
    cli(full)
}

#[test]
fn train_eval_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let map_path = dir.path().join("tiny.txt");
    std::fs::write(&map_path, "S..\n...\n..G\n").unwrap();
    let config_path = dir.path().join("run.cfg");
    std::fs::write(
        &config_path,
        format!(
            "map = {}\nalgorithm = per-dpp-elastic\nseed = 5\nepochs = 12\n\
             episodes_per_epoch = 10\nstep_cap = 20\nbuffer_capacity = 2000\n\
             candidate_size = 32\nbatch_size = 8\ntrain_start = 50\n\
             max_elastic_steps = 2\nlearning_rate = 0.003\nexplore_fraction = 0.5\n\
             explore_end = 0.0\nmin_cluster_size = 3\nbank_capacity = 64\n",
            map_path.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");

    let code = run(&[
        "train",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for name in [
        METRICS_FILE,
        PATH_FILE,
        SUCCESS_SVG,
        OVERLAY_SVG,
        CHECKPOINT_FILE,
        CONFIG_FILE,
    ] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }
    let metrics = parse_metrics_csv(&std::fs::read_to_string(out.join(METRICS_FILE)).unwrap())
        .unwrap();
    assert_eq!(metrics.len(), 12);

    // eval the checkpoint deterministically on the same map
    let checkpoint = out.join(CHECKPOINT_FILE);
    let code = run(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--map",
        map_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    // rewrite the plots from the stored run
    std::fs::remove_file(out.join(SUCCESS_SVG)).unwrap();
    let code = run(&["plot", "--run", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.join(SUCCESS_SVG).exists());
}

#[test]
fn dpp_bench_small_instance() {
    let code = run(&["dpp-bench", "--n", "10", "--m", "3", "--trials", "25"]);
    assert_eq!(code, 0);
}

#[test]
fn dpp_bench_binary_reports_full_agreement() {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_dpp-replay"))
        .args(["dpp-bench", "--n", "10", "--m", "3", "--trials", "40"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(
        stdout.contains("agreement: 40/40 (100.0%)"),
        "unexpected benchmark output:\n{stdout}"
    );
}

#[test]
fn eval_binary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let map_path = dir.path().join("tiny.txt");
    std::fs::write(&map_path, "S..\n...\n..G\n").unwrap();
    let config_path = dir.path().join("run.cfg");
    std::fs::write(
        &config_path,
        format!(
            "map = {}\nalgorithm = dqn\nseed = 5\nepochs = 15\n\
             episodes_per_epoch = 10\nstep_cap = 20\nbuffer_capacity = 2000\n\
             train_start = 50\nbatch_size = 8\ncandidate_size = 32\n\
             learning_rate = 0.003\nexplore_fraction = 0.5\nexplore_end = 0.0\n",
            map_path.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "train",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]),
        0
    );
    let eval = || {
        std::process::Command::new(env!("CARGO_BIN_EXE_dpp-replay"))
            .args([
                "eval",
                "--checkpoint",
                out.join(CHECKPOINT_FILE).to_str().unwrap(),
                "--map",
                map_path.to_str().unwrap(),
            ])
            .output()
            .unwrap()
    };
    let first = eval();
    let second = eval();
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout, "greedy replay must be stable");
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("goal reached"), "eval output:\n{text}");
}

#[test]
fn unknown_subcommand_exits_two() {
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["train", "--bogus-flag", "x"]), 2);
}

#[test]
fn missing_files_exit_nonzero() {
    assert_eq!(
        run(&["train", "--config", "/nonexistent.cfg", "--out", "/tmp/x"]),
        1
    );
    assert_eq!(
        run(&["eval", "--checkpoint", "/nonexistent.json", "--map", "map1-dense-random"]),
        1
    );
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]), 0);
}
