use std::path::Path;
use std::process::{Command, Output};

use mixts::features::synthetic_feature_table;
use mixts::prior_fit::load_prior;
use mixts::RngStream;

const LINEAR: &str = r#"
setting = "linear"
n = 30
replications = 2
seed = 3
diagnostics = true

[environment]
kind = "synthetic"
dim = 4
num_latent = 3
sigma0 = 0.1

[[agents]]
kind = "mixts"

[[agents]]
kind = "ts"
"#;

const MDP: &str = r#"
setting = "mdp"
n = 5
replications = 2

[environment]
kind = "riverswim"
num_states = 4
horizon = 6

[[agents]]
kind = "mixts"

[[agents]]
kind = "psrl"
"#;

fn mixts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixts")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_linear_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lin.toml", LINEAR);
    let out = dir.path().join("out.csv");
    let agg = dir.path().join("agg.csv");
    let o = mixts(&[
        "run-linear", "--config", &cfg, "--n", "12", "--out", out.to_str().unwrap(), "--aggregate", agg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "sweep,rep,agent,t,inst_regret,cum_regret,G_0,G_1,G_2,in_C");
    // 2 reps, 2 agents, 12 rounds
    assert_eq!(lines.count(), 2 * 2 * 12);
    assert!(!text.contains('\r'));
    let agg = std::fs::read_to_string(&agg).unwrap();
    assert!(agg.starts_with("sweep,agent,t,mean_cum_regret,stderr,reps\n"));
    assert_eq!(agg.lines().count(), 1 + 2 * 12);
}

#[test]
fn stdout_when_no_output_and_seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "lin.toml", LINEAR);
    let a = mixts(&["run-linear", "--config", &cfg, "--seed", "11", "--reps", "1"]);
    let b = mixts(&["run-linear", "--config", &cfg, "--seed", "11", "--reps", "1"]);
    let c = mixts(&["run-linear", "--config", &cfg, "--seed", "12", "--reps", "1"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 1 + 2 * 30);
}

#[test]
fn run_mdp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mdp.toml", MDP);
    let o = mixts(&["run-mdp", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 5);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let lin = write(dir.path(), "lin.toml", LINEAR);
    let mdp = write(dir.path(), "mdp.toml", MDP);
    let bad = write(dir.path(), "bad.toml", "setting = \"linear\"\nn = \"many\"\n");
    for args in [
        vec!["run-mdp", "--config", lin.as_str()],
        vec!["run-linear", "--config", mdp.as_str()],
        vec!["run-linear", "--config", bad.as_str()],
        vec!["run-linear", "--config", "/nonexistent/cfg.toml"],
        vec!["run-linear", "--config", lin.as_str(), "--reps", "0"],
    ] {
        let o = mixts(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn fit_prior_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(5, 0);
    let table = synthetic_feature_table(3, 4, 20, 0.05, &mut rng).unwrap();
    let features = dir.path().join("features.csv");
    table.save(&features).unwrap();
    let fit_cfg = write(dir.path(), "fit.toml", "datasets = 60\ndataset_size = 200\n");
    let out = dir.path().join("prior.toml");
    let uni = dir.path().join("uni.toml");
    let o = mixts(&[
        "fit-prior",
        "--features", features.to_str().unwrap(),
        "--L", "4",
        "--out", out.to_str().unwrap(),
        "--unimodal-out", uni.to_str().unwrap(),
        "--config", &fit_cfg,
        "--seed", "9",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let prior = load_prior(&out).unwrap();
    assert_eq!(prior.num_components(), 4);
    assert_eq!(prior.dim(), 3);
    assert_eq!(load_prior(&uni).unwrap().num_components(), 1);

    let missing = mixts(&["fit-prior", "--features", "/nonexistent.csv", "--L", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn bound_over_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{LINEAR}\n[sweep]\naxis = \"sigma0\"\nvalues = [0.1, 0.2, 0.4]\n");
    let cfg = write(dir.path(), "sweep.toml", &text);
    let o = mixts(&["bound", "--config", &cfg, "--n", "1000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].0, 0.1);
    assert!(rows.windows(2).all(|w| w[0].1 < w[1].1));
}
