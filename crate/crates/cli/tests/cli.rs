use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nes_sim::commands::Summary;

const SENSOR: &str = r#"
[game]
type = "quadratic"
r = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
p_vec = [[2.0, -2.0], [-2.0, -2.0], [-4.0, 2.0]]
q = [3.0, 3.0, 6.0]
m_weights = [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]
"#;

const PATH: &str = r#"
[graph]
adjacency = [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]
"#;

fn nes_sim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nes-sim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn stdout(o: &Output) -> Summary {
    Summary::parse(&String::from_utf8_lossy(&o.stdout))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn num(s: &Summary, key: &str) -> f64 {
    s.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

fn gradient_play(t_end: f64) -> String {
    format!(
        r#"{SENSOR}
[strategy]
kind = "sat-gradient-play"
u_bar = 5.0

[sim]
dt = 0.001
t_end = {t_end}

[init]
x0 = [10.0, 0.0, 0.0, 5.0, 0.0, 0.0]

[output]
trajectory = "out/traj.csv"
summary = "out/summary.txt"
"#
    )
}

#[test]
fn run_converges_and_hits_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("out")).unwrap();
    let cfg = write(dir.path(), "gp.toml", &gradient_play(20.0));
    let o = nes_sim(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.get("converged"), Some("true"));
    assert_eq!(num(&s, "max_abs_u"), 5.0);
    assert_eq!(s.get("config_hash").unwrap().len(), 64);
    let written = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert_eq!(Summary::parse(&written), s);
    let csv = fs::read_to_string(dir.path().join("out/traj.csv")).unwrap();
    assert!(csv.starts_with("t,x_1_1,x_1_2,"));
    assert_eq!(csv.lines().count(), 20_002);
}

#[test]
fn short_horizon_exits_two_and_still_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("out")).unwrap();
    let cfg = write(dir.path(), "gp.toml", &gradient_play(0.5));
    let o = nes_sim(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let written = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    let s = Summary::parse(&written);
    assert_eq!(s.get("converged"), Some("false"));
    assert_eq!(s.get("status"), Some("not_converged"));
}

#[test]
fn global_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("out")).unwrap();
    let cfg = write(dir.path(), "gp.toml", &gradient_play(0.5));
    let o = nes_sim(&["run", &cfg, "--t-end", "20", "--dt", "0.002"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(num(&s, "dt"), 0.002);
    assert_eq!(num(&s, "t_end"), 20.0);
}

#[test]
fn nonpositive_theta_bar_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{SENSOR}{PATH}
[strategy]
kind = "first-order-dist"
theta = 1000.0
theta_bar = [[1.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]]
u_bar = 5.0

[sim]
dt = 0.0001
t_end = 1.0

[init]
x0 = "zeros"
y0 = "broadcast:10"
"#
    );
    let cfg = write(dir.path(), "bad.toml", &text);
    let o = nes_sim(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("strictly positive"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = gradient_play(20.0).replace("u_bar = 5.0", "u_bar = 5.0\ntheta_typo = 3.0");
    let cfg = write(dir.path(), "typo.toml", &text);
    let o = nes_sim(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("theta_typo") && err.contains("line"), "{err}");
}

#[test]
fn missing_config_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = nes_sim(&["run", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tune_first_order_on_path_graph() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{SENSOR}{PATH}
[strategy]
kind = "first-order-dist"
theta = 1000.0
u_bar = 5.0

[sim]
dt = 0.0001
t_end = 20.0

[init]
x0 = "zeros"
"#
    );
    let cfg = write(dir.path(), "fo.toml", &text);
    let o = nes_sim(&["tune", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!((num(&s, "m") - 2.0).abs() < 1e-12);
    for (k, l2) in [20.0, 44.0, 20.0].iter().enumerate() {
        assert!((num(&s, &format!("lbar_{}", k + 1)) - f64::sqrt(*l2)).abs() < 1e-12);
    }
    // regression pin
    assert!((num(&s, "theta_star") - 1471.770304174).abs() < 1e-6);
}

#[test]
fn tune_centralized_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{SENSOR}
[strategy]
kind = "second-order-central"
alpha = 1.0
beta = 1.0

[sim]
dt = 0.001
t_end = 50.0

[init]
x0 = [10.0, 0.0, 0.0, 5.0, 0.0, 0.0]
"#
    );
    let cfg = write(dir.path(), "so.toml", &text);
    let o = nes_sim(&["tune", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!((num(&s, "alpha_star") - 2.0).abs() < 1e-12);
    assert!((num(&s, "beta_star") - (2.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
}

const CUSTOM: &str = r#"
[game]
type = "custom"
name = "soft-coupled"

[strategy]
kind = "sat-gradient-play"
u_bar = 5.0

[sim]
dt = 0.001
t_end = 20.0

[init]
x0 = [3.0, -3.0, 1.0]
"#;

#[test]
fn tune_custom_game_needs_manual_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "custom.toml", CUSTOM);
    let o = nes_sim(&["tune", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Lipschitz"), "{}", stderr(&o));

    // constants without m: the sampled estimate cannot certify
    let sampled = format!("{CUSTOM}\n[tuner]\nlbar = [3.0, 3.0, 2.0]\njacobian_norm = 3.0\n");
    let cfg = write(dir.path(), "sampled.toml", &sampled);
    let o = nes_sim(&["tune", &cfg, "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not certified") && stderr(&o).contains("seed 5"), "{}", stderr(&o));

    let manual = sampled.replace("jacobian_norm = 3.0", "jacobian_norm = 3.0\nm = 1.5");
    let cfg = write(dir.path(), "manual.toml", &manual);
    let o = nes_sim(&["tune", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(num(&stdout(&o), "m"), 1.5);
}

#[test]
fn tune_rejects_games_that_are_not_strongly_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let text = CUSTOM.replace("soft-coupled", "bilinear-zero-sum").replace("[3.0, -3.0, 1.0]", "[1.0, 1.0]");
    let text = format!("{text}\n[tuner]\nlbar = [1.0, 1.0]\njacobian_norm = 1.0\n");
    let cfg = write(dir.path(), "bilinear.toml", &text);
    let o = nes_sim(&["tune", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn custom_game_runs_to_its_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "custom.toml", CUSTOM);
    let o = nes_sim(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(num(&stdout(&o), "final_dist_ne") <= 1e-3);
}

#[test]
fn oracle_prints_sensor_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "gp.toml", &gradient_play(20.0));
    let o = nes_sim(&["oracle", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let want = [-0.125, 0.75, 0.75, 0.5, 1.375, -0.25];
    for (k, w) in want.iter().enumerate() {
        let got = s.get(&format!("x_star_{}_{}", k / 2 + 1, k % 2 + 1)).unwrap();
        assert_eq!(got, format!("{w:.15}"));
    }
    assert!(num(&s, "gradient_residual_inf") <= 1e-10);
}

#[test]
fn oracle_zero_linear_terms_gives_origin() {
    let dir = tempfile::tempdir().unwrap();
    let text = gradient_play(20.0).replace("p_vec = [[2.0, -2.0], [-2.0, -2.0], [-4.0, 2.0]]", "p_vec = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]");
    let cfg = write(dir.path(), "zero.toml", &text);
    let o = nes_sim(&["oracle", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.0.iter().filter(|(k, _)| k.starts_with("x_star")).all(|(_, v)| v.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn oracle_singular_game_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // zero quadratic terms and no coupling: H = 0
    let text = gradient_play(20.0)
        .replace("[[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]", "[[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]")
        .replace("[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]", "[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]");
    let cfg = write(dir.path(), "singular.toml", &text);
    let o = nes_sim(&["oracle", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn replicate_writes_artifacts_and_rejects_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();
    let o = nes_sim(&["replicate", "fig2", "--out", "fig2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.get("figure"), Some("fig2"));
    assert_eq!(num(&s, "max_abs_u"), 5.0);
    for f in ["preset.toml", "trajectory.csv", "summary.txt"] {
        assert!(dir.path().join("fig2").join(f).is_file(), "{f}");
    }
    // the written preset is itself a runnable config
    let rerun = nes_sim(&["run", "fig2/preset.toml"], dir.path());
    assert_eq!(rerun.status.code(), Some(0), "{}", stderr(&rerun));

    let bad = nes_sim(&["replicate", "fig7", "--out", "x"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn sweep_runs_every_value() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[sweep]\nparameter = \"u_bar\"\nvalues = [1.0, 5.0, 1e12]\n",
        gradient_play(20.0).replace("[output]\ntrajectory = \"out/traj.csv\"\nsummary = \"out/summary.txt\"\n", "")
    );
    let cfg = write(dir.path(), "sweep.toml", &text);
    let o = nes_sim(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.get("sweep_runs"), Some("3"));
    assert_eq!(num(&s, "run_1.max_abs_u"), 1.0);
    assert_eq!(num(&s, "run_2.max_abs_u"), 5.0);
    assert!(num(&s, "run_3.max_abs_u") > 5.0);
}
