//! The four subcommands. Each returns a process exit code:
//! 0 success, 1 config or runtime error, 2 ran but did not converge.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use nes_core::game::{monotonicity_constant, Game, GameExt, MonotonicityProbe};
use nes_core::graph::ThetaBar;
use nes_core::scenarios::{Outcome, Preset};
use nes_core::sim::run_sweep;
use nes_core::strategy::StrategyKind;
use nes_core::tuner::{
    alpha_beta_star, theta_bounds_second_order, theta_star_first_order, ConsensusData, GameConstants, TunerReport,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlobalOpts {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Only feeds randomized utilities (the monotonicity probe).
    pub seed: u64,
}

/// Ordered `key=value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(text: &str) -> Self {
        Summary(
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn hash_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn write_csv(path: &Path, outcome: &Outcome) -> Result<()> {
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(wrap)?;
    let mut w = BufWriter::new(file);
    outcome.trajectory.write_csv(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

fn report<T>(result: Result<T>, err: &mut dyn Write) -> std::result::Result<T, i32> {
    result.map_err(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_ERROR
    })
}

fn apply_overrides(config: &mut ExperimentConfig, opts: &GlobalOpts) {
    if let Some(dt) = opts.dt {
        config.sim.dt = dt;
    }
    if let Some(t) = opts.t_end {
        config.sim.t_end = t;
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Summary entries of one finished run.
fn outcome_entries(s: &mut Summary, prefix: &str, o: &Outcome) {
    let key = |k: &str| format!("{prefix}{k}");
    let conv = o.convergence;
    s.push(key("converged"), o.converged());
    s.push(key("t_hit"), conv.and_then(|c| c.t_hit).map_or("none".into(), num));
    s.push(
        key("final_dist_ne"),
        conv.map_or("none".into(), |c| num(c.final_error)),
    );
    let max_u = o.trajectory.max_abs_control();
    s.push(key("max_abs_u"), num(max_u.iter().copied().fold(0.0, f64::max)));
    if let Some(layout) = o.trajectory.layout {
        for (k, u) in max_u.iter().enumerate() {
            s.push(key(&format!("max_abs_u_{}_{}", k / layout.p + 1, k % layout.p + 1)), num(*u));
        }
    }
    match o.control_check {
        Some(c) => {
            s.push(key("bounds_ok"), c.ok);
            s.push(key("worst_violation"), num(c.worst_violation));
        }
        None => s.push(key("bounds_ok"), "unbounded"),
    }
    if let Some(v) = &o.lyapunov {
        s.push(key("max_lyapunov_increment"), num(v.max_increment()));
    }
    if let Some(note) = &o.lyapunov_note {
        s.push(key("lyapunov_note"), note);
    }
    if let Some(e) = o.trajectory.diagnostics.est_err.as_ref().and_then(|e| e.last()) {
        s.push(key("final_est_err"), num(*e));
    }
    if let Some(w) = &o.trajectory.guard_warning {
        s.push(key("guard_warning"), w);
    }
    s.push(key("wall_seconds"), format!("{:.3}", o.wall_seconds));
}

fn success(o: &Outcome) -> bool {
    o.converged() && o.bounds_ok()
}

/// Runs a parsed config; outputs resolve against `base`.
pub fn run_config(
    mut config: ExperimentConfig,
    text: &str,
    base: &Path,
    opts: &GlobalOpts,
) -> Result<(Summary, i32)> {
    apply_overrides(&mut config, opts);
    let mut s = Summary::default();
    s.push("config_hash", hash_hex(text));
    s.push("strategy", config.kind()?.name());
    s.push("dt", num(config.sim.dt));
    s.push("t_end", num(config.sim.t_end));
    s.push("seed", opts.seed);

    if config.tuner.is_some() {
        match tune_report(&config, opts) {
            Ok(r) => {
                for (k, v) in r.to_key_values().into_iter().skip(1) {
                    s.push(format!("tuner.{k}"), v);
                }
            }
            Err(e) => s.push("tuner.error", e),
        }
    }

    let trajectory_path = config
        .output
        .as_ref()
        .and_then(|o| o.trajectory.as_deref())
        .map(|p| resolve(base, p));
    let code = match config.sweep.clone() {
        None => {
            let outcome = config.experiment()?.run()?;
            if let Some(path) = &trajectory_path {
                write_csv(path, &outcome)?;
            }
            outcome_entries(&mut s, "", &outcome);
            if success(&outcome) {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }
        Some(sweep) => {
            let experiments = sweep
                .values
                .iter()
                .map(|v| config.with_parameter(sweep.parameter, *v).experiment())
                .collect::<Result<Vec<_>>>()?;
            let outcomes = run_sweep(&experiments, |e| e.run());
            s.push("sweep_parameter", sweep.parameter);
            s.push("sweep_runs", sweep.values.len());
            let mut all = true;
            for (k, (value, outcome)) in sweep.values.iter().zip(outcomes).enumerate() {
                let outcome = outcome?;
                let prefix = format!("run_{}.", k + 1);
                s.push(format!("{prefix}{}", sweep.parameter), num(*value));
                outcome_entries(&mut s, &prefix, &outcome);
                all &= success(&outcome);
                if let Some(path) = &trajectory_path {
                    let stem = path.file_stem().and_then(|x| x.to_str()).unwrap_or("trajectory");
                    write_csv(&path.with_file_name(format!("{stem}_{}.csv", k + 1)), &outcome)?;
                }
            }
            if all {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }
    };
    s.push(
        "status",
        if code == EXIT_OK { "converged" } else { "not_converged" },
    );
    if let Some(path) = config.output.as_ref().and_then(|o| o.summary.as_deref()) {
        write_file(&resolve(base, path), &s.render())?;
    }
    Ok((s, code))
}

pub fn cmd_run(path: &Path, opts: &GlobalOpts, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = ExperimentConfig::load(path).and_then(|(config, text)| {
        let base = path.parent().unwrap_or(Path::new("."));
        run_config(config, &text, base, opts)
    });
    match report(result, err) {
        Ok((summary, code)) => {
            let _ = out.write_all(summary.render().as_bytes());
            code
        }
        Err(code) => code,
    }
}

fn game_constants(config: &ExperimentConfig, game: &dyn Game, opts: &GlobalOpts) -> Result<GameConstants> {
    let manual = config.tuner.as_ref().filter(|t| t.lbar.is_some() || t.jacobian_norm.is_some());
    let Some(t) = manual else {
        return Ok(GameConstants::from_game(game)?);
    };
    let lbar = t
        .lbar
        .clone()
        .ok_or_else(|| CliError::config("tuner.lbar", "required with manual constants"))?;
    let jacobian_norm = t
        .jacobian_norm
        .ok_or_else(|| CliError::config("tuner.jacobian_norm", "required with manual constants"))?;
    let m = match t.m {
        Some(m) => m,
        None => {
            // sampling can refute monotonicity but never certify it
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let est = monotonicity_constant(game, MonotonicityProbe::default(), &mut rng);
            if !est.certified {
                return Err(CliError::config(
                    "tuner.m",
                    format!(
                        "monotonicity is not certified (sampled estimate {:.6e}, seed {}); supply a certified m",
                        est.m, opts.seed
                    ),
                ));
            }
            est.m
        }
    };
    Ok(GameConstants::manual(m, lbar, jacobian_norm)?)
}

/// Gain bounds for the config's strategy.
pub fn tune_report(config: &ExperimentConfig, opts: &GlobalOpts) -> Result<TunerReport> {
    let game = config.build_game()?;
    let (n, p) = (game.n_players(), game.action_dim());
    let kind = config.kind()?;
    let constants = game_constants(config, game.as_ref(), opts)?;
    if constants.m <= 0.0 {
        return Err(nes_core::Error::NotStronglyMonotone.into());
    }
    let q_scale = config.tuner.as_ref().map_or(1.0, |t| t.q_scale);
    let consensus = || -> Result<ConsensusData> {
        let graph = config
            .build_graph(n)?
            .ok_or_else(|| CliError::config("graph", format!("strategy {kind} needs a communication graph")))?;
        let theta_bar = config.gains(n)?.theta_bar.unwrap_or_else(|| ThetaBar::ones(n));
        Ok(ConsensusData::solve(&graph, p, &theta_bar, q_scale)?)
    };
    let s = &config.strategy;
    let r = match kind {
        StrategyKind::SatGradientPlay => TunerReport::new(kind, &constants),
        StrategyKind::FirstOrderDistributed => theta_star_first_order(&constants, &consensus()?, s.theta)?,
        StrategyKind::SecondOrderCentral => alpha_beta_star(&constants, s.alpha)?,
        StrategyKind::SecondOrderDistributed | StrategyKind::SecondOrderDistributedSat => {
            let k = s
                .k
                .clone()
                .ok_or_else(|| CliError::config("strategy.k", format!("required by strategy {kind}")))?;
            theta_bounds_second_order(
                &constants,
                &consensus()?,
                &k,
                kind == StrategyKind::SecondOrderDistributedSat,
                s.theta,
            )?
        }
    };
    Ok(r)
}

pub fn cmd_tune(path: &Path, opts: &GlobalOpts, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = ExperimentConfig::load(path).and_then(|(config, _)| tune_report(&config, opts));
    match report(result, err) {
        Ok(r) => {
            let s = Summary(r.to_key_values());
            let _ = out.write_all(s.render().as_bytes());
            EXIT_OK
        }
        Err(code) => code,
    }
}

pub fn oracle_summary(config: &ExperimentConfig) -> Result<Summary> {
    let game = config.build_game()?;
    let x_star = match game.as_quadratic() {
        Some(q) => q.exact_ne()?,
        None => game
            .known_equilibrium()
            .ok_or(nes_core::Error::NotQuadratic("no closed-form equilibrium for this game"))?,
    };
    let residual = game.pseudo_gradient(x_star.as_slice())?.amax();
    let p = game.action_dim();
    let mut s = Summary::default();
    for (k, v) in x_star.iter().enumerate() {
        s.push(format!("x_star_{}_{}", k / p + 1, k % p + 1), format!("{v:.15}"));
    }
    s.push("gradient_residual_inf", num(residual));
    Ok(s)
}

pub fn cmd_oracle(path: &Path, _opts: &GlobalOpts, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = ExperimentConfig::load(path).and_then(|(config, _)| oracle_summary(&config));
    match report(result, err) {
        Ok(s) => {
            let _ = out.write_all(s.render().as_bytes());
            EXIT_OK
        }
        Err(code) => code,
    }
}

/// Writes `preset.toml`, `trajectory.csv` and `summary.txt` into `dir`.
pub fn replicate(figure: &str, dir: &Path, opts: &GlobalOpts) -> Result<(Summary, i32)> {
    let preset: Preset = figure
        .parse()
        .map_err(|e: nes_core::Error| CliError::config("figure", e.to_string()))?;
    let mut config = ExperimentConfig::preset(preset);
    apply_overrides(&mut config, opts);
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let text = config.to_toml();
    write_file(&dir.join("preset.toml"), &text)?;
    let (mut summary, code) = run_config(config, &text, dir, opts)?;
    summary.0.insert(0, ("figure".into(), preset.id().into()));
    write_file(&dir.join("summary.txt"), &summary.render())?;
    Ok((summary, code))
}

pub fn cmd_replicate(figure: &str, dir: &Path, opts: &GlobalOpts, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match report(replicate(figure, dir, opts), err) {
        Ok((s, code)) => {
            let _ = out.write_all(s.render().as_bytes());
            code
        }
        Err(code) => code,
    }
}
