//! Experiments: a strategy, its initial state and a simulation config, run
//! end to end with diagnostics. Includes the three sensor-network case-study
//! presets and seeded random instances.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{Game, QuadraticGame};
use crate::graph::{CommGraph, ThetaBar};
use crate::saturation::Saturation;
use crate::sim::{
    check_control_bounds, detect_convergence, integrate, monitor_lyapunov, ControlCheck, Convergence,
    LyapunovSeries, SimConfig, Trajectory,
};
use crate::strategy::{broadcast, build_strategy, GainSet, LyapunovContext, Strategy, StrategyKind, StrategyState};
use crate::tuner::{theta_star_first_order, ConsensusData, GameConstants};

/// Initial blocks; absent blocks that the layout needs start at zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InitialState {
    pub x0: Vec<f64>,
    pub nu0: Option<Vec<f64>>,
    pub z0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
}

#[derive(Clone)]
pub struct Experiment {
    pub game: Arc<dyn Game>,
    pub graph: Option<CommGraph>,
    pub kind: StrategyKind,
    pub gains: GainSet,
    pub saturation: Option<Saturation>,
    pub sim: SimConfig,
    pub init: InitialState,
    /// `Q = q_scale * I` for the estimator's Lyapunov pair.
    pub q_scale: f64,
    /// Overrides the game's closed-form equilibrium.
    pub x_star: Option<DVector<f64>>,
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment")
            .field("kind", &self.kind)
            .field("n_players", &self.game.n_players())
            .field("action_dim", &self.game.action_dim())
            .field("gains", &self.gains)
            .field("sim", &self.sim)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub trajectory: Trajectory,
    pub x_star: Option<DVector<f64>>,
    pub convergence: Option<Convergence>,
    /// Checked for strategies whose law clamps the control.
    pub control_check: Option<ControlCheck>,
    pub lyapunov: Option<LyapunovSeries>,
    /// Why the Lyapunov series is missing when monitoring was requested.
    pub lyapunov_note: Option<String>,
    pub wall_seconds: f64,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.convergence.is_some_and(|c| c.converged)
    }

    pub fn bounds_ok(&self) -> bool {
        self.control_check.is_none_or(|c| c.ok)
    }
}

impl Experiment {
    pub fn strategy(&self) -> Result<Box<dyn Strategy>> {
        build_strategy(
            self.kind,
            self.game.clone(),
            self.graph.as_ref(),
            &self.gains,
            self.saturation.clone(),
        )
    }

    pub fn initial_state(&self, strategy: &dyn Strategy) -> Result<StrategyState> {
        let i = &self.init;
        StrategyState::from_blocks(
            strategy.layout(),
            &i.x0,
            i.nu0.as_deref(),
            i.z0.as_deref(),
            i.y0.as_deref(),
        )
    }

    pub fn equilibrium(&self) -> Option<DVector<f64>> {
        self.x_star.clone().or_else(|| self.game.known_equilibrium())
    }

    fn lyapunov_context(&self) -> (LyapunovContext, Option<String>) {
        let mut ctx = LyapunovContext {
            p: None,
            x_star: self.equilibrium(),
        };
        let mut note = None;
        if self.kind.is_distributed() {
            if let Some(graph) = &self.graph {
                let theta_bar = self
                    .gains
                    .theta_bar
                    .clone()
                    .unwrap_or_else(|| ThetaBar::ones(graph.n_nodes()));
                match ConsensusData::solve(graph, self.game.action_dim(), &theta_bar, self.q_scale) {
                    Ok(c) => ctx.p = Some(c.pair.p),
                    Err(e) => note = Some(format!("no Lyapunov matrix: {e}")),
                }
            }
        }
        (ctx, note)
    }

    pub fn run(&self) -> Result<Outcome> {
        let started = Instant::now();
        let strategy = self.strategy()?;
        let state0 = self.initial_state(strategy.as_ref())?;
        let mut trajectory = integrate(strategy.as_ref(), &state0, &self.sim)?;
        let (ctx, mut lyapunov_note) = self.lyapunov_context();

        let mut lyapunov = None;
        if self.sim.monitor_lyapunov {
            match monitor_lyapunov(&trajectory, strategy.as_ref(), &ctx) {
                Ok(series) => {
                    trajectory.diagnostics.lyapunov = Some(series.values.clone());
                    lyapunov = Some(series);
                }
                Err(Error::LyapunovUnavailable(_, why)) => {
                    lyapunov_note.get_or_insert_with(|| why.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        trajectory.attach_diagnostics(strategy.as_ref(), &ctx, false)?;

        let x_star = ctx.x_star;
        let convergence = x_star
            .as_ref()
            .map(|xs| detect_convergence(&trajectory, xs.as_slice(), self.sim.convergence_tol))
            .transpose()?;
        let control_check = match (&self.saturation, self.kind.is_saturated()) {
            (Some(s), true) => Some(check_control_bounds(&trajectory, s)?),
            _ => None,
        };
        Ok(Outcome {
            trajectory,
            x_star,
            convergence,
            control_check,
            lyapunov,
            lyapunov_note: if self.sim.monitor_lyapunov { lyapunov_note } else { None },
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

/// The sensor-network case-study runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Saturated gradient play on the complete graph.
    Fig2,
    /// First-order distributed strategy on the path graph.
    Fig3,
    /// Clamped second-order distributed strategy on the path graph.
    Fig4,
}

pub const SENSOR_X0: [f64; 6] = [10.0, 0.0, 0.0, 5.0, 0.0, 0.0];

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig2, Preset::Fig3, Preset::Fig4];

    pub fn id(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
        }
    }

    /// Convergence tolerance the preset is judged against.
    pub fn tolerance(self) -> f64 {
        match self {
            Preset::Fig2 => 1e-3,
            Preset::Fig3 | Preset::Fig4 => 1e-2,
        }
    }

    pub fn experiment(self) -> Experiment {
        let game: Arc<dyn Game> = Arc::new(QuadraticGame::sensor_network());
        let u_bar = Saturation::symmetric(5.0).expect("positive bound");
        let theta_bar = Some(ThetaBar::ones(3));
        match self {
            Preset::Fig2 => Experiment {
                game,
                graph: Some(CommGraph::complete(3)),
                kind: StrategyKind::SatGradientPlay,
                gains: GainSet::default(),
                saturation: Some(u_bar),
                sim: SimConfig {
                    monitor_lyapunov: true,
                    ..SimConfig::new(1e-3, 20.0).with_tol(self.tolerance())
                },
                init: InitialState {
                    x0: SENSOR_X0.to_vec(),
                    ..Default::default()
                },
                q_scale: 1.0,
                x_star: None,
            },
            Preset::Fig3 => Experiment {
                game,
                graph: Some(CommGraph::path(3)),
                kind: StrategyKind::FirstOrderDistributed,
                gains: GainSet {
                    theta: Some(1000.0),
                    theta_bar,
                    ..Default::default()
                },
                saturation: Some(u_bar),
                sim: SimConfig {
                    monitor_lyapunov: true,
                    ..SimConfig::new(1e-4, 20.0).with_stride(10).with_tol(self.tolerance())
                },
                init: InitialState {
                    x0: SENSOR_X0.to_vec(),
                    y0: Some(vec![10.0; 18]),
                    ..Default::default()
                },
                q_scale: 1.0,
                x_star: None,
            },
            Preset::Fig4 => Experiment {
                game,
                graph: Some(CommGraph::path(3)),
                kind: StrategyKind::SecondOrderDistributedSat,
                gains: GainSet {
                    theta: Some(200.0),
                    theta1: Some(1.0),
                    theta_bar,
                    k: Some(vec![0.1; 3]),
                    ..Default::default()
                },
                saturation: Some(u_bar),
                sim: SimConfig {
                    monitor_lyapunov: true,
                    ..SimConfig::new(1e-3, 200.0).with_stride(10).with_tol(self.tolerance())
                },
                init: InitialState {
                    x0: vec![0.0; 6],
                    ..Default::default()
                },
                q_scale: 1.0,
                x_star: None,
            },
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "figure",
                reason: format!("unknown figure id `{s}`; expected fig2, fig3 or fig4"),
            })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Random quadratic game with `r_i = s I + E` (`s` in `[0.5, 1.5]`, `E`
/// a small symmetric perturbation), coupling weights in `[0, 0.5]`,
/// linear terms in `[-2, 2]`. Redraws until the monotonicity constant is at
/// least `min_m`.
pub fn random_quadratic_game<R: Rng + ?Sized>(rng: &mut R, n: usize, p: usize, min_m: f64) -> QuadraticGame {
    loop {
        let quadratic = (0..n)
            .map(|_| {
                let s = rng.random_range(0.5..1.5);
                let mut r = DMatrix::<f64>::identity(p, p) * s;
                for a in 0..p {
                    for b in a..p {
                        let e = rng.random_range(-0.1..0.1) * s;
                        r[(a, b)] += e;
                        if a != b {
                            r[(b, a)] += e;
                        }
                    }
                }
                r
            })
            .collect();
        let linear = (0..n)
            .map(|_| DVector::from_fn(p, |_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let offset = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut coupling = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let w = rng.random_range(0.0..0.5);
                coupling[(i, j)] = w;
                coupling[(j, i)] = w;
            }
        }
        let game = QuadraticGame::new(quadratic, linear, offset, coupling).expect("generated parameters are valid");
        if game.monotonicity() >= min_m {
            return game;
        }
    }
}

/// Random connected graph: a random spanning tree plus each remaining edge
/// with probability `extra`. Unit weights.
pub fn random_connected_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, extra: f64) -> CommGraph {
    let mut edges = Vec::new();
    for k in 1..n {
        edges.push((rng.random_range(0..k), k));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) && rng.random_bool(extra) {
                edges.push((i, j));
            }
        }
    }
    CommGraph::from_edges(n, &edges).expect("tree edges are valid")
}

/// A first-order distributed run at `theta = margin * theta*` on a random
/// game and graph.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub experiment: Experiment,
    pub theta_star: f64,
    pub m: f64,
}

/// Builds a bound-consistency instance: `N` in `2..=4`, `p` in `1..=2`,
/// bounds `U = 2`, `x0` and `y0` in `[-3, 3]`. The step is the largest of
/// `{1, 2, 5} x 10^k` with `dt * theta |Tb M| <= 1`, and the horizon
/// covers the saturated transit plus `20 / m` of exponential decay.
pub fn bound_check_instance<R: Rng + ?Sized>(rng: &mut R, margin: f64, tol: f64) -> Result<BoundCheck> {
    let n = rng.random_range(2..=4);
    let p = rng.random_range(1..=2);
    let game = random_quadratic_game(rng, n, p, 0.3);
    let graph = random_connected_graph(rng, n, 0.3);
    let theta_bar = ThetaBar::ones(n);
    let consensus = ConsensusData::solve(&graph, p, &theta_bar, 1.0)?;
    let constants = GameConstants::from_quadratic(&game);
    let report = theta_star_first_order(&constants, &consensus, None)?;
    let theta_star = report.theta_star.expect("first-order report has theta*");
    let theta = margin * theta_star;

    let x0: Vec<f64> = (0..n * p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y0: Vec<f64> = (0..n * n * p).map(|_| rng.random_range(-3.0..3.0)).collect();
    let x_star = game.exact_ne()?;
    let u_bar = 2.0;
    let transit = x0
        .iter()
        .zip(x_star.iter())
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
        / u_bar;
    let t_end = (2.0 * transit + 20.0 / constants.m + 5.0).ceil();
    let dt = nice_step(1.0 / (theta * consensus.weighted_norm));

    let experiment = Experiment {
        game: Arc::new(game),
        graph: Some(graph),
        kind: StrategyKind::FirstOrderDistributed,
        gains: GainSet {
            theta: Some(theta),
            theta_bar: Some(theta_bar),
            ..Default::default()
        },
        saturation: Some(Saturation::symmetric(u_bar)?),
        sim: SimConfig::new(dt, t_end).with_stride(100).with_tol(tol),
        init: InitialState {
            x0,
            y0: Some(y0),
            ..Default::default()
        },
        q_scale: 1.0,
        x_star: Some(x_star),
    };
    Ok(BoundCheck {
        experiment,
        theta_star,
        m: constants.m,
    })
}

/// Largest `{1, 2, 5} x 10^k` not above `limit`.
pub fn nice_step(limit: f64) -> f64 {
    let decade = 10f64.powf(limit.log10().floor());
    [5.0, 2.0, 1.0]
        .into_iter()
        .map(|m| m * decade)
        .find(|s| *s <= limit * (1.0 + 1e-12))
        .unwrap_or(decade)
}

/// The all-tens estimate used by the first-order case study.
pub fn uniform_estimate(value: f64, n: usize, p: usize) -> Vec<f64> {
    broadcast(&vec![value; n * p], n)
}
