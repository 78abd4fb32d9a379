//! Experiment configuration documents (TOML). Unknown keys are rejected.
//!
//! ```toml
//! [game]
//! type = "quadratic"
//! r = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
//! p_vec = [[2.0, -2.0], [-2.0, -2.0]]
//! q = [3.0, 3.0]
//! m_weights = [[0.0, 1.0], [1.0, 0.0]]
//!
//! [graph]
//! adjacency = [[0.0, 1.0], [1.0, 0.0]]
//!
//! [strategy]
//! kind = "first-order-dist"
//! theta = 50.0
//! u_bar = 5.0
//!
//! [sim]
//! dt = 1e-3
//! t_end = 20.0
//!
//! [init]
//! x0 = "zeros"
//! y0 = "broadcast:10"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use nes_core::game::{Game, QuadraticGame};
use nes_core::graph::{CommGraph, ThetaBar};
use nes_core::saturation::Saturation;
use nes_core::scenarios::{Experiment, InitialState, Preset};
use nes_core::sim::{Integrator, SimConfig};
use nes_core::strategy::{GainSet, Layout, StrategyKind};

use crate::error::{CliError, Result};
use crate::registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSection>,
    pub strategy: StrategySection,
    pub sim: SimSection,
    pub init: InitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuner: Option<TunerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GameSection {
    Quadratic {
        /// One `p x p` matrix per player.
        r: Vec<Vec<Vec<f64>>>,
        p_vec: Vec<Vec<f64>>,
        q: Vec<f64>,
        m_weights: Vec<Vec<f64>>,
    },
    Custom {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub adjacency: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_bar: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default = "rk4")]
    pub integrator: String,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    #[serde(default = "yes")]
    pub monitor_lyapunov: bool,
}

fn one() -> usize {
    1
}

fn rk4() -> String {
    "rk4".into()
}

fn default_tol() -> f64 {
    1e-3
}

fn yes() -> bool {
    true
}

/// A full vector, `"zeros"`, or `"broadcast:<value>"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitValue {
    Vector(Vec<f64>),
    Keyword(String),
}

impl InitValue {
    fn resolve(&self, key: &str, len: usize) -> Result<Vec<f64>> {
        match self {
            InitValue::Vector(v) => {
                if v.len() != len {
                    return Err(CliError::config(key, format!("expected {len} entries, got {}", v.len())));
                }
                Ok(v.clone())
            }
            InitValue::Keyword(k) if k == "zeros" => Ok(vec![0.0; len]),
            InitValue::Keyword(k) => match k.strip_prefix("broadcast:").map(str::trim).map(f64::from_str) {
                Some(Ok(v)) if v.is_finite() => Ok(vec![v; len]),
                _ => Err(CliError::config(
                    key,
                    format!("`{k}` is neither a vector, \"zeros\" nor \"broadcast:<number>\""),
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub x0: InitValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu0: Option<InitValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<InitValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<InitValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

/// Optional tuner inputs. Manual constants are required for custom games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerSection {
    #[serde(default = "one_f")]
    pub q_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lbar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian_norm: Option<f64>,
}

fn one_f() -> f64 {
    1.0
}

/// Re-runs the experiment once per value of a scalar gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Theta,
    Theta1,
    Alpha,
    Beta,
    UBar,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::Theta => "theta",
            SweepParameter::Theta1 => "theta1",
            SweepParameter::Alpha => "alpha",
            SweepParameter::Beta => "beta",
            SweepParameter::UBar => "u_bar",
        })
    }
}

fn matrix(key: &str, rows: &[Vec<f64>], n: usize, m: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::config(key, format!("expected a {n} x {m} array")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build_game(&self) -> Result<Arc<dyn Game>> {
        match &self.game {
            GameSection::Quadratic { r, p_vec, q, m_weights } => {
                let n = r.len();
                if n == 0 {
                    return Err(CliError::config("game.r", "need at least one player"));
                }
                let p = r[0].len();
                let quadratic = r
                    .iter()
                    .enumerate()
                    .map(|(i, ri)| matrix(&format!("game.r[{}]", i + 1), ri, p, p))
                    .collect::<Result<Vec<_>>>()?;
                if p_vec.len() != n || p_vec.iter().any(|v| v.len() != p) {
                    return Err(CliError::config("game.p_vec", format!("expected {n} vectors of length {p}")));
                }
                let linear = p_vec.iter().map(|v| DVector::from_column_slice(v)).collect();
                if q.len() != n {
                    return Err(CliError::config("game.q", format!("expected {n} entries")));
                }
                let coupling = matrix("game.m_weights", m_weights, n, n)?;
                Ok(Arc::new(QuadraticGame::new(quadratic, linear, q.clone(), coupling)?))
            }
            GameSection::Custom { name } => Ok(Arc::new(registry::custom_game(name)?)),
        }
    }

    pub fn kind(&self) -> Result<StrategyKind> {
        self.strategy
            .kind
            .parse()
            .map_err(|e: nes_core::Error| CliError::config("strategy.kind", e.to_string()))
    }

    pub fn build_graph(&self, n: usize) -> Result<Option<CommGraph>> {
        self.graph
            .as_ref()
            .map(|g| Ok(CommGraph::new(matrix("graph.adjacency", &g.adjacency, n, n)?)?))
            .transpose()
    }

    pub fn saturation(&self) -> Result<Option<Saturation>> {
        let s = &self.strategy;
        match (s.u_bar, &s.lower, &s.upper) {
            (Some(u), None, None) => Ok(Some(Saturation::symmetric(u)?)),
            (None, Some(lo), Some(hi)) => Ok(Some(Saturation::new(lo.clone(), hi.clone())?)),
            (None, None, None) => Ok(None),
            _ => Err(CliError::config(
                "strategy.u_bar",
                "give either u_bar or both lower and upper",
            )),
        }
    }

    pub fn gains(&self, n: usize) -> Result<GainSet> {
        let s = &self.strategy;
        let theta_bar = s
            .theta_bar
            .as_ref()
            .map(|rows| Ok::<_, CliError>(ThetaBar::new(matrix("strategy.theta_bar", rows, n, n)?)?))
            .transpose()?;
        let gains = GainSet {
            theta: s.theta,
            theta1: s.theta1,
            theta_bar,
            k: s.k.clone(),
            alpha: s.alpha,
            beta: s.beta,
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        let cfg = SimConfig {
            dt: s.dt,
            t_end: s.t_end,
            record_stride: s.record_stride,
            integrator: s.integrator.parse::<Integrator>()?,
            convergence_tol: s.convergence_tol,
            monitor_lyapunov: s.monitor_lyapunov,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let game = self.build_game()?;
        let (n, p) = (game.n_players(), game.action_dim());
        let kind = self.kind()?;
        let layout = Layout::new(kind, n, p);
        let blocks = [
            ("init.nu0", &self.init.nu0, layout.nu()),
            ("init.z0", &self.init.z0, layout.z()),
            ("init.y0", &self.init.y0, layout.y()),
        ];
        let mut resolved = Vec::new();
        for (key, value, range) in blocks {
            resolved.push(match (value, range) {
                (Some(v), Some(r)) => Some(v.resolve(key, r.len())?),
                (Some(_), None) => return Err(CliError::config(key, format!("not used by strategy {kind}"))),
                (None, _) => None,
            });
        }
        let [nu0, z0, y0]: [Option<Vec<f64>>; 3] = resolved.try_into().expect("three blocks");
        let init = InitialState {
            x0: self.init.x0.resolve("init.x0", n * p)?,
            nu0,
            z0,
            y0,
        };
        Ok(Experiment {
            graph: self.build_graph(n)?,
            kind,
            gains: self.gains(n)?,
            saturation: self.saturation()?,
            sim: self.sim_config()?,
            init,
            q_scale: self.tuner.as_ref().map_or(1.0, |t| t.q_scale),
            x_star: None,
            game,
        })
    }

    /// Copy with one scalar gain replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut c = self.clone();
        let s = &mut c.strategy;
        match parameter {
            SweepParameter::Theta => s.theta = Some(value),
            SweepParameter::Theta1 => s.theta1 = Some(value),
            SweepParameter::Alpha => s.alpha = Some(value),
            SweepParameter::Beta => s.beta = Some(value),
            SweepParameter::UBar => {
                s.u_bar = Some(value);
                s.lower = None;
                s.upper = None;
            }
        }
        c.sweep = None;
        c
    }

    /// The self-contained config of a case-study preset.
    pub fn preset(p: Preset) -> Self {
        let e = p.experiment();
        let game = QuadraticGame::sensor_network();
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        let game_section = GameSection::Quadratic {
            r: game.quadratic_terms().iter().map(rows).collect(),
            p_vec: game.linear_terms().iter().map(|v| v.iter().copied().collect()).collect(),
            q: game.offsets().to_vec(),
            m_weights: rows(game.coupling()),
        };
        let g = &e.gains;
        let init_value = |v: &Option<Vec<f64>>| v.as_ref().map(|v| compact(v));
        ExperimentConfig {
            game: game_section,
            graph: e.graph.as_ref().map(|g| GraphSection {
                adjacency: rows(g.adjacency()),
            }),
            strategy: StrategySection {
                kind: e.kind.name().to_string(),
                theta: g.theta,
                theta1: g.theta1,
                theta_bar: g.theta_bar.as_ref().map(|t| rows(t.weights())),
                k: g.k.clone(),
                alpha: g.alpha,
                beta: g.beta,
                u_bar: e.saturation.as_ref().map(|s| s.upper(0)),
                lower: None,
                upper: None,
            },
            sim: SimSection {
                dt: e.sim.dt,
                t_end: e.sim.t_end,
                record_stride: e.sim.record_stride,
                integrator: e.sim.integrator.name().to_string(),
                convergence_tol: e.sim.convergence_tol,
                monitor_lyapunov: e.sim.monitor_lyapunov,
            },
            init: InitSection {
                x0: compact(&e.init.x0),
                nu0: init_value(&e.init.nu0),
                z0: init_value(&e.init.z0),
                y0: init_value(&e.init.y0),
            },
            output: Some(OutputSection {
                trajectory: Some(PathBuf::from("trajectory.csv")),
                summary: Some(PathBuf::from("summary.txt")),
            }),
            tuner: None,
            sweep: None,
        }
    }
}

/// `"zeros"` or `"broadcast:v"` for constant vectors, the vector otherwise.
fn compact(v: &[f64]) -> InitValue {
    match v.first() {
        Some(first) if v.iter().all(|x| x == first) => {
            if *first == 0.0 {
                InitValue::Keyword("zeros".into())
            } else {
                InitValue::Keyword(format!("broadcast:{first}"))
            }
        }
        _ => InitValue::Vector(v.to_vec()),
    }
}
