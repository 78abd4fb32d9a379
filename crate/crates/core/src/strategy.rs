//! The five seeking strategies as autonomous vector fields over a flat state.
//!
//! | kind | state blocks | control |
//! |------|--------------|---------|
//! | [`StrategyKind::SatGradientPlay`] | `x` | `u = sat(-P(x))`, `x' = u` |
//! | [`StrategyKind::FirstOrderDistributed`] | `x, y` | `u_i = sat(-grad_i f_i(y_i))` |
//! | [`StrategyKind::SecondOrderCentral`] | `x, nu` | `u = -alpha P(x) - beta nu - H(x) nu` |
//! | [`StrategyKind::SecondOrderDistributed`] | `x, nu, z, y` | `u = -(x - z) - (nu - z')` |
//! | [`StrategyKind::SecondOrderDistributedSat`] | `x, nu, z, y` | `u = sat(-(x - z) - (nu - z'))` |
//!
//! Each block is stacked player-major; `y` holds every player's estimate of
//! the full profile (`N^2 p` entries, see [`crate::graph`]).

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::game::{Game, GameExt};
use crate::graph::{spectral_norm, CommGraph, ThetaBar};
use crate::saturation::Saturation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    SatGradientPlay,
    FirstOrderDistributed,
    SecondOrderCentral,
    SecondOrderDistributed,
    SecondOrderDistributedSat,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::SatGradientPlay,
        StrategyKind::FirstOrderDistributed,
        StrategyKind::SecondOrderCentral,
        StrategyKind::SecondOrderDistributed,
        StrategyKind::SecondOrderDistributedSat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::SatGradientPlay => "sat-gradient-play",
            StrategyKind::FirstOrderDistributed => "first-order-dist",
            StrategyKind::SecondOrderCentral => "second-order-central",
            StrategyKind::SecondOrderDistributed => "second-order-dist",
            StrategyKind::SecondOrderDistributedSat => "second-order-dist-sat",
        }
    }

    /// Whether the control law clamps its output.
    pub fn is_saturated(self) -> bool {
        matches!(
            self,
            StrategyKind::SatGradientPlay | StrategyKind::FirstOrderDistributed | StrategyKind::SecondOrderDistributedSat
        )
    }

    pub fn is_second_order(self) -> bool {
        matches!(
            self,
            StrategyKind::SecondOrderCentral | StrategyKind::SecondOrderDistributed | StrategyKind::SecondOrderDistributedSat
        )
    }

    pub fn is_distributed(self) -> bool {
        matches!(
            self,
            StrategyKind::FirstOrderDistributed | StrategyKind::SecondOrderDistributed | StrategyKind::SecondOrderDistributedSat
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "strategy",
                reason: format!(
                    "unknown strategy `{s}`; expected one of {}",
                    StrategyKind::ALL.map(|k| k.name()).join(", ")
                ),
            })
    }
}

/// Block offsets of a flat strategy state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub kind: StrategyKind,
    pub n: usize,
    pub p: usize,
}

impl Layout {
    pub fn new(kind: StrategyKind, n: usize, p: usize) -> Self {
        Self { kind, n, p }
    }

    fn np(&self) -> usize {
        self.n * self.p
    }

    fn nnp(&self) -> usize {
        self.n * self.n * self.p
    }

    /// `Np`, `Np + N^2 p`, `2Np` or `3Np + N^2 p`.
    pub fn len(&self) -> usize {
        match self.kind {
            StrategyKind::SatGradientPlay => self.np(),
            StrategyKind::FirstOrderDistributed => self.np() + self.nnp(),
            StrategyKind::SecondOrderCentral => 2 * self.np(),
            StrategyKind::SecondOrderDistributed | StrategyKind::SecondOrderDistributedSat => 3 * self.np() + self.nnp(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> Range<usize> {
        0..self.np()
    }

    pub fn nu(&self) -> Option<Range<usize>> {
        self.kind.is_second_order().then(|| self.np()..2 * self.np())
    }

    pub fn z(&self) -> Option<Range<usize>> {
        matches!(
            self.kind,
            StrategyKind::SecondOrderDistributed | StrategyKind::SecondOrderDistributedSat
        )
        .then(|| 2 * self.np()..3 * self.np())
    }

    pub fn y(&self) -> Option<Range<usize>> {
        match self.kind {
            StrategyKind::FirstOrderDistributed => Some(self.np()..self.np() + self.nnp()),
            StrategyKind::SecondOrderDistributed | StrategyKind::SecondOrderDistributedSat => {
                Some(3 * self.np()..3 * self.np() + self.nnp())
            }
            _ => None,
        }
    }

    pub fn block_name(&self, index: usize) -> &'static str {
        let within = |r: Option<Range<usize>>| r.is_some_and(|r| r.contains(&index));
        if self.x().contains(&index) {
            "x"
        } else if within(self.nu()) {
            "nu"
        } else if within(self.z()) {
            "z"
        } else if within(self.y()) {
            "y"
        } else {
            "state"
        }
    }
}

/// A flat state vector tagged with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyState {
    layout: Layout,
    data: Vec<f64>,
}

impl StrategyState {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            data: vec![0.0; layout.len()],
        }
    }

    pub fn from_vec(layout: Layout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::LayoutMismatch {
                strategy: layout.kind.name(),
                expected: layout.len(),
                actual: data.len(),
            });
        }
        Ok(Self { layout, data })
    }

    /// Assembles a state from its blocks; blocks absent from the layout must
    /// be `None`, and missing blocks present in the layout default to zero.
    pub fn from_blocks(
        layout: Layout,
        x: &[f64],
        nu: Option<&[f64]>,
        z: Option<&[f64]>,
        y: Option<&[f64]>,
    ) -> Result<Self> {
        let mut s = Self::zeros(layout);
        check_len("x0", layout.x().len(), x.len())?;
        s.data[layout.x()].copy_from_slice(x);
        for (name, range, block) in [("nu0", layout.nu(), nu), ("z0", layout.z(), z), ("y0", layout.y(), y)] {
            match (range, block) {
                (Some(r), Some(b)) => {
                    check_len(name, r.len(), b.len())?;
                    s.data[r].copy_from_slice(b);
                }
                (None, Some(_)) => {
                    return Err(Error::InvalidParameter {
                        name: "initial state",
                        reason: format!("{name} is not part of the {} layout", layout.kind),
                    })
                }
                _ => {}
            }
        }
        Ok(s)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn x(&self) -> &[f64] {
        &self.data[self.layout.x()]
    }

    pub fn nu(&self) -> Option<&[f64]> {
        self.layout.nu().map(|r| &self.data[r])
    }

    pub fn z(&self) -> Option<&[f64]> {
        self.layout.z().map(|r| &self.data[r])
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.layout.y().map(|r| &self.data[r])
    }
}

/// Autonomous right-hand side `state' = F(state)` that also reports the
/// control input applied at `state`.
pub trait VectorField: Send + Sync {
    fn state_len(&self) -> usize;

    fn control_len(&self) -> usize;

    /// Writes `F(state)` into `dstate` and the control into `control`.
    fn eval(&self, state: &[f64], dstate: &mut [f64], control: &mut [f64]);

    fn block_name(&self, _index: usize) -> &'static str {
        "state"
    }
}

/// Data the Lyapunov monitors need beyond the state.
#[derive(Debug, Clone, Default)]
pub struct LyapunovContext {
    /// `P` from [`crate::graph::solve_lyapunov`]; distributed strategies.
    pub p: Option<DMatrix<f64>>,
    /// Equilibrium oracle; the second-order distributed strategies.
    pub x_star: Option<DVector<f64>>,
}

/// A seeking strategy: vector field plus its Lyapunov candidate.
pub trait Strategy: VectorField {
    fn layout(&self) -> Layout;

    fn saturation(&self) -> Option<&Saturation> {
        None
    }

    fn game(&self) -> &dyn Game;

    /// The Lyapunov candidate of the matching convergence argument.
    fn lyapunov(&self, state: &[f64], ctx: &LyapunovContext) -> Result<f64>;

    /// `|y - 1 (x) x|` or `|y - 1 (x) z|` for distributed strategies.
    fn estimation_error(&self, _state: &[f64]) -> Option<f64> {
        None
    }

    /// Fastest linear mode, used by the step-size guard.
    fn stiffness(&self) -> f64;

    fn kind(&self) -> StrategyKind {
        self.layout().kind
    }

    /// The global equilibrium `x = x*, nu = 0, z = x*, y = 1 (x) x*`.
    fn equilibrium(&self, x_star: &[f64]) -> Result<StrategyState> {
        let layout = self.layout();
        check_len("x*", layout.x().len(), x_star.len())?;
        let y = layout.y().map(|_| broadcast(x_star, layout.n));
        StrategyState::from_blocks(layout, x_star, None, layout.z().map(|_| x_star), y.as_deref())
    }

    /// Checked right-hand side: `(state', u)`.
    fn rhs(&self, state: &StrategyState) -> Result<(Vec<f64>, Vec<f64>)> {
        let layout = self.layout();
        if state.layout() != layout {
            return Err(Error::LayoutMismatch {
                strategy: layout.kind.name(),
                expected: layout.len(),
                actual: state.as_slice().len(),
            });
        }
        let mut d = vec![0.0; layout.len()];
        let mut u = vec![0.0; self.control_len()];
        self.eval(state.as_slice(), &mut d, &mut u);
        Ok((d, u))
    }
}

/// `1_N (x) v`.
pub fn broadcast(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * v.len());
    for _ in 0..n {
        out.extend_from_slice(v);
    }
    out
}

fn check_state_len(layout: &Layout, state: &[f64]) -> Result<()> {
    if state.len() == layout.len() {
        Ok(())
    } else {
        Err(Error::LayoutMismatch {
            strategy: layout.kind.name(),
            expected: layout.len(),
            actual: state.len(),
        })
    }
}

fn quad_form(p: &DMatrix<f64>, e: &[f64]) -> Result<f64> {
    check_len("Lyapunov matrix P", e.len(), p.nrows())?;
    let e = DVector::from_column_slice(e);
    Ok(e.dot(&(p * &e)))
}

fn origin_jacobian_norm(game: &dyn Game) -> f64 {
    spectral_norm(&game.eval_jacobian(&vec![0.0; game.dim()]))
}

/// Consensus estimator shared by the distributed strategies:
/// `y_ij' = -theta_ij (sum_k a_ik (y_ij - y_kj) + a_ij (y_ij - r_j))`
/// where `r` is the tracked reference (`x` or `z`).
#[derive(Debug, Clone)]
struct Estimator {
    graph: CommGraph,
    // theta_ij for every (i, j), row-major
    rates: Vec<f64>,
    lambda_max: f64,
    n: usize,
    p: usize,
}

impl Estimator {
    fn new(graph: &CommGraph, theta_bar: &ThetaBar, scale: f64, p: usize) -> Result<Self> {
        let n = graph.n_nodes();
        check_len("theta_bar players", n, theta_bar.n_players())?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "theta",
                reason: format!("consensus gain must be strictly positive, got {scale}"),
            });
        }
        let m = graph.estimation_matrix(p)?;
        // an upper bound on the fastest consensus mode is enough for the step guard
        let lambda_max = spectral_norm(&m.weighted(theta_bar)?);
        let mut rates = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                rates.push(scale * theta_bar.get(i, j));
            }
        }
        Ok(Self {
            graph: graph.clone(),
            rates,
            lambda_max: scale * lambda_max,
            n,
            p,
        })
    }

    fn derivative(&self, y: &[f64], reference: &[f64], dy: &mut [f64]) {
        let (n, p) = (self.n, self.p);
        for i in 0..n {
            for j in 0..n {
                let base = (i * n + j) * p;
                let rate = self.rates[i * n + j];
                let a_ij = self.graph.adjacency()[(i, j)];
                for d in 0..p {
                    let yij = y[base + d];
                    let mut acc = 0.0;
                    for &(k, a_ik) in self.graph.neighbors(i) {
                        acc += a_ik * (yij - y[(k * n + j) * p + d]);
                    }
                    acc += a_ij * (yij - reference[j * p + d]);
                    dy[base + d] = -rate * acc;
                }
            }
        }
    }

    fn error_norm(&self, y: &[f64], reference: &[f64]) -> f64 {
        let np = self.n * self.p;
        y.iter()
            .enumerate()
            .map(|(k, v)| (v - reference[k % np]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn errors_against(y: &[f64], reference: &[f64]) -> Vec<f64> {
    let np = reference.len();
    y.iter().enumerate().map(|(k, v)| v - reference[k % np]).collect()
}

/// Saturated gradient play, `x_i' = -rho(grad_i f_i(x))`.
pub struct SatGradientPlay {
    game: Arc<dyn Game>,
    saturation: Saturation,
    layout: Layout,
}

impl SatGradientPlay {
    pub fn new(game: Arc<dyn Game>, saturation: Saturation) -> Result<Self> {
        let layout = Layout::new(StrategyKind::SatGradientPlay, game.n_players(), game.action_dim());
        check_saturation(&saturation, game.dim())?;
        Ok(Self {
            game,
            saturation,
            layout,
        })
    }
}

fn check_saturation(s: &Saturation, dim: usize) -> Result<()> {
    if s.fits(dim) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: "saturation channels",
            expected: dim,
            actual: s.channels().unwrap_or(1),
        })
    }
}

impl VectorField for SatGradientPlay {
    fn state_len(&self) -> usize {
        self.layout.len()
    }

    fn control_len(&self) -> usize {
        self.game.dim()
    }

    fn eval(&self, state: &[f64], dstate: &mut [f64], control: &mut [f64]) {
        let p = self.layout.p;
        for i in 0..self.layout.n {
            self.game.eval_partial_gradient(i, state, &mut control[i * p..(i + 1) * p]);
        }
        for (k, u) in control.iter_mut().enumerate() {
            *u = self.saturation.control(k, *u);
        }
        dstate.copy_from_slice(control);
    }

    fn block_name(&self, index: usize) -> &'static str {
        self.layout.block_name(index)
    }
}

impl Strategy for SatGradientPlay {
    fn layout(&self) -> Layout {
        self.layout
    }

    fn saturation(&self) -> Option<&Saturation> {
        Some(&self.saturation)
    }

    fn game(&self) -> &dyn Game {
        self.game.as_ref()
    }

    /// `sum_k int_0^{g_k(x)} rho(t) dt` over the pseudo-gradient `g`.
    fn lyapunov(&self, state: &[f64], _ctx: &LyapunovContext) -> Result<f64> {
        check_state_len(&self.layout, state)?;
        let g = self.game.pseudo_gradient(state)?;
        Ok(g.iter().enumerate().map(|(k, v)| self.saturation.rho_integral(k, *v)).sum())
    }

    fn stiffness(&self) -> f64 {
        origin_jacobian_norm(self.game.as_ref())
    }
}

/// Consensus-based distributed strategy for first-order players:
/// `x_i' = -rho(grad_i f_i(y_i))`, `y' = -theta Tb M (y - 1 (x) x)`.
pub struct FirstOrderDistributed {
    game: Arc<dyn Game>,
    saturation: Saturation,
    estimator: Estimator,
    layout: Layout,
}

impl FirstOrderDistributed {
    pub fn new(
        game: Arc<dyn Game>,
        graph: &CommGraph,
        theta: f64,
        theta_bar: &ThetaBar,
        saturation: Saturation,
    ) -> Result<Self> {
        let (n, p) = (game.n_players(), game.action_dim());
        check_len("graph nodes", n, graph.n_nodes())?;
        check_saturation(&saturation, game.dim())?;
        let estimator = Estimator::new(graph, theta_bar, theta, p)?;
        Ok(Self {
            game,
            saturation,
            estimator,
            layout: Layout::new(StrategyKind::FirstOrderDistributed, n, p),
        })
    }
}

impl VectorField for FirstOrderDistributed {
    fn state_len(&self) -> usize {
        self.layout.len()
    }

    fn control_len(&self) -> usize {
        self.game.dim()
    }

    fn eval(&self, state: &[f64], dstate: &mut [f64], control: &mut [f64]) {
        let Layout { n, p, .. } = self.layout;
        let np = n * p;
        let (x, y) = state.split_at(np);
        for i in 0..n {
            self.game
                .eval_partial_gradient(i, &y[i * np..(i + 1) * np], &mut control[i * p..(i + 1) * p]);
        }
        for (k, u) in control.iter_mut().enumerate() {
            *u = self.saturation.control(k, *u);
        }
        let (dx, dy) = dstate.split_at_mut(np);
        dx.copy_from_slice(control);
        self.estimator.derivative(y, x, dy);
    }

    fn block_name(&self, index: usize) -> &'static str {
        self.layout.block_name(index)
    }
}

impl Strategy for FirstOrderDistributed {
    fn layout(&self) -> Layout {
        self.layout
    }

    fn saturation(&self) -> Option<&Saturation> {
        Some(&self.saturation)
    }

    fn game(&self) -> &dyn Game {
        self.game.as_ref()
    }

    /// Saturated-gradient energy plus `e' P e` with `e = y - 1 (x) x`.
    fn lyapunov(&self, state: &[f64], ctx: &LyapunovContext) -> Result<f64> {
        check_state_len(&self.layout, state)?;
        let p = ctx
            .p
            .as_ref()
            .ok_or(Error::LyapunovUnavailable(self.layout.kind.name(), "requires the Lyapunov matrix P"))?;
        let np = self.layout.n * self.layout.p;
        let (x, y) = state.split_at(np);
        let g = self.game.pseudo_gradient(x)?;
        let energy: f64 = g.iter().enumerate().map(|(k, v)| self.saturation.rho_integral(k, *v)).sum();
        Ok(energy + quad_form(p, &errors_against(y, x))?)
    }

    fn estimation_error(&self, state: &[f64]) -> Option<f64> {
        let np = self.layout.n * self.layout.p;
        let (x, y) = state.split_at(np);
        Some(self.estimator.error_norm(y, x))
    }

    fn stiffness(&self) -> f64 {
        self.estimator.lambda_max.max(origin_jacobian_norm(self.game.as_ref()))
    }
}

/// Centralized second-order strategy,
/// `nu' = -alpha P(x) - beta nu - H(x) nu`. The control is unbounded.
pub struct SecondOrderCentral {
    game: Arc<dyn Game>,
    alpha: f64,
    beta: f64,
    layout: Layout,
}

impl SecondOrderCentral {
    pub fn new(game: Arc<dyn Game>, alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be strictly positive, got {v}"),
                });
            }
        }
        let layout = Layout::new(StrategyKind::SecondOrderCentral, game.n_players(), game.action_dim());
        Ok(Self {
            game,
            alpha,
            beta,
            layout,
        })
    }
}

impl VectorField for SecondOrderCentral {
    fn state_len(&self) -> usize {
        self.layout.len()
    }

    fn control_len(&self) -> usize {
        self.game.dim()
    }

    fn eval(&self, state: &[f64], dstate: &mut [f64], control: &mut [f64]) {
        let Layout { n, p, .. } = self.layout;
        let np = n * p;
        let (x, nu) = state.split_at(np);
        for i in 0..n {
            self.game.eval_partial_gradient(i, x, &mut control[i * p..(i + 1) * p]);
        }
        let h = self.game.eval_jacobian(x);
        for r in 0..np {
            let mut h_nu = 0.0;
            for c in 0..np {
                h_nu += h[(r, c)] * nu[c];
            }
            control[r] = -self.alpha * control[r] - self.beta * nu[r] - h_nu;
        }
        let (dx, dnu) = dstate.split_at_mut(np);
        dx.copy_from_slice(nu);
        dnu.copy_from_slice(control);
    }

    fn block_name(&self, index: usize) -> &'static str {
        self.layout.block_name(index)
    }
}

impl Strategy for SecondOrderCentral {
    fn layout(&self) -> Layout {
        self.layout
    }

    fn game(&self) -> &dyn Game {
        self.game.as_ref()
    }

    /// `nu' nu + |g|^2 / 2 + nu' g` with `g = P(x)`.
    fn lyapunov(&self, state: &[f64], _ctx: &LyapunovContext) -> Result<f64> {
        check_state_len(&self.layout, state)?;
        let np = self.layout.n * self.layout.p;
        let (x, nu) = state.split_at(np);
        let g = self.game.pseudo_gradient(x)?;
        let nu = DVector::from_column_slice(nu);
        Ok(nu.dot(&nu) + 0.5 * g.dot(&g) + nu.dot(&g))
    }

    fn stiffness(&self) -> f64 {
        self.beta + origin_jacobian_norm(self.game.as_ref())
    }
}

/// Gains of the second-order distributed strategies:
/// `K_bar_i = theta1 K_i` and `theta_ij = theta theta1 theta_bar_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedGains {
    pub theta: f64,
    pub theta1: f64,
    pub theta_bar: ThetaBar,
    pub k: Vec<f64>,
}

/// Distributed second-order strategy with auxiliary `z` and estimates `y`,
/// optionally clamping the control.
pub struct SecondOrderDistributed {
    game: Arc<dyn Game>,
    saturation: Option<Saturation>,
    estimator: Estimator,
    // K_bar_i = theta1 K_i
    k_bar: Vec<f64>,
    k: Vec<f64>,
    layout: Layout,
}

impl SecondOrderDistributed {
    /// `saturation = None` gives the unbounded law, `Some` the clamped one.
    pub fn new(
        game: Arc<dyn Game>,
        graph: &CommGraph,
        gains: &DistributedGains,
        saturation: Option<Saturation>,
    ) -> Result<Self> {
        let (n, p) = (game.n_players(), game.action_dim());
        check_len("graph nodes", n, graph.n_nodes())?;
        check_len("K entries", n, gains.k.len())?;
        if !(gains.theta1 > 0.0 && gains.theta1.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "theta1",
                reason: format!("must be strictly positive, got {}", gains.theta1),
            });
        }
        if gains.k.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "every K_i must be strictly positive".into(),
            });
        }
        if let Some(s) = &saturation {
            check_saturation(s, game.dim())?;
        }
        let estimator = Estimator::new(graph, &gains.theta_bar, gains.theta * gains.theta1, p)?;
        let kind = if saturation.is_some() {
            StrategyKind::SecondOrderDistributedSat
        } else {
            StrategyKind::SecondOrderDistributed
        };
        Ok(Self {
            game,
            saturation,
            estimator,
            k_bar: gains.k.iter().map(|k| gains.theta1 * k).collect(),
            k: gains.k.clone(),
            layout: Layout::new(kind, n, p),
        })
    }

    /// `z' = -K_bar [grad_i f_i(y_i)]` at the given estimates.
    fn z_rate(&self, y: &[f64], out: &mut [f64]) {
        let Layout { n, p, .. } = self.layout;
        let np = n * p;
        for i in 0..n {
            let block = &mut out[i * p..(i + 1) * p];
            self.game.eval_partial_gradient(i, &y[i * np..(i + 1) * np], block);
            for v in block.iter_mut() {
                *v *= -self.k_bar[i];
            }
        }
    }

    fn split<'s>(&self, state: &'s [f64]) -> (&'s [f64], &'s [f64], &'s [f64], &'s [f64]) {
        let np = self.layout.n * self.layout.p;
        let (x, rest) = state.split_at(np);
        let (nu, rest) = rest.split_at(np);
        let (z, y) = rest.split_at(np);
        (x, nu, z, y)
    }
}

impl VectorField for SecondOrderDistributed {
    fn state_len(&self) -> usize {
        self.layout.len()
    }

    fn control_len(&self) -> usize {
        self.game.dim()
    }

    fn eval(&self, state: &[f64], dstate: &mut [f64], control: &mut [f64]) {
        let np = self.layout.n * self.layout.p;
        let (x, nu, z, y) = self.split(state);
        let (dx, rest) = dstate.split_at_mut(np);
        let (dnu, rest) = rest.split_at_mut(np);
        let (dz, dy) = rest.split_at_mut(np);
        // z' enters the nu-law algebraically
        self.z_rate(y, dz);
        for k in 0..np {
            let eta = (x[k] - z[k]) + (nu[k] - dz[k]);
            control[k] = match &self.saturation {
                Some(s) => s.control(k, eta),
                None => -eta,
            };
        }
        dx.copy_from_slice(nu);
        dnu.copy_from_slice(control);
        self.estimator.derivative(y, z, dy);
    }

    fn block_name(&self, index: usize) -> &'static str {
        self.layout.block_name(index)
    }
}

impl Strategy for SecondOrderDistributed {
    fn layout(&self) -> Layout {
        self.layout
    }

    fn saturation(&self) -> Option<&Saturation> {
        self.saturation.as_ref()
    }

    fn game(&self) -> &dyn Game {
        self.game.as_ref()
    }

    /// Unbounded law:
    /// `(z - x*)' K^-1 (z - x*) / 2 + e' P e + |x - z|^2 / 2 + |nu - z'|^2 / 2`.
    ///
    /// Clamped law:
    /// `(z - x*)' K^-1 (z - x*) / 2 + |nu - z'|^2 + e' P e
    ///  + sum int_0^{x - z} rho + sum int_0^{x - z + nu - z'} rho`,
    ///
    /// with `e = y - 1 (x) z`.
    fn lyapunov(&self, state: &[f64], ctx: &LyapunovContext) -> Result<f64> {
        check_state_len(&self.layout, state)?;
        let name = self.layout.kind.name();
        let p_mat = ctx
            .p
            .as_ref()
            .ok_or(Error::LyapunovUnavailable(name, "requires the Lyapunov matrix P"))?;
        let x_star = ctx
            .x_star
            .as_ref()
            .ok_or(Error::LyapunovUnavailable(name, "requires the equilibrium oracle x*"))?;
        let np = self.layout.n * self.layout.p;
        check_len("x*", np, x_star.len())?;
        let (x, nu, z, y) = self.split(state);
        let mut zdot = vec![0.0; np];
        self.z_rate(y, &mut zdot);
        let p = self.layout.p;
        let anchor: f64 = (0..np).map(|k| 0.5 * (z[k] - x_star[k]).powi(2) / self.k[k / p]).sum();
        let consensus = quad_form(p_mat, &errors_against(y, z))?;
        let slip: f64 = (0..np).map(|k| (nu[k] - zdot[k]).powi(2)).sum();
        match &self.saturation {
            None => {
                let offset: f64 = (0..np).map(|k| (x[k] - z[k]).powi(2)).sum();
                Ok(anchor + consensus + 0.5 * offset + 0.5 * slip)
            }
            Some(s) => {
                let clamp_energy: f64 = (0..np)
                    .map(|k| {
                        let off = x[k] - z[k];
                        s.rho_integral(k, off) + s.rho_integral(k, off + nu[k] - zdot[k])
                    })
                    .sum();
                Ok(anchor + slip + consensus + clamp_energy)
            }
        }
    }

    fn estimation_error(&self, state: &[f64]) -> Option<f64> {
        let (_, _, z, y) = self.split(state);
        Some(self.estimator.error_norm(y, z))
    }

    fn stiffness(&self) -> f64 {
        let k_max = self.k_bar.iter().copied().fold(0.0, f64::max);
        self.estimator
            .lambda_max
            .max(k_max * origin_jacobian_norm(self.game.as_ref()))
            .max(1.0)
    }
}

/// All gains a strategy may use; each strategy reads only its own.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GainSet {
    pub theta: Option<f64>,
    pub theta1: Option<f64>,
    pub theta_bar: Option<ThetaBar>,
    pub k: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

impl GainSet {
    /// Rejects any supplied entry that is not strictly positive.
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("theta", self.theta),
            ("theta1", self.theta1),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (name, v) in scalars {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name,
                        reason: format!("gain must be strictly positive, got {v}"),
                    });
                }
            }
        }
        if let Some(k) = &self.k {
            if k.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter {
                    name: "k",
                    reason: "every K_i must be strictly positive".into(),
                });
            }
        }
        Ok(())
    }

    fn require(&self, name: &'static str, v: Option<f64>, kind: StrategyKind) -> Result<f64> {
        v.ok_or_else(|| Error::InvalidParameter {
            name,
            reason: format!("required by strategy {kind}"),
        })
    }
}

/// Builds the strategy of the given kind from a game, graph, gains and
/// bounds. Missing `theta_bar` defaults to all ones, missing `theta1` to 1.
pub fn build_strategy(
    kind: StrategyKind,
    game: Arc<dyn Game>,
    graph: Option<&CommGraph>,
    gains: &GainSet,
    saturation: Option<Saturation>,
) -> Result<Box<dyn Strategy>> {
    gains.validate()?;
    let need_sat = || {
        saturation.clone().ok_or_else(|| Error::InvalidParameter {
            name: "saturation",
            reason: format!("strategy {kind} needs control bounds"),
        })
    };
    let need_graph = || {
        graph.ok_or_else(|| Error::InvalidParameter {
            name: "graph",
            reason: format!("strategy {kind} needs a communication graph"),
        })
    };
    let n = game.n_players();
    let theta_bar = gains.theta_bar.clone().unwrap_or_else(|| ThetaBar::ones(n));
    Ok(match kind {
        StrategyKind::SatGradientPlay => Box::new(SatGradientPlay::new(game, need_sat()?)?),
        StrategyKind::FirstOrderDistributed => {
            let theta = gains.require("theta", gains.theta, kind)?;
            Box::new(FirstOrderDistributed::new(game, need_graph()?, theta, &theta_bar, need_sat()?)?)
        }
        StrategyKind::SecondOrderCentral => {
            let alpha = gains.require("alpha", gains.alpha, kind)?;
            let beta = gains.require("beta", gains.beta, kind)?;
            Box::new(SecondOrderCentral::new(game, alpha, beta)?)
        }
        StrategyKind::SecondOrderDistributed | StrategyKind::SecondOrderDistributedSat => {
            let theta = gains.require("theta", gains.theta, kind)?;
            let k = gains.k.clone().ok_or_else(|| Error::InvalidParameter {
                name: "k",
                reason: format!("required by strategy {kind}"),
            })?;
            let dg = DistributedGains {
                theta,
                theta1: gains.theta1.unwrap_or(1.0),
                theta_bar,
                k,
            };
            let sat = if kind == StrategyKind::SecondOrderDistributedSat {
                Some(need_sat()?)
            } else {
                None
            };
            Box::new(SecondOrderDistributed::new(game, need_graph()?, &dg, sat)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::QuadraticGame;

    const X_STAR: [f64; 6] = [-0.125, 0.75, 0.75, 0.5, 1.375, -0.25];
    const X0: [f64; 6] = [10.0, 0.0, 0.0, 5.0, 0.0, 0.0];

    fn sensor() -> Arc<dyn Game> {
        Arc::new(QuadraticGame::sensor_network())
    }

    fn sat5() -> Saturation {
        Saturation::symmetric(5.0).unwrap()
    }

    fn dist_gains(theta: f64, theta1: f64, k: f64) -> DistributedGains {
        DistributedGains {
            theta,
            theta1,
            theta_bar: ThetaBar::ones(3),
            k: vec![k; 3],
        }
    }

    #[test]
    fn layout_lengths() {
        let (n, p) = (3, 2);
        let len = |k| Layout::new(k, n, p).len();
        assert_eq!(len(StrategyKind::SatGradientPlay), 6);
        assert_eq!(len(StrategyKind::FirstOrderDistributed), 6 + 18);
        assert_eq!(len(StrategyKind::SecondOrderCentral), 12);
        assert_eq!(len(StrategyKind::SecondOrderDistributed), 18 + 18);
        assert_eq!(len(StrategyKind::SecondOrderDistributedSat), 36);
        let l = Layout::new(StrategyKind::SecondOrderDistributed, n, p);
        assert_eq!(l.block_name(0), "x");
        assert_eq!(l.block_name(7), "nu");
        assert_eq!(l.block_name(13), "z");
        assert_eq!(l.block_name(35), "y");
    }

    #[test]
    fn kind_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("gradient".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn sat_gradient_play_initial_control() {
        let s = SatGradientPlay::new(sensor(), sat5()).unwrap();
        let state = StrategyState::from_vec(s.layout(), X0.to_vec()).unwrap();
        let (dx, u) = s.rhs(&state).unwrap();
        assert_eq!(u, vec![-5.0, 5.0, 5.0, -5.0, 4.0, 5.0]);
        assert_eq!(dx, u);
    }

    #[test]
    fn sat_gradient_play_rejects_wrong_layout() {
        let s = SatGradientPlay::new(sensor(), sat5()).unwrap();
        let other = StrategyState::zeros(Layout::new(StrategyKind::SecondOrderCentral, 3, 2));
        assert!(matches!(s.rhs(&other), Err(Error::LayoutMismatch { .. })));
    }

    #[test]
    fn unsaturated_limit_is_plain_gradient_play() {
        let game = sensor();
        let s = SatGradientPlay::new(game.clone(), Saturation::symmetric(1e12).unwrap()).unwrap();
        let state = StrategyState::from_vec(s.layout(), X0.to_vec()).unwrap();
        let (_, u) = s.rhs(&state).unwrap();
        let g = game.pseudo_gradient(&X0).unwrap();
        for (a, b) in u.iter().zip(g.iter()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn first_order_dist_consensus_on_truth_reduces_to_gradient_play() {
        let graph = CommGraph::path(3);
        let s = FirstOrderDistributed::new(sensor(), &graph, 1000.0, &ThetaBar::ones(3), sat5()).unwrap();
        let state = StrategyState::from_blocks(s.layout(), &X0, None, None, Some(&broadcast(&X0, 3))).unwrap();
        let (d, u) = s.rhs(&state).unwrap();
        assert_eq!(u, vec![-5.0, 5.0, 5.0, -5.0, 4.0, 5.0]);
        assert!(d[6..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn first_order_dist_all_tens_estimate() {
        // grad_i f_i at y_i = 10 * 1: (22, 18), (18, 18), (16, 22); all clamp to -5
        let graph = CommGraph::path(3);
        let s = FirstOrderDistributed::new(sensor(), &graph, 1000.0, &ThetaBar::ones(3), sat5()).unwrap();
        let y = vec![10.0; 18];
        let state = StrategyState::from_blocks(s.layout(), &X0, None, None, Some(&y)).unwrap();
        let (_, u) = s.rhs(&state).unwrap();
        assert_eq!(u, vec![-5.0; 6]);
    }

    #[test]
    fn consensus_matches_dense_estimation_matrix() {
        let graph = CommGraph::path(3);
        let s = FirstOrderDistributed::new(sensor(), &graph, 7.0, &ThetaBar::ones(3), sat5()).unwrap();
        let y: Vec<f64> = (0..18).map(|k| (k as f64 * 0.37).sin() * 4.0).collect();
        let state = StrategyState::from_blocks(s.layout(), &X0, None, None, Some(&y)).unwrap();
        let (d, _) = s.rhs(&state).unwrap();
        let m = graph.estimation_matrix(2).unwrap();
        let e = DVector::from_vec(errors_against(&y, &X0));
        let dense = -(m.matrix() * e) * 7.0;
        for k in 0..18 {
            assert!((d[6 + k] - dense[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn central_second_order_examples() {
        let s = SecondOrderCentral::new(sensor(), 1.0, 1.0).unwrap();
        let mut data = X0.to_vec();
        data.extend([1.0; 6]);
        let state = StrategyState::from_vec(s.layout(), data).unwrap();
        let (d, u) = s.rhs(&state).unwrap();
        // -P(x) - nu - H nu with every row of H summing to 2
        assert_eq!(u, vec![-45.0, 9.0, 19.0, -31.0, 1.0, 5.0]);
        assert_eq!(&d[..6], &[1.0; 6]);
        assert_eq!(&d[6..], u.as_slice());

        let mut data = X0.to_vec();
        data.extend([0.0; 6]);
        let (_, u) = s.rhs(&StrategyState::from_vec(s.layout(), data).unwrap()).unwrap();
        assert_eq!(u, vec![-42.0, 12.0, 22.0, -28.0, 4.0, 8.0]);
    }

    #[test]
    fn second_order_dist_from_rest() {
        let graph = CommGraph::path(3);
        let s = SecondOrderDistributed::new(sensor(), &graph, &dist_gains(200.0, 1.0, 0.1), None).unwrap();
        let state = StrategyState::zeros(s.layout());
        let (d, u) = s.rhs(&state).unwrap();
        let zdot = [-0.2, 0.2, 0.2, 0.2, 0.4, -0.2];
        for k in 0..6 {
            assert!((d[12 + k] - zdot[k]).abs() < 1e-15);
            assert!((u[k] - zdot[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn second_order_dist_sat_from_rest_is_inside_the_bound() {
        let graph = CommGraph::path(3);
        let s = SecondOrderDistributed::new(sensor(), &graph, &dist_gains(200.0, 1.0, 0.1), Some(sat5())).unwrap();
        let (_, u) = s.rhs(&StrategyState::zeros(s.layout())).unwrap();
        let zdot = [-0.2, 0.2, 0.2, 0.2, 0.4, -0.2];
        for k in 0..6 {
            assert!((u[k] - zdot[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn second_order_dist_tracking_manifold() {
        let graph = CommGraph::path(3);
        let s = SecondOrderDistributed::new(sensor(), &graph, &dist_gains(3.0, 0.5, 0.2), None).unwrap();
        let z = [1.0, -2.0, 0.5, 0.3, -1.0, 2.0];
        let y = broadcast(&z, 3);
        // nu = z' evaluated at y = 1 (x) z
        let mut zdot = vec![0.0; 6];
        s.z_rate(&y, &mut zdot);
        let state = StrategyState::from_blocks(s.layout(), &z, Some(&zdot), Some(&z), Some(&y)).unwrap();
        let (d, u) = s.rhs(&state).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-15));
        for k in 0..6 {
            assert_eq!(d[k], d[12 + k]);
        }
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let game = sensor();
        let graph = CommGraph::path(3);
        let gains = GainSet {
            theta: Some(50.0),
            theta1: Some(0.5),
            theta_bar: None,
            k: Some(vec![0.3, 0.2, 0.1]),
            alpha: Some(1.0),
            beta: Some(1.0),
        };
        for kind in StrategyKind::ALL {
            let s = build_strategy(kind, game.clone(), Some(&graph), &gains, Some(sat5())).unwrap();
            let eq = s.equilibrium(&X_STAR).unwrap();
            let (d, u) = s.rhs(&eq).unwrap();
            let worst = d.iter().chain(&u).fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!(worst <= 1e-10, "{kind}: {worst}");
        }
    }

    #[test]
    fn lyapunov_of_sat_gradient_play_at_start() {
        let s = SatGradientPlay::new(sensor(), sat5()).unwrap();
        let v = s.lyapunov(&X0, &LyapunovContext::default()).unwrap();
        // 197.5 + 47.5 + 97.5 + 127.5 + 8 + 27.5
        assert_eq!(v, 505.5);
    }

    #[test]
    fn lyapunov_of_central_at_rest_is_half_gradient_norm() {
        let s = SecondOrderCentral::new(sensor(), 1.0, 1.0).unwrap();
        let mut data = X0.to_vec();
        data.extend([0.0; 6]);
        let v = s.lyapunov(&data, &LyapunovContext::default()).unwrap();
        let g2: f64 = [42.0f64, -12.0, -22.0, 28.0, -4.0, -8.0].iter().map(|g| g * g).sum();
        assert_eq!(v, 0.5 * g2);
    }

    #[test]
    fn lyapunov_vanishes_at_equilibrium() {
        let game = sensor();
        let graph = CommGraph::path(3);
        let gains = GainSet {
            theta: Some(20.0),
            theta1: Some(1.0),
            theta_bar: None,
            k: Some(vec![0.1; 3]),
            alpha: Some(1.0),
            beta: Some(1.0),
        };
        let ctx = LyapunovContext {
            p: Some(DMatrix::identity(18, 18)),
            x_star: Some(DVector::from_row_slice(&X_STAR)),
        };
        for kind in StrategyKind::ALL {
            let s = build_strategy(kind, game.clone(), Some(&graph), &gains, Some(sat5())).unwrap();
            let eq = s.equilibrium(&X_STAR).unwrap();
            let v = s.lyapunov(eq.as_slice(), &ctx).unwrap();
            assert!(v.abs() < 1e-20, "{kind}: {v}");
        }
    }

    #[test]
    fn lyapunov_needs_context() {
        let graph = CommGraph::path(3);
        let s = SecondOrderDistributed::new(sensor(), &graph, &dist_gains(200.0, 1.0, 0.1), Some(sat5())).unwrap();
        let err = s
            .lyapunov(StrategyState::zeros(s.layout()).as_slice(), &LyapunovContext::default())
            .unwrap_err();
        assert!(matches!(err, Error::LyapunovUnavailable(..)));
    }

    #[test]
    fn gain_validation() {
        let gains = GainSet {
            theta: Some(-1.0),
            ..Default::default()
        };
        let err = build_strategy(
            StrategyKind::FirstOrderDistributed,
            sensor(),
            Some(&CommGraph::path(3)),
            &gains,
            Some(sat5()),
        )
        .err()
        .unwrap();
        assert!(err.to_string().contains("strictly positive"));
        let missing = build_strategy(StrategyKind::SecondOrderCentral, sensor(), None, &GainSet::default(), None)
            .err()
            .unwrap();
        assert!(missing.to_string().contains("alpha"));
    }

    #[test]
    fn distributed_strategy_rejects_disconnected_graph() {
        let split = CommGraph::from_edges(3, &[(0, 1)]).unwrap();
        let err = FirstOrderDistributed::new(sensor(), &split, 1.0, &ThetaBar::ones(3), sat5())
            .err()
            .unwrap();
        assert_eq!(err, Error::Disconnected);
    }
}
