//! Sufficient gain bounds.
//!
//! Every bound is assembled from a handful of game and graph constants:
//! the monotonicity constant `m`, per-player Lipschitz constants `lbar_i`
//! of `grad_i f_i`, the Lyapunov pair `(P, Q)` of the estimator, and for
//! the second-order strategies the gains `K_i`. All norms are spectral.
//!
//! The bounds are sufficient conditions. They are typically conservative.

use nalgebra::{DMatrix, SMatrix};

use crate::error::{check_len, Error, Result};
use crate::game::{Game, QuadraticGame};
use crate::graph::{spectral_norm, CommGraph, EstimationMatrix, LyapunovPair, ThetaBar};
use crate::strategy::StrategyKind;

/// Caveat attached to the clamped second-order bound on `theta1`.
pub const SEMI_GLOBAL_CAVEAT: &str = "semi-global bound heuristic: theta1* depends on the initial errors";

/// Game-side constants the bounds need.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConstants {
    /// Strong monotonicity constant.
    pub m: f64,
    /// Lipschitz constant of each player's own gradient.
    pub lbar: Vec<f64>,
    /// `sup_x |H(x)|`.
    pub jacobian_norm: f64,
    /// `sup_y |Hbar(y)|` for the block-diagonal Jacobian of the local
    /// gradients evaluated at the estimates.
    pub local_jacobian_norm: f64,
}

impl GameConstants {
    /// Exact constants of a quadratic game.
    pub fn from_quadratic(game: &QuadraticGame) -> Self {
        let h = game.jacobian_matrix();
        Self {
            m: game.monotonicity(),
            lbar: lipschitz_constants(game),
            jacobian_norm: spectral_norm(h),
            local_jacobian_norm: spectral_norm(&local_jacobian(h, game.n_players(), game.action_dim())),
        }
    }

    /// Exact constants when the game is quadratic; other games must supply
    /// certified constants through [`GameConstants::manual`].
    pub fn from_game(game: &dyn Game) -> Result<Self> {
        game.as_quadratic()
            .map(Self::from_quadratic)
            .ok_or(Error::NotQuadratic("supply certified Lipschitz constants manually"))
    }

    /// User-certified constants. `sup |Hbar|` defaults to `max lbar_i`,
    /// which is exact when the Jacobian is constant.
    pub fn manual(m: f64, lbar: Vec<f64>, jacobian_norm: f64) -> Result<Self> {
        if lbar.is_empty() || lbar.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "lbar",
                reason: "every Lipschitz constant must be strictly positive".into(),
            });
        }
        if !(jacobian_norm > 0.0 && jacobian_norm.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "jacobian_norm",
                reason: format!("must be strictly positive, got {jacobian_norm}"),
            });
        }
        let local_jacobian_norm = lbar.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            m,
            lbar,
            jacobian_norm,
            local_jacobian_norm,
        })
    }

    fn certified_m(&self) -> Result<f64> {
        if self.m > 0.0 {
            Ok(self.m)
        } else {
            Err(Error::NotStronglyMonotone)
        }
    }

    fn lbar_max(&self) -> f64 {
        self.lbar.iter().copied().fold(0.0, f64::max)
    }
}

/// Spectral norm of each block row of the constant Jacobian.
pub fn lipschitz_constants(game: &QuadraticGame) -> Vec<f64> {
    let (n, p) = (game.n_players(), game.action_dim());
    let h = game.jacobian_matrix();
    (0..n)
        .map(|i| spectral_norm(&h.rows(i * p, p).into_owned()))
        .collect()
}

/// `Hbar`: row block `i` holds player `i`'s Jacobian row placed over the
/// columns of its own estimate `y_i`.
fn local_jacobian(h: &DMatrix<f64>, n: usize, p: usize) -> DMatrix<f64> {
    let np = n * p;
    let mut out = DMatrix::zeros(np, n * np);
    for i in 0..n {
        out.view_mut((i * p, i * np), (p, np))
            .copy_from(&h.view((i * p, 0), (p, np)));
    }
    out
}

/// Everything the tuner computed, with absent entries for constants that
/// do not apply to the strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerReport {
    pub strategy: StrategyKind,
    pub m: f64,
    pub lbar: Vec<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
    /// Decay margin at the chosen `theta`; informational only.
    pub l4: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    /// Open interval of feasible `eps1` for the centralized second-order law.
    pub eps1_window: Option<(f64, f64)>,
    pub lambda_min_q: Option<f64>,
    pub p_norm: Option<f64>,
    pub theta: Option<f64>,
    pub theta_star: Option<f64>,
    pub lambda_min_a1: Option<f64>,
    pub theta1_star: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_star: Option<f64>,
    pub beta_star: Option<f64>,
    pub caveats: Vec<String>,
}

impl TunerReport {
    /// A report holding only the game constants.
    pub fn new(strategy: StrategyKind, game: &GameConstants) -> Self {
        Self {
            strategy,
            m: game.m,
            lbar: game.lbar.clone(),
            l1: None,
            l2: None,
            l3: None,
            l4: None,
            eps1: None,
            eps2: None,
            eps1_window: None,
            lambda_min_q: None,
            p_norm: None,
            theta: None,
            theta_star: None,
            lambda_min_a1: None,
            theta1_star: None,
            alpha: None,
            alpha_star: None,
            beta_star: None,
            caveats: Vec::new(),
        }
    }

    /// Flat `key=value` lines, 1-based player indices, full precision.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("strategy".to_string(), self.strategy.name().to_string()),
            ("m".to_string(), fmt(self.m)),
        ];
        for (i, l) in self.lbar.iter().enumerate() {
            kv.push((format!("lbar_{}", i + 1), fmt(*l)));
        }
        let optional = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("l3", self.l3),
            ("l4", self.l4),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("eps1_window_lo", self.eps1_window.map(|w| w.0)),
            ("eps1_window_hi", self.eps1_window.map(|w| w.1)),
            ("lambda_min_Q", self.lambda_min_q),
            ("P_norm", self.p_norm),
            ("theta", self.theta),
            ("theta_star", self.theta_star),
            ("lambda_min_A1", self.lambda_min_a1),
            ("theta1_star", self.theta1_star),
            ("alpha", self.alpha),
            ("alpha_star", self.alpha_star),
            ("beta_star", self.beta_star),
        ];
        for (k, v) in optional {
            if let Some(v) = v {
                kv.push((k.to_string(), fmt(v)));
            }
        }
        for (i, c) in self.caveats.iter().enumerate() {
            kv.push((format!("caveat_{}", i + 1), c.clone()));
        }
        kv
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Estimator data shared by the distributed bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusData {
    pub pair: LyapunovPair,
    /// `|Tb M|`.
    pub weighted_norm: f64,
    pub n_players: usize,
}

impl ConsensusData {
    /// Solves the Lyapunov equation for `graph` with `Q = q_scale * I`.
    pub fn solve(graph: &CommGraph, p: usize, theta_bar: &ThetaBar, q_scale: f64) -> Result<Self> {
        if !(q_scale > 0.0 && q_scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "q_scale",
                reason: format!("must be strictly positive, got {q_scale}"),
            });
        }
        let m = graph.estimation_matrix(p)?;
        let q = DMatrix::identity(m.size(), m.size()) * q_scale;
        Self::from_pair(&m, theta_bar, crate::graph::solve_lyapunov(&m, theta_bar, &q)?)
    }

    pub fn from_pair(m: &EstimationMatrix, theta_bar: &ThetaBar, pair: LyapunovPair) -> Result<Self> {
        check_len("P rows", m.size(), pair.p.nrows())?;
        Ok(Self {
            weighted_norm: spectral_norm(&m.weighted(theta_bar)?),
            pair,
            n_players: m.n_players(),
        })
    }
}

/// `(2 l2 + l1 eps1 + l3 eps2) / (2 lambda_min(Q))`.
pub fn first_order_theta_bound(l1: f64, l2: f64, l3: f64, eps1: f64, eps2: f64, lambda_min_q: f64) -> f64 {
    (2.0 * l2 + l1 * eps1 + l3 * eps2) / (2.0 * lambda_min_q)
}

/// `l1^2 / (4 m lambda_min(Q)) + l2 / lambda_min(Q)`.
pub fn second_order_theta_bound(m: f64, l1: f64, l2: f64, lambda_min_q: f64) -> f64 {
    l1 * l1 / (4.0 * m * lambda_min_q) + l2 / lambda_min_q
}

/// `(l1^2 + 4 m l2) / (4 m lambda_min(Q))`.
pub fn saturated_theta_bound(m: f64, l1: f64, l2: f64, lambda_min_q: f64) -> f64 {
    (l1 * l1 + 4.0 * m * l2) / (4.0 * m * lambda_min_q)
}

/// `A1 = [[m, -l1/2], [-l1/2, lambda_min(Q) theta - l2]]`.
pub fn a1_matrix(m: f64, l1: f64, l2: f64, lambda_min_q: f64, theta: f64) -> SMatrix<f64, 2, 2> {
    SMatrix::<f64, 2, 2>::new(m, -0.5 * l1, -0.5 * l1, lambda_min_q * theta - l2)
}

/// `(4 lambda_min(A1) / (theta^2 l3^2))^(1/3)`; errors when `A1` is not
/// positive definite. Returns `(theta1*, lambda_min(A1))`.
pub fn theta1_bound(m: f64, l1: f64, l2: f64, l3: f64, lambda_min_q: f64, theta: f64) -> Result<(f64, f64)> {
    let a1 = a1_matrix(m, l1, l2, lambda_min_q, theta);
    let lambda = a1.symmetric_eigenvalues().min();
    if !(lambda > 0.0) {
        let theta_star = second_order_theta_bound(m, l1, l2, lambda_min_q);
        return Err(Error::ThetaBelowBound { theta, theta_star });
    }
    Ok(((4.0 * lambda / (theta * theta * l3 * l3)).cbrt(), lambda))
}

/// Bound on `theta` for the first-order distributed strategy with
/// `eps1 = 2 l1 / m`, `eps2 = 2 l3 / m`. With `theta` given, also reports
/// the decay margin `l4` there.
pub fn theta_star_first_order(
    game: &GameConstants,
    consensus: &ConsensusData,
    theta: Option<f64>,
) -> Result<TunerReport> {
    let m = game.certified_m()?;
    check_len("lbar", consensus.n_players, game.lbar.len())?;
    let lq = consensus.pair.lambda_min_q();
    let p_norm = consensus.pair.p_norm();
    let sqrt_n = (consensus.n_players as f64).sqrt();
    let lmax = game.lbar_max();
    let l1 = game.jacobian_norm * lmax;
    let l2 = 2.0 * p_norm * sqrt_n * lmax;
    let l3 = 2.0 * p_norm * sqrt_n;
    let eps1 = 2.0 * l1 / m;
    let eps2 = 2.0 * l3 / m;
    let theta_star = first_order_theta_bound(l1, l2, l3, eps1, eps2, lq);

    let mut r = TunerReport::new(StrategyKind::FirstOrderDistributed, game);
    r.l1 = Some(l1);
    r.l2 = Some(l2);
    r.l3 = Some(l3);
    r.eps1 = Some(eps1);
    r.eps2 = Some(eps2);
    r.lambda_min_q = Some(lq);
    r.p_norm = Some(p_norm);
    r.theta_star = Some(theta_star);
    if let Some(theta) = theta {
        r.theta = Some(theta);
        let l4 = (m - l1 / (2.0 * eps1) - l3 / (2.0 * eps2))
            .min(lq * theta - l2 - 0.5 * l1 * eps1 - 0.5 * l3 * eps2);
        r.l4 = (l4 > 0.0).then_some(l4);
    }
    Ok(r)
}

/// `alpha* = m` and, for a chosen `alpha` in `(0, m)`,
/// `beta*(alpha) = 2 alpha + 2 sqrt(alpha m)`.
pub fn alpha_beta_star(game: &GameConstants, alpha: Option<f64>) -> Result<TunerReport> {
    let m = game.certified_m()?;
    let mut r = TunerReport::new(StrategyKind::SecondOrderCentral, game);
    r.alpha_star = Some(m);
    if let Some(alpha) = alpha {
        if !(alpha > 0.0 && alpha < m) {
            return Err(Error::AlphaOutOfRange { alpha, m });
        }
        let beta = beta_star(alpha, m);
        r.alpha = Some(alpha);
        r.beta_star = Some(beta);
        r.eps1_window = eps1_window(alpha, beta, m);
    }
    Ok(r)
}

pub fn beta_star(alpha: f64, m: f64) -> f64 {
    2.0 * alpha + 2.0 * (alpha * m).sqrt()
}

/// `((2a + b) / (2 (2b + m)), 2a / (2a + b))` when nonempty.
pub fn eps1_window(alpha: f64, beta: f64, m: f64) -> Option<(f64, f64)> {
    let lo = (2.0 * alpha + beta) / (2.0 * (2.0 * beta + m));
    let hi = 2.0 * alpha / (2.0 * alpha + beta);
    (lo < hi).then_some((lo, hi))
}

/// Bounds for the second-order distributed strategies.
///
/// `theta*` follows the unclamped or the clamped formula; `theta1*` is
/// computed at the chosen `theta` when one is given. For the clamped law
/// `theta1*` is reported with [`SEMI_GLOBAL_CAVEAT`] and never claimed
/// sufficient.
pub fn theta_bounds_second_order(
    game: &GameConstants,
    consensus: &ConsensusData,
    k: &[f64],
    saturated: bool,
    theta: Option<f64>,
) -> Result<TunerReport> {
    let m = game.certified_m()?;
    let n = consensus.n_players;
    check_len("lbar", n, game.lbar.len())?;
    check_len("K entries", n, k.len())?;
    if k.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "every K_i must be strictly positive".into(),
        });
    }
    let lq = consensus.pair.lambda_min_q();
    let p_norm = consensus.pair.p_norm();
    let kl_max = k.iter().zip(&game.lbar).map(|(k, l)| k * l).fold(0.0, f64::max);
    let k_norm = k.iter().copied().fold(0.0, f64::max);
    let l1 = game.lbar_max() + 2.0 * p_norm * n as f64 * kl_max;
    let l2 = 2.0 * p_norm * (n as f64).sqrt() * kl_max;
    let l3 = k_norm * game.local_jacobian_norm * consensus.weighted_norm;
    let (kind, theta_star) = if saturated {
        (StrategyKind::SecondOrderDistributedSat, saturated_theta_bound(m, l1, l2, lq))
    } else {
        (StrategyKind::SecondOrderDistributed, second_order_theta_bound(m, l1, l2, lq))
    };

    let mut r = TunerReport::new(kind, game);
    r.l1 = Some(l1);
    r.l2 = Some(l2);
    r.l3 = Some(l3);
    r.lambda_min_q = Some(lq);
    r.p_norm = Some(p_norm);
    r.theta_star = Some(theta_star);
    if let Some(theta) = theta {
        r.theta = Some(theta);
        let (theta1, lambda) = theta1_bound(m, l1, l2, l3, lq, theta)?;
        r.theta1_star = Some(theta1);
        r.lambda_min_a1 = Some(lambda);
        if saturated {
            r.caveats.push(SEMI_GLOBAL_CAVEAT.to_string());
        }
    }
    Ok(r)
}
