//! Games with `N` players whose actions live in `R^p`.
//!
//! A full action profile is stacked player-major, dimension-minor:
//! `x = [x_11, .., x_1p, x_21, .., x_Np]`. The pseudo-gradient and the game
//! Jacobian use the same order, and so does every Kronecker structure
//! elsewhere in the crate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_len, Error, Result};

/// Cost of player `i` evaluated at a full action profile.
pub type CostFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Player `i`'s own partial gradient written into a length-`p` buffer.
pub type GradientFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Full game Jacobian at a profile.
pub type JacobianFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// An `N`-player game with smooth costs.
///
/// Implementors provide the unchecked evaluators; the length-checked entry
/// points live on [`GameExt`]. Partial gradients and the Jacobian fall back
/// to central finite differences.
pub trait Game: Send + Sync {
    fn n_players(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Length of a stacked action profile, `N * p`.
    fn dim(&self) -> usize {
        self.n_players() * self.action_dim()
    }

    /// `f_i(x)`; `x` has length [`Game::dim`] and `i < N`.
    fn eval_cost(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `d f_i / d x_i` at `x` into `out` (length `p`).
    fn eval_partial_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        central_difference_gradient(self, i, x, out);
    }

    /// `H(x)` with `(i, j)` block `d^2 f_i / dx_i dx_j`.
    fn eval_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let step = if self.has_analytic_gradient() {
            GRADIENT_STEP
        } else {
            // nested differences: rounding error grows like eps / h^2
            NESTED_STEP
        };
        finite_difference_jacobian(self, x, step)
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    fn as_quadratic(&self) -> Option<&QuadraticGame> {
        None
    }

    /// A known Nash equilibrium, when one is available in closed form.
    fn known_equilibrium(&self) -> Option<DVector<f64>> {
        self.as_quadratic().and_then(|q| q.exact_ne().ok())
    }
}

const GRADIENT_STEP: f64 = 1e-6;
const NESTED_STEP: f64 = 1e-4;

fn fd_step(base: f64, x: &[f64]) -> f64 {
    let inf = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    base * inf.max(1.0)
}

/// Central differences of `f_i` with respect to player `i`'s own coordinates,
/// step `1e-6 * max(1, |x|_inf)`.
pub fn central_difference_gradient<G: Game + ?Sized>(game: &G, i: usize, x: &[f64], out: &mut [f64]) {
    let p = game.action_dim();
    let h = fd_step(GRADIENT_STEP, x);
    let mut probe = x.to_vec();
    for d in 0..p {
        let k = i * p + d;
        let orig = probe[k];
        probe[k] = orig + h;
        let plus = game.eval_cost(i, &probe);
        probe[k] = orig - h;
        let minus = game.eval_cost(i, &probe);
        probe[k] = orig;
        out[d] = (plus - minus) / (2.0 * h);
    }
}

fn finite_difference_jacobian<G: Game + ?Sized>(game: &G, x: &[f64], base: f64) -> DMatrix<f64> {
    let (n, p) = (game.n_players(), game.action_dim());
    let dim = n * p;
    let h = fd_step(base, x);
    let mut jac = DMatrix::zeros(dim, dim);
    let mut probe = x.to_vec();
    let mut plus = vec![0.0; p];
    let mut minus = vec![0.0; p];
    for col in 0..dim {
        let orig = probe[col];
        for i in 0..n {
            probe[col] = orig + h;
            game.eval_partial_gradient(i, &probe, &mut plus);
            probe[col] = orig - h;
            game.eval_partial_gradient(i, &probe, &mut minus);
            for d in 0..p {
                jac[(i * p + d, col)] = (plus[d] - minus[d]) / (2.0 * h);
            }
        }
        probe[col] = orig;
    }
    jac
}

/// Length-checked evaluation on top of [`Game`].
pub trait GameExt: Game {
    fn cost(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_player(i)?;
        check_len("action profile", self.dim(), x.len())?;
        Ok(self.eval_cost(i, x))
    }

    /// Stacked partial gradients `[grad_1 f_1(x); ..; grad_N f_N(x)]`.
    fn pseudo_gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_len("action profile", self.dim(), x.len())?;
        let p = self.action_dim();
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.n_players() {
            self.eval_partial_gradient(i, x, &mut out.as_mut_slice()[i * p..(i + 1) * p]);
        }
        Ok(out)
    }

    /// Player `i`'s own partial gradient evaluated at its local estimate
    /// `y_i` of the full profile.
    fn partial_gradient_at(&self, i: usize, y_i: &[f64]) -> Result<DVector<f64>> {
        self.check_player(i)?;
        check_len("local estimate", self.dim(), y_i.len())?;
        let mut out = DVector::zeros(self.action_dim());
        self.eval_partial_gradient(i, y_i, out.as_mut_slice());
        Ok(out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_len("action profile", self.dim(), x.len())?;
        Ok(self.eval_jacobian(x))
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i < self.n_players() {
            Ok(())
        } else {
            Err(Error::PlayerOutOfRange {
                index: i,
                n_players: self.n_players(),
            })
        }
    }
}

impl<G: Game + ?Sized> GameExt for G {}

/// Quadratic costs with pairwise distance coupling:
///
/// `f_i(x) = x_i' r_i x_i + x_i' p_i + q_i + sum_j m_ij |x_i - x_j|^2`.
///
/// The pseudo-gradient is affine, `H x + c`, with a constant Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    n: usize,
    p: usize,
    quadratic: Vec<DMatrix<f64>>,
    linear: Vec<DVector<f64>>,
    offset: Vec<f64>,
    coupling: DMatrix<f64>,
    // r_i + r_i', cached for the gradient hot path
    quadratic_sym: Vec<DMatrix<f64>>,
    jacobian: DMatrix<f64>,
}

impl QuadraticGame {
    /// Builds the game from per-player `r_i` (`p x p`), `p_i` (`p`), `q_i`
    /// and a symmetric, nonnegative, zero-diagonal coupling matrix `m`.
    pub fn new(
        quadratic: Vec<DMatrix<f64>>,
        linear: Vec<DVector<f64>>,
        offset: Vec<f64>,
        coupling: DMatrix<f64>,
    ) -> Result<Self> {
        let n = quadratic.len();
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: "a game needs at least one player".into(),
            });
        }
        let p = quadratic[0].nrows();
        if p == 0 {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: "action dimension must be positive".into(),
            });
        }
        for r in &quadratic {
            check_len("r_i rows", p, r.nrows())?;
            check_len("r_i columns", p, r.ncols())?;
        }
        check_len("p_vec entries", n, linear.len())?;
        for l in &linear {
            check_len("p_i length", p, l.len())?;
        }
        check_len("q entries", n, offset.len())?;
        check_len("m_weights rows", n, coupling.nrows())?;
        check_len("m_weights columns", n, coupling.ncols())?;

        let all_finite = quadratic.iter().all(|r| r.iter().all(|v| v.is_finite()))
            && linear.iter().all(|l| l.iter().all(|v| v.is_finite()))
            && offset.iter().all(|v| v.is_finite())
            && coupling.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameter {
                name: "game",
                reason: "all coefficients must be finite".into(),
            });
        }
        for i in 0..n {
            if coupling[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "m_weights",
                    reason: format!("diagonal entry m_{{{0}{0}}} must be zero", i + 1),
                });
            }
            for j in 0..n {
                if coupling[(i, j)] < 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "m_weights",
                        reason: format!("entry ({}, {}) is negative", i + 1, j + 1),
                    });
                }
                if coupling[(i, j)] != coupling[(j, i)] {
                    return Err(Error::InvalidParameter {
                        name: "m_weights",
                        reason: format!("coupling must be symmetric; ({0}, {1}) != ({1}, {0})", i + 1, j + 1),
                    });
                }
            }
        }

        let quadratic_sym: Vec<_> = quadratic.iter().map(|r| r + r.transpose()).collect();
        let dim = n * p;
        let mut jacobian = DMatrix::zeros(dim, dim);
        for i in 0..n {
            let degree: f64 = coupling.row(i).sum();
            let mut diag = quadratic_sym[i].clone();
            for d in 0..p {
                diag[(d, d)] += 2.0 * degree;
            }
            jacobian.view_mut((i * p, i * p), (p, p)).copy_from(&diag);
            for j in 0..n {
                if j != i && coupling[(i, j)] != 0.0 {
                    for d in 0..p {
                        jacobian[(i * p + d, j * p + d)] = -2.0 * coupling[(i, j)];
                    }
                }
            }
        }

        Ok(Self {
            n,
            p,
            quadratic,
            linear,
            offset,
            coupling,
            quadratic_sym,
            jacobian,
        })
    }

    /// The three-sensor connectivity game: `r_i = I_2`, `m_ij = 1` except
    /// `m_13 = m_31 = 0`, `p_1 = (2, -2)`, `p_2 = (-2, -2)`, `p_3 = (-4, 2)`,
    /// `q = (3, 3, 6)`. Its unique equilibrium is
    /// `[-0.125, 0.75, 0.75, 0.5, 1.375, -0.25]`.
    pub fn sensor_network() -> Self {
        let eye = DMatrix::identity(2, 2);
        Self::new(
            vec![eye.clone(), eye.clone(), eye],
            vec![
                DVector::from_vec(vec![2.0, -2.0]),
                DVector::from_vec(vec![-2.0, -2.0]),
                DVector::from_vec(vec![-4.0, 2.0]),
            ],
            vec![3.0, 3.0, 6.0],
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
        )
        .expect("sensor network parameters are valid")
    }

    pub fn quadratic_terms(&self) -> &[DMatrix<f64>] {
        &self.quadratic
    }

    pub fn linear_terms(&self) -> &[DVector<f64>] {
        &self.linear
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offset
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    /// The constant game Jacobian `H`.
    pub fn jacobian_matrix(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    /// Stacked `p_i`: the pseudo-gradient at the origin.
    pub fn gradient_offset(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.n * self.p);
        for (i, l) in self.linear.iter().enumerate() {
            c.rows_mut(i * self.p, self.p).copy_from(l);
        }
        c
    }

    /// Smallest eigenvalue of `(H + H') / 2`.
    pub fn monotonicity(&self) -> f64 {
        symmetric_part_min_eigenvalue(&self.jacobian)
    }

    /// Solves `H x = -c`. This is the equilibrium oracle used throughout the
    /// tests.
    pub fn exact_ne(&self) -> Result<DVector<f64>> {
        let m = self.monotonicity();
        if !(m > 1e-12) {
            return Err(Error::NotStronglyMonotone);
        }
        let rhs = -self.gradient_offset();
        self.jacobian
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::NotStronglyMonotone)
    }
}

impl Game for QuadraticGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn action_dim(&self) -> usize {
        self.p
    }

    fn eval_cost(&self, i: usize, x: &[f64]) -> f64 {
        let p = self.p;
        let xi = DVector::from_column_slice(&x[i * p..(i + 1) * p]);
        let mut cost = xi.dot(&(&self.quadratic[i] * &xi)) + xi.dot(&self.linear[i]) + self.offset[i];
        for j in 0..self.n {
            let w = self.coupling[(i, j)];
            if w != 0.0 {
                let dist2: f64 = (0..p).map(|d| (x[i * p + d] - x[j * p + d]).powi(2)).sum();
                cost += w * dist2;
            }
        }
        cost
    }

    fn eval_partial_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let p = self.p;
        let xi = &x[i * p..(i + 1) * p];
        let rs = &self.quadratic_sym[i];
        for d in 0..p {
            let mut g = self.linear[i][d];
            for e in 0..p {
                g += rs[(d, e)] * xi[e];
            }
            out[d] = g;
        }
        for j in 0..self.n {
            let w = self.coupling[(i, j)];
            if w != 0.0 {
                for d in 0..p {
                    out[d] += 2.0 * w * (xi[d] - x[j * p + d]);
                }
            }
        }
    }

    fn eval_jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.jacobian.clone()
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn as_quadratic(&self) -> Option<&QuadraticGame> {
        Some(self)
    }
}

/// A game assembled from closures; gradients and the Jacobian are optional.
pub struct CustomGame {
    n: usize,
    p: usize,
    costs: Vec<CostFn>,
    gradients: Option<Vec<GradientFn>>,
    jacobian: Option<JacobianFn>,
    equilibrium: Option<DVector<f64>>,
}

impl std::fmt::Debug for CustomGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CustomGame")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("analytic_gradients", &self.gradients.is_some())
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl CustomGame {
    pub fn new(action_dim: usize, costs: Vec<CostFn>) -> Result<Self> {
        if costs.is_empty() || action_dim == 0 {
            return Err(Error::InvalidParameter {
                name: "game",
                reason: "need at least one player and a positive action dimension".into(),
            });
        }
        Ok(Self {
            n: costs.len(),
            p: action_dim,
            costs,
            gradients: None,
            jacobian: None,
            equilibrium: None,
        })
    }

    pub fn with_gradients(mut self, gradients: Vec<GradientFn>) -> Result<Self> {
        check_len("gradient evaluators", self.n, gradients.len())?;
        self.gradients = Some(gradients);
        Ok(self)
    }

    pub fn with_jacobian(mut self, jacobian: JacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn with_equilibrium(mut self, x_star: DVector<f64>) -> Result<Self> {
        check_len("equilibrium", self.n * self.p, x_star.len())?;
        self.equilibrium = Some(x_star);
        Ok(self)
    }
}

impl Game for CustomGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn action_dim(&self) -> usize {
        self.p
    }

    fn eval_cost(&self, i: usize, x: &[f64]) -> f64 {
        (self.costs[i])(x)
    }

    fn eval_partial_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        match &self.gradients {
            Some(g) => (g[i])(x, out),
            None => central_difference_gradient(self, i, x, out),
        }
    }

    fn eval_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => {
                let step = if self.gradients.is_some() { GRADIENT_STEP } else { NESTED_STEP };
                finite_difference_jacobian(self, x, step)
            }
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        self.gradients.is_some()
    }

    fn known_equilibrium(&self) -> Option<DVector<f64>> {
        self.equilibrium.clone()
    }
}

/// Largest relative disagreement between the game's partial gradients and
/// central differences of its costs over the given sample points.
///
/// Relative error is `|a - b| / max(1, |a|, |b|)` per component.
pub fn gradient_consistency<G: Game + ?Sized>(game: &G, points: &[Vec<f64>]) -> Result<f64> {
    let p = game.action_dim();
    let mut analytic = vec![0.0; p];
    let mut numeric = vec![0.0; p];
    let mut worst = 0.0_f64;
    for x in points {
        check_len("sample point", game.dim(), x.len())?;
        for i in 0..game.n_players() {
            game.eval_partial_gradient(i, x, &mut analytic);
            central_difference_gradient(game, i, x, &mut numeric);
            for (a, b) in analytic.iter().zip(&numeric) {
                let scale = 1.0_f64.max(a.abs()).max(b.abs());
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// Sampling box for the uncertified monotonicity estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityProbe {
    pub pairs: usize,
    pub radius: f64,
}

impl Default for MonotonicityProbe {
    fn default() -> Self {
        Self {
            pairs: 200,
            radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityEstimate {
    pub m: f64,
    /// True only when `m` is exact (quadratic games); sampling can refute
    /// strong monotonicity but never prove it.
    pub certified: bool,
}

/// Strong-monotonicity constant `m`.
///
/// Quadratic games return `lambda_min((H + H') / 2)` exactly. Otherwise the
/// minimum of `(x - z)'(P(x) - P(z)) / |x - z|^2` over sampled pairs is
/// returned, uncertified.
pub fn monotonicity_constant<G, R>(game: &G, probe: MonotonicityProbe, rng: &mut R) -> MonotonicityEstimate
where
    G: Game + ?Sized,
    R: Rng + ?Sized,
{
    if let Some(q) = game.as_quadratic() {
        return MonotonicityEstimate {
            m: q.monotonicity(),
            certified: true,
        };
    }
    let dim = game.dim();
    let mut best = f64::INFINITY;
    for _ in 0..probe.pairs.max(1) {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-probe.radius..=probe.radius)).collect();
        let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-probe.radius..=probe.radius)).collect();
        let gx = game.pseudo_gradient(&x).expect("sized to the game");
        let gz = game.pseudo_gradient(&z).expect("sized to the game");
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..dim {
            let dx = x[k] - z[k];
            num += dx * (gx[k] - gz[k]);
            den += dx * dx;
        }
        if den > 0.0 {
            best = best.min(num / den);
        }
    }
    MonotonicityEstimate {
        m: best,
        certified: false,
    }
}

pub(crate) fn symmetric_part_min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    let sym = (h + h.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}
