//! Communication graphs, the leader-follower estimation matrix
//! `M = L (x) I_{Np} + A_diag (x) I_p`, and the Lyapunov pair `(P, Q)`
//! satisfying `P Tb M + M Tb P = Q` with `Tb = diag(theta_bar_ij) (x) I_p`.
//!
//! Estimates are stacked as `y = [y_11; y_12; ..; y_1N; y_21; ..; y_NN]`
//! where `y_ij` in `R^p` is player `i`'s estimate of player `j`'s action.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Eigenvalue threshold used for connectivity and definiteness checks.
pub const EIGEN_TOL: f64 = 1e-9;

/// Largest accepted 1-norm condition estimate for the vectorized Lyapunov
/// system.
pub const MAX_CONDITION: f64 = 1e12;

/// Undirected, weighted communication graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    adjacency: DMatrix<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl CommGraph {
    /// Validates symmetry, a zero diagonal, and nonnegative finite weights.
    /// Connectivity is checked separately.
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "adjacency",
                reason: "graph needs at least one node".into(),
            });
        }
        check_len("adjacency columns", n, adjacency.ncols())?;
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "adjacency",
                    reason: format!("diagonal entry a_{{{0}{0}}} must be zero", i + 1),
                });
            }
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "adjacency",
                        reason: format!("weight ({}, {}) must be finite and nonnegative", i + 1, j + 1),
                    });
                }
                if w != adjacency[(j, i)] {
                    return Err(Error::InvalidParameter {
                        name: "adjacency",
                        reason: format!("graph must be undirected; ({0}, {1}) != ({1}, {0})", i + 1, j + 1),
                    });
                }
            }
        }
        let neighbors = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&k| adjacency[(i, k)] > 0.0)
                    .map(|k| (k, adjacency[(i, k)]))
                    .collect()
            })
            .collect();
        Ok(Self { adjacency, neighbors })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter {
                    name: "edges",
                    reason: format!("edge ({i}, {j}) out of range for {n} nodes"),
                });
            }
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        Self::new(a)
    }

    /// Unit-weight complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        Self::new(a).expect("complete graph is valid")
    }

    /// Unit-weight path `1 - 2 - .. - n`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path graph is valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// `(k, a_ik)` for every `k` with `a_ik > 0`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            l[(i, i)] = self.adjacency.row(i).sum();
        }
        l
    }

    /// Breadth-first reachability over positive-weight edges.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &(k, _) in &self.neighbors[i] {
                if !seen[k] {
                    seen[k] = true;
                    count += 1;
                    queue.push_back(k);
                }
            }
        }
        count == n
    }

    /// Second-smallest Laplacian eigenvalue; `None` for a single node.
    pub fn algebraic_connectivity(&self) -> Option<f64> {
        if self.n_nodes() < 2 {
            return None;
        }
        let mut eig: Vec<f64> = self.laplacian().symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        Some(eig[1])
    }

    /// Assembles `M` for `p`-dimensional actions.
    pub fn estimation_matrix(&self, p: usize) -> Result<EstimationMatrix> {
        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        if p == 0 {
            return Err(Error::InvalidParameter {
                name: "action_dim",
                reason: "must be positive".into(),
            });
        }
        let n = self.n_nodes();
        let lap = self.laplacian();
        let size = n * n * p;
        let idx = |i: usize, j: usize, d: usize| (i * n + j) * p + d;
        let mut m = DMatrix::zeros(size, size);
        for i in 0..n {
            for j in 0..n {
                for d in 0..p {
                    let row = idx(i, j, d);
                    for k in 0..n {
                        if lap[(i, k)] != 0.0 {
                            m[(row, idx(k, j, d))] += lap[(i, k)];
                        }
                    }
                    m[(row, row)] += self.adjacency[(i, j)];
                }
            }
        }
        debug_assert!((&m - m.transpose()).amax() == 0.0);
        Ok(EstimationMatrix { matrix: m, n, p })
    }
}

/// `M = L (x) I_{Np} + diag(a_11, a_12, .., a_NN) (x) I_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationMatrix {
    matrix: DMatrix<f64>,
    n: usize,
    p: usize,
}

impl EstimationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_players(&self) -> usize {
        self.n
    }

    pub fn action_dim(&self) -> usize {
        self.p
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn lambda_min(&self) -> f64 {
        self.matrix.symmetric_eigenvalues().min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.matrix.symmetric_eigenvalues().max()
    }

    /// `Tb M` with `Tb = diag(theta_bar_ij) (x) I_p`.
    pub fn weighted(&self, theta_bar: &ThetaBar) -> Result<DMatrix<f64>> {
        let diag = theta_bar.expanded(self.p);
        check_len("theta_bar diagonal", self.size(), diag.len())?;
        let mut a = self.matrix.clone();
        for (r, w) in diag.iter().enumerate() {
            a.row_mut(r).scale_mut(*w);
        }
        Ok(a)
    }
}

/// Per-estimate gain weights `theta_bar_ij > 0`, one per (estimator, target)
/// pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaBar(DMatrix<f64>);

impl ThetaBar {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() != weights.ncols() {
            return Err(Error::InvalidParameter {
                name: "theta_bar",
                reason: "must be an N x N array".into(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidParameter {
                name: "theta_bar",
                reason: "every theta_bar_ij must be strictly positive".into(),
            });
        }
        Ok(Self(weights))
    }

    pub fn ones(n: usize) -> Self {
        Self(DMatrix::from_element(n, n, 1.0))
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n_players(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }

    /// Diagonal of `diag(theta_bar_ij) (x) I_p` in `y` order.
    pub fn expanded(&self, p: usize) -> Vec<f64> {
        let n = self.n_players();
        let mut out = Vec::with_capacity(n * n * p);
        for i in 0..n {
            for j in 0..n {
                out.extend(std::iter::repeat_n(self.0[(i, j)], p));
            }
        }
        out
    }
}

/// Solution of `P Tb M + M Tb P = Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// `|P Tb M + M Tb P - Q|_F`.
    pub residual: f64,
    /// 1-norm condition estimate of the vectorized system.
    pub condition: f64,
}

impl LyapunovPair {
    pub fn p_norm(&self) -> f64 {
        spectral_norm(&self.p)
    }

    pub fn lambda_min_q(&self) -> f64 {
        self.q.symmetric_eigenvalues().min()
    }

    pub fn lambda_min_p(&self) -> f64 {
        self.p.symmetric_eigenvalues().min()
    }
}

/// Solves `P Tb M + M Tb P = Q` through the vectorized system
/// `(I (x) A' + A' (x) I) vec(P) = vec(Q)` with `A = Tb M`.
///
/// Dense and `O((N^2 p)^6)`; intended for `N^2 p` up to a few dozen.
pub fn solve_lyapunov(m: &EstimationMatrix, theta_bar: &ThetaBar, q: &DMatrix<f64>) -> Result<LyapunovPair> {
    let size = m.size();
    check_len("Q rows", size, q.nrows())?;
    check_len("Q columns", size, q.ncols())?;
    check_len("theta_bar players", m.n_players(), theta_bar.n_players())?;
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) || q.symmetric_eigenvalues().min() <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "Q",
            reason: "must be symmetric positive definite".into(),
        });
    }
    if m.lambda_min() <= EIGEN_TOL {
        return Err(Error::InvalidParameter {
            name: "M",
            reason: "estimation matrix must be positive definite".into(),
        });
    }
    let a = m.weighted(theta_bar)?;
    solve_lyapunov_dense(&a, q)
}

/// `A' P + P A = Q` for a general square `A`, by vectorization.
pub fn solve_lyapunov_dense(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<LyapunovPair> {
    let n = a.nrows();
    check_len("A columns", n, a.ncols())?;
    let nn = n * n;
    // column-major vec: vec(A'P) = (I (x) A') vec P, vec(PA) = (A' (x) I) vec P
    let mut k = DMatrix::zeros(nn, nn);
    for blk in 0..n {
        for i in 0..n {
            for c in 0..n {
                k[(blk * n + i, blk * n + c)] += a[(c, i)];
            }
        }
    }
    for j in 0..n {
        for l in 0..n {
            let w = a[(l, j)];
            if w != 0.0 {
                for i in 0..n {
                    k[(j * n + i, l * n + i)] += w;
                }
            }
        }
    }
    let k_norm1 = matrix_norm1(&k);
    let lu = k.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular("Lyapunov equation"));
    }
    let condition = k_norm1 * inverse_norm1_estimate(&lu);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = lu.solve(&rhs).ok_or(Error::Singular("Lyapunov equation"))?;
    let raw = DMatrix::from_column_slice(n, n, sol.as_slice());
    let p = (&raw + raw.transpose()) * 0.5;
    let residual = (&p * a + a.transpose() * &p - q).norm();
    Ok(LyapunovPair {
        p,
        q: q.clone(),
        residual,
        condition,
    })
}

fn matrix_norm1(k: &DMatrix<f64>) -> f64 {
    k.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

// Hager's estimate of |K^{-1}|_1 from an LU factorization.
fn inverse_norm1_estimate(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = lu.l().nrows();
    let l = lu.l();
    let u = lu.u();
    let perm = lu.p();
    let solve_transposed = |b: &DVector<f64>| -> Option<DVector<f64>> {
        // K = P^-1 L U  =>  K' = U' L' P
        let w = u.tr_solve_upper_triangular(b)?;
        let mut v = l.tr_solve_lower_triangular(&w)?;
        perm.inv_permute_rows(&mut v);
        Some(v)
    };
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else {
            return f64::INFINITY;
        };
        estimate = y.lp_norm(1);
        let sign = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = solve_transposed(&sign) else {
            return f64::INFINITY;
        };
        let (jmax, zmax) = z.iter().enumerate().fold((0, 0.0_f64), |acc, (j, v)| {
            if v.abs() > acc.1 {
                (j, v.abs())
            } else {
                acc
            }
        });
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[jmax] = 1.0;
    }
    estimate
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}
