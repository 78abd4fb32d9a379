//! Fixed-step explicit integration, trajectory recording and diagnostics.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::saturation::Saturation;
use crate::strategy::{Layout, LyapunovContext, Strategy, StrategyKind, StrategyState, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::Euler => "euler",
        }
    }

    /// Largest `dt * stiffness` accepted without a warning.
    pub fn guard_limit(self) -> f64 {
        match self {
            Integrator::Rk4 => 2.5,
            Integrator::Euler => 1.8,
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Integrator::Rk4),
            "euler" => Ok(Integrator::Euler),
            other => Err(Error::InvalidParameter {
                name: "integrator",
                reason: format!("unknown integrator `{other}`; expected rk4 or euler"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `record_stride`-th step; `t = 0` and `t_end` always.
    pub record_stride: usize,
    pub integrator: Integrator,
    /// Infinity-norm distance to `x*` that counts as converged.
    pub convergence_tol: f64,
    pub monitor_lyapunov: bool,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            record_stride: 1,
            integrator: Integrator::Rk4,
            convergence_tol: 1e-3,
            monitor_lyapunov: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.convergence_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be strictly positive, got {v}"),
                })
            }
        };
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("convergence_tol", self.convergence_tol)?;
        if self.dt > self.t_end {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("dt = {} exceeds t_end = {}", self.dt, self.t_end),
            });
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "record_stride",
                reason: "must be at least 1".into(),
            });
        }
        let n = self.t_end / self.dt;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("t_end = {} is not a whole number of steps of dt = {}", self.t_end, self.dt),
            });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// A warning when `dt * stiffness` exceeds the integrator's limit.
    pub fn guard(&self, stiffness: f64) -> Option<String> {
        let product = self.dt * stiffness;
        (product > self.integrator.guard_limit()).then(|| {
            format!(
                "step-size guard: dt * stiffness = {product:.3} exceeds {} for {}; reduce dt",
                self.integrator.guard_limit(),
                self.integrator
            )
        })
    }
}

/// Per-record diagnostics; each series is present only when computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub lyapunov: Option<Vec<f64>>,
    pub dist_ne: Option<Vec<f64>>,
    pub est_err: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
    /// Present when the field is a [`Strategy`].
    pub layout: Option<Layout>,
    pub integrator: Integrator,
    pub dt: f64,
    pub guard_warning: Option<String>,
    /// Free-form `key=value` annotations (gains, config hash).
    pub metadata: Vec<(String, String)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn strategy(&self) -> Option<StrategyKind> {
        self.layout.map(|l| l.kind)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// The action block `x` of record `k` (the whole state without a layout).
    pub fn x_at(&self, k: usize) -> &[f64] {
        let s = &self.states[k];
        match self.layout {
            Some(l) => &s[l.x()],
            None => s,
        }
    }

    pub fn final_x(&self) -> DVector<f64> {
        DVector::from_column_slice(self.x_at(self.len() - 1))
    }

    /// Largest `|u_k|` per channel over all records.
    pub fn max_abs_control(&self) -> Vec<f64> {
        let width = self.controls.first().map_or(0, Vec::len);
        let mut out = vec![0.0_f64; width];
        for u in &self.controls {
            for (o, v) in out.iter_mut().zip(u) {
                *o = o.max(v.abs());
            }
        }
        out
    }

    /// Fills `dist_ne`, `est_err`, and (when `lyapunov` is set) `V`.
    pub fn attach_diagnostics<S: Strategy + ?Sized>(
        &mut self,
        strategy: &S,
        ctx: &LyapunovContext,
        lyapunov: bool,
    ) -> Result<()> {
        if let Some(x_star) = &ctx.x_star {
            self.diagnostics.dist_ne = Some((0..self.len()).map(|k| inf_dist(self.x_at(k), x_star)).collect());
        }
        if strategy.kind().is_distributed() {
            self.diagnostics.est_err = self
                .states
                .iter()
                .map(|s| strategy.estimation_error(s))
                .collect::<Option<Vec<_>>>();
        }
        if lyapunov {
            let v = self
                .states
                .iter()
                .map(|s| strategy.lyapunov(s, ctx))
                .collect::<Result<Vec<_>>>()?;
            self.diagnostics.lyapunov = Some(v);
        }
        Ok(())
    }

    /// CSV with columns `t`, `x_i_d`, `nu_i_d`, `u_i_d`, then whichever of
    /// `V`, `dist_ne`, `est_err` were computed. Indices are 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (n, p, has_nu) = match self.layout {
            Some(l) => (l.n, l.p, l.nu().is_some()),
            None => (self.states.first().map_or(0, Vec::len), 1, false),
        };
        let mut header = vec!["t".to_string()];
        let coords = |prefix: &str| {
            (1..=n).flat_map(move |i| (1..=p).map(move |d| format!("{prefix}_{i}_{d}"))).collect::<Vec<_>>()
        };
        header.extend(coords("x"));
        if has_nu {
            header.extend(coords("nu"));
        }
        if !self.controls.is_empty() {
            header.extend(coords("u"));
        }
        let diag = [
            ("V", &self.diagnostics.lyapunov),
            ("dist_ne", &self.diagnostics.dist_ne),
            ("est_err", &self.diagnostics.est_err),
        ];
        for (name, series) in &diag {
            if series.is_some() {
                header.push(name.to_string());
            }
        }
        writeln!(w, "{}", header.join(","))?;
        let np = n * p;
        let mut row = String::new();
        for k in 0..self.len() {
            row.clear();
            push_num(&mut row, self.times[k]);
            let s = &self.states[k];
            let end = if has_nu { 2 * np } else { np };
            for v in &s[..end] {
                row.push(',');
                push_num(&mut row, *v);
            }
            if let Some(u) = self.controls.get(k) {
                for v in u {
                    row.push(',');
                    push_num(&mut row, *v);
                }
            }
            for (_, series) in &diag {
                if let Some(series) = series {
                    row.push(',');
                    push_num(&mut row, series[k]);
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

fn push_num(out: &mut String, v: f64) {
    use std::fmt::Write as _;
    // 17 significant digits round-trip every f64
    let _ = write!(out, "{v:.16e}");
}

fn inf_dist(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    scratch_u: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
            scratch_u: vec![0.0; m],
        }
    }
}

/// Advances `state` by one step; `k1` must already hold `F(state)`.
fn step<F: VectorField + ?Sized>(field: &F, integrator: Integrator, dt: f64, state: &mut [f64], ws: &mut Workspace) {
    match integrator {
        Integrator::Euler => {
            for (s, k) in state.iter_mut().zip(&ws.k1) {
                *s += dt * k;
            }
        }
        Integrator::Rk4 => {
            let half = 0.5 * dt;
            for ((t, s), k) in ws.tmp.iter_mut().zip(state.iter()).zip(&ws.k1) {
                *t = s + half * k;
            }
            field.eval(&ws.tmp, &mut ws.k2, &mut ws.scratch_u);
            for ((t, s), k) in ws.tmp.iter_mut().zip(state.iter()).zip(&ws.k2) {
                *t = s + half * k;
            }
            field.eval(&ws.tmp, &mut ws.k3, &mut ws.scratch_u);
            for ((t, s), k) in ws.tmp.iter_mut().zip(state.iter()).zip(&ws.k3) {
                *t = s + dt * k;
            }
            field.eval(&ws.tmp, &mut ws.k4, &mut ws.scratch_u);
            let sixth = dt / 6.0;
            for (i, s) in state.iter_mut().enumerate() {
                *s += sixth * (ws.k1[i] + 2.0 * (ws.k2[i] + ws.k3[i]) + ws.k4[i]);
            }
        }
    }
}

/// Integrates any vector field from `state0`. The recorded control at each
/// record is the one the field reports at that state.
pub fn integrate_field<F: VectorField + ?Sized>(field: &F, state0: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if state0.len() != field.state_len() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: field.state_len(),
            actual: state0.len(),
        });
    }
    if let Some(k) = state0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            step: 0,
            block: field.block_name(k),
        });
    }
    let n_steps = cfg.n_steps();
    let stride = cfg.record_stride;
    let capacity = n_steps / stride + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        controls: Vec::with_capacity(capacity),
        diagnostics: Diagnostics::default(),
        layout: None,
        integrator: cfg.integrator,
        dt: cfg.dt,
        guard_warning: None,
        metadata: Vec::new(),
    };
    let mut ws = Workspace::new(field.state_len(), field.control_len());
    let mut state = state0.to_vec();
    let mut u = vec![0.0; field.control_len()];
    for k in 0..n_steps {
        field.eval(&state, &mut ws.k1, &mut u);
        if k % stride == 0 {
            traj.times.push(k as f64 * cfg.dt);
            traj.states.push(state.clone());
            traj.controls.push(u.clone());
        }
        step(field, cfg.integrator, cfg.dt, &mut state, &mut ws);
        if let Some(idx) = state.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: k + 1,
                block: field.block_name(idx),
            });
        }
    }
    field.eval(&state, &mut ws.k1, &mut u);
    traj.times.push(cfg.t_end);
    traj.states.push(state);
    traj.controls.push(u);
    Ok(traj)
}

/// Integrates a strategy, checking the layout and applying the step guard.
pub fn integrate<S: Strategy + ?Sized>(strategy: &S, state0: &StrategyState, cfg: &SimConfig) -> Result<Trajectory> {
    let layout = strategy.layout();
    if state0.layout() != layout {
        return Err(Error::LayoutMismatch {
            strategy: layout.kind.name(),
            expected: layout.len(),
            actual: state0.as_slice().len(),
        });
    }
    let warning = cfg.guard(strategy.stiffness());
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let mut traj = integrate_field(strategy, state0.as_slice(), cfg)?;
    traj.layout = Some(layout);
    traj.guard_warning = warning;
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub converged: bool,
    /// Start of the final run of records within tolerance.
    pub t_hit: Option<f64>,
    pub final_error: f64,
}

/// Suffix criterion: `t_hit` is the earliest record after which every
/// record stays within `tol` of `x*` in the infinity norm.
pub fn detect_convergence(traj: &Trajectory, x_star: &[f64], tol: f64) -> Result<Convergence> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let x_star = DVector::from_column_slice(x_star);
    let mut first_in = None;
    for k in (0..traj.len()).rev() {
        if inf_dist(traj.x_at(k), &x_star) <= tol {
            first_in = Some(k);
        } else {
            break;
        }
    }
    Ok(Convergence {
        converged: first_in.is_some(),
        t_hit: first_in.map(|k| traj.times[k]),
        final_error: inf_dist(traj.x_at(traj.len() - 1), &x_star),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCheck {
    pub ok: bool,
    /// Largest exceedance of a bound, 0 when every record is inside.
    pub worst_violation: f64,
}

pub fn check_control_bounds(traj: &Trajectory, bounds: &Saturation) -> Result<ControlCheck> {
    if traj.controls.is_empty() || traj.controls.iter().all(Vec::is_empty) {
        return Err(Error::ControlsNotRecorded);
    }
    let mut worst = 0.0_f64;
    for u in &traj.controls {
        for (k, v) in u.iter().enumerate() {
            worst = worst.max(v - bounds.upper(k)).max(bounds.lower(k) - v);
        }
    }
    Ok(ControlCheck {
        ok: worst <= 0.0,
        worst_violation: worst.max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl LyapunovSeries {
    /// `max_k (V_{k+1} - V_k)`, or 0 when `V` never increases.
    pub fn max_increment(&self) -> f64 {
        self.max_increment_after(f64::NEG_INFINITY)
    }

    /// As [`Self::max_increment`] over records with `t >= t0`.
    pub fn max_increment_after(&self, t0: f64) -> f64 {
        self.values
            .windows(2)
            .zip(&self.times)
            .filter(|(_, t)| **t >= t0)
            .fold(0.0_f64, |acc, (w, _)| acc.max(w[1] - w[0]))
    }
}

/// Evaluates the strategy's Lyapunov candidate on every record.
pub fn monitor_lyapunov<S: Strategy + ?Sized>(
    traj: &Trajectory,
    strategy: &S,
    ctx: &LyapunovContext,
) -> Result<LyapunovSeries> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let values = traj
        .states
        .iter()
        .map(|s| strategy.lyapunov(s, ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovSeries {
        times: traj.times.clone(),
        values,
    })
}

/// Runs independent jobs in parallel; results come back in job order.
pub fn run_sweep<J, R, F>(jobs: &[J], run: F) -> Vec<R>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> R + Sync,
{
    jobs.par_iter().map(|j| run(j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::QuadraticGame;
    use crate::strategy::SatGradientPlay;
    use std::sync::Arc;

    struct Decay;

    impl VectorField for Decay {
        fn state_len(&self) -> usize {
            1
        }
        fn control_len(&self) -> usize {
            1
        }
        fn eval(&self, s: &[f64], d: &mut [f64], u: &mut [f64]) {
            d[0] = -s[0];
            u[0] = -s[0];
        }
    }

    struct Blowup;

    impl VectorField for Blowup {
        fn state_len(&self) -> usize {
            2
        }
        fn control_len(&self) -> usize {
            0
        }
        fn eval(&self, s: &[f64], d: &mut [f64], _u: &mut [f64]) {
            d[0] = 0.0;
            d[1] = s[1] * s[1];
        }
        fn block_name(&self, index: usize) -> &'static str {
            ["x", "y"][index]
        }
    }

    fn rk4_amplification(h: f64) -> f64 {
        1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0
    }

    #[test]
    fn rk4_on_exponential_decay() {
        let traj = integrate_field(&Decay, &[1.0], &SimConfig::new(0.1, 1.0)).unwrap();
        let x1 = traj.final_state()[0];
        // exactly ten applications of the RK4 amplification factor
        assert!((x1 - rk4_amplification(0.1).powi(10)).abs() < 1e-15);
        assert!((x1 - (-1.0f64).exp()).abs() < 5e-7);
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.times[10], 1.0);
    }

    #[test]
    fn euler_on_exponential_decay() {
        let cfg = SimConfig::new(0.1, 1.0).with_integrator(Integrator::Euler);
        let traj = integrate_field(&Decay, &[1.0], &cfg).unwrap();
        assert!((traj.final_state()[0] - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn records_start_and_end_with_stride() {
        let cfg = SimConfig::new(0.1, 1.0).with_stride(3);
        let traj = integrate_field(&Decay, &[1.0], &cfg).unwrap();
        let expected = [0.0, 0.3, 0.6, 0.9, 1.0];
        assert_eq!(traj.len(), expected.len());
        for (t, e) in traj.times.iter().zip(expected) {
            assert!((t - e).abs() < 1e-12);
        }
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.controls[0], vec![-1.0]);
    }

    #[test]
    fn non_finite_state_aborts_with_block() {
        let err = integrate_field(&Blowup, &[0.0, 1.0], &SimConfig::new(0.5, 10.0)).unwrap_err();
        match err {
            Error::NonFinite { step, block } => {
                assert_eq!(block, "y");
                assert!(step > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 1.0).validate().is_err());
        assert!(SimConfig::new(2.0, 1.0).validate().is_err());
        assert!(SimConfig::new(0.3, 1.0).validate().is_err());
        assert!(SimConfig::new(0.1, 1.0).with_stride(0).validate().is_err());
        assert!(SimConfig::new(1e-4, 20.0).validate().is_ok());
        assert_eq!(SimConfig::new(1e-4, 20.0).n_steps(), 200_000);
    }

    #[test]
    fn guard_warns_on_stiff_steps() {
        let cfg = SimConfig::new(1e-3, 1.0);
        assert!(cfg.guard(2000.0).is_none());
        assert!(cfg.guard(3000.0).unwrap().contains("guard"));
        let euler = cfg.clone().with_integrator(Integrator::Euler);
        assert!(euler.guard(2000.0).is_some());
    }

    fn fake(xs: &[f64]) -> Trajectory {
        Trajectory {
            times: (0..xs.len()).map(|k| k as f64).collect(),
            states: xs.iter().map(|x| vec![*x]).collect(),
            controls: Vec::new(),
            diagnostics: Diagnostics::default(),
            layout: None,
            integrator: Integrator::Rk4,
            dt: 1.0,
            guard_warning: None,
            metadata: Vec::new(),
        }
    }

    #[test]
    fn convergence_suffix_criterion() {
        let c = detect_convergence(&fake(&[0.0, 0.0, 0.0]), &[0.0], 1e-3).unwrap();
        assert_eq!(c.t_hit, Some(0.0));
        let c = detect_convergence(&fake(&[5.0, 0.0, 2.0, 1e-4, 0.0]), &[0.0], 1e-3).unwrap();
        assert!(c.converged);
        assert_eq!(c.t_hit, Some(3.0));
        let c = detect_convergence(&fake(&[0.0, 1.0]), &[0.0], 1e-3).unwrap();
        assert!(!c.converged);
        assert_eq!(c.final_error, 1.0);
        assert_eq!(detect_convergence(&fake(&[]), &[0.0], 1.0).unwrap_err(), Error::EmptyTrajectory);
    }

    #[test]
    fn control_bounds_need_controls() {
        let s = Saturation::symmetric(1.0).unwrap();
        assert_eq!(check_control_bounds(&fake(&[1.0]), &s).unwrap_err(), Error::ControlsNotRecorded);
        let mut t = fake(&[1.0, 2.0]);
        t.controls = vec![vec![0.5], vec![-1.25]];
        let c = check_control_bounds(&t, &s).unwrap();
        assert!(!c.ok);
        assert!((c.worst_violation - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_increment() {
        let s = LyapunovSeries {
            times: vec![0.0, 1.0, 2.0, 3.0],
            values: vec![3.0, 2.0, 2.5, 1.0],
        };
        assert_eq!(s.max_increment(), 0.5);
        assert_eq!(s.max_increment_after(2.0), 0.0);
    }

    #[test]
    fn csv_layout() {
        let game = Arc::new(QuadraticGame::sensor_network());
        let s = SatGradientPlay::new(game, Saturation::symmetric(5.0).unwrap()).unwrap();
        let x0 = StrategyState::from_vec(s.layout(), vec![10.0, 0.0, 0.0, 5.0, 0.0, 0.0]).unwrap();
        let traj = integrate(&s, &x0, &SimConfig::new(0.01, 0.02)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,x_1_1,x_1_2,x_2_1,x_2_2,x_3_1,x_3_2,u_1_1,u_1_2,u_2_1,u_2_2,u_3_1,u_3_2"
        );
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(&first[7..], &[-5.0, 5.0, 5.0, -5.0, 4.0, 5.0]);
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn sweep_preserves_order() {
        let jobs: Vec<f64> = (1..=8).map(f64::from).collect();
        let out = run_sweep(&jobs, |x0| {
            integrate_field(&Decay, &[*x0], &SimConfig::new(0.1, 1.0)).unwrap().final_state()[0]
        });
        for (x0, x1) in jobs.iter().zip(out) {
            let serial = integrate_field(&Decay, &[*x0], &SimConfig::new(0.1, 1.0)).unwrap();
            assert_eq!(x1, serial.final_state()[0]);
        }
    }
}
