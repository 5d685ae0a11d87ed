//! IMEX time stepping: Crank-Nicolson on the radial Laplacian, Heun on the
//! singular nonlinearity, step doubling for error control.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::functionals::{energy, h1_norm_sq, FunctionalReport};
use crate::grid::{l2_norm_sq, ProblemParams, RadialField, RadialGrid};
use crate::ops::RadialOperator;
use crate::spectral::{hankel_transform, inverse_hankel};

pub const MAX_SNAPSHOTS: usize = 128;
const RECENT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// Multiplier on the initial H1 norm that signals blowup.
    pub blowup_threshold: f64,
    /// Fraction of the initial H1 norm below which a run may be called dissipative.
    pub dissipation_threshold: f64,
    pub record_stride: usize,
    pub safety: f64,
    /// Relative sup-norm tolerance of the step-doubling estimate.
    pub tolerance: f64,
    /// Fixed steps of dt_init when false.
    pub adaptive: bool,
    /// Records between stored field snapshots; 0 stores only the end points.
    pub snapshot_stride: usize,
    /// Test hook: turn the nonlinearity off.
    pub nonlinear: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_init: 1e-4,
            dt_min: 1e-13,
            dt_max: 20.0,
            t_end: 100.0,
            blowup_threshold: 1e3,
            dissipation_threshold: 1e-3,
            record_stride: 1,
            safety: 0.9,
            tolerance: 1e-6,
            adaptive: true,
            snapshot_stride: 0,
            nonlinear: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(&format!("solver.{name}"), format!("{v} must be positive")))
            }
        };
        pos("dt_init", self.dt_init)?;
        pos("dt_min", self.dt_min)?;
        pos("dt_max", self.dt_max)?;
        pos("t_end", self.t_end)?;
        pos("blowup_threshold", self.blowup_threshold)?;
        pos("dissipation_threshold", self.dissipation_threshold)?;
        pos("tolerance", self.tolerance)?;
        if !(self.dt_min < self.dt_init && self.dt_init <= self.dt_max) {
            return Err(invalid("solver.dt_init", "need dt_min < dt_init <= dt_max"));
        }
        if self.record_stride == 0 {
            return Err(invalid("solver.record_stride", "must be at least 1"));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(invalid("solver.safety", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Dissipative,
    Blowup { t_detect: f64 },
    Undecided,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Dissipative => "dissipative",
            Outcome::Blowup { .. } => "blowup",
            Outcome::Undecided => "undecided",
        }
    }

    pub fn t_detect(&self) -> Option<f64> {
        match self {
            Outcome::Blowup { t_detect } => Some(*t_detect),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ProblemParams,
    pub grid: Arc<RadialGrid>,
    pub config: SolverConfig,
    pub times: Vec<f64>,
    pub dts: Vec<f64>,
    pub reports: Vec<FunctionalReport>,
    pub outcome: Outcome,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub snapshots: Vec<Snapshot>,
    /// H1 seminorm squared after each of the last accepted steps.
    pub recent_h1: Vec<f64>,
    pub final_state: RadialField,
    pub diagnostic: Option<String>,
}

impl Trajectory {
    pub fn h1_series(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.h1_sq).collect()
    }

    pub fn snapshot_field(&self, s: &Snapshot) -> RadialField {
        RadialField {
            grid: self.grid.clone(),
            values: s.values.clone(),
        }
    }

    /// Trajectory carrying only an H1 history, for exercising the fits.
    /// Other report entries are zero; the outcome is undecided.
    pub fn from_h1_series(
        params: &ProblemParams,
        grid: Arc<RadialGrid>,
        times: Vec<f64>,
        h1: Vec<f64>,
    ) -> Result<Trajectory> {
        if times.len() != h1.len() || times.is_empty() {
            return Err(invalid("times", "times and h1 must have the same nonzero length"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("times", "must be strictly increasing"));
        }
        let reports = h1
            .iter()
            .map(|&h| FunctionalReport {
                h1_sq: h,
                l2_sq: 0.0,
                lqc: 0.0,
                hs_term: 0.0,
                energy: 0.0,
                nehari: 0.0,
            })
            .collect();
        Ok(Trajectory {
            params: *params,
            final_state: RadialField::zeros(grid.clone()),
            grid,
            config: SolverConfig {
                t_end: *times.last().unwrap(),
                ..SolverConfig::default()
            },
            dts: vec![0.0; times.len()],
            times,
            reports,
            outcome: Outcome::Undecided,
            steps_accepted: 0,
            steps_rejected: 0,
            snapshots: Vec::new(),
            recent_h1: Vec::new(),
            diagnostic: None,
        })
    }

    /// Snapshot whose time matches t to within a relative 1e-9.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

struct Stepper {
    op: RadialOperator,
    nonlinear: bool,
    su: Vec<f64>,
    rhs: Vec<f64>,
    star: Vec<f64>,
    n_star: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    fn new(params: &ProblemParams, grid: &RadialGrid, nonlinear: bool) -> Self {
        let n = grid.n;
        Stepper {
            op: RadialOperator::new(params, grid),
            nonlinear,
            su: vec![0.0; n],
            rhs: vec![0.0; n],
            star: vec![0.0; n],
            n_star: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    fn nonlinearity(&self, u: &[f64], out: &mut [f64]) {
        if self.nonlinear {
            self.op.nonlinearity(u, out);
        } else {
            out.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// One CN step with a Heun predictor-corrector for N; `nu` = N(u).
    fn advance(&mut self, u: &[f64], nu: &[f64], dt: f64, out: &mut [f64]) -> bool {
        let n = u.len();
        let op = &self.op;
        let theta = op.mass_shift();
        op.stiffness(u, &mut self.su);
        // rhs holds M u - (dt/2) S u.
        for j in 0..n {
            self.rhs[j] = op.vol[j] * u[j] - (theta + 0.5 * dt) * self.su[j];
        }
        for j in 0..n {
            self.star[j] = self.rhs[j] + dt * op.vol[j] * nu[j];
        }
        let shift = 0.5 * dt - theta;
        if !op.solve_shifted(shift, &mut self.star, &mut self.scratch) {
            return false;
        }
        if self.nonlinear {
            op.nonlinearity(&self.star, &mut self.n_star);
            for j in 0..n {
                out[j] = self.rhs[j] + 0.5 * dt * op.vol[j] * (nu[j] + self.n_star[j]);
            }
        } else {
            out.copy_from_slice(&self.star);
            return out.iter().all(|v| v.is_finite());
        }
        if !op.solve_shifted(shift, out, &mut self.scratch) {
            return false;
        }
        out.iter().all(|v| v.is_finite())
    }
}

/// One IMEX step of size dt.
pub fn step(u: &RadialField, dt: f64, params: &ProblemParams) -> Result<RadialField> {
    step_with(u, dt, params, true)
}

/// `nonlinear = false` gives the pure heat step.
pub fn step_with(u: &RadialField, dt: f64, params: &ProblemParams, nonlinear: bool) -> Result<RadialField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    u.check_finite()?;
    let mut st = Stepper::new(params, &u.grid, nonlinear);
    let mut nu = vec![0.0; u.grid.n];
    st.nonlinearity(&u.values, &mut nu);
    let mut out = vec![0.0; u.grid.n];
    if !st.advance(&u.values, &nu, dt, &mut out) {
        if out.iter().all(|v| v.is_finite()) {
            return Err(LabError::SingularSystem { row: 0 });
        }
        return Err(LabError::Numerical("non-finite value after step (blowup in progress)".into()));
    }
    RadialField::new(u.grid.clone(), out)
}

fn rel_sup_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        num = num.max((x - y).abs());
        den = den.max(y.abs());
    }
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn run(u0: &RadialField, params: &ProblemParams, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    u0.check_finite()?;
    if u0.grid.d != params.d {
        return Err(LabError::GridMismatch("initial data and params disagree on d".into()));
    }
    let grid = u0.grid.clone();
    let n = grid.n;
    let mut st = Stepper::new(params, &grid, config.nonlinear);
    let mut traj = Trajectory {
        params: *params,
        grid: grid.clone(),
        config: *config,
        times: Vec::new(),
        dts: Vec::new(),
        reports: Vec::new(),
        outcome: Outcome::Undecided,
        steps_accepted: 0,
        steps_rejected: 0,
        snapshots: Vec::new(),
        recent_h1: Vec::new(),
        final_state: u0.clone(),
        diagnostic: None,
    };
    let mut snap_stride = config.snapshot_stride;
    let mut records = 0usize;
    let mut record = |traj: &mut Trajectory, t: f64, dt: f64, u: &[f64], force_snap: bool| -> Result<()> {
        let f = RadialField {
            grid: grid.clone(),
            values: u.to_vec(),
        };
        traj.times.push(t);
        traj.dts.push(dt);
        traj.reports.push(energy(&f, params)?);
        let want = force_snap || (snap_stride > 0 && records % snap_stride == 0);
        records += 1;
        if want {
            if traj.snapshots.len() >= MAX_SNAPSHOTS {
                let kept: Vec<Snapshot> = traj
                    .snapshots
                    .drain(..)
                    .enumerate()
                    .filter(|(i, _)| i % 2 == 0)
                    .map(|(_, s)| s)
                    .collect();
                traj.snapshots = kept;
                snap_stride = (snap_stride * 2).max(1);
            }
            traj.snapshots.push(Snapshot {
                t,
                values: u.to_vec(),
            });
        }
        Ok(())
    };

    let mut u = u0.values.clone();
    let h1_0 = h1_norm_sq(u0)?;
    record(&mut traj, 0.0, 0.0, &u, true)?;
    if h1_0 == 0.0 {
        traj.outcome = Outcome::Dissipative;
        return Ok(traj);
    }
    let norm0 = h1_0.sqrt();

    let mut t = 0.0;
    let mut dt = config.dt_init;
    let mut nu = vec![0.0; n];
    let mut big = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut nhalf = vec![0.0; n];
    let mut fine = vec![0.0; n];
    let mut since_record = 0usize;
    let mut last_recorded_t = 0.0;

    while t < config.t_end * (1.0 - 1e-14) {
        let remaining = config.t_end - t;
        let dt_try = if remaining < dt * (1.0 + 1e-9) { remaining } else { dt };
        st.nonlinearity(&u, &mut nu);

        let accepted;
        if config.adaptive {
            let ok_big = st.advance(&u, &nu, dt_try, &mut big);
            let ok_half = ok_big && st.advance(&u, &nu, 0.5 * dt_try, &mut half);
            let ok_fine = ok_half && {
                st.nonlinearity(&half, &mut nhalf);
                st.advance(&half, &nhalf, 0.5 * dt_try, &mut fine)
            };
            if !ok_fine {
                traj.steps_rejected += 1;
                dt = dt_try * 0.25;
                accepted = false;
            } else {
                let err = rel_sup_diff(&big, &fine);
                let factor = if err > 0.0 {
                    config.safety * (config.tolerance / err).powf(1.0 / 3.0)
                } else {
                    5.0
                };
                if err <= config.tolerance {
                    std::mem::swap(&mut u, &mut fine);
                    accepted = true;
                    dt = (dt_try * factor.clamp(0.2, 5.0)).min(config.dt_max);
                    if remaining < dt_try * (1.0 + 1e-9) {
                        t = config.t_end;
                    } else {
                        t += dt_try;
                    }
                } else {
                    traj.steps_rejected += 1;
                    dt = dt_try * factor.clamp(0.1, 0.9);
                    accepted = false;
                }
            }
        } else {
            if !st.advance(&u, &nu, dt_try, &mut big) {
                traj.outcome = Outcome::Blowup { t_detect: t };
                traj.diagnostic = Some("non-finite state in fixed-step mode".into());
                break;
            }
            std::mem::swap(&mut u, &mut big);
            accepted = true;
            t = if remaining < dt_try * (1.0 + 1e-9) { config.t_end } else { t + dt_try };
        }

        if !accepted {
            if dt < config.dt_min {
                let growing = traj.recent_h1.len() >= 2
                    && traj.recent_h1.windows(2).all(|w| w[1] > w[0]);
                if growing {
                    traj.outcome = Outcome::Blowup { t_detect: t };
                    traj.diagnostic = Some(format!("step size collapsed below dt_min = {:e} while the H1 norm grew", config.dt_min));
                } else {
                    traj.outcome = Outcome::Undecided;
                    traj.diagnostic = Some(format!("step size fell below dt_min = {:e} without norm growth", config.dt_min));
                }
                break;
            }
            continue;
        }

        traj.steps_accepted += 1;
        let f = RadialField {
            grid: grid.clone(),
            values: u.clone(),
        };
        let h1 = h1_norm_sq(&f)?;
        traj.recent_h1.push(h1);
        if traj.recent_h1.len() > RECENT {
            traj.recent_h1.remove(0);
        }
        since_record += 1;

        if h1.sqrt() > config.blowup_threshold * norm0 {
            record(&mut traj, t, dt_try, &u, true)?;
            traj.outcome = Outcome::Blowup { t_detect: t };
            break;
        }
        let at_end = t >= config.t_end;
        if since_record >= config.record_stride || at_end {
            since_record = 0;
            record(&mut traj, t, dt_try, &u, at_end)?;
            last_recorded_t = t;
            if h1.sqrt() < config.dissipation_threshold * norm0 && tail_nonincreasing(&traj) {
                traj.outcome = Outcome::Dissipative;
                if traj.snapshots.last().map(|s| s.t) != Some(t) {
                    traj.snapshots.push(Snapshot { t, values: u.clone() });
                }
                break;
            }
        }
    }
    if last_recorded_t < t && traj.times.last() != Some(&t) {
        record(&mut traj, t, dt, &u, true)?;
    }
    if traj.outcome == Outcome::Undecided && traj.diagnostic.is_none() {
        traj.diagnostic = Some(format!("horizon t_end = {} reached without classification", config.t_end));
    }
    traj.final_state = RadialField::new(grid.clone(), u)?;
    Ok(traj)
}

/// H1 nonincreasing over the recorded times in [t_last / 10, t_last].
fn tail_nonincreasing(traj: &Trajectory) -> bool {
    let t_last = *traj.times.last().unwrap_or(&0.0);
    let start = traj.times.partition_point(|&t| t < t_last / 10.0);
    let h: Vec<f64> = traj.reports[start..].iter().map(|r| r.h1_sq).collect();
    h.len() >= 2 && h.windows(2).all(|w| w[1] <= w[0])
}

/// Count and size of H1-norm increases after the norm first halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest relative increase of the norm between consecutive records.
    pub max_increase: f64,
}

pub fn lyapunov_check(traj: &Trajectory) -> LyapunovReport {
    let h = traj.h1_series();
    let mut rep = LyapunovReport {
        checked: 0,
        violations: 0,
        max_increase: 0.0,
    };
    let Some(&h0) = h.first() else { return rep };
    let Some(start) = h.iter().position(|&x| x.sqrt() < 0.5 * h0.sqrt()) else {
        return rep;
    };
    for w in h[start..].windows(2) {
        rep.checked += 1;
        if w[1] > w[0] {
            rep.violations += 1;
            rep.max_increase = rep.max_increase.max(w[1].sqrt() / w[0].sqrt() - 1.0);
        }
    }
    rep
}

fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// Residual of the H1 energy identity between snapshots at t1 and t2,
/// relative to the H1 norm squared at t1.
pub fn energy_balance_residual(traj: &Trajectory, t1: f64, t2: f64) -> Result<f64> {
    let snaps: Vec<&Snapshot> = traj
        .snapshots
        .iter()
        .filter(|s| s.t >= t1 - 1e-12 && s.t <= t2 + 1e-12)
        .collect();
    if snaps.len() < 2 {
        return Err(LabError::Insufficient(format!(
            "{} snapshots in [{t1}, {t2}]; need at least 2",
            snaps.len()
        )));
    }
    let op = RadialOperator::new(&traj.params, &traj.grid);
    let n = traj.grid.n;
    let mut nu = vec![0.0; n];
    let mut ts = Vec::new();
    let mut diss = Vec::new();
    let mut prod = Vec::new();
    for s in &snaps {
        if traj.config.nonlinear {
            op.nonlinearity(&s.values, &mut nu);
        }
        let (a, b) = op.energy_rates(&s.values, &nu);
        ts.push(s.t);
        diss.push(a);
        prod.push(b);
    }
    let h_start = op.dirichlet_form(&snaps[0].values);
    let h_end = op.dirichlet_form(&snaps[snaps.len() - 1].values);
    let res = h_end + 2.0 * trapezoid(&ts, &diss) - h_start - 2.0 * trapezoid(&ts, &prod);
    Ok(res.abs() / h_start)
}

/// Pointwise r^{-gamma} |u|^{p-2} u.
pub fn nonlinear_term(u: &RadialField, params: &ProblemParams) -> RadialField {
    let e = params.p_star - 1.0;
    u.map(|r, v| r.powf(-params.gamma) * v.signum() * v.abs().powf(e))
}

/// Weights of the left and right end values for int_0^1 e^{-z(1-s)} (linear in s) ds.
fn linear_heat_weights(z: f64) -> (f64, f64) {
    if z < 1e-3 {
        (0.5 - z / 3.0 + z * z / 8.0, 0.5 - z / 6.0 + z * z / 24.0)
    } else {
        let e = (-z).exp();
        let a = (1.0 - e) / (z * z);
        (a - e / z, 1.0 / z - a)
    }
}

/// L2-relative residual of the mild formulation at time t.
pub fn duhamel_residual(traj: &Trajectory, u0: &RadialField, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let end = traj
        .snapshot_at(t)
        .ok_or_else(|| LabError::Insufficient(format!("no snapshot at t = {t}")))?;
    let snaps: Vec<&Snapshot> = traj.snapshots.iter().filter(|s| s.t <= end.t).collect();
    if snaps.len() < 2 || snaps[0].t != 0.0 {
        return Err(LabError::Insufficient("snapshots must cover [0, t]".into()));
    }
    let mut total = hankel_transform(u0)?.multiply(|rho| (-t * rho * rho).exp());
    if traj.config.nonlinear {
        // Product trapezoid: the nonlinearity is linear between snapshots and the
        // heat factor is integrated exactly, so stiff frequencies stay damped.
        let nls = snaps
            .iter()
            .map(|s| hankel_transform(&nonlinear_term(&traj.snapshot_field(s), &traj.params)))
            .collect::<Result<Vec<_>>>()?;
        let freqs = &nls[0].frequencies;
        for k in 0..snaps.len() - 1 {
            let (a, b) = (snaps[k].t, snaps[k + 1].t);
            let h = b - a;
            for (j, &rho) in freqs.iter().enumerate() {
                let x = rho * rho;
                let (w0, w1) = linear_heat_weights(h * x);
                let damp = (-(t - b) * x).exp() * h;
                total.values[j] += damp * (w0 * nls[k].values[j] + w1 * nls[k + 1].values[j]);
            }
        }
    }
    let mild = inverse_hankel(&total, &traj.grid)?;
    let ut = traj.snapshot_field(end);
    let diff = RadialField {
        grid: traj.grid.clone(),
        values: ut.values.iter().zip(&mild.values).map(|(a, b)| a - b).collect(),
    };
    Ok((l2_norm_sq(&diff) / l2_norm_sq(&ut)).sqrt())
}
