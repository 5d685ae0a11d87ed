//! Rate prediction, decay-exponent fitting, the Fourier splitting diagnostic
//! and the weighted-norm dissipation criterion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::{lq_norm, ProblemParams, RadialField};
use crate::ops::RadialOperator;
use crate::solver::{Outcome, Trajectory};
use crate::spectral::{hankel_transform_on, lowfreq_h1_mass, FrequencyGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    LineFit {
        slope,
        intercept,
        rms: (ss / n).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Algebraic,
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapCase {
    #[serde(rename = "ratio_gt_1")]
    RatioGt1,
    #[serde(rename = "ratio_eq_1")]
    RatioEq1,
    #[serde(rename = "ratio_lt_1")]
    RatioLt1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePrediction {
    pub regime: Regime,
    /// Algebraic: power of (1+t). Logarithmic: power of ln(e+t).
    pub exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_power: Option<f64>,
    pub bootstrap_case: BootstrapCase,
    pub q_star: Option<f64>,
}

const RATIO_EPS: f64 = 1e-12;

pub fn bootstrap_case(params: &ProblemParams) -> BootstrapCase {
    let x = params.bootstrap_ratio - 1.0;
    if x > RATIO_EPS {
        BootstrapCase::RatioGt1
    } else if x < -RATIO_EPS {
        BootstrapCase::RatioLt1
    } else {
        BootstrapCase::RatioEq1
    }
}

/// Upper decay rate of ||u(t)||^2_{H1} for dissipative solutions.
pub fn rate_predictor(params: &ProblemParams, q_star: Option<f64>) -> Result<RatePrediction> {
    if params.d < 5 {
        return Err(invalid("params.d", format!("the decay theorem needs d >= 5, got {}", params.d)));
    }
    if let Some(q) = q_star {
        if !(q > -(params.d as f64) / 2.0) {
            return Err(invalid("q_star", format!("q_star = {q} must exceed -d/2")));
        }
    }
    let case = bootstrap_case(params);
    if case == BootstrapCase::RatioLt1 {
        return Ok(RatePrediction {
            regime: Regime::Logarithmic,
            exponent: 2.0,
            log_power: Some(2.0),
            bootstrap_case: case,
            q_star,
        });
    }
    let q = q_star.ok_or_else(|| invalid("q_star", "the algebraic regime needs q_star"))?;
    Ok(RatePrediction {
        regime: Regime::Algebraic,
        exponent: (params.d as f64 / 2.0 + q).min(1.0),
        log_power: None,
        bootstrap_case: case,
        q_star,
    })
}

/// Fit window in time; `offset` is the shift in log(offset + t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitWindow {
    pub t_lo: f64,
    pub t_hi: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_offset() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    pub fitted_exponent: f64,
    pub fit_window: (f64, f64),
    pub time_offset: f64,
    pub fit_residual: f64,
    pub prediction: RatePrediction,
    pub bound_satisfied: bool,
    pub log_fit_exponent: Option<f64>,
}

pub const MIN_FIT_SAMPLES: usize = 16;

/// Power-law exponent of a series against log(offset + t).
pub fn fit_power(ts: &[f64], hs: &[f64], offset: f64) -> Result<LineFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &h) in ts.iter().zip(hs) {
        if h > 0.0 && offset + t > 0.0 {
            xs.push((offset + t).ln());
            ys.push(h.ln());
        }
    }
    if xs.len() < 2 {
        return Err(LabError::Insufficient("need two positive samples".into()));
    }
    Ok(least_squares(&xs, &ys))
}

fn ln_e(t: f64) -> f64 {
    (std::f64::consts::E + t).ln()
}

/// Bound h(t) <= C rate(t), C calibrated at the first sample.
pub fn bound_holds(ts: &[f64], hs: &[f64], rate: impl Fn(f64) -> f64) -> bool {
    let c = hs[0] / rate(ts[0]);
    ts.iter()
        .zip(hs)
        .all(|(&t, &h)| h <= c * rate(t) * (1.0 + 1e-9))
}

pub fn fit_decay_exponent(
    traj: &Trajectory,
    window: Option<FitWindow>,
    prediction: &RatePrediction,
) -> Result<DecayReport> {
    if let Outcome::Blowup { .. } = traj.outcome {
        return Err(invalid("trajectory", "decay fits need a run that did not blow up"));
    }
    let t_end = *traj.times.last().unwrap_or(&0.0);
    let w = window.unwrap_or(FitWindow {
        t_lo: t_end / 10.0,
        t_hi: t_end,
        offset: 1.0,
    });
    if !(w.t_lo < w.t_hi) || w.t_hi > t_end * (1.0 + 1e-12) || w.t_lo < 0.0 {
        return Err(invalid("fit_window", format!("({}, {}) is not inside the recorded range", w.t_lo, w.t_hi)));
    }
    let idx: Vec<usize> = (0..traj.times.len())
        .filter(|&i| traj.times[i] >= w.t_lo * (1.0 - 1e-12) && traj.times[i] <= w.t_hi * (1.0 + 1e-12))
        .collect();
    if idx.len() < MIN_FIT_SAMPLES {
        return Err(LabError::Insufficient(format!(
            "{} samples in the fit window; need {MIN_FIT_SAMPLES}",
            idx.len()
        )));
    }
    let ts: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
    let hs: Vec<f64> = idx.iter().map(|&i| traj.reports[i].h1_sq).collect();
    let fit = fit_power(&ts, &hs, w.offset)?;
    let (bound, log_fit) = match prediction.regime {
        Regime::Algebraic => {
            let a = prediction.exponent;
            (bound_holds(&ts, &hs, |t| (1.0 + t).powf(-a)), None)
        }
        Regime::Logarithmic => {
            let xs: Vec<f64> = ts.iter().map(|&t| ln_e(t).ln()).collect();
            let ys: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
            let lf = least_squares(&xs, &ys);
            (bound_holds(&ts, &hs, |t| ln_e(t).powi(-2)), Some(-lf.slope))
        }
    };
    Ok(DecayReport {
        fitted_exponent: -fit.slope,
        fit_window: (w.t_lo, w.t_hi),
        time_offset: w.offset,
        fit_residual: fit.rms,
        prediction: *prediction,
        bound_satisfied: bound,
        log_fit_exponent: log_fit,
    })
}

/// h(t) ln(e+t)^2 over [t_lo, t_end]: the preliminary logarithmic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogBoundReport {
    pub start_value: f64,
    pub max_value: f64,
    pub holds: bool,
}

pub fn preliminary_decay_check(traj: &Trajectory, t_lo: f64, factor: f64) -> Result<LogBoundReport> {
    let vals: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.reports)
        .filter(|(t, _)| **t >= t_lo)
        .map(|(&t, r)| r.h1_sq * ln_e(t).powi(2))
        .collect();
    if vals.len() < 2 {
        return Err(LabError::Insufficient("fewer than two records after t_lo".into()));
    }
    let max_value = vals.iter().cloned().fold(f64::MIN, f64::max);
    Ok(LogBoundReport {
        start_value: vals[0],
        max_value,
        holds: max_value <= factor * vals[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplittingReport {
    pub m: f64,
    pub c_tilde: f64,
    pub kappa_min: f64,
    pub rows: Vec<SplitRow>,
    /// Every interval has slack >= -tolerance * local scale.
    pub holds: bool,
    pub worst_relative_slack: f64,
    /// The H1 norm did not decay, so the splitting argument does not apply.
    pub degenerate: bool,
}

pub const SPLITTING_TOL: f64 = 1e-3;

/// Ball radius with r(t)^2 = g'(t) / (C g(t)), g = (1+t)^m.
pub fn splitting_radius(t: f64, m: f64, c_tilde: f64) -> f64 {
    (m / (c_tilde * (1.0 + t))).sqrt()
}

/// Discrete form of d/dt(g h) <= g' int_{B(t)} |xi|^2 |u_hat|^2 with g = (1+t)^m.
pub fn fourier_splitting_check(traj: &Trajectory, m: f64) -> Result<SplittingReport> {
    if !(m > 0.0) {
        return Err(invalid("splitting_m", "m must be positive"));
    }
    let snaps = &traj.snapshots;
    if snaps.len() < 2 {
        return Err(LabError::Insufficient("splitting check needs at least two snapshots".into()));
    }
    let params = &traj.params;
    let op = RadialOperator::new(params, &traj.grid);
    let n = traj.grid.n;
    let mut nu = vec![0.0; n];
    let mut kappa_min = f64::INFINITY;
    let mut hs = Vec::with_capacity(snaps.len());
    for s in snaps {
        if traj.config.nonlinear {
            op.nonlinearity(&s.values, &mut nu);
        }
        let (d, p) = op.energy_rates(&s.values, &nu);
        if d > 0.0 {
            kappa_min = kappa_min.min(2.0 * (1.0 - p / d));
        }
        hs.push(crate::functionals::h1_norm_sq(&traj.snapshot_field(s))?);
    }
    let c_tilde = kappa_min.clamp(1.0, 2.0);
    let g = |t: f64| (1.0 + t).powf(m);
    let gp = |t: f64| m * (1.0 + t).powf(m - 1.0);
    let radius = |t: f64| splitting_radius(t, m, c_tilde);

    let t_last = snaps[snaps.len() - 1].t;
    let r_min = radius(t_last);
    let r_top = radius(snaps[0].t);
    let spacing = (std::f64::consts::PI / traj.grid.r_max).min(r_min / 32.0);
    let freq = FrequencyGrid::new(spacing, (r_top / spacing).ceil() as usize + 1)?;
    let mut mass = Vec::with_capacity(snaps.len());
    for s in snaps {
        let sp = hankel_transform_on(&traj.snapshot_field(s), &freq)?;
        mass.push(lowfreq_h1_mass(&sp, radius(s.t))?);
    }

    let mut rows = Vec::with_capacity(snaps.len() - 1);
    let mut holds = true;
    let mut worst = f64::INFINITY;
    for i in 0..snaps.len() - 1 {
        let (t0, t1) = (snaps[i].t, snaps[i + 1].t);
        let lhs = g(t1) * hs[i + 1] - g(t0) * hs[i];
        let rhs = 0.5 * (t1 - t0) * (gp(t0) * mass[i] + gp(t1) * mass[i + 1]);
        let slack = rhs - lhs;
        let scale = (g(t1) * hs[i + 1]).max(g(t0) * hs[i]);
        let rel = slack / scale;
        worst = worst.min(rel);
        if rel < -SPLITTING_TOL {
            holds = false;
        }
        rows.push(SplitRow { t: t1, lhs, rhs, slack });
    }
    let degenerate = hs[hs.len() - 1] >= 0.99 * hs[0];
    Ok(SplittingReport {
        m,
        c_tilde,
        kappa_min,
        rows,
        holds,
        worst_relative_slack: worst,
        degenerate,
    })
}

/// ||e^{t Delta} Lambda u0||^2 on the given times.
pub fn linear_part_decay(u0: &RadialField, times: &[f64]) -> Result<Vec<f64>> {
    u0.check_finite()?;
    if times.iter().any(|&t| !(t >= 0.0)) {
        return Err(invalid("t_grid", "times must be nonnegative"));
    }
    let g = &u0.grid;
    let freq = FrequencyGrid::oversampled(g, 4, std::f64::consts::PI / g.dr);
    let s = hankel_transform_on(u0, &freq)?;
    let sigma = g.surface_area;
    Ok(times
        .iter()
        .map(|&t| {
            s.values
                .iter()
                .zip(&s.frequencies)
                .map(|(v, &rho)| {
                    sigma * (-2.0 * t * rho * rho).exp() * rho * rho * v * v
                        * rho.powi(g.d as i32 - 1)
                        * s.spacing
                })
                .sum()
        })
        .collect())
}

/// The open window 1/q_c - 1/(d (p_star - 1)) < 1/q < 1/q_c.
pub fn kato_q_admissible(params: &ProblemParams, q: f64) -> bool {
    let x = 1.0 / q;
    let hi = 1.0 / params.q_c;
    let lo = hi - 1.0 / (params.d as f64 * (params.p_star - 1.0));
    x > lo && x < hi
}

/// t^{(d/2)(1/q_c - 1/q)} ||u(t)||_{L^q} on the stored snapshots with t > 0.
pub fn kato_weighted_norm(traj: &Trajectory, q: f64) -> Result<Vec<(f64, f64)>> {
    if !(q > 1.0) {
        return Err(invalid("kato_q", format!("q = {q} must exceed 1")));
    }
    let e = traj.params.d as f64 / 2.0 * (1.0 / traj.params.q_c - 1.0 / q);
    Ok(traj
        .snapshots
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| (s.t, s.t.powf(e) * lq_norm(&traj.snapshot_field(s), q)))
        .collect())
}

/// Log-log slope over the final decade is negative and the series ends lower than it starts.
pub fn decreasing_over_final_decade(series: &[(f64, f64)]) -> bool {
    let Some(&(t_last, _)) = series.last() else { return false };
    let tail: Vec<(f64, f64)> = series
        .iter()
        .cloned()
        .filter(|(t, v)| *t >= t_last / 10.0 && *v > 0.0)
        .collect();
    if tail.len() < 3 {
        return false;
    }
    let xs: Vec<f64> = tail.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    least_squares(&xs, &ys).slope < 0.0 && tail[tail.len() - 1].1 < tail[0].1
}
