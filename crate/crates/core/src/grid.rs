//! Problem parameters, the cell-centred radial grid and radial fields.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Dimension, singularity exponent and the exponents derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemParams {
    pub d: usize,
    pub gamma: f64,
    pub p_star: f64,
    pub q_c: f64,
    pub surface_area: f64,
    pub regime_threshold: f64,
    pub bootstrap_ratio: f64,
}

impl ProblemParams {
    /// True when the decay rate is algebraic, i.e. d <= 10 - 4 gamma.
    pub fn algebraic_regime(&self) -> bool {
        self.d as f64 <= self.regime_threshold
    }
}

pub fn surface_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / statrs::function::gamma::gamma(h)
}

pub fn make_params(d: usize, gamma: f64) -> Result<ProblemParams> {
    if d < 3 {
        return Err(invalid("params.d", format!("d = {d} but d >= 3 is required")));
    }
    if !gamma.is_finite() || !(0.0..2.0).contains(&gamma) {
        return Err(invalid(
            "params.gamma",
            format!("gamma = {gamma} lies outside [0, 2); the singularity exponent must satisfy 0 <= gamma < 2"),
        ));
    }
    let df = d as f64;
    Ok(ProblemParams {
        d,
        gamma,
        p_star: 2.0 * (df - gamma) / (df - 2.0),
        q_c: 2.0 * df / (df - 2.0),
        surface_area: surface_area(d),
        regime_threshold: 10.0 - 4.0 * gamma,
        bootstrap_ratio: 4.0 * (2.0 - gamma) / (df - 2.0),
    })
}

/// Cell-centred grid on [0, r_max] with midpoint weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub d: usize,
    pub n: usize,
    pub dr: f64,
    pub r_max: f64,
    pub surface_area: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Exact volumes of the spherical shells around each node.
    pub volumes: Vec<f64>,
}

pub fn make_grid(params: &ProblemParams, n: usize, r_max: f64) -> Result<Arc<RadialGrid>> {
    if n < 16 {
        return Err(invalid("grid.n", format!("n = {n} but at least 16 nodes are required")));
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(invalid("grid.r_max", format!("r_max = {r_max} must be positive")));
    }
    let d = params.d;
    let sigma = params.surface_area;
    let dr = r_max / n as f64;
    let nodes: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * dr).collect();
    let weights = nodes
        .iter()
        .map(|&r| sigma * r.powi(d as i32 - 1) * dr)
        .collect();
    let volumes = (0..n)
        .map(|j| {
            let lo = j as f64 * dr;
            let hi = lo + dr;
            sigma * (hi.powi(d as i32) - lo.powi(d as i32)) / d as f64
        })
        .collect();
    Ok(Arc::new(RadialGrid {
        d,
        n,
        dr,
        r_max,
        surface_area: sigma,
        nodes,
        weights,
        volumes,
    }))
}

impl RadialGrid {
    /// Volume of the ball of radius r in R^d.
    pub fn ball_volume(&self, r: f64) -> f64 {
        self.surface_area * r.powi(self.d as i32) / self.d as f64
    }

    pub fn same_as(&self, other: &RadialGrid) -> bool {
        self.d == other.d && self.n == other.n && self.r_max == other.r_max
    }
}

/// Samples of a radial function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(LabError::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        let f = RadialField { grid, values };
        f.check_finite()?;
        Ok(f)
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        RadialField::new(grid, values)
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n;
        RadialField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(LabError::Corrupted { index }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, c: f64) -> RadialField {
        RadialField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> RadialField {
        RadialField {
            grid: self.grid.clone(),
            values: self
                .grid
                .nodes
                .iter()
                .zip(&self.values)
                .map(|(&r, &v)| f(r, v))
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Midpoint approximation of the integral over R^d of a radial function.
pub fn radial_integral(f: &RadialField) -> Result<f64> {
    f.check_finite()?;
    Ok(f.values.iter().zip(&f.grid.weights).map(|(v, w)| v * w).sum())
}

/// L^q norm by midpoint quadrature.
pub fn lq_norm(f: &RadialField, q: f64) -> f64 {
    let s: f64 = f
        .values
        .iter()
        .zip(&f.grid.weights)
        .map(|(v, w)| v.abs().powf(q) * w)
        .sum();
    s.powf(1.0 / q)
}

pub fn l2_norm_sq(f: &RadialField) -> f64 {
    f.values
        .iter()
        .zip(&f.grid.weights)
        .map(|(v, w)| v * v * w)
        .sum()
}

/// Catalog of initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataKind {
    Gaussian { amplitude: f64, width: f64 },
    ScaledGroundState { lambda: f64 },
    /// Field whose transform is rho^s on [0, cutoff], times `amplitude`.
    FrequencyProfile {
        s: f64,
        cutoff: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl DataKind {
    pub fn validate(&self, params: &ProblemParams) -> Result<()> {
        match *self {
            DataKind::Gaussian { amplitude, width } => {
                if !amplitude.is_finite() {
                    return Err(invalid("data.amplitude", "must be finite"));
                }
                if !(width.is_finite() && width > 0.0) {
                    return Err(invalid("data.width", format!("width = {width} must be positive")));
                }
            }
            DataKind::ScaledGroundState { lambda } => {
                if !lambda.is_finite() {
                    return Err(invalid("data.lambda", "must be finite"));
                }
            }
            DataKind::FrequencyProfile { s, cutoff, amplitude } => {
                if !(cutoff.is_finite() && cutoff > 0.0) {
                    return Err(invalid("data.cutoff", format!("cutoff = {cutoff} must be positive")));
                }
                if !amplitude.is_finite() {
                    return Err(invalid("data.amplitude", "must be finite"));
                }
                let line = -(params.d as f64 + 2.0) / 2.0;
                if !(s.is_finite() && s > line) {
                    return Err(invalid(
                        "data.s",
                        format!("s = {s} is not above the H1 admissibility line s > -(d+2)/2 = {line}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn sample_initial_data(
    kind: &DataKind,
    params: &ProblemParams,
    grid: &Arc<RadialGrid>,
) -> Result<RadialField> {
    kind.validate(params)?;
    if grid.d != params.d {
        return Err(LabError::GridMismatch(format!(
            "grid built for d = {} used with d = {}",
            grid.d, params.d
        )));
    }
    match *kind {
        DataKind::Gaussian { amplitude, width } => {
            RadialField::from_fn(grid.clone(), |r| amplitude * (-(r / width).powi(2)).exp())
        }
        DataKind::ScaledGroundState { lambda } => {
            let w = crate::functionals::ground_state_field(params, grid)?;
            Ok(w.scaled(lambda))
        }
        DataKind::FrequencyProfile { s, cutoff, amplitude } => {
            let mut u = crate::spectral::profile_field(params.d, s, cutoff, grid)?;
            let taper = outer_taper(grid);
            for (v, t) in u.values.iter_mut().zip(taper) {
                *v *= amplitude * t;
            }
            u.check_finite()?;
            Ok(u)
        }
    }
}

/// Smooth cutoff equal to 1 on [0, r_max/2] and vanishing at r_max.
pub fn outer_taper(grid: &RadialGrid) -> Vec<f64> {
    let a = 0.5 * grid.r_max;
    let psi = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    grid.nodes
        .iter()
        .map(|&r| {
            let x = (r - a) / (grid.r_max - a);
            if x <= 0.0 {
                1.0
            } else if x >= 1.0 {
                0.0
            } else {
                psi(1.0 - x) / (psi(1.0 - x) + psi(x))
            }
        })
        .collect()
}
