//! Radial Fourier analysis through a direct Hankel quadrature.
//!
//! The transform is unitary on radial functions:
//! u_hat(rho) = int_0^inf u(r) K(r rho) r^{d-1} dr with K(z) = J_nu(z) / z^nu,
//! and the inverse has the same form in rho.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::BesselKernel;
use crate::error::{invalid, LabError, Result};
use crate::grid::{RadialField, RadialGrid};

/// Plans with at most this many kernel entries keep the matrix in memory.
const MATRIX_LIMIT: usize = 1 << 23;
const CACHE_CAPACITY: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub spacing: f64,
    pub count: usize,
}

impl FrequencyGrid {
    pub fn new(spacing: f64, count: usize) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) || count == 0 {
            return Err(invalid("frequency grid", "spacing must be positive and count nonzero"));
        }
        Ok(FrequencyGrid { spacing, count })
    }

    /// Spacing pi / r_max with as many frequencies as nodes.
    pub fn nyquist(grid: &RadialGrid) -> Self {
        FrequencyGrid {
            spacing: PI / grid.r_max,
            count: grid.n,
        }
    }

    /// Spacing refined by `factor`, covering [0, rho_max].
    pub fn oversampled(grid: &RadialGrid, factor: usize, rho_max: f64) -> Self {
        let spacing = PI / (grid.r_max * factor.max(1) as f64);
        FrequencyGrid {
            spacing,
            count: (rho_max / spacing).ceil().max(1.0) as usize,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| (k as f64 + 0.5) * self.spacing)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub d: usize,
    pub spacing: f64,
    /// Radius of the physical domain the samples came from; sets the resolved band.
    pub extent: f64,
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpectralField {
    pub fn new(d: usize, freq: FrequencyGrid, values: Vec<f64>, extent: f64) -> Result<Self> {
        if values.len() != freq.count {
            return Err(LabError::GridMismatch(format!(
                "{} spectral values for {} frequencies",
                values.len(),
                freq.count
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Corrupted { index });
        }
        Ok(SpectralField {
            d,
            spacing: freq.spacing,
            extent,
            frequencies: freq.nodes(),
            values,
        })
    }

    /// Build from a function of rho, e.g. a synthetic profile.
    pub fn from_fn(d: usize, freq: FrequencyGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = freq.nodes().into_iter().map(f).collect();
        SpectralField::new(d, freq, values, PI / freq.spacing)
    }

    pub fn freq_grid(&self) -> FrequencyGrid {
        FrequencyGrid {
            spacing: self.spacing,
            count: self.values.len(),
        }
    }

    pub fn multiply(&self, f: impl Fn(f64) -> f64) -> SpectralField {
        let mut out = self.clone();
        for (v, &rho) in out.values.iter_mut().zip(&self.frequencies) {
            *v *= f(rho);
        }
        out
    }

    fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(LabError::Corrupted { index }),
            None => Ok(()),
        }
    }

    fn sigma(&self) -> f64 {
        crate::grid::surface_area(self.d)
    }

    /// Prefix sums of sigma |u_hat|^2 rho^{d-1+2 power} drho by cell.
    fn cumulative(&self, power: f64) -> Vec<f64> {
        let sigma = self.sigma();
        let mut acc = 0.0;
        self.values
            .iter()
            .zip(&self.frequencies)
            .map(|(v, &rho)| {
                acc += sigma * v * v * rho.powf(self.d as f64 - 1.0 + 2.0 * power) * self.spacing;
                acc
            })
            .collect()
    }

    /// Mass of the ball of radius `radius` from prefix sums, linear inside a cell.
    fn ball_mass(&self, prefix: &[f64], radius: f64) -> f64 {
        if radius <= 0.0 {
            return 0.0;
        }
        let x = radius / self.spacing;
        let k = x.floor() as usize;
        if k >= prefix.len() {
            return *prefix.last().unwrap_or(&0.0);
        }
        let below = if k == 0 { 0.0 } else { prefix[k - 1] };
        below + (prefix[k] - below) * (x - k as f64)
    }
}

struct HankelPlan {
    kernel: BesselKernel,
    radii: Vec<f64>,
    freqs: Vec<f64>,
    matrix: Option<Vec<f64>>,
}

impl HankelPlan {
    fn build(grid: &RadialGrid, freq: &FrequencyGrid) -> Self {
        let kernel = BesselKernel::for_dimension(grid.d);
        let radii = grid.nodes.clone();
        let freqs = freq.nodes();
        let matrix = if radii.len() * freqs.len() <= MATRIX_LIMIT {
            let n = radii.len();
            let mut m = vec![0.0; n * freqs.len()];
            m.par_chunks_mut(n).zip(&freqs).for_each(|(row, &rho)| {
                for (x, &r) in row.iter_mut().zip(&radii) {
                    *x = kernel.eval(r * rho);
                }
            });
            Some(m)
        } else {
            None
        };
        HankelPlan {
            kernel,
            radii,
            freqs,
            matrix,
        }
    }

    /// out_k = sum_j K(r_j rho_k) a_j
    fn forward(&self, a: &[f64]) -> Vec<f64> {
        let n = self.radii.len();
        match &self.matrix {
            Some(m) => m
                .par_chunks(n)
                .map(|row| row.iter().zip(a).map(|(k, x)| k * x).sum())
                .collect(),
            None => self
                .freqs
                .par_iter()
                .map(|&rho| {
                    self.radii
                        .iter()
                        .zip(a)
                        .map(|(&r, x)| self.kernel.eval(r * rho) * x)
                        .sum()
                })
                .collect(),
        }
    }

    /// out_j = sum_k K(r_j rho_k) b_k
    fn adjoint(&self, b: &[f64]) -> Vec<f64> {
        let n = self.radii.len();
        match &self.matrix {
            Some(m) => {
                let mut out = vec![0.0; n];
                for (row, &bk) in m.chunks(n).zip(b) {
                    if bk != 0.0 {
                        for (o, k) in out.iter_mut().zip(row) {
                            *o += bk * k;
                        }
                    }
                }
                out
            }
            None => self
                .radii
                .par_iter()
                .map(|&r| {
                    self.freqs
                        .iter()
                        .zip(b)
                        .map(|(&rho, x)| self.kernel.eval(r * rho) * x)
                        .sum()
                })
                .collect(),
        }
    }
}

type PlanKey = (usize, usize, u64, u64, usize);

fn plan_cache() -> &'static Mutex<HashMap<PlanKey, Arc<HankelPlan>>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<HankelPlan>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plan_for(grid: &RadialGrid, freq: &FrequencyGrid) -> Arc<HankelPlan> {
    let key = (
        grid.d,
        grid.n,
        grid.r_max.to_bits(),
        freq.spacing.to_bits(),
        freq.count,
    );
    let mut cache = plan_cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(p) = cache.get(&key) {
        return p.clone();
    }
    if cache.len() >= CACHE_CAPACITY {
        cache.clear();
    }
    let plan = Arc::new(HankelPlan::build(grid, freq));
    cache.insert(key, plan.clone());
    plan
}

/// Transform onto the default frequency grid (spacing pi / r_max, n frequencies).
pub fn hankel_transform(u: &RadialField) -> Result<SpectralField> {
    hankel_transform_on(u, &FrequencyGrid::nyquist(&u.grid))
}

pub fn hankel_transform_on(u: &RadialField, freq: &FrequencyGrid) -> Result<SpectralField> {
    u.check_finite()?;
    let g = &u.grid;
    let a: Vec<f64> = u
        .values
        .iter()
        .zip(&g.nodes)
        .map(|(v, &r)| v * r.powi(g.d as i32 - 1) * g.dr)
        .collect();
    let values = plan_for(g, freq).forward(&a);
    SpectralField::new(g.d, *freq, values, g.r_max)
}

pub fn inverse_hankel(s: &SpectralField, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    s.check_finite()?;
    if s.d != grid.d {
        return Err(LabError::GridMismatch("spectral field and grid disagree on d".into()));
    }
    let b: Vec<f64> = s
        .values
        .iter()
        .zip(&s.frequencies)
        .map(|(v, &rho)| v * rho.powi(s.d as i32 - 1) * s.spacing)
        .collect();
    let values = plan_for(grid, &s.freq_grid()).adjoint(&b);
    RadialField::new(grid.clone(), values)
}

/// Field whose transform is rho^s on [0, cutoff]. Gauss-Legendre panels in rho,
/// with a graded first panel for the power-law endpoint.
pub fn profile_field(d: usize, s: f64, cutoff: f64, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    const X: [f64; 8] = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329_0,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 8] = [
        0.101_228_536_290_376_3,
        0.222_381_034_453_374_5,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362_0,
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let a = s + d as f64 - 1.0;
    let panels = ((cutoff * grid.r_max / 2.0).ceil() as usize).max(64);
    let h = cutoff / panels as f64;
    let mut nodes = Vec::with_capacity(panels * 8);
    // First panel: rho = h y^4.
    for (x, w) in X.iter().zip(&W) {
        let y = 0.5 * (x + 1.0);
        let rho = h * y.powi(4);
        let jac = 4.0 * h * y.powi(3) * 0.5 * w;
        nodes.push((rho, jac * rho.powf(a)));
    }
    for p in 1..panels {
        let lo = p as f64 * h;
        for (x, w) in X.iter().zip(&W) {
            let rho = lo + 0.5 * h * (x + 1.0);
            nodes.push((rho, 0.5 * h * w * rho.powf(a)));
        }
    }
    let kernel = BesselKernel::for_dimension(d);
    let values = grid
        .nodes
        .par_iter()
        .map(|&r| nodes.iter().map(|&(rho, w)| w * kernel.eval(r * rho)).sum())
        .collect();
    RadialField::new(grid.clone(), values)
}

pub fn heat_propagate(u: &RadialField, t: f64) -> Result<RadialField> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("heat time t = {t} must be nonnegative")));
    }
    let s = hankel_transform(u)?;
    inverse_hankel(&s.multiply(|rho| (-t * rho * rho).exp()), &u.grid)
}

/// Fraction of the multiplied spectrum allowed in the top tenth of the band.
const LAMBDA_CONDITIONING: f64 = 1e-3;

/// Lambda^power u with Lambda = (-Delta)^{1/2}; power in {1, 2}.
pub fn apply_lambda(u: &RadialField, power: f64) -> Result<RadialField> {
    if power != 1.0 && power != 2.0 {
        return Err(invalid("power", format!("power = {power}; only 1 and 2 are supported")));
    }
    let s = hankel_transform(u)?.multiply(|rho| rho.powf(power));
    let prefix = s.cumulative(0.0);
    let total = *prefix.last().unwrap_or(&0.0);
    if total > 0.0 {
        let top_start = s.values.len() * 9 / 10;
        let top = total - prefix[top_start.saturating_sub(1)];
        if top > LAMBDA_CONDITIONING * total {
            return Err(LabError::Numerical(format!(
                "Lambda^{power} amplifies unresolved high frequencies ({:.2e} of the mass in the top tenth of the band)",
                top / total
            )));
        }
    }
    inverse_hankel(&s, &u.grid)
}

/// sigma int_0^inf |u_hat|^2 rho^{d-1} drho.
pub fn spectral_l2_sq(s: &SpectralField) -> f64 {
    *s.cumulative(0.0).last().unwrap_or(&0.0)
}

/// sigma int_0^radius rho^2 |u_hat|^2 rho^{d-1} drho; radius may be infinite.
pub fn lowfreq_h1_mass(s: &SpectralField, radius: f64) -> Result<f64> {
    s.check_finite()?;
    if !(radius > 0.0) {
        return Err(invalid("radius", "radius must be positive"));
    }
    Ok(s.ball_mass(&s.cumulative(1.0), radius))
}

/// Low-frequency mass of the ball B(rho) of |u_hat|^2.
pub fn ball_mass(s: &SpectralField, rho: f64) -> f64 {
    s.ball_mass(&s.cumulative(0.0), rho)
}

/// rho^{-2r-d} int_{B(rho)} |u_hat|^2 at rho = rho_cap.
pub fn decay_indicator(s: &SpectralField, r: f64, rho_cap: f64) -> Result<f64> {
    s.check_finite()?;
    if !(r > -(s.d as f64) / 2.0) {
        return Err(invalid("r", format!("r = {r} must exceed -d/2")));
    }
    if !(rho_cap > 0.0) {
        return Err(invalid("rho_cap", "must be positive"));
    }
    Ok(ball_mass(s, rho_cap) * rho_cap.powf(-2.0 * r - s.d as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayCharacterEstimate {
    pub r_star: f64,
    #[serde(rename = "window")]
    pub fit_window: (f64, f64),
    #[serde(rename = "residual")]
    pub fit_residual: f64,
    #[serde(skip)]
    pub p_r: f64,
    pub reliable: bool,
}

pub const RELIABLE_RESIDUAL: f64 = 0.1;
const FIT_POINTS: usize = 32;

/// Default window [4 pi / extent, 0.2].
pub fn default_fit_window(s: &SpectralField) -> (f64, f64) {
    (4.0 * PI / s.extent, 0.2)
}

pub fn estimate_decay_character(s: &SpectralField) -> Result<DecayCharacterEstimate> {
    estimate_decay_character_in(s, None)
}

pub fn estimate_decay_character_in(
    s: &SpectralField,
    window: Option<(f64, f64)>,
) -> Result<DecayCharacterEstimate> {
    s.check_finite()?;
    let resolved = (0.2 * s.extent / PI).floor() as usize;
    if resolved < 8 {
        return Err(LabError::Insufficient(format!(
            "only {resolved} resolved frequencies below 0.2 (need 8); enlarge r_max"
        )));
    }
    let (lo, hi) = window.unwrap_or_else(|| default_fit_window(s));
    let top = s.spacing * s.values.len() as f64;
    if !(lo > 0.0 && hi > lo && hi <= top) {
        return Err(invalid(
            "decay_character_window",
            format!("window ({lo}, {hi}) must satisfy 0 < lo < hi <= {top}"),
        ));
    }
    let prefix = s.cumulative(0.0);
    let mut xs = Vec::with_capacity(FIT_POINTS);
    let mut ys = Vec::with_capacity(FIT_POINTS);
    for i in 0..FIT_POINTS {
        let rho = lo * (hi / lo).powf(i as f64 / (FIT_POINTS - 1) as f64);
        let f = s.ball_mass(&prefix, rho);
        if f > 0.0 {
            xs.push(rho.ln());
            ys.push(f.ln());
        }
    }
    if xs.len() < FIT_POINTS {
        return Ok(DecayCharacterEstimate {
            r_star: f64::NAN,
            fit_window: (lo, hi),
            fit_residual: f64::INFINITY,
            p_r: 0.0,
            reliable: false,
        });
    }
    let fit = crate::theory::least_squares(&xs, &ys);
    let r_star = (fit.slope - s.d as f64) / 2.0;
    let p_r = if r_star > -(s.d as f64) / 2.0 {
        decay_indicator(s, r_star, lo).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    let reliable = fit.rms <= RELIABLE_RESIDUAL && r_star > -(s.d as f64) / 2.0 && r_star.is_finite();
    Ok(DecayCharacterEstimate {
        r_star,
        fit_window: (lo, hi),
        fit_residual: fit.rms,
        p_r,
        reliable,
    })
}

/// Indices for the weighted heat-smoothing estimate
/// ||e^{t Delta}(|x|^{-gamma} g)||_{L^{q2,r2}} <= C t^{-kappa} ||g||_{L^{q1,r1}}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingIndices {
    pub q1: f64,
    pub r1: f64,
    pub q2: f64,
    pub r2: f64,
}

impl SmoothingIndices {
    pub fn validate(&self, d: usize, gamma: f64) -> Result<()> {
        let bad = |m: &str| Err(invalid("smoothing indices", m.to_string()));
        let (q1, r1, q2, r2) = (self.q1, self.r1, self.q2, self.r2);
        if !(q1 >= 1.0) || !(q2 > 1.0) || !(r1 > 0.0) || !(r2 > 0.0) {
            return bad("need 1 <= q1 <= inf, 1 < q2 <= inf, r1, r2 > 0");
        }
        let a = gamma / d as f64 + 1.0 / q1;
        let b = 1.0 / q2;
        let eps = 1e-12;
        if !(b >= 0.0 && b <= a + eps && a <= 1.0 + eps) {
            return bad("need 0 <= 1/q2 <= gamma/d + 1/q1 <= 1");
        }
        if ((a - 1.0).abs() < eps || q1 == 1.0) && r1 > 1.0 {
            return bad("r1 <= 1 is required when gamma/d + 1/q1 = 1 or q1 = 1");
        }
        if q2.is_infinite() && !r2.is_infinite() {
            return bad("r2 = inf is required when q2 = inf");
        }
        if (a - b).abs() < eps && r1 > r2 {
            return bad("r1 <= r2 is required when gamma/d + 1/q1 = 1/q2");
        }
        if q1.is_infinite() && !r1.is_infinite() {
            return bad("r1 = inf is required when q1 = inf");
        }
        Ok(())
    }

    pub fn time_power(&self, d: usize, gamma: f64) -> f64 {
        d as f64 / 2.0 * (1.0 / self.q1 - 1.0 / self.q2) + gamma / 2.0
    }
}

/// Per-time record of the weighted smoothing check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothingVerdict {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub ratios: Vec<f64>,
}

fn lorentz_or_sup(u: &RadialField, q: f64, r: f64) -> Result<f64> {
    if q.is_infinite() {
        Ok(u.max_abs())
    } else {
        crate::functionals::lorentz_norm(u, q, r)
    }
}

/// Regression constant for the smoothing ratio sup_t t^kappa ||e^{t Delta}(|x|^{-gamma} g)|| / ||g||.
/// Seeded corpus plus ground state at (q1, r1, q2, r2) = (2, 2, 2, 2), d = 5,
/// gamma = 1, t in {0.1, 1, 10}: worst 0.180; catalog Gaussian 0.198.
pub const C_SMOOTH: f64 = 0.2;

pub fn check_weighted_smoothing(
    g: &RadialField,
    times: &[f64],
    idx: &SmoothingIndices,
    gamma: f64,
) -> Result<SmoothingVerdict> {
    let d = g.grid.d;
    idx.validate(d, gamma)?;
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("times", "need at least one positive time"));
    }
    let weighted = g.map(|r, v| r.powf(-gamma) * v);
    let gn = lorentz_or_sup(g, idx.q1, idx.r1)?;
    let kappa = idx.time_power(d, gamma);
    let mut ratios = Vec::with_capacity(times.len());
    let mut worst = 0.0f64;
    for &t in times {
        let v = heat_propagate(&weighted, t)?;
        let l = lorentz_or_sup(&v, idx.q2, idx.r2)? * t.powf(kappa);
        worst = worst.max(l);
        ratios.push(if gn > 0.0 { l / gn } else { 0.0 });
    }
    let ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(SmoothingVerdict {
        lhs: worst,
        rhs: gn,
        ratio,
        holds: ratio.is_finite() && ratio <= C_SMOOTH,
        times: times.to_vec(),
        ratios,
    })
}
