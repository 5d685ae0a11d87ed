//! Norms, energy, Nehari functional, ground state, scaling and the functional
//! inequalities (Hardy-Sobolev, Rellich, Lorentz-Holder, critical embedding).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::{lq_norm, l2_norm_sq, ProblemParams, RadialField, RadialGrid};
use crate::ops::RadialOperator;

/// Largest ratio ||u||_{L^{q_c,2}} / ||u||_{H1} seen on the seeded corpus plus
/// the ground state, for d = 5, gamma = 1, n = 2048, r_max = 40, seed 7
/// (attained at the ground state, 0.44736), rounded up.
pub const C_EMB: f64 = 0.4474;

/// Constant used for the Lorentz-Holder check.
pub const C_HOLDER: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalReport {
    pub h1_sq: f64,
    pub l2_sq: f64,
    pub lqc: f64,
    pub hs_term: f64,
    pub energy: f64,
    pub nehari: f64,
}

/// Outcome of an inequality check: lhs <= C rhs-type comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
}

impl Verdict {
    pub fn new(lhs: f64, rhs: f64, holds: bool) -> Self {
        let ratio = if rhs == 0.0 {
            if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            lhs / rhs
        };
        Verdict {
            lhs,
            rhs,
            ratio,
            holds,
        }
    }
}

/// Squared homogeneous H1 seminorm. Differences are taken across cell faces,
/// where they are centred, and integrated with the face measure; the outer
/// boundary jump is left out.
pub fn h1_norm_sq(u: &RadialField) -> Result<f64> {
    u.check_finite()?;
    let g = &u.grid;
    let d = g.d as i32;
    let mut s = 0.0;
    for j in 0..g.n - 1 {
        let face = (j + 1) as f64 * g.dr;
        let du = (u.values[j + 1] - u.values[j]) / g.dr;
        s += du * du * face.powi(d - 1) * g.dr;
    }
    Ok(g.surface_area * s)
}

/// Integral of |u|^{p_star} |x|^{-gamma}.
pub fn hs_term(u: &RadialField, params: &ProblemParams) -> f64 {
    let g = &u.grid;
    g.nodes
        .iter()
        .zip(&g.weights)
        .zip(&u.values)
        .map(|((r, w), v)| v.abs().powf(params.p_star) * r.powf(-params.gamma) * w)
        .sum()
}

pub fn energy(u: &RadialField, params: &ProblemParams) -> Result<FunctionalReport> {
    let h1_sq = h1_norm_sq(u)?;
    let hs = hs_term(u, params);
    Ok(FunctionalReport {
        h1_sq,
        l2_sq: l2_norm_sq(u),
        lqc: lq_norm(u, params.q_c),
        hs_term: hs,
        energy: h1_sq / 2.0 - hs / params.p_star,
        nehari: h1_sq - hs,
    })
}

/// W(r) = ((d-gamma)(d-2))^{(d-2)/(2(2-gamma))} (1 + r^{2-gamma})^{-(d-2)/(2-gamma)}.
pub fn ground_state_value(params: &ProblemParams, r: f64) -> f64 {
    let d = params.d as f64;
    let g = params.gamma;
    let c = ((d - g) * (d - 2.0)).powf((d - 2.0) / (2.0 * (2.0 - g)));
    c * (1.0 + r.powf(2.0 - g)).powf(-(d - 2.0) / (2.0 - g))
}

pub fn ground_state_field(params: &ProblemParams, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    if grid.d != params.d {
        return Err(LabError::GridMismatch("ground state on a grid of another dimension".into()));
    }
    RadialField::from_fn(grid.clone(), |r| ground_state_value(params, r))
}

pub fn mountain_pass_energy(params: &ProblemParams, grid: &Arc<RadialGrid>) -> Result<f64> {
    let w = ground_state_field(params, grid)?;
    Ok(energy(&w, params)?.energy)
}

/// Monotone cubic (Fritsch-Carlson) interpolant through cell-centred samples,
/// extended evenly across the origin.
struct MonotoneCubic<'a> {
    x0: f64,
    h: f64,
    y: &'a [f64],
    m: Vec<f64>,
}

impl<'a> MonotoneCubic<'a> {
    fn new(x0: f64, h: f64, y: &'a [f64]) -> Self {
        let n = y.len();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h).collect();
        let mut m = vec![0.0; n];
        // Even extension: the secant to the left of node 0 mirrors delta[0].
        let left0 = -delta[0];
        m[0] = harmonic_slope(left0, delta[0]);
        for i in 1..n - 1 {
            m[i] = harmonic_slope(delta[i - 1], delta[i]);
        }
        m[n - 1] = delta[n - 2];
        MonotoneCubic { x0, h, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let x = x.abs();
        if x <= self.x0 {
            // Between the mirror node -x0 and x0 the even extension is symmetric.
            let t = (x + self.x0) / (2.0 * self.x0);
            return hermite(self.y[0], self.y[0], -self.m[0], self.m[0], 2.0 * self.x0, t);
        }
        let s = (x - self.x0) / self.h;
        let i = s.floor() as usize;
        if i >= n - 1 {
            return if i == n - 1 && s - i as f64 == 0.0 { self.y[n - 1] } else { 0.0 };
        }
        let t = s - i as f64;
        hermite(self.y[i], self.y[i + 1], self.m[i], self.m[i + 1], self.h, t)
    }
}

fn harmonic_slope(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1
}

/// lambda^{(d-2)/2} u(lambda x), resampled on the same grid.
pub fn scale_field(u: &RadialField, lambda: f64) -> Result<RadialField> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid("lambda", format!("lambda = {lambda} must be positive")));
    }
    u.check_finite()?;
    if lambda == 1.0 {
        return Ok(u.clone());
    }
    let g = &u.grid;
    let amp = lambda.powf((g.d as f64 - 2.0) / 2.0);
    let interp = MonotoneCubic::new(g.nodes[0], g.dr, &u.values);
    let last = g.nodes[g.n - 1];
    RadialField::from_fn(g.clone(), |r| {
        let x = lambda * r;
        if x > last {
            0.0
        } else {
            amp * interp.eval(x)
        }
    })
}

/// (hs_term)^{1/p_star} / ||u||_{H1}.
pub fn check_hardy_sobolev(u: &RadialField, params: &ProblemParams) -> Result<f64> {
    if u.is_zero() {
        return Err(invalid("field", "the Hardy-Sobolev ratio needs a nonzero field"));
    }
    let h1 = h1_norm_sq(u)?;
    Ok(hs_term(u, params).powf(1.0 / params.p_star) / h1.sqrt())
}

pub const RELLICH_TOL: f64 = 1e-2;

pub fn rellich_constant(d: usize) -> f64 {
    let d = d as f64;
    16.0 / (d * d * (d - 4.0) * (d - 4.0))
}

/// int |u|^2 / |x|^4 against 16/(d^2 (d-4)^2) int |Delta u|^2.
pub fn check_rellich(u: &RadialField, params: &ProblemParams) -> Result<Verdict> {
    if params.d < 5 {
        return Err(invalid("params.d", format!("Rellich inequality needs d >= 5, got {}", params.d)));
    }
    u.check_finite()?;
    let g = &u.grid;
    let lhs: f64 = g
        .nodes
        .iter()
        .zip(&g.weights)
        .zip(&u.values)
        .map(|((r, w), v)| v * v / r.powi(4) * w)
        .sum();
    let op = RadialOperator::new(params, g);
    let mut lap = vec![0.0; g.n];
    op.laplacian(&u.values, &mut lap);
    // Fields need not vanish at r_max, so the last cell uses a linearly
    // extrapolated ghost instead of the solver's Dirichlet one.
    let n = g.n;
    let v = &u.values;
    let ghost = 2.0 * v[n - 1] - v[n - 2];
    lap[n - 1] = (op.flux[n - 1] * (ghost - v[n - 1]) - op.flux[n - 2] * (v[n - 1] - v[n - 2])) / op.vol[n - 1];
    let rhs = rellich_constant(params.d) * op.inner(&lap, &lap);
    Ok(Verdict::new(lhs, rhs, lhs <= rhs * (1.0 + RELLICH_TOL)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorentzSample {
    pub levels: Vec<f64>,
    /// Cumulative measure at the right end of each level's atom.
    pub measure_points: Vec<f64>,
}

impl LorentzSample {
    fn atoms(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let mut prev = 0.0;
        self.levels
            .iter()
            .zip(&self.measure_points)
            .map(move |(&f, &t)| {
                let lo = prev;
                prev = t;
                (f, lo, t)
            })
    }

    /// int_0^inf (f*)^q dt.
    pub fn power_integral(&self, q: f64) -> f64 {
        self.atoms().map(|(f, lo, hi)| f.powf(q) * (hi - lo)).sum()
    }
}

/// Rearrangement with the grid cells as atoms of measure w_j.
pub fn decreasing_rearrangement(u: &RadialField) -> Result<LorentzSample> {
    u.check_finite()?;
    let g = &u.grid;
    let mut pairs: Vec<(f64, f64)> = u
        .values
        .iter()
        .zip(&g.weights)
        .map(|(v, w)| (v.abs(), *w))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut t = 0.0;
    let mut levels = Vec::with_capacity(pairs.len());
    let mut measure_points = Vec::with_capacity(pairs.len());
    for (f, w) in pairs {
        t += w;
        levels.push(f);
        measure_points.push(t);
    }
    Ok(LorentzSample {
        levels,
        measure_points,
    })
}

fn check_lorentz_indices(q: f64, r: f64) -> Result<()> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid("q", format!("Lorentz index q = {q} must lie in (0, inf)")));
    }
    if !(r > 0.0) || r.is_nan() {
        return Err(invalid("r", format!("Lorentz index r = {r} must lie in (0, inf]")));
    }
    Ok(())
}

pub fn lorentz_norm_of(sample: &LorentzSample, q: f64, r: f64) -> Result<f64> {
    check_lorentz_indices(q, r)?;
    if r.is_infinite() {
        return Ok(sample
            .atoms()
            .map(|(f, _, hi)| f * hi.powf(1.0 / q))
            .fold(0.0, f64::max));
    }
    let e = r / q;
    let s: f64 = sample
        .atoms()
        .filter(|(f, _, _)| *f > 0.0)
        .map(|(f, lo, hi)| f.powf(r) * (hi.powf(e) - lo.powf(e)) / e)
        .sum();
    Ok(s.powf(1.0 / r))
}

/// ||u||_{L^{q,r}} evaluated exactly for the step function defined by the atoms.
pub fn lorentz_norm(u: &RadialField, q: f64, r: f64) -> Result<f64> {
    check_lorentz_indices(q, r)?;
    lorentz_norm_of(&decreasing_rearrangement(u)?, q, r)
}

/// Indices (q, r) of the product and (q1, r1), (q2, r2) of the factors.
/// q2 = infinity selects the L^infinity branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderIndices {
    pub q: f64,
    pub r: f64,
    pub q1: f64,
    pub r1: f64,
    pub q2: f64,
    pub r2: f64,
}

impl HolderIndices {
    pub fn validate(&self) -> Result<()> {
        check_lorentz_indices(self.q, self.r)?;
        check_lorentz_indices(self.q1, self.r1)?;
        if self.q2.is_infinite() {
            if (self.q - self.q1).abs() > 1e-12 * self.q || self.r != self.r1 {
                return Err(invalid(
                    "indices",
                    "the L^infinity branch needs (q, r) = (q1, r1)",
                ));
            }
            return Ok(());
        }
        check_lorentz_indices(self.q2, self.r2)?;
        if (1.0 / self.q - 1.0 / self.q1 - 1.0 / self.q2).abs() > 1e-12 {
            return Err(invalid("indices", "1/q must equal 1/q1 + 1/q2"));
        }
        if 1.0 / self.r > 1.0 / self.r1 + 1.0 / self.r2 + 1e-12 {
            return Err(invalid("indices", "1/r must not exceed 1/r1 + 1/r2"));
        }
        Ok(())
    }
}

pub fn check_lorentz_holder(f: &RadialField, g: &RadialField, idx: &HolderIndices) -> Result<Verdict> {
    idx.validate()?;
    if !f.grid.same_as(&g.grid) {
        return Err(LabError::GridMismatch("Holder check on fields from different grids".into()));
    }
    let prod = RadialField::new(
        f.grid.clone(),
        f.values.iter().zip(&g.values).map(|(a, b)| a * b).collect(),
    )?;
    let lhs = lorentz_norm(&prod, idx.q, idx.r)?;
    let gn = if idx.q2.is_infinite() {
        g.max_abs()
    } else {
        lorentz_norm(g, idx.q2, idx.r2)?
    };
    let rhs = lorentz_norm(f, idx.q1, idx.r1)? * gn;
    Ok(Verdict::new(lhs, rhs, lhs <= C_HOLDER * rhs))
}

/// ||u||_{L^{q_c,2}} / ||u||_{H1}, compared with the frozen constant.
pub fn check_critical_embedding(u: &RadialField, params: &ProblemParams) -> Result<Verdict> {
    check_critical_embedding_with(u, params, C_EMB)
}

pub fn check_critical_embedding_with(u: &RadialField, params: &ProblemParams, c: f64) -> Result<Verdict> {
    if u.is_zero() {
        return Err(invalid("field", "the embedding ratio needs a nonzero field"));
    }
    let lhs = lorentz_norm(u, params.q_c, 2.0)?;
    let rhs = h1_norm_sq(u)?.sqrt();
    Ok(Verdict::new(lhs, rhs, lhs <= c * rhs * (1.0 + 1e-9)))
}

/// Sums of 3 to 6 Gaussian bumps with random centres, widths and amplitudes.
/// Each bump is mirrored through the origin so the radial profile stays smooth.
pub fn random_corpus(grid: &Arc<RadialGrid>, seed: u64, count: usize) -> Vec<RadialField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let terms = rng.gen_range(3..=6);
            let bumps: Vec<(f64, f64, f64)> = (0..terms)
                .map(|_| {
                    (
                        rng.gen_range(0.0..grid.r_max / 2.0),
                        rng.gen_range(0.2..3.0),
                        rng.gen_range(-2.0..2.0),
                    )
                })
                .collect();
            let values = grid
                .nodes
                .iter()
                .map(|&r| {
                    bumps
                        .iter()
                        .map(|&(c, w, a)| {
                            a * ((-((r - c) / w).powi(2)).exp() + (-((r + c) / w).powi(2)).exp())
                        })
                        .sum()
                })
                .collect();
            RadialField {
                grid: grid.clone(),
                values,
            }
        })
        .collect()
}
