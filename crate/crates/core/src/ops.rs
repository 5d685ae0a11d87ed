//! Finite-volume radial operators shared by the time stepper and the
//! stationary and energy-balance diagnostics.
//!
//! Cell j spans [j dr, (j+1) dr]. The Laplacian is A = -V^{-1} S, where V holds
//! exact shell volumes and S is the symmetric flux form; the outer face carries a
//! homogeneous Dirichlet condition through a ghost value.
//!
//! Time stepping uses the compact mass M = V - (dr^2/12) S, so the semi-discrete
//! flow is M u_t = -S u + V N.

use crate::grid::{ProblemParams, RadialField, RadialGrid};

/// Coefficient of the compact mass correction.
pub const MASS_CORRECTION: f64 = 1.0 / 12.0;

const GAUSS_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_W: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

#[derive(Debug, Clone)]
pub struct RadialOperator {
    pub n: usize,
    pub dr: f64,
    pub sigma: f64,
    pub p: f64,
    /// Shell volumes without the sigma factor.
    pub vol: Vec<f64>,
    /// flux[j] couples cells j and j+1; flux[n-1] is the outer face.
    pub flux: Vec<f64>,
    /// Gauss weights for the cell average of r^{-gamma} |u|^{p-2} u, already divided by vol.
    quad: Vec<[f64; 4]>,
    offsets: [f64; 4],
}

impl RadialOperator {
    pub fn new(params: &ProblemParams, grid: &RadialGrid) -> Self {
        let n = grid.n;
        let dr = grid.dr;
        let d = params.d as i32;
        let vol: Vec<f64> = (0..n)
            .map(|j| {
                let lo = j as f64 * dr;
                let hi = lo + dr;
                (hi.powi(d) - lo.powi(d)) / d as f64
            })
            .collect();
        let flux = (0..n)
            .map(|j| ((j + 1) as f64 * dr).powi(d - 1) / dr)
            .collect();
        let offsets = GAUSS_X.map(|x| 0.5 * dr * x);
        let quad = (0..n)
            .map(|j| {
                let r = grid.nodes[j];
                let mut w = [0.0; 4];
                for q in 0..4 {
                    let rq = r + offsets[q];
                    w[q] = 0.5 * dr * GAUSS_W[q] * rq.powf(d as f64 - 1.0 - params.gamma) / vol[j];
                }
                w
            })
            .collect();
        RadialOperator {
            n,
            dr,
            sigma: params.surface_area,
            p: params.p_star,
            vol,
            flux,
            quad,
            offsets,
        }
    }

    /// out = A u.
    pub fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let right = if j + 1 < n {
                self.flux[j] * (u[j + 1] - u[j])
            } else {
                -2.0 * self.flux[j] * u[j]
            };
            let left = if j > 0 {
                self.flux[j - 1] * (u[j] - u[j - 1])
            } else {
                0.0
            };
            out[j] = (right - left) / self.vol[j];
        }
    }

    /// out = cell average of r^{-gamma} |u|^{p-2} u using a linear reconstruction.
    pub fn nonlinearity(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let e = self.p - 1.0;
        for j in 0..n {
            let slope = if j == 0 {
                (u[1] - u[0]) / self.dr
            } else if j + 1 == n {
                (u[j] - u[j - 1]) / self.dr
            } else {
                (u[j + 1] - u[j - 1]) / (2.0 * self.dr)
            };
            let mut acc = 0.0;
            for q in 0..4 {
                let v = u[j] + slope * self.offsets[q];
                acc += self.quad[j][q] * v.signum() * v.abs().powf(e);
            }
            out[j] = acc;
        }
    }

    /// out = S u, without sigma.
    pub fn stiffness(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let right = if j + 1 < n {
                self.flux[j] * (u[j] - u[j + 1])
            } else {
                2.0 * self.flux[j] * u[j]
            };
            let left = if j > 0 {
                self.flux[j - 1] * (u[j] - u[j - 1])
            } else {
                0.0
            };
            out[j] = right + left;
        }
    }

    /// M = V - shift S.
    pub fn mass_shift(&self) -> f64 {
        MASS_CORRECTION * self.dr * self.dr
    }

    /// Dissipation and production rates of the Dirichlet form along M u_t = -S u + V N:
    /// d/dt (sigma u^T S u) = -2 diss + 2 prod. `nu` = N(u).
    pub fn energy_rates(&self, u: &[f64], nu: &[f64]) -> (f64, f64) {
        let n = self.n;
        let mut su = vec![0.0; n];
        self.stiffness(u, &mut su);
        let mut z = su.clone();
        let mut scratch = vec![0.0; n];
        self.solve_shifted(-self.mass_shift(), &mut z, &mut scratch);
        let mut diss = 0.0;
        let mut prod = 0.0;
        for j in 0..n {
            diss += su[j] * z[j];
            prod += z[j] * self.vol[j] * nu[j];
        }
        (self.sigma * diss, self.sigma * prod)
    }

    /// Volume-weighted inner product, including sigma.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.sigma * a.iter().zip(b).zip(&self.vol).map(|((x, y), v)| x * y * v).sum::<f64>()
    }

    /// Discrete Dirichlet form sigma u^T S u, including the outer boundary jump.
    pub fn dirichlet_form(&self, u: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for j in 0..n - 1 {
            let du = u[j + 1] - u[j];
            s += self.flux[j] * du * du;
        }
        s += 2.0 * self.flux[n - 1] * u[n - 1] * u[n - 1];
        self.sigma * s
    }

    /// Solve (V + a S) x = b; overwrites `b` with x. V + a S must be positive
    /// definite, which holds for a > -dr^2 / 6.
    pub fn solve_shifted(&self, a: f64, b: &mut [f64], scratch: &mut [f64]) -> bool {
        // Thomas algorithm on the symmetric tridiagonal system.
        let n = self.n;
        let off = |j: usize| -a * self.flux[j];
        let diag = |j: usize| {
            let left = if j > 0 { self.flux[j - 1] } else { 0.0 };
            let right = if j + 1 < n {
                self.flux[j]
            } else {
                2.0 * self.flux[j]
            };
            self.vol[j] + a * (left + right)
        };
        let mut denom = diag(0);
        if denom == 0.0 || !denom.is_finite() {
            return false;
        }
        scratch[0] = off(0) / denom;
        b[0] /= denom;
        for j in 1..n {
            let lower = off(j - 1);
            denom = diag(j) - lower * scratch[j - 1];
            if denom == 0.0 || !denom.is_finite() {
                return false;
            }
            if j + 1 < n {
                scratch[j] = off(j) / denom;
            }
            b[j] = (b[j] - lower * b[j - 1]) / denom;
        }
        for j in (0..n - 1).rev() {
            b[j] -= scratch[j] * b[j + 1];
        }
        true
    }
}

/// Stationary residual of a field under the discrete operators, measured on
/// cells with r < fraction * r_max.
pub fn stationary_residual(params: &ProblemParams, u: &RadialField, fraction: f64) -> f64 {
    let op = RadialOperator::new(params, &u.grid);
    let mut au = vec![0.0; op.n];
    let mut nu = vec![0.0; op.n];
    op.laplacian(&u.values, &mut au);
    op.nonlinearity(&u.values, &mut nu);
    let cut = fraction * u.grid.r_max;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..op.n {
        if u.grid.nodes[j] >= cut {
            break;
        }
        let res = au[j] + nu[j];
        num += op.vol[j] * res * res;
        den += op.vol[j] * au[j] * au[j];
    }
    (num / den).sqrt()
}
