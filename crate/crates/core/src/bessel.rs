//! The radial Fourier kernel K(z) = J_nu(z) / z^nu with nu = d/2 - 1.

use std::f64::consts::PI;

const SWITCH: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselKernel {
    pub nu: f64,
    /// K(0) = 1 / (2^nu Gamma(nu + 1)).
    pub k0: f64,
    /// Order of the spherical Bessel function when nu is a half integer.
    spherical: Option<usize>,
}

impl BesselKernel {
    pub fn for_dimension(d: usize) -> Self {
        let nu = d as f64 / 2.0 - 1.0;
        let k0 = 1.0 / (2f64.powf(nu) * statrs::function::gamma::gamma(nu + 1.0));
        let spherical = if d % 2 == 1 && d >= 3 {
            Some((d - 3) / 2)
        } else {
            None
        };
        BesselKernel { nu, k0, spherical }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let z = z.abs();
        if z < SWITCH {
            self.series(z)
        } else if let Some(n) = self.spherical {
            spherical_over_power(n, z)
        } else {
            self.asymptotic(z)
        }
    }

    fn series(&self, z: f64) -> f64 {
        let x = 0.25 * z * z;
        let mut term = self.k0;
        let mut sum = term;
        let mut k = 1.0;
        while k < 200.0 {
            term *= -x / (k * (self.nu + k));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-30) && k > x.sqrt() {
                break;
            }
            k += 1.0;
        }
        sum
    }

    fn asymptotic(&self, z: f64) -> f64 {
        let mu = 4.0 * self.nu * self.nu;
        let mut p = 1.0;
        let mut q = 0.0;
        let mut term = 1.0f64;
        let mut last = f64::INFINITY;
        for k in 1..60 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * z);
            if term.abs() > last || term == 0.0 {
                break;
            }
            last = term.abs();
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 1 {
                q += sign * term;
            } else {
                p += sign * term;
            }
            if term.abs() < 1e-17 {
                break;
            }
        }
        let chi = z - (0.5 * self.nu + 0.25) * PI;
        let j = (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin());
        j / z.powf(self.nu)
    }
}

/// sqrt(2/pi) j_n(z) / z^n by upward recurrence, stable for z > n.
fn spherical_over_power(n: usize, z: f64) -> f64 {
    let (s, c) = z.sin_cos();
    let mut jm = c / z;
    let mut j = s / z;
    for k in 0..n {
        let next = (2 * k + 1) as f64 / z * j - jm;
        jm = j;
        j = next;
    }
    (2.0 / PI).sqrt() * j / z.powi(n as i32)
}
