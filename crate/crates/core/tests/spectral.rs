use std::f64::consts::PI;
use std::sync::Arc;

use hslab::functionals::{h1_norm_sq, random_corpus};
use hslab::grid::*;
use hslab::ops::RadialOperator;
use hslab::spectral::*;
use hslab::LabError;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn setup(n: usize, r_max: f64) -> (ProblemParams, Arc<RadialGrid>) {
    let p = make_params(5, 1.0).unwrap();
    let g = make_grid(&p, n, r_max).unwrap();
    (p, g)
}

fn gaussian(g: &Arc<RadialGrid>) -> RadialField {
    RadialField::from_fn(g.clone(), |r| (-r * r).exp()).unwrap()
}

fn l2_rel(a: &RadialField, b: &RadialField) -> f64 {
    let diff = RadialField::new(a.grid.clone(), a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect()).unwrap();
    (l2_norm_sq(&diff) / l2_norm_sq(b)).sqrt()
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn gaussian_transform_pair() {
    let (_, g) = setup(2048, 40.0);
    let s = hankel_transform(&gaussian(&g)).unwrap();
    let mut worst = 0.0f64;
    for (&rho, &v) in s.frequencies.iter().zip(&s.values) {
        if rho <= 10.0 {
            let exact = 2f64.powf(-2.5) * (-rho * rho / 4.0).exp();
            worst = worst.max(rel(v, exact));
        }
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn transform_is_linear() {
    let (_, g) = setup(1024, 40.0);
    let c = random_corpus(&g, 5, 2);
    let (a, b) = (&c[0], &c[1]);
    let mix = RadialField::new(g.clone(), a.values.iter().zip(&b.values).map(|(x, y)| 1.5 * x - 0.25 * y).collect()).unwrap();
    let (sa, sb, sm) = (hankel_transform(a).unwrap(), hankel_transform(b).unwrap(), hankel_transform(&mix).unwrap());
    let scale = sm.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..sm.values.len() {
        let lin = 1.5 * sa.values[k] - 0.25 * sb.values[k];
        assert!((sm.values[k] - lin).abs() <= 1e-12 * scale);
    }
}

#[test]
fn round_trip_for_bandlimited_fields() {
    let (_, g) = setup(2048, 40.0);
    let mut fields = vec![gaussian(&g)];
    fields.extend(random_corpus(&g, 7, 5));
    for u in &fields {
        let back = inverse_hankel(&hankel_transform(u).unwrap(), &g).unwrap();
        assert!(l2_rel(&back, u) < 1e-3);
    }
}

#[test]
fn inverse_of_a_spike_is_the_kernel() {
    let (_, g) = setup(1024, 40.0);
    let freq = FrequencyGrid::nyquist(&g);
    let k0 = 40;
    let rho0 = (k0 as f64 + 0.5) * freq.spacing;
    let s = SpectralField::from_fn(5, freq, |rho| if (rho - rho0).abs() < 1e-12 { 1.0 } else { 0.0 }).unwrap();
    let u = inverse_hankel(&s, &g).unwrap();
    // d = 5: J_{3/2}(z) / z^{3/2} = sqrt(2/pi) (sin z - z cos z) / z^3.
    let kernel = |z: f64| (2.0 / PI).sqrt() * (z.sin() - z * z.cos()) / z.powi(3);
    let scale = rho0.powi(4) * freq.spacing;
    let peak = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (&r, &v) in g.nodes.iter().zip(&u.values) {
        assert!((v - scale * kernel(r * rho0)).abs() <= 1e-9 * peak);
    }
    let zero = SpectralField::from_fn(5, freq, |_| 0.0).unwrap();
    assert!(inverse_hankel(&zero, &g).unwrap().is_zero());
}

#[test]
fn profile_construction_is_in_h1() {
    let (_, g) = setup(4096, 400.0);
    let u = sample_initial_data(&DataKind::FrequencyProfile { s: -3.0, cutoff: 1.0, amplitude: 1.0 }, &make_params(5, 1.0).unwrap(), &g).unwrap();
    let h1 = h1_norm_sq(&u).unwrap();
    // sigma int_0^1 rho^2 rho^-6 rho^4 drho = sigma; the outer taper trims a little at rho ~ 1/r_max.
    let sigma = g.surface_area;
    assert!(h1.is_finite() && h1 > 0.0);
    assert!(rel(h1, sigma) < 2e-2, "{h1} vs {sigma}");
}

#[test]
fn heat_flow_of_gaussian() {
    let (_, g) = setup(2048, 40.0);
    let v = heat_propagate(&gaussian(&g), 0.25).unwrap();
    let exact: Vec<f64> = g.nodes.iter().map(|r| 2f64.powf(-2.5) * (-r * r / 2.0).exp()).collect();
    assert!((v.values[0] - 0.17678).abs() < 1e-3);
    let peak = exact[0];
    let worst = v.values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst / peak < 1e-3, "{}", worst / peak);
    let same = heat_propagate(&gaussian(&g), 0.0).unwrap();
    assert!(l2_rel(&same, &gaussian(&g)) < 1e-3);
    assert!(heat_propagate(&gaussian(&g), -1.0).is_err());
}

#[test]
fn heat_flow_l2_decay_closed_form() {
    // At t = 100 the profile has width ~ 20; r_max = 120 keeps it inside the domain.
    let (_, g) = setup(4096, 120.0);
    let u = gaussian(&g);
    for t in [1.0, 10.0, 100.0] {
        let v = l2_norm_sq(&heat_propagate(&u, t).unwrap());
        let exact = (PI / 2.0).powf(2.5) * (1.0 + 4.0 * t).powf(-2.5);
        assert!(rel(v, exact) < 1e-3, "t = {t}: {}", rel(v, exact));
    }
}

#[test]
fn heat_semigroup_property() {
    let (_, g) = setup(2048, 40.0);
    let u = gaussian(&g);
    for (s, t) in [(0.1, 0.1), (0.5, 2.0), (1.0, 10.0), (10.0, 10.0)] {
        let two = heat_propagate(&heat_propagate(&u, s).unwrap(), t).unwrap();
        let one = heat_propagate(&u, s + t).unwrap();
        assert!(l2_rel(&two, &one) < 1e-3, "s={s} t={t}");
    }
}

#[test]
fn heat_decay_characterization() {
    let (_, wide) = setup(4096, 400.0);
    let r_star = estimate_decay_character(&hankel_transform(&gaussian(&wide)).unwrap()).unwrap();
    let (_, g) = setup(4096, 120.0);
    let u = gaussian(&g);
    assert!(r_star.reliable);
    let ts: Vec<f64> = (0..=10).map(|i| 10f64 * 10f64.powf(i as f64 / 10.0)).collect();
    let hs: Vec<f64> = ts.iter().map(|&t| l2_norm_sq(&heat_propagate(&u, t).unwrap())).collect();
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let e = -fit_slope(&xs, &ys);
    assert!((e - (2.5 + r_star.r_star)).abs() < 0.1, "{e} vs {}", 2.5 + r_star.r_star);
}

#[test]
fn lambda_matches_h1_and_laplacian() {
    let (p, g) = setup(2048, 40.0);
    let mut fields = vec![gaussian(&g)];
    fields.extend(random_corpus(&g, 7, 10));
    for u in &fields {
        let lu = apply_lambda(u, 1.0).unwrap();
        assert!(rel(l2_norm_sq(&lu), h1_norm_sq(u).unwrap()) < 1e-2);
    }
    let u = gaussian(&g);
    let l2 = apply_lambda(&u, 2.0).unwrap();
    let op = RadialOperator::new(&p, &g);
    let mut lap = vec![0.0; g.n];
    op.laplacian(&u.values, &mut lap);
    let fd = RadialField::new(g.clone(), lap.iter().map(|v| -v).collect()).unwrap();
    assert!(l2_rel(&l2, &fd) < 1e-2, "{}", l2_rel(&l2, &fd));
    assert!(apply_lambda(&RadialField::zeros(g.clone()), 1.0).unwrap().is_zero());
    assert!(apply_lambda(&u, 3.0).is_err());
}

#[test]
fn lambda_flags_unresolved_content() {
    let (_, g) = setup(512, 40.0);
    // Alternating cell values put the mass at the top of the band.
    let rough = RadialField::from_fn(g.clone(), |r| ((r / g.dr) as i64 % 2) as f64 * (-r / 10.0).exp()).unwrap();
    assert!(matches!(apply_lambda(&rough, 1.0), Err(LabError::Numerical(_))));
}

#[test]
fn decay_indicator_examples() {
    let (_, g) = setup(4096, 400.0);
    let s = hankel_transform(&gaussian(&g)).unwrap();
    let sigma = g.surface_area;
    // |u_hat(0)|^2 |B(1)| with u_hat(0) = 2^{-5/2}.
    let limit = (1.0 / 32.0) * sigma / 5.0;
    // rho_cap = 0.05 spans only six Nyquist cells; a finer frequency grid resolves B(rho).
    let fine = hankel_transform_on(&gaussian(&g), &FrequencyGrid::new(1e-3, 200).unwrap()).unwrap();
    let p0 = decay_indicator(&fine, 0.0, 0.05).unwrap();
    assert!(p0 > 0.0 && rel(p0, limit) < 1e-2, "{p0} vs {limit}");
    let a = decay_indicator(&fine, 1.0, 0.1).unwrap();
    let b = decay_indicator(&fine, 1.0, 0.05).unwrap();
    assert!(rel(b / a, 4.0) < 2e-2, "{}", b / a);
    assert!(decay_indicator(&s, -2.5, 0.1).is_err());
    assert!(decay_indicator(&s, -3.0, 0.1).is_err());

    // u_hat = rho^-2 on [0, 1]: rho^{4-5} sigma rho = sigma for every rho.
    let freq = FrequencyGrid::new(PI / 400.0, 1000).unwrap();
    let prof = SpectralField::from_fn(5, freq, |rho| if rho <= 1.0 { rho.powi(-2) } else { 0.0 }).unwrap();
    let mut rho = 4.0 * freq.spacing;
    while rho <= 0.1 {
        let v = decay_indicator(&prof, -2.0, rho).unwrap();
        assert!(rel(v, sigma) < 1e-9, "rho {rho}: {v}");
        rho *= 1.3;
    }
}

#[test]
fn decay_character_estimates() {
    let (_, g) = setup(4096, 400.0);
    let u = gaussian(&g);
    let e0 = estimate_decay_character(&hankel_transform(&u).unwrap()).unwrap();
    assert!(e0.reliable && e0.r_star.abs() < 0.05, "{}", e0.r_star);
    let e1 = estimate_decay_character(&hankel_transform(&apply_lambda(&u, 1.0).unwrap()).unwrap()).unwrap();
    assert!(e1.reliable && (e1.r_star - 1.0).abs() < 0.1, "{}", e1.r_star);
    let p = make_params(5, 1.0).unwrap();
    let prof = sample_initial_data(&DataKind::FrequencyProfile { s: -3.0, cutoff: 1.0, amplitude: 1.0 }, &p, &g).unwrap();
    let e2 = estimate_decay_character(&hankel_transform(&apply_lambda(&prof, 1.0).unwrap()).unwrap()).unwrap();
    assert!(e2.reliable && (e2.r_star + 2.0).abs() < 0.1, "{}", e2.r_star);
}

#[test]
fn decay_character_needs_resolution() {
    let (_, g) = setup(2048, 40.0);
    let s = hankel_transform(&gaussian(&g)).unwrap();
    assert!(matches!(estimate_decay_character(&s), Err(LabError::Insufficient(_))));
}

#[test]
fn oscillating_profile_is_unreliable() {
    // |u_hat|^2 = rho^{2r} exp(A sin(w ln rho)) has no decay character.
    let freq = FrequencyGrid::new(PI / 400.0, 4096).unwrap();
    let s = SpectralField::from_fn(5, freq, |rho| (rho.powi(0) * (2.0 * (4.0 * rho.ln()).sin()).exp()).sqrt()).unwrap();
    let e = estimate_decay_character(&s).unwrap();
    assert!(!e.reliable, "residual {}", e.fit_residual);
}

#[test]
fn lowfreq_mass_examples() {
    let (_, g) = setup(4096, 400.0);
    let u = gaussian(&g);
    let s = hankel_transform(&u).unwrap();
    let total = lowfreq_h1_mass(&s, f64::INFINITY).unwrap();
    assert!(rel(total, h1_norm_sq(&u).unwrap()) < 1e-2);
    let tiny: Vec<f64> = [1e-3, 1e-6, 1e-9].iter().map(|&r| lowfreq_h1_mass(&s, r).unwrap()).collect();
    assert!(tiny.windows(2).all(|w| w[1] < w[0]) && tiny[2] < 1e-12 * total);
    assert!(lowfreq_h1_mass(&s, 0.0).is_err());
    let sigma = g.surface_area;
    let oracle = sigma * simpson(|rho| rho.powi(6) * (-rho * rho / 2.0).exp() / 32.0, 0.0, 0.5, 100_000);
    let v = lowfreq_h1_mass(&s, 0.5).unwrap();
    assert!(rel(v, oracle) < 1e-3, "{v} vs {oracle}");
    let mut last = 0.0;
    for k in 1..200 {
        let m = lowfreq_h1_mass(&s, 0.01 * k as f64).unwrap();
        assert!(m >= last);
        last = m;
    }
}

#[test]
fn plancherel_on_corpus() {
    let (_, g) = setup(2048, 40.0);
    for u in random_corpus(&g, 7, 100) {
        let s = hankel_transform(&u).unwrap();
        assert!(rel(spectral_l2_sq(&s), l2_norm_sq(&u)) < 1e-2);
        let lu = apply_lambda(&u, 1.0).unwrap();
        assert!(rel(l2_norm_sq(&lu), h1_norm_sq(&u).unwrap()) < 1e-2);
    }
}

#[test]
fn weighted_smoothing_examples() {
    let (_, g) = setup(2048, 40.0);
    let u = gaussian(&g);
    let idx = SmoothingIndices { q1: 2.0, r1: 2.0, q2: 2.0, r2: 2.0 };
    let v = check_weighted_smoothing(&u, &[0.1, 1.0, 10.0], &idx, 1.0).unwrap();
    assert!(v.holds);
    assert!(v.ratios.iter().all(|r| r.is_finite() && *r > 0.0 && *r <= C_SMOOTH));

    let v0 = check_weighted_smoothing(&u, &[0.1, 1.0, 10.0], &idx, 0.0).unwrap();
    assert!(v0.ratios.windows(2).all(|w| w[1] <= w[0]));
    assert!(v0.ratios.iter().all(|&r| r <= 1.0 + 1e-9));

    let bad = SmoothingIndices { q1: 2.0, r1: 2.0, q2: 1.2, r2: 1.2 };
    assert!(check_weighted_smoothing(&u, &[1.0], &bad, 1.0).is_err());
    assert!(check_weighted_smoothing(&u, &[0.0], &idx, 1.0).is_err());
}
