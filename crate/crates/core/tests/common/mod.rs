//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sddde_core::derivs::{multilinear_form, DerivSettings};
use sddde_core::histfun::Term;
use sddde_core::ivp::Trajectory;
use sddde_core::{parse_model, ExpPoly, Model};

pub const SCALAR: &str = include_str!("../../examples/scalar_nested.mdl");
pub const POSITION: &str = include_str!("../../examples/position_control.mdl");

pub fn scalar() -> Model {
    parse_model(SCALAR).unwrap()
}

pub fn position() -> Model {
    parse_model(POSITION).unwrap()
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Hopf point on the ω₀⁺ curve of the position-control model (k = 1):
/// ω = π/(2τ0 + s0) and ω = sin(ωτ0). Returns `(τ0, ω)`.
pub fn hopf_tau0(s0: f64) -> (f64, f64) {
    let g = |t: f64| {
        let w = PI / (2.0 * t + s0);
        w - (w * t).sin()
    };
    let tau0 = bisect(g, 1.0 + 1e-9, 3.0);
    (tau0, PI / (2.0 * tau0 + s0))
}

/// Parameters, equilibrium and ω at the Hopf point for `s0`.
pub fn position_point(s0: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let (tau0, w) = hopf_tau0(s0);
    (vec![tau0, s0, 1.0, 2.0, 1.0], vec![s0, s0], w)
}

/// Random complex exponential polynomial with 1–3 terms, scaled to unit sup
/// norm on `[−window, 0]`.
pub fn random_direction(rng: &mut impl Rng, dim: usize, window: f64) -> ExpPoly {
    let terms = rng.gen_range(1..=3);
    let f = ExpPoly::from_terms(
        dim,
        (0..terms).map(|k| Term {
            coef: (0..dim)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            // the first term keeps the function nonzero at θ = 0
            power: if k == 0 { 0 } else { rng.gen_range(0..=2) },
            exponent: c(rng.gen_range(-0.5..0.5), rng.gen_range(-2.0..2.0)),
        }),
    )
    .unwrap();
    sup_normalized(&f, window)
}

pub fn sup_norm(f: &ExpPoly, window: f64) -> f64 {
    let mut m = 0.0f64;
    for k in 0..=400 {
        let theta = -window * k as f64 / 400.0;
        for z in f.eval(theta) {
            m = m.max(z.norm());
        }
    }
    m
}

pub fn sup_normalized(f: &ExpPoly, window: f64) -> ExpPoly {
    f.scale(c(1.0 / sup_norm(f, window), 0.0))
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    let den = b.iter().map(|y| y.norm()).fold(0.0, f64::max);
    num / den
}

/// Points `−(τ_{i1} + … + τ_{ik})`, k ≤ j, inside the delay window.
pub fn delay_sum_points(delays: &[f64], j: usize) -> Vec<f64> {
    let window = delays.iter().cloned().fold(0.0, f64::max);
    let mut pts = vec![0.0];
    let mut frontier = vec![0.0];
    for _ in 0..j {
        let mut next = Vec::new();
        for s in &frontier {
            for d in delays.iter().filter(|d| **d > 0.0) {
                let t = s + d;
                if t <= window + 1e-12 && !pts.iter().any(|q: &f64| (q - t).abs() < 1e-9) {
                    pts.push(t);
                    next.push(t);
                }
            }
        }
        frontier = next;
    }
    pts.iter().map(|t| -t).collect()
}

/// Random perturbation with a zero of multiplicity `j` at each point, built
/// from factors `1 − e^{iω(θ − s)}` whose only zero in the window is `s`.
/// Polynomial factors of this degree lose most digits in the monomial basis.
pub fn vanishing_perturbation(
    rng: &mut impl Rng,
    dim: usize,
    points: &[f64],
    j: u32,
    window: f64,
) -> ExpPoly {
    let omega = PI / window;
    let mut g = random_direction(rng, dim, window);
    for &s in points {
        for _ in 0..j {
            let shift = -(c(0.0, -omega * s).exp());
            g = ExpPoly::combine(c(1.0, 0.0), &g, shift, &g.mul_exp(c(0.0, omega))).unwrap();
        }
    }
    sup_normalized(&g, window)
}

/// Largest `|F_j(v + g) − F_j(v)| / ‖g‖` over `trials` random pairs, with `g`
/// vanishing to order `j` at the ≤ j-fold delay sums; norms are sup norms on
/// `[−max delay, 0]`.
pub fn delay_sum_support_change(
    m: &Model,
    p: &[f64],
    x: &[f64],
    j: usize,
    seed: u64,
    trials: usize,
) -> f64 {
    let settings = DerivSettings::default();
    let delays = m.frozen_delays(p, x).unwrap();
    let window = delays.iter().cloned().fold(0.0, f64::max);
    let pts = delay_sum_points(&delays, j);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v = random_direction(&mut rng, m.dim(), window);
        let g = vanishing_perturbation(&mut rng, m.dim(), &pts, j as u32, window);
        let vg = ExpPoly::combine(c(1.0, 0.0), &v, c(1.0, 0.0), &g).unwrap();
        let base = multilinear_form(m, p, x, &vec![&v; j], &settings).unwrap();
        let pert = multilinear_form(m, p, x, &vec![&vg; j], &settings).unwrap();
        let change = base
            .iter()
            .zip(&pert)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        worst = worst.max(change / sup_norm(&g, window));
    }
    worst
}

/// Least-squares slope of log peak amplitude of `x1 − x*` over `[t0, t1]`.
pub fn envelope_rate(traj: &Trajectory, x: f64, t0: f64, t1: f64) -> f64 {
    let times = traj.times();
    let dev: Vec<f64> = (0..times.len())
        .map(|k| (traj.state(k)[0] - x).abs())
        .collect();
    let mut pts = Vec::new();
    for k in 1..times.len() - 1 {
        if times[k] >= t0 && times[k] <= t1 && dev[k] > dev[k - 1] && dev[k] >= dev[k + 1] {
            pts.push((times[k], dev[k].ln()));
        }
    }
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt) * (t - mt))
    });
    num / den
}
