//! Directional and multilinear derivatives of the functional `F` at an
//! equilibrium, along exponential-polynomial directions.
//!
//! `δ ↦ F(x* + δv)` is smooth whenever `v` is, so its derivatives at `δ = 0`
//! are taken by central finite differences with Richardson extrapolation.
//! Mixed forms `F_j(v₁, …, v_j)` follow from the polarization identity
//!
//! ```text
//! F_j(w₁, …, w_j) = 1/(2^j j!) Σ_{ε ∈ {±1}^j} (Π ε_i) ∂_δ^j F(x* + δ Σ ε_i w_i)
//! ```
//!
//! applied to real directions; complex directions are split into real and
//! imaginary parts by multilinearity.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::histfun::ExpPoly;
use crate::model::{History, Model};

/// Highest derivative order supported.
pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivSettings {
    /// Finite-difference step for a direction of unit sup-norm.
    pub base_step: f64,
    /// Number of step halvings combined by Richardson extrapolation (≥ 1).
    pub richardson_levels: usize,
    /// Scale the step by `1/‖v‖∞` over the sampled history window.
    pub normalize_direction: bool,
}

impl Default for DerivSettings {
    fn default() -> Self {
        DerivSettings {
            base_step: 5e-3,
            richardson_levels: 2,
            normalize_direction: true,
        }
    }
}

impl DerivSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_step > 1e-6 && self.base_step < 1e-1) {
            return Err(Error::InvalidSettings(format!(
                "finite-difference step {} outside (1e-6, 1e-1)",
                self.base_step
            )));
        }
        if self.richardson_levels == 0 {
            return Err(Error::InvalidSettings(
                "richardson_levels must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Value of a derivative together with the change caused by dropping the
/// last Richardson level (zero when only one level is used).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub discrepancy: f64,
}

/// `θ ↦ base + δ·Re v(θ)`.
struct Perturbed<'a> {
    base: &'a [f64],
    dir: &'a ExpPoly,
    delta: f64,
}

impl History for Perturbed<'_> {
    fn dim(&self) -> usize {
        self.base.len()
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        self.dir.eval_re_into(theta, out);
        for (o, b) in out.iter_mut().zip(self.base) {
            *o = b + self.delta * *o;
        }
    }
}

/// Second-order central stencils `(offset, weight)`; divide by `h^order`.
fn stencil(order: usize) -> &'static [(i32, f64)] {
    match order {
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        5 => &[
            (-3, -0.5),
            (-2, 2.0),
            (-1, -2.5),
            (1, 2.5),
            (2, -2.0),
            (3, 0.5),
        ],
        _ => unreachable!("order checked by caller"),
    }
}

/// Sup-norm of `Re v` over the window `[−τ, 0]` spanned by the frozen delays.
fn window_norm(v: &ExpPoly, window: f64) -> f64 {
    let mut buf = vec![0.0; v.dim()];
    let samples = if window > 0.0 { 257 } else { 1 };
    let mut m = 0.0f64;
    for k in 0..samples {
        let theta = if samples == 1 {
            0.0
        } else {
            -window * k as f64 / (samples - 1) as f64
        };
        v.eval_re_into(theta, &mut buf);
        m = buf.iter().fold(m, |m, x| m.max(x.abs()));
    }
    m
}

fn check_base(model: &Model, params: &[f64], x_star: &[f64]) -> Result<f64> {
    let delays = model.frozen_delays(params, x_star)?;
    Ok(delays.into_iter().fold(0.0, f64::max))
}

fn directional_estimate(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    window: f64,
    v: &ExpPoly,
    order: usize,
    settings: &DerivSettings,
) -> Result<Estimate<Vec<f64>>> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::OrderTooHigh(order));
    }
    let n = model.dim();
    if v.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.dim(),
        });
    }
    if v.is_zero() {
        return Ok(Estimate {
            value: vec![0.0; n],
            discrepancy: 0.0,
        });
    }
    let mut h = settings.base_step;
    if settings.normalize_direction {
        let norm = window_norm(v, window);
        if norm == 0.0 {
            // vanishes on the sampled window; the derivative is still defined
            // through delay perturbations, use the unscaled step
        } else {
            h /= norm;
        }
    }
    let levels = settings.richardson_levels;
    let mut slots = vec![0.0; n * model.num_slots()];
    let mut fval = vec![0.0; n];
    let mut table: Vec<Vec<Vec<f64>>> = Vec::with_capacity(levels);
    for level in 0..levels {
        let step = h / (1 << level) as f64;
        let mut d = vec![0.0; n];
        for &(k, w) in stencil(order) {
            let u = Perturbed {
                base: x_star,
                dir: v,
                delta: k as f64 * step,
            };
            model.eval_functional_into(params, &u, &mut slots, &mut fval)?;
            for (di, fi) in d.iter_mut().zip(&fval) {
                *di += w * fi;
            }
        }
        let scale = step.powi(order as i32);
        d.iter_mut().for_each(|di| *di /= scale);
        let mut row = vec![d];
        for k in 1..=level {
            let factor = 4f64.powi(k as i32) - 1.0;
            let prev = &table[level - 1][k - 1];
            let cur = &row[k - 1];
            let next: Vec<f64> = cur
                .iter()
                .zip(prev)
                .map(|(c, p)| c + (c - p) / factor)
                .collect();
            row.push(next);
        }
        table.push(row);
    }
    let value = table[levels - 1][levels - 1].clone();
    let discrepancy = if levels > 1 {
        let lower = &table[levels - 2][levels - 2];
        value
            .iter()
            .zip(lower)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(Estimate { value, discrepancy })
}

/// `∂_δ^order F(x* + δ·Re v)` at `δ = 0`.
///
/// Only the real part of `v` is used; pass conjugate-paired directions.
pub fn directional_derivative(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    v: &ExpPoly,
    order: usize,
    settings: &DerivSettings,
) -> Result<Vec<f64>> {
    directional_derivative_checked(model, params, x_star, v, order, settings).map(|e| e.value)
}

pub fn directional_derivative_checked(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    v: &ExpPoly,
    order: usize,
    settings: &DerivSettings,
) -> Result<Estimate<Vec<f64>>> {
    settings.validate()?;
    let window = check_base(model, params, x_star)?;
    directional_estimate(model, params, x_star, window, v, order, settings)
}

/// Symmetric multilinear form `F_j(v₁, …, v_j)` for complex directions.
pub fn multilinear_form(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    directions: &[&ExpPoly],
    settings: &DerivSettings,
) -> Result<Vec<Complex64>> {
    multilinear_form_checked(model, params, x_star, directions, settings).map(|e| e.value)
}

pub fn multilinear_form_checked(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    directions: &[&ExpPoly],
    settings: &DerivSettings,
) -> Result<Estimate<Vec<Complex64>>> {
    settings.validate()?;
    let j = directions.len();
    if j == 0 || j > MAX_ORDER {
        return Err(Error::OrderTooHigh(j));
    }
    let n = model.dim();
    let window = check_base(model, params, x_star)?;

    // real and imaginary parts with their multilinear weights
    let parts: Vec<Vec<(Complex64, ExpPoly)>> = directions
        .iter()
        .map(|d| {
            [
                (Complex64::new(1.0, 0.0), d.real_part()),
                (Complex64::new(0.0, 1.0), d.imag_part()),
            ]
            .into_iter()
            .filter(|(_, p)| !p.is_zero())
            .collect()
        })
        .collect();

    let mut value = vec![Complex64::new(0.0, 0.0); n];
    let mut discrepancy = 0.0;
    if parts.iter().any(|p| p.is_empty()) {
        return Ok(Estimate { value, discrepancy });
    }
    let mut choice = vec![0usize; j];
    loop {
        let weight: Complex64 = choice
            .iter()
            .enumerate()
            .map(|(i, &c)| parts[i][c].0)
            .product();
        let real_dirs: Vec<&ExpPoly> = choice
            .iter()
            .enumerate()
            .map(|(i, &c)| &parts[i][c].1)
            .collect();
        let est = real_form(model, params, x_star, window, &real_dirs, settings)?;
        for (v, r) in value.iter_mut().zip(&est.value) {
            *v += weight * r;
        }
        discrepancy += est.discrepancy;

        // next combination of real/imaginary parts
        let mut i = 0;
        while i < j {
            choice[i] += 1;
            if choice[i] < parts[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == j {
            break;
        }
    }
    Ok(Estimate { value, discrepancy })
}

/// Polarization for real directions.
fn real_form(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    window: f64,
    dirs: &[&ExpPoly],
    settings: &DerivSettings,
) -> Result<Estimate<Vec<f64>>> {
    let j = dirs.len();
    let n = model.dim();
    if dirs.iter().all(|d| *d == dirs[0]) {
        return directional_estimate(model, params, x_star, window, dirs[0], j, settings);
    }
    // ε₁ = +1 fixed: the ε and −ε terms coincide.
    let norm = 2f64.powi(j as i32 - 1) * (1..=j).map(|k| k as f64).product::<f64>();
    let mut acc = vec![0.0; n];
    let mut discrepancy = 0.0;
    for mask in 0..(1u32 << (j - 1)) {
        let signs: Vec<f64> = (0..j)
            .map(|i| {
                if i > 0 && mask & (1 << (i - 1)) != 0 {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect();
        let combined = ExpPoly::linear_combination(
            n,
            signs
                .iter()
                .zip(dirs)
                .map(|(s, d)| (Complex64::new(*s, 0.0), *d)),
        )?;
        let sign: f64 = signs.iter().product();
        let est = directional_estimate(model, params, x_star, window, &combined, j, settings)?;
        for (a, v) in acc.iter_mut().zip(&est.value) {
            *a += sign * v;
        }
        discrepancy += est.discrepancy;
    }
    Ok(Estimate {
        value: acc.iter().map(|a| a / norm).collect(),
        discrepancy: discrepancy / norm,
    })
}
