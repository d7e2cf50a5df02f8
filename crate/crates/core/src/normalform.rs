//! Hopf and fold normal-form coefficients at equilibria.
//!
//! Center-manifold coefficients come from the homological equation at each
//! order; for the simple Hopf pair the second-order coefficients are
//! `h₂²⁰ = Δ(2iω)^{-1} F₂(q, q) e^{2iωθ}` and `h₂¹¹ = 2 Δ(0)^{-1} F₂(q, q̄)`,
//! and the first Lyapunov coefficient is
//! `L₁ = Re(p0 [F₃(q, q, q̄) + F₂(q̄, h₂²⁰) + F₂(q, h₂¹¹)]) / (2ω)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::derivs::{multilinear_form_checked, DerivSettings};
use crate::error::{Error, Result};
use crate::histfun::ExpPoly;
use crate::model::Model;
use crate::spectral::{hopf_eigendata, linearize, simple_root_vectors, EigenData, Linearization};

/// `|L₁|` at or below this value is reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Relative Richardson discrepancy above which derivatives are rejected.
pub const RICHARDSON_TOL: f64 = 1e-4;

/// Sign convention: subcritical iff `L₁ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Subcritical,
    Supercritical,
    Degenerate,
}

impl Criticality {
    pub fn from_l1(l1: f64) -> Self {
        if l1 > DEGENERACY_TOL {
            Criticality::Subcritical
        } else if l1 < -DEGENERACY_TOL {
            Criticality::Supercritical
        } else {
            Criticality::Degenerate
        }
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::Subcritical => "subcritical",
            Criticality::Supercritical => "supercritical",
            Criticality::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone)]
pub struct HopfNormalForm {
    pub eig: EigenData,
    pub h2_20: ExpPoly,
    pub h2_11: ExpPoly,
    /// `p0 [F₃(q, q, q̄) + F₂(q̄, h₂²⁰) + F₂(q, h₂¹¹)]`.
    pub g21: Complex64,
    /// The bracket without `p0`; right-hand side of the order-3 homological equation.
    pub bracket: DVector<Complex64>,
    pub l1: f64,
    pub criticality: Criticality,
}

impl HopfNormalForm {
    /// Coefficient vector of `h₂²⁰` (its single `e^{2iωθ}` term).
    pub fn h2_20_coef(&self) -> Vec<Complex64> {
        self.h2_20.eval(0.0)
    }

    /// Constant value of `h₂¹¹`.
    pub fn h2_11_coef(&self) -> Vec<Complex64> {
        self.h2_11.eval(0.0)
    }
}

/// `L_h h₀ = L_α α + rhs` for the coefficient `h₀` of one monomial of the
/// center-manifold expansion and the normal-form coefficients `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomologicalSystem {
    pub order: usize,
    pub l_h: DMatrix<Complex64>,
    /// One column per normal-form coefficient (possibly none).
    pub l_alpha: DMatrix<Complex64>,
    pub rhs: DVector<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomologicalSolution {
    pub h0: DVector<Complex64>,
    pub alpha: DVector<Complex64>,
    /// Dimension of the kernel of `L_h`.
    pub kernel_dim: usize,
}

/// Solves a homological system. When `L_h` is singular, `h₀` is made unique
/// by requiring it to be orthogonal to the kernel of `L_hᵀ`; this fixes `α`.
pub fn homological_solve(sys: &HomologicalSystem) -> Result<HomologicalSolution> {
    let n = sys.l_h.nrows();
    let k = sys.l_alpha.ncols();
    if sys.l_h.ncols() != n || sys.rhs.len() != n || (k > 0 && sys.l_alpha.nrows() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sys.rhs.len(),
        });
    }
    // left singular vectors u with u^H L_h ≈ 0 span conj(ker L_hᵀ)
    let svd = sys.l_h.clone().svd(true, false);
    let smax = svd.singular_values.max().max(1.0);
    let u = svd.u.expect("computed");
    let kernel: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] <= 1e-8 * smax)
        .collect();
    let d = kernel.len();
    if d != k {
        return Err(Error::RankDeficient);
    }
    let mut big = DMatrix::<Complex64>::zeros(n + d, n + k);
    big.view_mut((0, 0), (n, n)).copy_from(&sys.l_h);
    if k > 0 {
        big.view_mut((0, n), (n, k)).copy_from(&(-&sys.l_alpha));
    }
    for (r, &i) in kernel.iter().enumerate() {
        // y = conj(u_i) ∈ ker L_hᵀ; constraint y^H h = u_i^T h = 0
        let row = u.column(i).transpose();
        big.view_mut((n + r, 0), (1, n)).copy_from(&row);
    }
    let mut rhs = DVector::zeros(n + d);
    rhs.rows_mut(0, n).copy_from(&sys.rhs);
    let bsvd = big.clone().svd(false, false);
    let bmin = bsvd.singular_values.min();
    if bmin <= 1e-10 * bsvd.singular_values.max().max(1.0) {
        return Err(Error::RankDeficient);
    }
    let sol = big.lu().solve(&rhs).ok_or(Error::RankDeficient)?;
    Ok(HomologicalSolution {
        h0: sol.rows(0, n).into_owned(),
        alpha: sol.rows(n, k).into_owned(),
        kernel_dim: d,
    })
}

fn to_c(v: Vec<Complex64>) -> DVector<Complex64> {
    DVector::from_vec(v)
}

/// Homological systems for `h₂²⁰` and `h₂¹¹` at a Hopf point: `−Δ(2iω) h₀ = −F₂(q, q)`
/// and `−Δ(0) h₀ = −2 F₂(q, q̄)`; both regular away from resonances.
pub fn hopf_order2_systems(
    lin: &Linearization,
    eig: &EigenData,
    f2_qq: &[Complex64],
    f2_qqbar: &[Complex64],
) -> [HomologicalSystem; 2] {
    let n = lin.dim();
    let two = Complex64::new(2.0, 0.0);
    [
        HomologicalSystem {
            order: 2,
            l_h: -lin.char_matrix(eig.lambda * 2.0),
            l_alpha: DMatrix::zeros(n, 0),
            rhs: -to_c(f2_qq.to_vec()),
        },
        HomologicalSystem {
            order: 2,
            l_h: -lin.char_matrix(Complex64::new(0.0, 0.0)),
            l_alpha: DMatrix::zeros(n, 0),
            rhs: -to_c(f2_qqbar.to_vec()) * two,
        },
    ]
}

/// Order-3 system for the `z²z̄` coefficient: `Δ(iω) h₀ = −2α Δ'(iω) q0 + bracket`.
/// Its solvability fixes `α = p0·bracket / 2`, whose real part over `ω` is `L₁`.
pub fn hopf_order3_system(
    lin: &Linearization,
    eig: &EigenData,
    bracket: &DVector<Complex64>,
) -> HomologicalSystem {
    let col = lin.char_matrix_deriv(eig.lambda) * &eig.q0 * Complex64::new(-2.0, 0.0);
    HomologicalSystem {
        order: 3,
        l_h: lin.char_matrix(eig.lambda),
        l_alpha: DMatrix::from_column_slice(lin.dim(), 1, col.as_slice()),
        rhs: bracket.clone(),
    }
}

fn checked_form(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    dirs: &[&ExpPoly],
    settings: &DerivSettings,
) -> Result<Vec<Complex64>> {
    let est = multilinear_form_checked(model, params, x_star, dirs, settings)?;
    let size = est.value.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if settings.richardson_levels > 1 && est.discrepancy > RICHARDSON_TOL * size.max(1.0) {
        return Err(Error::DerivativeAccuracy(est.discrepancy));
    }
    Ok(est.value)
}

fn critical_direction(eig: &EigenData) -> ExpPoly {
    ExpPoly::exponential(eig.q0.iter().cloned().collect(), eig.lambda)
}

fn solve_regular(
    m: DMatrix<Complex64>,
    rhs: &[Complex64],
    what: &'static str,
) -> Result<Vec<Complex64>> {
    let svd = m.clone().svd(false, false);
    if svd.singular_values.min() <= 1e-10 * svd.singular_values.max().max(1.0) {
        return Err(Error::Resonance(what));
    }
    let x = m
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .ok_or(Error::Resonance(what))?;
    Ok(x.iter().cloned().collect())
}

fn h2_from_forms(
    lin: &Linearization,
    eig: &EigenData,
    f2_qq: &[Complex64],
    f2_qqbar: &[Complex64],
) -> Result<(ExpPoly, ExpPoly)> {
    let c20 = solve_regular(
        lin.char_matrix(eig.lambda * 2.0),
        f2_qq,
        "1:2 resonance, Δ(2iω) singular",
    )?;
    let twice: Vec<Complex64> = f2_qqbar.iter().map(|v| v * 2.0).collect();
    let c11 = solve_regular(
        lin.char_matrix(Complex64::new(0.0, 0.0)),
        &twice,
        "Δ(0) singular",
    )?;
    Ok((
        ExpPoly::exponential(c20, eig.lambda * 2.0),
        ExpPoly::exponential(c11, Complex64::new(0.0, 0.0)),
    ))
}

/// Second-order center-manifold coefficients `(h₂²⁰, h₂¹¹)`.
pub fn hopf_h2(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    eig: &EigenData,
    settings: &DerivSettings,
) -> Result<(ExpPoly, ExpPoly)> {
    let lin = linearize(model, params, x_star)?;
    let q = critical_direction(eig);
    let qbar = q.conj();
    let f2_qq = checked_form(model, params, x_star, &[&q, &q], settings)?;
    let f2_qqbar = checked_form(model, params, x_star, &[&q, &qbar], settings)?;
    h2_from_forms(&lin, eig, &f2_qq, &f2_qqbar)
}

/// Full Hopf normal form, locating the critical pair near `iω_guess`.
pub fn hopf_l1(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    omega_guess: f64,
    settings: &DerivSettings,
) -> Result<HopfNormalForm> {
    let lin = linearize(model, params, x_star)?;
    let eig = hopf_eigendata(&lin, omega_guess)?;
    hopf_l1_at(model, params, x_star, &lin, eig, settings)
}

/// Full Hopf normal form for given eigendata (any phase or scaling of `q0`,
/// provided `p0 Δ'(iω) q0 = 1`).
pub fn hopf_l1_with(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    eig: &EigenData,
    settings: &DerivSettings,
) -> Result<HopfNormalForm> {
    let lin = linearize(model, params, x_star)?;
    hopf_l1_at(model, params, x_star, &lin, eig.clone(), settings)
}

pub(crate) fn hopf_l1_at(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    lin: &Linearization,
    eig: EigenData,
    settings: &DerivSettings,
) -> Result<HopfNormalForm> {
    let q = critical_direction(&eig);
    let qbar = q.conj();
    let f2_qq = checked_form(model, params, x_star, &[&q, &q], settings)?;
    let f2_qqbar = checked_form(model, params, x_star, &[&q, &qbar], settings)?;
    let (h2_20, h2_11) = h2_from_forms(lin, &eig, &f2_qq, &f2_qqbar)?;
    let f3 = checked_form(model, params, x_star, &[&q, &q, &qbar], settings)?;
    let f2_a = checked_form(model, params, x_star, &[&qbar, &h2_20], settings)?;
    let f2_b = checked_form(model, params, x_star, &[&q, &h2_11], settings)?;
    let bracket =
        DVector::from_iterator(lin.dim(), (0..lin.dim()).map(|i| f3[i] + f2_a[i] + f2_b[i]));
    let g21 = (eig.p0.transpose() * &bracket)[(0, 0)];
    let l1 = g21.re / (2.0 * eig.omega);
    Ok(HopfNormalForm {
        eig,
        h2_20,
        h2_11,
        g21,
        bracket,
        l1,
        criticality: Criticality::from_l1(l1),
    })
}

/// Quadratic coefficient `a = ½ p0 F₂(q, q)` of the flow on the
/// one-dimensional center manifold at a simple zero root.
pub fn fold_coefficient(
    model: &Model,
    params: &[f64],
    x_star: &[f64],
    settings: &DerivSettings,
) -> Result<f64> {
    let lin = linearize(model, params, x_star)?;
    let zero = Complex64::new(0.0, 0.0);
    let svd = lin.char_matrix(zero).svd(false, false);
    let smin = svd.singular_values.min();
    if smin > 1e-6 * svd.singular_values.max().max(1.0) {
        return Err(Error::NoZeroRoot(smin));
    }
    let (q0, p0, _, _) = simple_root_vectors(&lin, zero)?;
    let q = ExpPoly::exponential(q0.iter().cloned().collect(), zero);
    let f2 = checked_form(model, params, x_star, &[&q, &q], settings)?;
    let a = p0.iter().zip(&f2).map(|(p, f)| p * f).sum::<Complex64>() * 0.5;
    Ok(a.re)
}
