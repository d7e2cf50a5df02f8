//! Frozen-delay linearization at an equilibrium, the characteristic matrix,
//! characteristic roots, critical eigenvectors, resolvent and spectral
//! projection.

mod projection;
mod roots;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::histfun::ExpPoly;
use crate::model::Model;

pub use projection::{
    adjoint_coordinate, projection_coordinates, resolvent_apply, spectral_projection, Projector,
};
pub use roots::{characteristic_roots, CharRoot, RootList, RootSettings};

pub(crate) use roots::refine_root;

/// Equilibria with a larger residual are rejected by [`linearize`].
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// `L v = Σ_j A_j v(−τ_j)`: the linear part of `F` with delays frozen at the
/// equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub matrices: Vec<DMatrix<f64>>,
    pub delays: Vec<f64>,
    pub params: Vec<f64>,
    pub x_star: Vec<f64>,
}

/// Critical root `λ = iω` with right eigenvector `q0` and adjoint row `p0`,
/// normalized so that `p0 Δ'(iω) q0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenData {
    pub omega: f64,
    pub lambda: Complex64,
    pub q0: DVector<Complex64>,
    /// Row vector stored as a column; `p0·v = Σ p0_i v_i` without conjugation.
    pub p0: DVector<Complex64>,
    /// `‖Δ(λ) q0‖` for unit `q0`.
    pub residual_right: f64,
    /// `‖p0 Δ(λ)‖ / ‖p0‖`.
    pub residual_left: f64,
}

impl Linearization {
    /// Builds a linearization from explicit matrices and delays (no model).
    pub fn from_matrices(matrices: Vec<DMatrix<f64>>, delays: Vec<f64>) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != delays.len() {
            return Err(Error::DimensionMismatch {
                expected: matrices.len(),
                found: delays.len(),
            });
        }
        let n = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        Ok(Linearization {
            matrices,
            delays,
            params: Vec::new(),
            x_star: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().cloned().fold(0.0, f64::max)
    }

    /// `Σ_j A_j` (the Jacobian of `x ↦ f(x, …, x)`).
    pub fn total_matrix(&self) -> DMatrix<f64> {
        self.matrices
            .iter()
            .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, a| acc + a)
    }

    /// `Δ(λ) = λI − Σ_j A_j e^{−λτ_j}`.
    pub fn char_matrix(&self, lambda: Complex64) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut d = DMatrix::<Complex64>::identity(n, n) * lambda;
        for (a, &tau) in self.matrices.iter().zip(&self.delays) {
            let e = (-lambda * tau).exp();
            d.zip_apply(a, |di, ai| *di -= e * ai);
        }
        d
    }

    /// `Δ'(λ) = I + Σ_j τ_j A_j e^{−λτ_j}`.
    pub fn char_matrix_deriv(&self, lambda: Complex64) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut d = DMatrix::<Complex64>::identity(n, n);
        for (a, &tau) in self.matrices.iter().zip(&self.delays) {
            let e = (-lambda * tau).exp() * tau;
            d.zip_apply(a, |di, ai| *di += e * ai);
        }
        d
    }

    /// `Σ_j A_j v(−τ_j)`.
    pub fn apply(&self, v: &ExpPoly) -> DVector<Complex64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for (a, &tau) in self.matrices.iter().zip(&self.delays) {
            let vj = DVector::from_vec(v.eval(-tau));
            out += a.map(|x| Complex64::new(x, 0.0)) * vj;
        }
        out
    }
}

/// Frozen-delay linearization at an equilibrium.
pub fn linearize(model: &Model, params: &[f64], x_star: &[f64]) -> Result<Linearization> {
    let res = model.equilibrium_residual(params, x_star)?;
    let r = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(r <= EQUILIBRIUM_TOL) {
        return Err(Error::NotAnEquilibrium(r));
    }
    linearize_unchecked(model, params, x_star)
}

/// As [`linearize`] without the equilibrium check; used inside Newton loops.
pub(crate) fn linearize_unchecked(
    model: &Model,
    params: &[f64],
    x: &[f64],
) -> Result<Linearization> {
    let n = model.dim();
    let delays = model.frozen_delays(params, x)?;
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = 1e-6 * (1.0 + scale);
    let matrices = (1..=model.num_slots())
        .map(|j| DMatrix::from_row_slice(n, n, &model.slot_jacobian(params, x, j, h)))
        .collect();
    Ok(Linearization {
        matrices,
        delays,
        params: params.to_vec(),
        x_star: x.to_vec(),
    })
}

/// Smallest and second-smallest singular values of `m` with the
/// corresponding left and right singular vectors of the smallest.
struct NullData {
    sigma_min: f64,
    sigma_next: f64,
    sigma_max: f64,
    right: DVector<Complex64>,
    left: DVector<Complex64>,
}

fn null_data(m: &DMatrix<Complex64>) -> NullData {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("computed");
    let v_t = svd.v_t.expect("computed");
    let s = &svd.singular_values;
    // sorted descending
    let right = v_t.row(n - 1).transpose().map(|c| c.conj());
    let left = u.column(n - 1).map(|c| c.conj());
    NullData {
        sigma_min: s[n - 1],
        sigma_next: if n > 1 { s[n - 2] } else { f64::INFINITY },
        sigma_max: s[0],
        right,
        left,
    }
}

/// Rotates `q` so that its largest-modulus component is real positive and
/// scales it to unit norm.
pub(crate) fn fix_phase(q: &DVector<Complex64>) -> DVector<Complex64> {
    let (imax, _) = q.iter().enumerate().fold((0, -1.0), |(bi, bm), (i, c)| {
        if c.norm() > bm {
            (i, c.norm())
        } else {
            (bi, bm)
        }
    });
    let rot = q[imax].conj() / q[imax].norm();
    let q = q * rot;
    let norm = q.norm();
    q / Complex64::new(norm, 0.0)
}

/// Right and adjoint eigenvectors at a (numerically exact) simple root `λ`,
/// phase-fixed and normalized so that `p0 Δ'(λ) q0 = 1`.
pub fn simple_root_vectors(
    lin: &Linearization,
    lambda: Complex64,
) -> Result<(DVector<Complex64>, DVector<Complex64>, f64, f64)> {
    let delta = lin.char_matrix(lambda);
    let nd = null_data(&delta);
    let scale = nd.sigma_max.max(1.0);
    if nd.sigma_next <= 1e-6 * scale {
        return Err(Error::NonSemisimple);
    }
    let q0 = fix_phase(&nd.right);
    let p_raw = nd.left;
    let d1 = lin.char_matrix_deriv(lambda);
    let norm = (p_raw.transpose() * &d1 * &q0)[(0, 0)];
    if norm.norm() < 1e-8 {
        return Err(Error::NonSemisimple);
    }
    let p0 = p_raw / norm;
    let res_r = (&delta * &q0).norm();
    let res_l = (p0.transpose() * &delta).norm() / p0.norm();
    Ok((q0, p0, res_r, res_l))
}

/// Locates the root near `iω_guess`, checks that it lies on the imaginary
/// axis and is simple, and returns normalized eigenvectors.
pub fn hopf_eigendata(lin: &Linearization, omega_guess: f64) -> Result<EigenData> {
    let guess = Complex64::new(0.0, omega_guess);
    let (lambda, _) =
        refine_root(lin, guess).map_err(|_| Error::NoNearbyRoot(format!("{omega_guess}i")))?;
    let reach = 0.5 * omega_guess.abs().max(1.0);
    if (lambda - guess).norm() > reach || lambda.re.abs() > 1e-6 || lambda.im <= 0.0 {
        return Err(Error::NoNearbyRoot(format!(
            "{omega_guess}i on the imaginary axis (nearest root {lambda})"
        )));
    }
    let omega = lambda.im;
    let lambda = Complex64::new(0.0, omega);
    let (q0, p0, residual_right, residual_left) = simple_root_vectors(lin, lambda)?;
    Ok(EigenData {
        omega,
        lambda,
        q0,
        p0,
        residual_right,
        residual_left,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(super) fn scalar_lin() -> Linearization {
        let m = parse_model(
            "dim = 1\nparameters = [\"p\"]\ntau_max = 10\ndelays = [\"0\", \"-x1@1\"]\nrhs = [\"p - x1@2\"]\n",
        )
        .unwrap();
        linearize(&m, &[-PI / 2.0], &[-PI / 2.0]).unwrap()
    }

    #[test]
    fn scalar_linearization() {
        let lin = scalar_lin();
        assert_eq!(lin.delays.len(), 2);
        assert!(lin.matrices[0][(0, 0)].abs() < 1e-12);
        assert!((lin.matrices[1][(0, 0)] + 1.0).abs() < 1e-9);
        assert!((lin.delays[1] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_char_matrix() {
        let lin = scalar_lin();
        assert!(lin.char_matrix(c(0.0, 1.0))[(0, 0)].norm() < 1e-9);
        assert!((lin.char_matrix(c(0.0, 0.0))[(0, 0)] - c(1.0, 0.0)).norm() < 1e-9);
        assert!((lin.char_matrix(c(0.0, 2.0))[(0, 0)] - c(-1.0, 2.0)).norm() < 1e-9);
        assert!((lin.char_matrix_deriv(c(0.0, 1.0))[(0, 0)] - c(1.0, PI / 2.0)).norm() < 1e-9);
        let l = c(0.3, -1.7);
        assert!(
            (lin.char_matrix(l.conj())[(0, 0)] - lin.char_matrix(l)[(0, 0)].conj()).norm() < 1e-15
        );
    }

    #[test]
    fn scalar_eigendata() {
        let e = hopf_eigendata(&scalar_lin(), 1.1).unwrap();
        assert!((e.omega - 1.0).abs() < 1e-9);
        assert!((e.q0[0] - c(1.0, 0.0)).norm() < 1e-12);
        let p0 = c(1.0, 0.0) / c(1.0, PI / 2.0);
        assert!((e.p0[0] - p0).norm() < 1e-8, "{}", e.p0[0]);
    }

    #[test]
    fn non_semisimple_root() {
        // ẋ = B x with B = [[J, I], [0, J]], J the rotation generator: iω is
        // a double eigenvalue with a single eigenvector.
        let w = 1.3;
        let mut b = DMatrix::zeros(4, 4);
        b[(0, 1)] = -w;
        b[(1, 0)] = w;
        b[(2, 3)] = -w;
        b[(3, 2)] = w;
        b[(0, 2)] = 1.0;
        b[(1, 3)] = 1.0;
        let lin = Linearization::from_matrices(vec![b], vec![0.0]).unwrap();
        assert!(matches!(hopf_eigendata(&lin, w), Err(Error::NonSemisimple)));
    }

    #[test]
    fn no_root_near_guess() {
        let lin = Linearization::from_matrices(vec![DMatrix::from_element(1, 1, -1.0)], vec![0.0])
            .unwrap();
        assert!(matches!(
            hopf_eigendata(&lin, 1.0),
            Err(Error::NoNearbyRoot(_))
        ));
    }
}
