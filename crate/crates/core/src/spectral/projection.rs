use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{characteristic_roots, null_data, simple_root_vectors, Linearization, RootSettings};
use crate::error::{Error, Result};
use crate::histfun::ExpPoly;

/// Trapezoid nodes on each contour circle.
const CONTOUR_NODES: usize = 64;

fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

/// `v(0) + Σ_j A_j ∫_{−τ_j}^0 e^{λ(−τ_j−s)} v(s) ds`, the boundary data
/// of the resolvent equation.
fn boundary_term(lin: &Linearization, lambda: Complex64, v: &ExpPoly) -> DVector<Complex64> {
    let conv = v.exp_convolution(lambda);
    let mut b = DVector::from_vec(v.eval(0.0));
    for (a, &tau) in lin.matrices.iter().zip(&lin.delays) {
        b += to_complex(a) * DVector::from_vec(conv.eval(-tau));
    }
    b
}

/// `(λ − A)^{-1} v`: `θ ↦ e^{λθ}x0 + ∫_θ^0 e^{λ(θ−s)} v(s) ds` with
/// `Δ(λ) x0 = v(0) + Σ_j A_j ∫_{−τ_j}^0 e^{λ(−τ_j−s)} v(s) ds`.
pub fn resolvent_apply(lin: &Linearization, lambda: Complex64, v: &ExpPoly) -> Result<ExpPoly> {
    if v.dim() != lin.dim() {
        return Err(Error::DimensionMismatch {
            expected: lin.dim(),
            found: v.dim(),
        });
    }
    let delta = lin.char_matrix(lambda);
    let nd = null_data(&delta);
    if nd.sigma_min <= 1e-12 * nd.sigma_max.max(1.0) {
        return Err(Error::Singular("resolvent at a characteristic root"));
    }
    let b = boundary_term(lin, lambda, v);
    let x0 = delta.lu().solve(&b).ok_or(Error::Singular("resolvent"))?;
    let head = ExpPoly::exponential(x0.iter().cloned().collect(), lambda);
    ExpPoly::combine(
        Complex64::new(1.0, 0.0),
        &head,
        Complex64::new(1.0, 0.0),
        &v.exp_convolution(lambda),
    )
}

/// Explicit adjoint coordinate
/// `p0 v(0) + Σ_j ∫_0^{τ_j} e^{−λs} p0 A_j v(s − τ_j) ds`.
pub fn adjoint_coordinate(
    lin: &Linearization,
    lambda: Complex64,
    p0: &DVector<Complex64>,
    v: &ExpPoly,
) -> Complex64 {
    let mut total = p0.transpose() * DVector::from_vec(v.eval(0.0));
    let shifted = v.mul_exp(-lambda);
    for (a, &tau) in lin.matrices.iter().zip(&lin.delays) {
        if tau == 0.0 {
            continue;
        }
        // substitute σ = s − τ: e^{−λτ} ∫_{−τ}^0 e^{−λσ} v(σ) dσ
        let integral = DVector::from_vec(shifted.integral(-tau, 0.0)) * (-lambda * tau).exp();
        total += p0.transpose() * to_complex(a) * integral;
    }
    total[(0, 0)]
}

/// Riesz projection onto the eigenspaces of a few simple roots, each
/// enclosed by its own circle.
#[derive(Debug, Clone)]
pub struct Projector<'a> {
    lin: &'a Linearization,
    roots: Vec<Complex64>,
    radii: Vec<f64>,
    q: Vec<DVector<Complex64>>,
    p: Vec<DVector<Complex64>>,
}

impl<'a> Projector<'a> {
    pub fn new(lin: &'a Linearization, critical: &[Complex64]) -> Result<Self> {
        let settings = RootSettings {
            count: 16,
            re_cutoff: 20.0,
            ..RootSettings::default()
        };
        let mut others = characteristic_roots(lin, &settings)?.lambdas();
        others.extend_from_slice(critical);
        let mut radii = Vec::with_capacity(critical.len());
        let mut q = Vec::new();
        let mut p = Vec::new();
        for &l in critical {
            let nearest = others
                .iter()
                .map(|o| (o - l).norm())
                .filter(|d| *d > 1e-6 * (1.0 + l.norm()))
                .fold(f64::INFINITY, f64::min);
            radii.push(if nearest.is_finite() {
                0.5 * nearest
            } else {
                1.0
            });
            let (qk, pk, _, _) = simple_root_vectors(lin, l)?;
            q.push(qk);
            p.push(pk);
        }
        Ok(Projector {
            lin,
            roots: critical.to_vec(),
            radii,
            q,
            p,
        })
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// Basis functions `θ ↦ q_k e^{λ_k θ}`.
    pub fn basis(&self) -> Vec<ExpPoly> {
        self.roots
            .iter()
            .zip(&self.q)
            .map(|(l, q)| ExpPoly::exponential(q.iter().cloned().collect(), *l))
            .collect()
    }

    /// `(1/2πi) ∮ Δ(λ)^{-1} b(λ) dλ` around each root, checked against the
    /// residue `q0 p0 b(λ_k)`.
    fn residues(&self, v: &ExpPoly) -> Result<Vec<DVector<Complex64>>> {
        let n = self.lin.dim();
        let mut out = Vec::with_capacity(self.roots.len());
        for (k, &center) in self.roots.iter().enumerate() {
            let rho = self.radii[k];
            let mut acc = DVector::<Complex64>::zeros(n);
            for m in 0..CONTOUR_NODES {
                let phi = 2.0 * std::f64::consts::PI * m as f64 / CONTOUR_NODES as f64;
                let z = Complex64::from_polar(rho, phi);
                let lambda = center + z;
                let b = boundary_term(self.lin, lambda, v);
                let x = self
                    .lin
                    .char_matrix(lambda)
                    .lu()
                    .solve(&b)
                    .ok_or(Error::ContourEnclosesExtraRoots)?;
                acc += x * z;
            }
            acc /= Complex64::new(CONTOUR_NODES as f64, 0.0);
            let residue =
                &self.q[k] * (self.p[k].transpose() * boundary_term(self.lin, center, v))[(0, 0)];
            if (&acc - &residue).norm() > 1e-7 * (1.0 + residue.norm()) {
                return Err(Error::ContourEnclosesExtraRoots);
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `P_c v`.
    pub fn project(&self, v: &ExpPoly) -> Result<ExpPoly> {
        let res = self.residues(v)?;
        let parts: Vec<ExpPoly> = self
            .roots
            .iter()
            .zip(&res)
            .map(|(l, r)| ExpPoly::exponential(r.iter().cloned().collect(), *l))
            .collect();
        ExpPoly::linear_combination(
            self.lin.dim(),
            parts.iter().map(|p| (Complex64::new(1.0, 0.0), p)),
        )
    }

    /// Coordinates of `P_c v` in [`Projector::basis`].
    pub fn coordinates(&self, v: &ExpPoly) -> Result<Vec<Complex64>> {
        let res = self.residues(v)?;
        Ok(res.iter().zip(&self.q).map(|(r, q)| q.dotc(r)).collect())
    }

    /// Adjoint row vectors `p_k` normalized by `p_k Δ'(λ_k) q_k = 1`.
    pub fn adjoint_vectors(&self) -> &[DVector<Complex64>] {
        &self.p
    }
}

/// `P_c v` for the simple roots `critical`.
pub fn spectral_projection(
    lin: &Linearization,
    critical: &[Complex64],
    v: &ExpPoly,
) -> Result<ExpPoly> {
    Projector::new(lin, critical)?.project(v)
}

/// Coordinates of `P_c v` with respect to `q_k e^{λ_k θ}` (unit, phase-fixed `q_k`).
pub fn projection_coordinates(
    lin: &Linearization,
    critical: &[Complex64],
    v: &ExpPoly,
) -> Result<Vec<Complex64>> {
    Projector::new(lin, critical)?.coordinates(v)
}
