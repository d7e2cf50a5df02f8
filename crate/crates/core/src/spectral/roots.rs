use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{null_data, Linearization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSettings {
    /// Number of rightmost roots to return.
    pub count: usize,
    /// Only roots with `Re λ ≥ −re_cutoff` are returned.
    pub re_cutoff: f64,
    /// Chebyshev collocation points used for seeding (polynomial degree).
    pub cheb_nodes: usize,
}

impl Default for RootSettings {
    fn default() -> Self {
        RootSettings {
            count: 6,
            re_cutoff: 10.0,
            cheb_nodes: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharRoot {
    pub lambda: Complex64,
    /// Number of discretized eigenvalues clustering at the root.
    pub multiplicity: usize,
    /// `‖Δ(λ) q‖` for the unit eigenvector `q`.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RootList {
    /// Sorted by descending real part; closed under conjugation.
    pub roots: Vec<CharRoot>,
    pub warnings: Vec<String>,
}

impl RootList {
    pub fn lambdas(&self) -> Vec<Complex64> {
        self.roots.iter().map(|r| r.lambda).collect()
    }

    /// Rightmost root with positive imaginary part.
    pub fn rightmost_complex(&self) -> Option<Complex64> {
        self.roots.iter().map(|r| r.lambda).find(|l| l.im > 0.0)
    }
}

/// Chebyshev points `cos(kπ/N)` and the differentiation matrix on `[−1, 1]`.
fn chebyshev(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<f64> = (0..=n).map(|k| (k as f64 * PI / n as f64).cos()).collect();
    let c = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                d[(i, j)] = c(i) / c(j) * sign / (x[i] - x[j]);
            }
        }
        let row_sum: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row_sum;
    }
    (x, d)
}

/// Lagrange basis at `t` for the Chebyshev points (barycentric form).
fn lagrange_row(x: &[f64], t: f64) -> Vec<f64> {
    let n = x.len() - 1;
    if let Some(k) = x.iter().position(|&xk| (xk - t).abs() < 1e-14) {
        let mut row = vec![0.0; n + 1];
        row[k] = 1.0;
        return row;
    }
    let w = |j: usize| {
        let s = if j % 2 == 0 { 1.0 } else { -1.0 };
        if j == 0 || j == n {
            0.5 * s
        } else {
            s
        }
    };
    let terms: Vec<f64> = (0..=n).map(|j| w(j) / (t - x[j])).collect();
    let sum: f64 = terms.iter().sum();
    terms.into_iter().map(|v| v / sum).collect()
}

/// Eigenvalues of the collocated infinitesimal generator on `[−τ, 0]`.
fn pseudospectral_seeds(lin: &Linearization, nodes: usize) -> Vec<Complex64> {
    let n = lin.dim();
    let tau = lin.max_delay();
    if tau == 0.0 {
        return lin
            .total_matrix()
            .complex_eigenvalues()
            .iter()
            .cloned()
            .collect();
    }
    let (x, d) = chebyshev(nodes);
    let size = n * (nodes + 1);
    let mut gen = DMatrix::zeros(size, size);
    let scale = 2.0 / tau;
    for k in 1..=nodes {
        for l in 0..=nodes {
            let v = scale * d[(k, l)];
            if v != 0.0 {
                for i in 0..n {
                    gen[(k * n + i, l * n + i)] = v;
                }
            }
        }
    }
    for (a, &tj) in lin.matrices.iter().zip(&lin.delays) {
        // θ = −τ_j maps to x = 1 − 2τ_j/τ
        let row = lagrange_row(&x, 1.0 - 2.0 * tj / tau);
        for (l, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                for k in 0..n {
                    gen[(i, l * n + k)] += w * a[(i, k)];
                }
            }
        }
    }
    gen.complex_eigenvalues().iter().cloned().collect()
}

/// Newton iteration on `[Δ(λ)q; c^H q − 1] = 0` from `guess`; returns the
/// root and its unit eigenvector.
pub(crate) fn refine_root(
    lin: &Linearization,
    guess: Complex64,
) -> Result<(Complex64, DVector<Complex64>)> {
    let n = lin.dim();
    let mut lambda = guess;
    let mut q = null_data(&lin.char_matrix(lambda)).right;
    let c = q.clone();
    for _ in 0..40 {
        let delta = lin.char_matrix(lambda);
        let r = &delta * &q;
        let cq = c.dotc(&q);
        if r.norm() <= 1e-15 * (1.0 + lambda.norm()) && (cq - 1.0).norm() <= 1e-15 {
            break;
        }
        let mut jac = DMatrix::<Complex64>::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&delta);
        let dq = lin.char_matrix_deriv(lambda) * &q;
        jac.view_mut((0, n), (n, 1)).copy_from(&dq);
        jac.view_mut((n, 0), (1, n)).copy_from(&c.adjoint());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&r);
        rhs[n] = cq - 1.0;
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular("root refinement"))?;
        q -= step.rows(0, n);
        lambda -= step[n];
        if !lambda.re.is_finite() || !lambda.im.is_finite() {
            return Err(Error::NoConvergence(format!(
                "root refinement from {guess}"
            )));
        }
        if step.norm() <= 1e-14 * (1.0 + lambda.norm() + q.norm()) {
            break;
        }
    }
    let qn = q.normalize();
    let res = (lin.char_matrix(lambda) * &qn).norm();
    if !(res <= 1e-9 * (1.0 + lambda.norm())) {
        return Err(Error::NoConvergence(format!(
            "root refinement from {guess} (residual {res:e})"
        )));
    }
    Ok((lambda, qn))
}

/// Rightmost roots of `det Δ(λ) = 0`: pseudospectral seeds refined by
/// Newton, sorted by descending real part.
pub fn characteristic_roots(lin: &Linearization, settings: &RootSettings) -> Result<RootList> {
    if settings.count == 0 || settings.cheb_nodes < 2 {
        return Err(Error::InvalidSettings(
            "root count ≥ 1 and at least 2 Chebyshev nodes required".into(),
        ));
    }
    let seeds = pseudospectral_seeds(lin, settings.cheb_nodes);
    let mut candidates: Vec<Complex64> = seeds
        .iter()
        .cloned()
        .filter(|s| s.im >= -1e-8 * (1.0 + s.norm()) && s.re >= -settings.re_cutoff - 1.0)
        .collect();
    candidates.sort_by(|a, b| b.re.total_cmp(&a.re));

    let mut list = RootList::default();
    let same = |a: Complex64, b: Complex64| (a - b).norm() <= 1e-7 * (1.0 + a.norm());
    let mut found: Vec<(Complex64, f64)> = Vec::new();
    let mut failed: Vec<Complex64> = Vec::new();
    for seed in candidates.into_iter().take(4 * settings.count + 10) {
        match refine_root(lin, seed) {
            Ok((mut l, mut q)) => {
                if l.im.abs() <= 1e-8 * (1.0 + l.norm()) {
                    l.im = 0.0;
                } else if l.im < 0.0 {
                    l = l.conj();
                    q = q.map(|c| c.conj());
                }
                if l.re < -settings.re_cutoff || found.iter().any(|(f, _)| same(*f, l)) {
                    continue;
                }
                let res = (lin.char_matrix(l) * &q).norm();
                found.push((l, res));
            }
            Err(_) => failed.push(seed),
        }
    }
    let cluster = |l: Complex64| {
        let m = seeds
            .iter()
            .filter(|s| (**s - l).norm() <= 1e-3 * (1.0 + l.norm()))
            .count();
        m.max(1)
    };
    let mut roots: Vec<CharRoot> = Vec::new();
    for (l, residual) in found {
        let multiplicity = cluster(l);
        roots.push(CharRoot {
            lambda: l,
            multiplicity,
            residual,
        });
        if l.im != 0.0 {
            roots.push(CharRoot {
                lambda: l.conj(),
                multiplicity,
                residual,
            });
        }
    }
    roots.sort_by(|a, b| {
        b.lambda
            .re
            .total_cmp(&a.lambda.re)
            .then(b.lambda.im.total_cmp(&a.lambda.im))
    });
    if roots.len() < settings.count {
        list.warnings.push(format!(
            "found {} roots with real part ≥ {}, {} requested",
            roots.len(),
            -settings.re_cutoff,
            settings.count
        ));
    }
    // keep conjugate pairs together at the cut
    let mut keep = settings.count.min(roots.len());
    if keep < roots.len() && keep > 0 && roots[keep - 1].lambda.im > 0.0 {
        keep += 1;
    }
    roots.truncate(keep);
    // seeds left of the reported set cannot change it
    let floor = if roots.len() < settings.count {
        f64::NEG_INFINITY
    } else {
        roots.last().map_or(f64::NEG_INFINITY, |r| r.lambda.re)
    };
    for seed in failed.into_iter().filter(|s| s.re >= floor) {
        list.warnings
            .push(format!("root refinement failed for seed {seed}"));
    }
    list.roots = roots;
    Ok(list)
}
