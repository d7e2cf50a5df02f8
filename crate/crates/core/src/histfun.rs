//! Exponential-polynomial history functions.
//!
//! An [`ExpPoly`] is a vector-valued function of the history variable
//!
//! ```text
//! θ ↦ Σ_i q_i θ^{κ_i} e^{λ_i θ}
//! ```
//!
//! with complex coefficient vectors `q_i`, non-negative integer powers `κ_i` and
//! complex exponents `λ_i`. The class is closed under differentiation,
//! linear combination, multiplication by polynomials and exponentials, and
//! under the integral operators appearing in the resolvent of a linear delay
//! equation, so every operation here is exact up to rounding.
//!
//! Real directions are represented by conjugate-paired terms; see
//! [`ExpPoly::real_part`].

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coefficients with modulus below this are treated as zero.
const DROP_BELOW: f64 = 1e-300;

/// One term `coef · θ^power · e^{exponent·θ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coef: Vec<Complex64>,
    pub power: u32,
    pub exponent: Complex64,
}

impl Term {
    fn key(&self) -> (u32, u64, u64) {
        // `+ 0.0` folds -0.0 into 0.0 so both merge.
        (
            self.power,
            (self.exponent.re + 0.0).to_bits(),
            (self.exponent.im + 0.0).to_bits(),
        )
    }

    fn is_negligible(&self) -> bool {
        self.coef.iter().all(|c| c.norm() < DROP_BELOW)
    }

    #[inline]
    fn basis(&self, theta: f64) -> Complex64 {
        (self.exponent * theta).exp() * theta.powi(self.power as i32)
    }
}

/// Vector-valued exponential polynomial in the history variable θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpPoly {
    dim: usize,
    terms: Vec<Term>,
}

impl ExpPoly {
    /// The zero function with `dim` components.
    pub fn zero(dim: usize) -> Self {
        assert!(dim > 0, "ExpPoly dimension must be positive");
        ExpPoly {
            dim,
            terms: Vec::new(),
        }
    }

    /// Constant real function.
    pub fn constant(value: &[f64]) -> Self {
        Self::exponential(
            value.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            Complex64::new(0.0, 0.0),
        )
    }

    /// `coef · e^{exponent·θ}`.
    pub fn exponential(coef: Vec<Complex64>, exponent: Complex64) -> Self {
        Self::monomial(coef, 0, exponent)
    }

    /// `coef · θ^power · e^{exponent·θ}`.
    pub fn monomial(coef: Vec<Complex64>, power: u32, exponent: Complex64) -> Self {
        let dim = coef.len();
        let mut f = Self::zero(dim);
        f.push(Term {
            coef,
            power,
            exponent,
        });
        f
    }

    /// Builds a function from raw terms, merging duplicates.
    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = Term>) -> Result<Self> {
        let mut f = Self::zero(dim);
        for t in terms {
            if t.coef.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: t.coef.len(),
                });
            }
            f.push(t);
        }
        Ok(f.normalized())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn push(&mut self, t: Term) {
        debug_assert_eq!(t.coef.len(), self.dim);
        self.terms.push(t);
    }

    /// Merges terms with identical (power, exponent) and drops zero terms.
    fn normalized(self) -> Self {
        let mut index: HashMap<(u32, u64, u64), usize> = HashMap::with_capacity(self.terms.len());
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms {
            match index.get(&t.key()) {
                Some(&k) => {
                    for (a, b) in out[k].coef.iter_mut().zip(&t.coef) {
                        *a += *b;
                    }
                }
                None => {
                    index.insert(t.key(), out.len());
                    out.push(t);
                }
            }
        }
        out.retain(|t| !t.is_negligible());
        ExpPoly {
            dim: self.dim,
            terms: out,
        }
    }

    /// Exact evaluation at θ.
    pub fn eval(&self, theta: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        self.eval_into(theta, &mut out);
        out
    }

    pub fn eval_into(&self, theta: f64, out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for t in &self.terms {
            let b = t.basis(theta);
            for (o, c) in out.iter_mut().zip(&t.coef) {
                *o += c * b;
            }
        }
    }

    /// Real part of the value at θ.
    pub fn eval_re_into(&self, theta: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.terms {
            let b = t.basis(theta);
            for (o, c) in out.iter_mut().zip(&t.coef) {
                *o += c.re * b.re - c.im * b.im;
            }
        }
    }

    /// The `order`-th derivative with respect to θ.
    pub fn derivative(&self, order: usize) -> Self {
        let mut f = self.clone();
        for _ in 0..order {
            f = f.derivative_once();
        }
        f
    }

    fn derivative_once(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for t in &self.terms {
            if t.power > 0 {
                let k = t.power as f64;
                out.push(Term {
                    coef: t.coef.iter().map(|c| c * k).collect(),
                    power: t.power - 1,
                    exponent: t.exponent,
                });
            }
            if t.exponent != Complex64::new(0.0, 0.0) {
                out.push(Term {
                    coef: t.coef.iter().map(|c| c * t.exponent).collect(),
                    power: t.power,
                    exponent: t.exponent,
                });
            }
        }
        out.normalized()
    }

    /// `a·f + b·g`.
    pub fn combine(a: Complex64, f: &ExpPoly, b: Complex64, g: &ExpPoly) -> Result<Self> {
        if f.dim != g.dim {
            return Err(Error::DimensionMismatch {
                expected: f.dim,
                found: g.dim,
            });
        }
        let mut out = Self::zero(f.dim);
        for (s, h) in [(a, f), (b, g)] {
            if s == Complex64::new(0.0, 0.0) {
                continue;
            }
            for t in &h.terms {
                out.push(Term {
                    coef: t.coef.iter().map(|c| c * s).collect(),
                    power: t.power,
                    exponent: t.exponent,
                });
            }
        }
        Ok(out.normalized())
    }

    /// Sum of `c_k·f_k`; all functions must share one dimension.
    pub fn linear_combination<'a>(
        dim: usize,
        parts: impl IntoIterator<Item = (Complex64, &'a ExpPoly)>,
    ) -> Result<Self> {
        let mut out = Self::zero(dim);
        for (s, h) in parts {
            if h.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: h.dim,
                });
            }
            for t in &h.terms {
                out.push(Term {
                    coef: t.coef.iter().map(|c| c * s).collect(),
                    power: t.power,
                    exponent: t.exponent,
                });
            }
        }
        Ok(out.normalized())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let terms = self.terms.iter().map(|t| Term {
            coef: t.coef.iter().map(|c| c * s).collect(),
            power: t.power,
            exponent: t.exponent,
        });
        ExpPoly {
            dim: self.dim,
            terms: terms.collect(),
        }
        .normalized()
    }

    /// Multiplies by `(θ − root)^multiplicity`.
    pub fn poly_multiply(&self, root: f64, multiplicity: u32) -> Self {
        let m = multiplicity;
        // binomial expansion Σ_k C(m,k) θ^k (−root)^{m−k}
        let mut binom = vec![1.0f64; m as usize + 1];
        for k in 1..=m as usize {
            binom[k] = binom[k - 1] * (m as usize - k + 1) as f64 / k as f64;
        }
        let mut out = Self::zero(self.dim);
        for t in &self.terms {
            for k in 0..=m {
                let w = binom[k as usize] * (-root).powi((m - k) as i32);
                if w == 0.0 {
                    continue;
                }
                out.push(Term {
                    coef: t.coef.iter().map(|c| c * w).collect(),
                    power: t.power + k,
                    exponent: t.exponent,
                });
            }
        }
        out.normalized()
    }

    /// Multiplies by `e^{mu·θ}`.
    pub fn mul_exp(&self, mu: Complex64) -> Self {
        let terms = self.terms.iter().map(|t| Term {
            coef: t.coef.clone(),
            power: t.power,
            exponent: t.exponent + mu,
        });
        ExpPoly {
            dim: self.dim,
            terms: terms.collect(),
        }
        .normalized()
    }

    /// Pointwise complex conjugate.
    pub fn conj(&self) -> Self {
        let terms = self.terms.iter().map(|t| Term {
            coef: t.coef.iter().map(|c| c.conj()).collect(),
            power: t.power,
            exponent: t.exponent.conj(),
        });
        ExpPoly {
            dim: self.dim,
            terms: terms.collect(),
        }
        .normalized()
    }

    /// `(f + f̄)/2`, a conjugate-paired (real-valued) function.
    pub fn real_part(&self) -> Self {
        Self::combine(
            Complex64::new(0.5, 0.0),
            self,
            Complex64::new(0.5, 0.0),
            &self.conj(),
        )
        .expect("same dimension")
    }

    /// `(f − f̄)/(2i)`, a conjugate-paired (real-valued) function.
    pub fn imag_part(&self) -> Self {
        Self::combine(
            Complex64::new(0.0, -0.5),
            self,
            Complex64::new(0.0, 0.5),
            &self.conj(),
        )
        .expect("same dimension")
    }

    /// `∫_a^b f(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for t in &self.terms {
            let w = integrate_monomial(t.power, t.exponent, a, b);
            for (o, c) in out.iter_mut().zip(&t.coef) {
                *o += c * w;
            }
        }
        out
    }

    /// The function `θ ↦ ∫_θ^0 e^{λ(θ−s)} f(s) ds`.
    ///
    /// Closed form per term; exponents equal to `λ` are handled exactly, nearby
    /// (but different) exponents lose accuracy through cancellation.
    pub fn exp_convolution(&self, lambda: Complex64) -> Self {
        let mut out = Self::zero(self.dim);
        for t in &self.terms {
            let kappa = t.power;
            let nu = t.exponent - lambda;
            if nu == Complex64::new(0.0, 0.0) {
                let w = -1.0 / (kappa as f64 + 1.0);
                out.push(Term {
                    coef: t.coef.iter().map(|c| c * w).collect(),
                    power: kappa + 1,
                    exponent: lambda,
                });
                continue;
            }
            // e^{λθ}[G(0) − G(θ)] with G(s) = e^{νs} Σ_i (−1)^i κ!/(κ−i)! s^{κ−i} / ν^{i+1}
            let mut falling = 1.0; // κ!/(κ−i)!
            let mut nu_pow = nu; // ν^{i+1}
            for i in 0..=kappa {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                let w = sign * falling / nu_pow;
                out.push(Term {
                    coef: t.coef.iter().map(|c| -c * w).collect(),
                    power: kappa - i,
                    exponent: t.exponent,
                });
                if i == kappa {
                    out.push(Term {
                        coef: t.coef.iter().map(|c| c * w).collect(),
                        power: 0,
                        exponent: lambda,
                    });
                }
                falling *= (kappa - i) as f64;
                nu_pow *= nu;
            }
        }
        out.normalized()
    }

    /// Maximum modulus over `samples` equidistant points of `[a, b]`.
    pub fn sup_norm(&self, a: f64, b: f64, samples: usize) -> f64 {
        let samples = samples.max(2);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.dim];
        let mut m = 0.0f64;
        for k in 0..samples {
            let theta = a + (b - a) * k as f64 / (samples - 1) as f64;
            self.eval_into(theta, &mut buf);
            for v in &buf {
                m = m.max(v.norm());
            }
        }
        m
    }
}

/// `∫_a^b s^κ e^{νs} ds`.
pub(crate) fn integrate_monomial(kappa: u32, nu: Complex64, a: f64, b: f64) -> Complex64 {
    let span = a.abs().max(b.abs());
    if nu.norm() * span < 0.5 {
        // Taylor series of e^{νs}; avoids cancellation for small ν.
        let mut sum = Complex64::new(0.0, 0.0);
        let mut coef = Complex64::new(1.0, 0.0); // ν^m / m!
        for m in 0..60u32 {
            let p = (kappa + m + 1) as i32;
            let term = coef * ((b.powi(p) - a.powi(p)) / p as f64);
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() && m > 2 {
                break;
            }
            coef = coef * nu / (m + 1) as f64;
        }
        return sum;
    }
    let anti = |s: f64| {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut falling = 1.0;
        let mut nu_pow = nu;
        for i in 0..=kappa {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * falling * s.powi((kappa - i) as i32) / nu_pow;
            falling *= (kappa - i) as f64;
            nu_pow *= nu;
        }
        acc * (nu * s).exp()
    };
    anti(b) - anti(a)
}
