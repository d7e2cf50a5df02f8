//! Delay equations with discrete state-dependent delays.
//!
//! A model has `n` equations and `m` delay slots,
//!
//! ```text
//! ẋ(t) = f(x¹, …, xᵐ, p),   xʲ = x(t − τʲ(x¹, …, xʲ⁻¹, p)),   τ¹ = 0,
//! ```
//!
//! with `f` and `τʲ` given as parsed expressions. Slots are 1-based so that
//! `x2@3` is component 2 of the state in slot 3.

mod expr;

use serde::Deserialize;

use crate::error::{Error, Result, SyntaxError};
use crate::histfun::ExpPoly;

pub use expr::{parse_expr, Expr, ExprDisplay, Func};

/// A history segment `θ ↦ u(θ)`, `θ ≤ 0`, that can be sampled pointwise.
pub trait History {
    fn dim(&self) -> usize;
    fn eval_into(&self, theta: f64, out: &mut [f64]);
}

/// Constant history `u(θ) ≡ x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantHistory(pub Vec<f64>);

impl History for ConstantHistory {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval_into(&self, _theta: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Uses the real part of the exponential polynomial.
impl History for ExpPoly {
    fn dim(&self) -> usize {
        ExpPoly::dim(self)
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        self.eval_re_into(theta, out);
    }
}

impl<H: History + ?Sized> History for &H {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        (**self).eval_into(theta, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    name: String,
    dim: usize,
    param_names: Vec<String>,
    delays: Vec<Expr>,
    rhs: Vec<Expr>,
    tau_max: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Option<String>,
    dim: usize,
    #[serde(default)]
    parameters: Vec<String>,
    tau_max: Option<f64>,
    delays: Vec<String>,
    rhs: Vec<String>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parses a model file (`key = value` lines, see the crate README).
pub fn parse_model(text: &str) -> Result<Model> {
    let raw: RawModel = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        Error::Syntax(SyntaxError {
            line,
            column,
            message: e.message().to_string(),
        })
    })?;
    // Relocate expression syntax errors to their position in the file.
    let relocate = |src: &str, err: Error| match err {
        Error::Syntax(mut s) => {
            if let Some(off) = text.find(&format!("\"{src}\"")) {
                let (line, col) = line_col(text, off + 1);
                s.line = line;
                s.column += col - 1;
            }
            Error::Syntax(s)
        }
        e => e,
    };
    let delays: Vec<&str> = raw.delays.iter().map(String::as_str).collect();
    let rhs: Vec<&str> = raw.rhs.iter().map(String::as_str).collect();
    let parse_all = |srcs: &[&str], params: &[String]| -> Result<Vec<Expr>> {
        srcs.iter()
            .map(|s| parse_expr(s, params).map_err(|e| relocate(s, e)))
            .collect()
    };
    let parsed_delays = parse_all(&delays, &raw.parameters)?;
    let parsed_rhs = parse_all(&rhs, &raw.parameters)?;
    Model::from_parts(
        raw.name.unwrap_or_else(|| "model".to_string()),
        raw.dim,
        raw.parameters,
        parsed_delays,
        parsed_rhs,
        raw.tau_max,
    )
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_model(s)
    }
}

impl Model {
    /// Builds a model from expression sources.
    pub fn new(
        name: &str,
        dim: usize,
        params: &[&str],
        delays: &[&str],
        rhs: &[&str],
        tau_max: Option<f64>,
    ) -> Result<Model> {
        let param_names: Vec<String> = params.iter().map(|s| s.to_string()).collect();
        let delays = delays
            .iter()
            .map(|s| parse_expr(s, &param_names))
            .collect::<Result<_>>()?;
        let rhs = rhs
            .iter()
            .map(|s| parse_expr(s, &param_names))
            .collect::<Result<_>>()?;
        Model::from_parts(name.to_string(), dim, param_names, delays, rhs, tau_max)
    }

    /// Validates and assembles already parsed expressions.
    pub fn from_parts(
        name: String,
        dim: usize,
        param_names: Vec<String>,
        delays: Vec<Expr>,
        rhs: Vec<Expr>,
        tau_max: Option<f64>,
    ) -> Result<Model> {
        if dim == 0 {
            return Err(Error::InvalidModel("dim must be at least 1".into()));
        }
        if delays.is_empty() {
            return Err(Error::InvalidModel(
                "at least one delay slot (the literal 0) is required".into(),
            ));
        }
        if rhs.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rhs.len(),
            });
        }
        if let Some(t) = tau_max {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "tau_max must be positive, got {t}"
                )));
            }
        }
        for (i, name) in param_names.iter().enumerate() {
            let valid = name
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid || Func::from_name(name).is_some() {
                return Err(Error::InvalidModel(format!(
                    "invalid parameter name `{name}`"
                )));
            }
            if param_names[..i].contains(name) {
                return Err(Error::InvalidModel(format!("duplicate parameter `{name}`")));
            }
        }
        if delays[0] != Expr::Num(0.0) {
            return Err(Error::FirstDelayNotZero);
        }
        let slots = delays.len();
        let mut failure: Option<Error> = None;
        let mut check = |j: Option<usize>, component: usize, slot: usize| {
            if failure.is_some() {
                return;
            }
            if component == 0 || component > dim {
                failure = Some(Error::UnknownComponent { component, dim });
            } else if slot == 0 || slot > slots {
                failure = Some(Error::UnknownDelaySlot { slot, slots });
            } else if let Some(j) = j {
                if slot >= j {
                    failure = Some(Error::ForwardDelayReference {
                        slot: j,
                        referenced: slot,
                    });
                }
            }
        };
        for (j, d) in delays.iter().enumerate() {
            d.for_each_state(&mut |c, s| check(Some(j + 1), c, s));
        }
        for r in &rhs {
            r.for_each_state(&mut |c, s| check(None, c, s));
        }
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(Model {
            name,
            dim,
            param_names,
            delays,
            rhs,
            tau_max,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of delay slots `m` (including the zero delay).
    pub fn num_slots(&self) -> usize {
        self.delays.len()
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|p| p == name)
    }

    pub fn delay_exprs(&self) -> &[Expr] {
        &self.delays
    }

    pub fn rhs_exprs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn tau_max(&self) -> Option<f64> {
        self.tau_max
    }

    pub fn set_tau_max(&mut self, tau_max: f64) {
        self.tau_max = Some(tau_max);
    }

    /// Sets `tau_max` to 1.25 × the largest frozen delay at `x` (at least 1)
    /// unless the model file declared one.
    pub fn ensure_tau_max(&mut self, params: &[f64], x: &[f64]) -> Result<f64> {
        if let Some(t) = self.tau_max {
            return Ok(t);
        }
        let d = self.frozen_delays(params, x)?;
        let t = (1.25 * d.iter().cloned().fold(0.0, f64::max)).max(1.0);
        self.tau_max = Some(t);
        Ok(t)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.param_names.len(),
                found: params.len(),
            });
        }
        Ok(())
    }

    fn check_delay(&self, slot: usize, tau: f64) -> Result<()> {
        let above = self.tau_max.is_some_and(|t| tau > t);
        if tau.is_nan() || tau < 0.0 || above {
            return Err(Error::DelayOutOfRange { slot, value: tau });
        }
        Ok(())
    }

    /// Evaluates `F(u) = f(u¹, …, uᵐ)` with `uʲ = u(−τʲ)` computed slot by slot.
    pub fn eval_functional(&self, params: &[f64], u: &impl History) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        let mut slots = vec![0.0; self.dim * self.num_slots()];
        self.eval_functional_into(params, u, &mut slots, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`Model::eval_functional`]; `slots` must hold
    /// `dim * num_slots` values and receives the delayed states.
    pub fn eval_functional_into(
        &self,
        params: &[f64],
        u: &impl History,
        slots: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        self.check_params(params)?;
        if u.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: u.dim(),
            });
        }
        let n = self.dim;
        u.eval_into(0.0, &mut slots[..n]);
        for j in 1..self.num_slots() {
            let tau = self.delays[j].eval(slots, n, params);
            self.check_delay(j + 1, tau)?;
            let (_, rest) = slots.split_at_mut(j * n);
            u.eval_into(-tau, &mut rest[..n]);
        }
        for (o, r) in out.iter_mut().zip(&self.rhs) {
            *o = r.eval(slots, n, params);
        }
        Ok(())
    }

    /// `f(x, …, x, p)` without checking delays; used by equilibrium solvers.
    pub fn rhs_at_constant(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let slots = self.constant_slots(x);
        self.rhs
            .iter()
            .map(|r| r.eval(&slots, self.dim, params))
            .collect()
    }

    /// `f(x, …, x, p)`; delays must lie in `[0, tau_max]`.
    pub fn equilibrium_residual(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.frozen_delays(params, x)?;
        Ok(self.rhs_at_constant(params, x))
    }

    /// Delays `τʲ(x, …, x, p)` with all slots set to `x`.
    pub fn frozen_delays(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let slots = self.constant_slots(x);
        self.delays
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let tau = d.eval(&slots, self.dim, params);
                self.check_delay(j + 1, tau).map(|_| tau)
            })
            .collect()
    }

    /// Partial derivative of `f` with respect to the state in `slot` (1-based)
    /// with all slots set to `x`, by central differences with step `h`.
    pub(crate) fn slot_jacobian(&self, params: &[f64], x: &[f64], slot: usize, h: f64) -> Vec<f64> {
        let n = self.dim;
        let mut slots = self.constant_slots(x);
        let mut jac = vec![0.0; n * n];
        for k in 0..n {
            let idx = (slot - 1) * n + k;
            let orig = slots[idx];
            slots[idx] = orig + h;
            let fp: Vec<f64> = self.rhs.iter().map(|r| r.eval(&slots, n, params)).collect();
            slots[idx] = orig - h;
            let fm: Vec<f64> = self.rhs.iter().map(|r| r.eval(&slots, n, params)).collect();
            slots[idx] = orig;
            for i in 0..n {
                jac[i * n + k] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    fn constant_slots(&self, x: &[f64]) -> Vec<f64> {
        let mut slots = Vec::with_capacity(self.dim * self.num_slots());
        for _ in 0..self.num_slots() {
            slots.extend_from_slice(x);
        }
        slots
    }

    /// Renders the model back into model-file syntax.
    pub fn to_model_file(&self) -> String {
        let quote = |es: &[Expr]| {
            es.iter()
                .map(|e| format!("\"{}\"", e.display(&self.param_names)))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let params = self
            .param_names
            .iter()
            .map(|p| format!("\"{p}\""))
            .collect::<Vec<_>>()
            .join(", ");
        let mut s = format!(
            "name = \"{}\"\ndim = {}\nparameters = [{}]\n",
            self.name, self.dim, params
        );
        if let Some(t) = self.tau_max {
            s.push_str(&format!("tau_max = {t:?}\n"));
        }
        s.push_str(&format!(
            "delays = [{}]\nrhs = [{}]\n",
            quote(&self.delays),
            quote(&self.rhs)
        ));
        s
    }
}
