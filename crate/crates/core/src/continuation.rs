//! Equilibria: Newton solves, pseudo-arclength continuation in one
//! parameter with Hopf/fold detection, and two-parameter continuation of
//! Hopf curves with optional monitoring of the first Lyapunov coefficient.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::derivs::DerivSettings;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::normalform::hopf_l1_at;
use crate::spectral::{
    characteristic_roots, fix_phase, hopf_eigendata, linearize, linearize_unchecked, refine_root,
    RootSettings,
};

/// Residual bound for accepted equilibria and continuation points.
pub const NEWTON_TOL: f64 = 1e-10;
/// Bisection tolerance (max-norm in state and parameter) for Hopf/fold events.
pub const EVENT_TOL: f64 = 1e-8;
/// Parameter tolerance for locating zeros of L₁ along Hopf curves.
pub const L1_PARAM_TOL: f64 = 1e-4;

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn fd_jacobian(
    f: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    y: &DVector<f64>,
    rows: usize,
    cols: std::ops::Range<usize>,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(rows, cols.len());
    let mut yp = y.clone();
    for (c, i) in cols.enumerate() {
        let h = rel_step * (1.0 + y[i].abs());
        yp[i] = y[i] + h;
        let fp = f(&yp)?;
        yp[i] = y[i] - h;
        let fm = f(&yp)?;
        yp[i] = y[i];
        jac.set_column(c, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

fn solve_checked(m: DMatrix<f64>, rhs: &DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if !(svd.singular_values.min() > 1e-13 * smax.max(1e-300)) {
        return Err(Error::Singular(what));
    }
    m.lu().solve(rhs).ok_or(Error::Singular(what))
}

/// Newton's method on `f(x, …, x, p) = 0` with a finite-difference Jacobian
/// and step halving.
pub fn solve_equilibrium(model: &Model, params: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
    let n = model.dim();
    if guess.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: guess.len(),
        });
    }
    if params.len() != model.num_params() {
        return Err(Error::DimensionMismatch {
            expected: model.num_params(),
            found: params.len(),
        });
    }
    let g = |x: &DVector<f64>| {
        Ok(DVector::from_vec(
            model.rhs_at_constant(params, x.as_slice()),
        ))
    };
    let mut x = DVector::from_column_slice(guess);
    let mut r = g(&x)?;
    for _ in 0..25 {
        if max_abs(&r) <= NEWTON_TOL {
            model.frozen_delays(params, x.as_slice())?;
            return Ok(x.iter().cloned().collect());
        }
        let jac = fd_jacobian(&g, &x, n, 0..n, 1e-7)?;
        let dx = solve_checked(jac, &r, "equilibrium Jacobian")?;
        let norm0 = max_abs(&r);
        let mut alpha = 1.0;
        loop {
            let trial = &x - &dx * alpha;
            let rt = g(&trial)?;
            if max_abs(&rt) < norm0 || alpha < 1.0 / 1024.0 {
                x = trial;
                r = rt;
                break;
            }
            alpha *= 0.5;
        }
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    if max_abs(&r) <= NEWTON_TOL {
        model.frozen_delays(params, x.as_slice())?;
        return Ok(x.iter().cloned().collect());
    }
    Err(Error::NoConvergence(format!(
        "equilibrium residual {:e} after 25 iterations",
        max_abs(&r)
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSettings {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_points: usize,
    /// Initial direction: sign of the change of the (first) free parameter.
    pub direction: f64,
    pub roots: RootSettings,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        ContinuationSettings {
            initial_step: 0.01,
            min_step: 1e-5,
            max_step: 0.5,
            max_points: 200,
            direction: 1.0,
            roots: RootSettings::default(),
        }
    }
}

/// A square-minus-one system `R(y) = 0` traced by pseudo-arclength.
trait Curve {
    fn unknowns(&self) -> usize;
    fn residual(&self, y: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// Gauss-Newton with minimum-norm steps: moves a rough guess to a nearby
/// point of the curve without fixing any coordinate.
fn project_onto(curve: &dyn Curve, guess: &DVector<f64>) -> Result<DVector<f64>> {
    let mut y = guess.clone();
    for _ in 0..30 {
        let r = curve.residual(&y)?;
        if max_abs(&r) <= NEWTON_TOL {
            return Ok(y);
        }
        let svd = curve.jacobian(&y)?.svd(true, true);
        let smax = svd.singular_values.max();
        let dy = svd
            .solve(&r, 1e-12 * smax)
            .map_err(|_| Error::Singular("Hopf system"))?;
        y -= dy;
        if !y.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::NoConvergence(
        "no Hopf point near the starting guess".into(),
    ))
}

/// Newton on `[R(y); d·(y − pred)] = 0`; returns the point and the number of
/// iterations.
fn correct(
    curve: &dyn Curve,
    pred: &DVector<f64>,
    dir: &DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let m = curve.unknowns();
    let mut y = pred.clone();
    for it in 0..10 {
        let r = curve.residual(&y)?;
        let constraint = dir.dot(&(&y - pred));
        if max_abs(&r) <= NEWTON_TOL && constraint.abs() <= NEWTON_TOL {
            return Ok((y, it));
        }
        let mut jac = DMatrix::zeros(m, m);
        jac.view_mut((0, 0), (m - 1, m))
            .copy_from(&curve.jacobian(&y)?);
        jac.set_row(m - 1, &dir.transpose());
        let mut rhs = DVector::zeros(m);
        rhs.rows_mut(0, m - 1).copy_from(&r);
        rhs[m - 1] = constraint;
        let dy = solve_checked(jac, &rhs, "continuation corrector")?;
        y -= dy;
        if !y.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    let r = curve.residual(&y)?;
    if max_abs(&r) <= NEWTON_TOL {
        return Ok((y, 10));
    }
    Err(Error::NoConvergence(format!(
        "corrector residual {:e}",
        max_abs(&r)
    )))
}

/// Unit tangent `t` with `J t = 0`, oriented by `t·reference > 0`.
fn tangent(curve: &dyn Curve, y: &DVector<f64>, reference: &DVector<f64>) -> Result<DVector<f64>> {
    let m = curve.unknowns();
    let mut big = DMatrix::zeros(m, m);
    big.view_mut((0, 0), (m - 1, m))
        .copy_from(&curve.jacobian(y)?);
    big.set_row(m - 1, &reference.transpose());
    let mut e = DVector::zeros(m);
    e[m - 1] = 1.0;
    let t = solve_checked(big, &e, "tangent")?;
    Ok(t.normalize())
}

/// Steps along the curve; `accept` receives each new point (and the previous
/// one) and returns `false` to stop.
fn trace(
    curve: &dyn Curve,
    y0: DVector<f64>,
    t0: DVector<f64>,
    settings: &ContinuationSettings,
    mut accept: impl FnMut(&DVector<f64>, &DVector<f64>, f64, usize) -> Result<bool>,
) -> Result<()> {
    let mut y = y0;
    let mut dir = t0;
    let mut ds = settings.initial_step;
    let mut accepted = 1;
    while accepted < settings.max_points {
        let pred = &y + &dir * ds;
        let outcome = correct(curve, &pred, &dir).and_then(|(ynew, iters)| {
            let chord = &ynew - &y;
            let len = chord.norm();
            // guard against jumping to another branch
            if len == 0.0 || chord.dot(&dir) / len < 0.9 || len > 2.0 * ds {
                Err(Error::NoConvergence("corrector left the branch".into()))
            } else {
                Ok((ynew, iters))
            }
        });
        match outcome {
            Ok((ynew, iters)) => {
                accepted += 1;
                let go_on = accept(&y, &ynew, ds, iters)?;
                let secant = (&ynew - &y).normalize();
                y = ynew;
                dir = secant;
                if !go_on {
                    return Ok(());
                }
                if iters <= 3 {
                    ds = (ds * 1.5).min(settings.max_step);
                }
            }
            Err(_) => {
                ds *= 0.5;
                if ds < settings.min_step {
                    return Err(Error::StepUnderflow(ds));
                }
            }
        }
    }
    Ok(())
}

/// Point on the chord from `a` to `b` at fraction `sigma`, corrected back
/// onto the curve orthogonally to the chord.
fn on_chord(
    curve: &dyn Curve,
    a: &DVector<f64>,
    b: &DVector<f64>,
    sigma: f64,
) -> Result<DVector<f64>> {
    let d = (b - a).normalize();
    let pred = a + (b - a) * sigma;
    correct(curve, &pred, &d).map(|(y, _)| y)
}

// ---------------------------------------------------------------------------
// Equilibrium branches

struct EquilibriumCurve<'a> {
    model: &'a Model,
    params: Vec<f64>,
    free: usize,
}

impl EquilibriumCurve<'_> {
    fn split(&self, y: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let n = self.model.dim();
        let mut p = self.params.clone();
        p[self.free] = y[n];
        (y.rows(0, n).iter().cloned().collect(), p)
    }
}

impl Curve for EquilibriumCurve<'_> {
    fn unknowns(&self) -> usize {
        self.model.dim() + 1
    }

    fn residual(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let (x, p) = self.split(y);
        Ok(DVector::from_vec(self.model.rhs_at_constant(&p, &x)))
    }

    fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.model.dim();
        fd_jacobian(&|v| self.residual(v), y, n, 0..n + 1, 1e-7)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub params: Vec<f64>,
    pub x: Vec<f64>,
    /// Rightmost characteristic roots, closed under conjugation.
    pub roots: Vec<Complex64>,
    /// Real part of the rightmost root with positive imaginary part.
    pub re_pair: Option<f64>,
    /// `det Σ_j A_j`.
    pub det_jacobian: f64,
    pub stable: bool,
    pub step: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Hopf,
    Fold,
    /// Zero of L₁ along a Hopf curve (degenerate Hopf, Bautin candidate).
    L1Zero,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Hopf => "HOPF",
            EventKind::Fold => "FOLD",
            EventKind::L1Zero => "L1_ZERO",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchEvent {
    pub kind: EventKind,
    pub point: BranchPoint,
    /// Critical frequency for Hopf events.
    pub omega: Option<f64>,
    /// Index into `Branch::points` of the point preceding the event.
    pub after: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub events: Vec<BranchEvent>,
    pub warnings: Vec<String>,
}

fn branch_point(
    curve: &EquilibriumCurve,
    y: &DVector<f64>,
    roots: &RootSettings,
    step: f64,
    iters: usize,
) -> Result<BranchPoint> {
    let (x, params) = curve.split(y);
    let lin = linearize(curve.model, &params, &x)?;
    let list = characteristic_roots(&lin, roots)?;
    let re_pair = list.rightmost_complex().map(|l| l.re);
    let stable = list.roots.first().is_none_or(|r| r.lambda.re < 0.0);
    Ok(BranchPoint {
        params,
        x,
        roots: list.lambdas(),
        re_pair,
        det_jacobian: lin.total_matrix().determinant(),
        stable,
        step,
        newton_iterations: iters,
    })
}

/// Bisection on the chord between `a` and `b` for a sign change of `psi`.
fn bisect_event(
    curve: &EquilibriumCurve,
    a: &DVector<f64>,
    b: &DVector<f64>,
    psi: &dyn Fn(&DVector<f64>) -> Result<f64>,
) -> Result<DVector<f64>> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut ya, mut yb) = (a.clone(), b.clone());
    let sign_a = psi(a)? > 0.0;
    for _ in 0..80 {
        if (&ya - &yb).amax() <= EVENT_TOL || hi - lo < 1e-14 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let ym = on_chord(curve, a, b, mid)?;
        if (psi(&ym)? > 0.0) == sign_a {
            lo = mid;
            ya = ym;
        } else {
            hi = mid;
            yb = ym;
        }
    }
    on_chord(curve, a, b, 0.5 * (lo + hi))
}

/// Continues equilibria in parameter `free` from `(params, x0)` while the
/// parameter stays inside `range`.
pub fn continue_branch(
    model: &Model,
    params: &[f64],
    free: usize,
    range: (f64, f64),
    x0: &[f64],
    settings: &ContinuationSettings,
) -> Result<Branch> {
    if free >= model.num_params() {
        return Err(Error::InvalidSettings(format!(
            "free parameter index {free} out of range"
        )));
    }
    let x_star = solve_equilibrium(model, params, x0)?;
    let n = model.dim();
    let curve = EquilibriumCurve {
        model,
        params: params.to_vec(),
        free,
    };
    let mut y0 = DVector::from_vec(x_star);
    y0 = y0.push(params[free]);
    let mut reference = DVector::zeros(n + 1);
    reference[n] = settings.direction.signum();
    let t0 = tangent(&curve, &y0, &reference)?;

    let mut branch = Branch::default();
    branch
        .points
        .push(branch_point(&curve, &y0, &settings.roots, 0.0, 0)?);
    let in_range = |p: f64| p >= range.0 && p <= range.1;
    if !in_range(params[free]) {
        return Ok(branch);
    }
    let roots = settings.roots;
    trace(&curve, y0, t0, settings, |prev, y, ds, iters| {
        if !in_range(y[n]) {
            return Ok(false);
        }
        let point = branch_point(&curve, y, &roots, ds, iters)?;
        let last = branch.points.last().expect("initial point").clone();
        let after = branch.points.len() - 1;
        if let (Some(a), Some(b)) = (last.re_pair, point.re_pair) {
            if (a > 0.0) != (b > 0.0) {
                let psi = |v: &DVector<f64>| -> Result<f64> {
                    let (x, p) = curve.split(v);
                    let lin = linearize(model, &p, &x)?;
                    let list = characteristic_roots(&lin, &roots)?;
                    list.rightmost_complex()
                        .map(|l| l.re)
                        .ok_or(Error::NoNearbyRoot("complex pair".into()))
                };
                let ye = bisect_event(&curve, prev, y, &psi)?;
                let ev = branch_point(&curve, &ye, &roots, ds, 0)?;
                let (x, p) = curve.split(&ye);
                let lin = linearize(model, &p, &x)?;
                let omega_guess = characteristic_roots(&lin, &roots)?
                    .rightmost_complex()
                    .map(|l| l.im)
                    .unwrap_or(0.0);
                match hopf_eigendata(&lin, omega_guess) {
                    Ok(e) => branch.events.push(BranchEvent {
                        kind: EventKind::Hopf,
                        point: ev,
                        omega: Some(e.omega),
                        after,
                    }),
                    Err(err) => branch
                        .warnings
                        .push(format!("Hopf candidate at {} rejected: {err}", ye[n])),
                }
            }
        }
        if (last.det_jacobian > 0.0) != (point.det_jacobian > 0.0) {
            let psi = |v: &DVector<f64>| -> Result<f64> {
                let (x, p) = curve.split(v);
                Ok(linearize_unchecked(model, &p, &x)?
                    .total_matrix()
                    .determinant())
            };
            let ye = bisect_event(&curve, prev, y, &psi)?;
            let ev = branch_point(&curve, &ye, &roots, ds, 0)?;
            branch.events.push(BranchEvent {
                kind: EventKind::Fold,
                point: ev,
                omega: None,
                after,
            });
        }
        branch.points.push(point);
        Ok(true)
    })?;
    Ok(branch)
}

// ---------------------------------------------------------------------------
// Hopf curves

/// Unknowns `(x, Re q, Im q, ω, p_a, p_b)`; equations: equilibrium,
/// `Δ(iω) q = 0` split into real and imaginary parts, `cᴴq = 1`.
struct HopfSystem<'a> {
    model: &'a Model,
    params: Vec<f64>,
    free: [usize; 2],
    c: DVector<Complex64>,
}

impl HopfSystem<'_> {
    fn n(&self) -> usize {
        self.model.dim()
    }

    fn unpack(&self, y: &DVector<f64>) -> (Vec<f64>, DVector<Complex64>, f64, Vec<f64>) {
        let n = self.n();
        let x = y.rows(0, n).iter().cloned().collect();
        let q = DVector::from_fn(n, |i, _| Complex64::new(y[n + i], y[2 * n + i]));
        let mut p = self.params.clone();
        p[self.free[0]] = y[3 * n + 1];
        p[self.free[1]] = y[3 * n + 2];
        (x, q, y[3 * n], p)
    }

    fn pack(x: &[f64], q: &DVector<Complex64>, omega: f64, pa: f64, pb: f64) -> DVector<f64> {
        let mut v: Vec<f64> = x.to_vec();
        v.extend(q.iter().map(|c| c.re));
        v.extend(q.iter().map(|c| c.im));
        v.extend([omega, pa, pb]);
        DVector::from_vec(v)
    }
}

impl Curve for HopfSystem<'_> {
    fn unknowns(&self) -> usize {
        3 * self.n() + 3
    }

    fn residual(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        let (x, q, omega, p) = self.unpack(y);
        let lin = linearize_unchecked(self.model, &p, &x)?;
        let dq = lin.char_matrix(Complex64::new(0.0, omega)) * &q;
        let g = self.model.rhs_at_constant(&p, &x);
        let cq = self.c.dotc(&q) - Complex64::new(1.0, 0.0);
        let mut r = DVector::zeros(3 * n + 2);
        for i in 0..n {
            r[i] = g[i];
            r[n + i] = dq[i].re;
            r[2 * n + i] = dq[i].im;
        }
        r[3 * n] = cq.re;
        r[3 * n + 1] = cq.im;
        Ok(r)
    }

    fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        let m = 3 * n + 3;
        let mut jac = DMatrix::zeros(m - 1, m);
        let (x, q, omega, p) = self.unpack(y);
        let lin = linearize_unchecked(self.model, &p, &x)?;
        let lambda = Complex64::new(0.0, omega);
        let d = lin.char_matrix(lambda);
        // exact blocks for q and ω
        for i in 0..n {
            for k in 0..n {
                jac[(n + i, n + k)] = d[(i, k)].re;
                jac[(n + i, 2 * n + k)] = -d[(i, k)].im;
                jac[(2 * n + i, n + k)] = d[(i, k)].im;
                jac[(2 * n + i, 2 * n + k)] = d[(i, k)].re;
            }
        }
        let dw = lin.char_matrix_deriv(lambda) * &q * Complex64::new(0.0, 1.0);
        for i in 0..n {
            jac[(n + i, 3 * n)] = dw[i].re;
            jac[(2 * n + i, 3 * n)] = dw[i].im;
        }
        for k in 0..n {
            let c = self.c[k];
            jac[(3 * n, n + k)] = c.re;
            jac[(3 * n, 2 * n + k)] = c.im;
            jac[(3 * n + 1, n + k)] = -c.im;
            jac[(3 * n + 1, 2 * n + k)] = c.re;
        }
        // finite differences in x and the parameters
        let f = |v: &DVector<f64>| self.residual(v);
        let jx = fd_jacobian(&f, y, m - 1, 0..n, 1e-5)?;
        jac.view_mut((0, 0), (m - 1, n)).copy_from(&jx);
        let jp = fd_jacobian(&f, y, m - 1, 3 * n + 1..3 * n + 3, 1e-5)?;
        jac.view_mut((0, 3 * n + 1), (m - 1, 2)).copy_from(&jp);
        Ok(jac)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfCurvePoint {
    pub params: Vec<f64>,
    pub x: Vec<f64>,
    pub omega: f64,
    /// Unit, phase-fixed eigenvector.
    pub q0: DVector<Complex64>,
    pub l1: Option<f64>,
    /// Max-norm residual of the extended system.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfCurveEvent {
    pub kind: EventKind,
    pub point: HopfCurvePoint,
    /// Index into `HopfCurve::points` of the point preceding the event.
    pub after: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HopfCurve {
    pub points: Vec<HopfCurvePoint>,
    pub events: Vec<HopfCurveEvent>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfCurveSettings {
    pub continuation: ContinuationSettings,
    /// Bounds for the two free parameters; leaving them ends the run.
    pub bounds: [(f64, f64); 2],
    pub monitor_l1: bool,
    pub derivs: DerivSettings,
}

impl Default for HopfCurveSettings {
    fn default() -> Self {
        HopfCurveSettings {
            continuation: ContinuationSettings {
                max_step: 0.1,
                ..ContinuationSettings::default()
            },
            bounds: [(f64::NEG_INFINITY, f64::INFINITY); 2],
            monitor_l1: false,
            derivs: DerivSettings::default(),
        }
    }
}

/// Continues a Hopf point in two parameters. The start `(params, x0, ω_guess)`
/// need not be exact: it is first projected onto the nearest point of the
/// curve by minimum-norm Newton steps.
pub fn continue_hopf_curve(
    model: &Model,
    params: &[f64],
    free: [usize; 2],
    x0: &[f64],
    omega_guess: f64,
    settings: &HopfCurveSettings,
) -> Result<HopfCurve> {
    if free[0] == free[1] || free.iter().any(|&f| f >= model.num_params()) {
        return Err(Error::InvalidSettings(
            "two distinct free parameters required".into(),
        ));
    }
    let n = model.dim();
    let x_star = solve_equilibrium(model, params, x0)?;
    let lin = linearize(model, params, &x_star)?;
    let (lambda, q) = refine_root(&lin, Complex64::new(0.0, omega_guess))?;
    let q = fix_phase(&q);
    let sys = HopfSystem {
        model,
        params: params.to_vec(),
        free,
        c: q.clone(),
    };
    let y_guess = HopfSystem::pack(&x_star, &q, lambda.im, params[free[0]], params[free[1]]);

    let y0 = project_onto(&sys, &y_guess)?;
    let mut reference = DVector::zeros(3 * n + 3);
    reference[3 * n + 1] = settings.continuation.direction.signum();
    let mut t0 = tangent(&sys, &y0, &reference)?;
    if t0[3 * n + 1].abs() < 1e-3 {
        reference[3 * n + 1] = 0.0;
        reference[3 * n + 2] = settings.continuation.direction.signum();
        t0 = tangent(&sys, &y0, &reference)?;
    }

    let mut curve = HopfCurve::default();
    let first = hopf_point(&sys, &y0, settings, &mut curve.warnings)?;
    curve.points.push(first);
    let inside = |y: &DVector<f64>| {
        let (a, b) = (y[3 * n + 1], y[3 * n + 2]);
        a >= settings.bounds[0].0
            && a <= settings.bounds[0].1
            && b >= settings.bounds[1].0
            && b <= settings.bounds[1].1
    };
    if !inside(&y0) {
        return Ok(curve);
    }
    let mut stop_reason = None;
    trace(&sys, y0, t0, &settings.continuation, |prev, y, _, _| {
        if !inside(y) {
            return Ok(false);
        }
        let point = match hopf_point(&sys, y, settings, &mut curve.warnings) {
            Ok(p) => p,
            Err(e) => {
                stop_reason = Some(e);
                return Ok(false);
            }
        };
        let last = curve.points.last().expect("initial point");
        let after = curve.points.len() - 1;
        if let (Some(a), Some(b)) = (last.l1, point.l1) {
            if (a > 0.0) != (b > 0.0) {
                match locate_l1_zero(&sys, prev, y, a, b, settings, &mut curve.warnings) {
                    Ok(ev) => curve.events.push(HopfCurveEvent {
                        kind: EventKind::L1Zero,
                        point: ev,
                        after,
                    }),
                    Err(e) => curve.warnings.push(format!("L1 zero not located: {e}")),
                }
            }
        }
        curve.points.push(point);
        Ok(true)
    })
    .or_else(|e| match e {
        // report what was computed up to the failure
        Error::StepUnderflow(_) if curve.points.len() > 1 => {
            curve.warnings.push(format!("continuation stopped: {e}"));
            Ok(())
        }
        e => Err(e),
    })?;
    if let Some(e) = stop_reason {
        curve.warnings.push(format!("continuation stopped: {e}"));
    }
    Ok(curve)
}

fn hopf_point(
    sys: &HopfSystem,
    y: &DVector<f64>,
    settings: &HopfCurveSettings,
    warnings: &mut Vec<String>,
) -> Result<HopfCurvePoint> {
    let (x, q, omega, params) = sys.unpack(y);
    let residual = max_abs(&sys.residual(y)?);
    let lin = linearize(sys.model, &params, &x)?;
    // loss of simplicity ends the curve
    let eig = hopf_eigendata(&lin, omega)?;
    let l1 = if settings.monitor_l1 {
        match hopf_l1_at(sys.model, &params, &x, &lin, eig, &settings.derivs) {
            Ok(nf) => Some(nf.l1),
            Err(e) => {
                warnings.push(format!(
                    "L1 not computed at {:?}: {e}",
                    [y[3 * sys.n() + 1], y[3 * sys.n() + 2]]
                ));
                None
            }
        }
    } else {
        None
    };
    Ok(HopfCurvePoint {
        params,
        x,
        omega,
        q0: fix_phase(&q),
        l1,
        residual,
    })
}

/// Regula falsi (Illinois variant) on the chord between two points with
/// opposite signs of L₁.
fn locate_l1_zero(
    sys: &HopfSystem,
    a: &DVector<f64>,
    b: &DVector<f64>,
    l1_a: f64,
    l1_b: f64,
    settings: &HopfCurveSettings,
    warnings: &mut Vec<String>,
) -> Result<HopfCurvePoint> {
    let n = sys.n();
    let monitor = HopfCurveSettings {
        monitor_l1: true,
        ..*settings
    };
    let (mut s_lo, mut f_lo, mut s_hi, mut f_hi) = (0.0, l1_a, 1.0, l1_b);
    let mut best: Option<(DVector<f64>, HopfCurvePoint)> = None;
    let mut side = 0i32;
    for _ in 0..40 {
        let s = (s_lo * f_hi - s_hi * f_lo) / (f_hi - f_lo);
        let y = on_chord(sys, a, b, s)?;
        let pt = hopf_point(sys, &y, &monitor, warnings)?;
        let f = pt.l1.ok_or(Error::NoConvergence("L1 unavailable".into()))?;
        let moved = best.as_ref().map(|(yb, _)| {
            (yb[3 * n + 1] - y[3 * n + 1])
                .abs()
                .max((yb[3 * n + 2] - y[3 * n + 2]).abs())
        });
        best = Some((y, pt));
        if f == 0.0 || moved.is_some_and(|m| m <= L1_PARAM_TOL) {
            break;
        }
        if (f > 0.0) == (f_lo > 0.0) {
            s_lo = s;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            s_hi = s;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best.expect("at least one iteration").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use std::f64::consts::PI;

    #[test]
    fn scalar_equilibrium() {
        let m = parse_model(
            "dim = 1\nparameters = [\"p\"]\ntau_max = 10\ndelays = [\"0\", \"-x1@1\"]\nrhs = [\"p - x1@2\"]\n",
        )
        .unwrap();
        let x = solve_equilibrium(&m, &[-PI / 2.0], &[0.0]).unwrap();
        assert!((x[0] + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_jacobian() {
        let m = parse_model("dim = 1\nparameters = []\ndelays = [\"0\"]\nrhs = [\"1 + x1@1^2\"]\n")
            .unwrap();
        assert!(matches!(
            solve_equilibrium(&m, &[], &[0.0]),
            Err(Error::Singular(_))
        ));
    }
}
