//! Fixed-step RK4 method of steps with cubic Hermite dense output.
//!
//! Delayed arguments that fall inside the step being computed (delays
//! shorter than the step) are read from a provisional interpolant of the
//! current step, which is refined by a few fixed-point sweeps.

use std::cell::Cell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::histfun::ExpPoly;
use crate::model::{History, Model};

const MAX_SWEEPS: usize = 5;
const SWEEP_TOL: f64 = 1e-12;

/// History on `t ≤ 0`.
#[derive(Debug, Clone)]
pub enum InitialHistory {
    Constant(Vec<f64>),
    /// Real part of an exponential polynomial in `θ = t`.
    ExpPoly(ExpPoly),
    /// `t ↦ trajectory(t0 + t)`: restart from an earlier run.
    Shifted(Arc<Trajectory>, f64),
}

impl InitialHistory {
    pub fn dim(&self) -> usize {
        match self {
            InitialHistory::Constant(v) => v.len(),
            InitialHistory::ExpPoly(f) => f.dim(),
            InitialHistory::Shifted(t, _) => t.dim(),
        }
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            InitialHistory::Constant(v) => out.copy_from_slice(v),
            InitialHistory::ExpPoly(f) => f.eval_re_into(t, out),
            InitialHistory::Shifted(traj, t0) => traj.eval_into(t0 + t, out),
        }
    }
}

/// Cubic Hermite interpolant on `[t0, t0 + h]`.
fn hermite_into(
    t0: f64,
    h: f64,
    y0: &[f64],
    f0: &[f64],
    y1: &[f64],
    f1: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h * h10 * f0[i] + h01 * y1[i] + h * h11 * f1[i];
    }
}

/// Solution on `[0, t_end]` with dense output, plus the initial history.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    /// Node values, row-major `times.len() × dim`.
    states: Vec<f64>,
    /// `F(u_t)` at the nodes.
    slopes: Vec<f64>,
    initial: InitialHistory,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    fn slope(&self, k: usize) -> &[f64] {
        &self.slopes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("at least one node")
    }

    /// Dense output; `t ≤ 0` reads the initial history, `t > t_end` is not
    /// defined and clamps to the last interval's polynomial.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if t <= 0.0 {
            self.initial.eval_into(t, out);
            return;
        }
        let n = self.times.len();
        if n == 1 {
            out.copy_from_slice(self.state(0));
            return;
        }
        let k = self.times.partition_point(|&tk| tk < t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        hermite_into(
            t0,
            t1 - t0,
            self.state(k),
            self.slope(k),
            self.state(k + 1),
            self.slope(k + 1),
            t,
            out,
        );
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

/// History seen by a stage at time `t_stage` during the step from `t_n`.
struct StageHistory<'a> {
    traj: &'a Trajectory,
    t_n: f64,
    t_stage: f64,
    stage: &'a [f64],
    /// Provisional `(h, y_{n+1}, f_{n+1})` of the current step.
    provisional: &'a (f64, Vec<f64>, Vec<f64>),
    used_provisional: &'a Cell<bool>,
}

impl History for StageHistory<'_> {
    fn dim(&self) -> usize {
        self.traj.dim
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        if theta == 0.0 {
            out.copy_from_slice(self.stage);
            return;
        }
        let t = self.t_stage + theta;
        if t <= self.t_n {
            self.traj.eval_into(t, out);
            return;
        }
        self.used_provisional.set(true);
        let k = self.traj.times.len() - 1;
        let (h, y1, f1) = self.provisional;
        hermite_into(
            self.t_n,
            *h,
            self.traj.state(k),
            self.traj.slope(k),
            y1,
            f1,
            t,
            out,
        );
    }
}

struct Stepper<'a> {
    model: &'a Model,
    params: &'a [f64],
    slots: Vec<f64>,
}

impl Stepper<'_> {
    fn rhs(
        &mut self,
        traj: &Trajectory,
        t_n: f64,
        t_stage: f64,
        stage: &[f64],
        provisional: &(f64, Vec<f64>, Vec<f64>),
        flag: &Cell<bool>,
        out: &mut [f64],
    ) -> Result<()> {
        let u = StageHistory {
            traj,
            t_n,
            t_stage,
            stage,
            provisional,
            used_provisional: flag,
        };
        self.model
            .eval_functional_into(self.params, &u, &mut self.slots, out)
    }

    /// One RK4 step from the last node; returns `(y_{n+1}, f_{n+1})`.
    fn step(
        &mut self,
        traj: &Trajectory,
        h: f64,
        provisional: &(f64, Vec<f64>, Vec<f64>),
        flag: &Cell<bool>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = traj.dim;
        let k = traj.times.len() - 1;
        let t_n = traj.times[k];
        let y = traj.state(k).to_vec();
        let k1 = traj.slope(k).to_vec();
        let mut stage = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        for i in 0..n {
            stage[i] = y[i] + 0.5 * h * k1[i];
        }
        self.rhs(traj, t_n, t_n + 0.5 * h, &stage, provisional, flag, &mut k2)?;
        for i in 0..n {
            stage[i] = y[i] + 0.5 * h * k2[i];
        }
        self.rhs(traj, t_n, t_n + 0.5 * h, &stage, provisional, flag, &mut k3)?;
        for i in 0..n {
            stage[i] = y[i] + h * k3[i];
        }
        self.rhs(traj, t_n, t_n + h, &stage, provisional, flag, &mut k4)?;
        let y1: Vec<f64> = (0..n)
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let mut f1 = vec![0.0; n];
        self.rhs(traj, t_n, t_n + h, &y1, provisional, flag, &mut f1)?;
        Ok((y1, f1))
    }
}

/// Integrates from `t = 0` to `t_end` with fixed step `h` (the last step is
/// shortened to land on `t_end`).
pub fn simulate(
    model: &Model,
    params: &[f64],
    history: InitialHistory,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    let n = model.dim();
    if history.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: history.dim(),
        });
    }
    if !(h > 0.0 && t_end >= 0.0 && h.is_finite() && t_end.is_finite()) {
        return Err(Error::InvalidSettings(format!(
            "step {h} and end time {t_end} must be positive"
        )));
    }
    let mut y0 = vec![0.0; n];
    history.eval_into(0.0, &mut y0);
    let mut traj = Trajectory {
        dim: n,
        times: vec![0.0],
        states: y0,
        slopes: Vec::new(),
        initial: history,
    };
    let mut stepper = Stepper {
        model,
        params,
        slots: vec![0.0; n * model.num_slots()],
    };
    let f0 = {
        let mut out = vec![0.0; n];
        model.eval_functional_into(
            params,
            &InitialAt(&traj.initial),
            &mut stepper.slots,
            &mut out,
        )?;
        out
    };
    traj.slopes = f0;

    let steps = ((t_end / h) - 1e-9).ceil().max(0.0) as usize;
    for s in 0..steps {
        let t_n = traj.times[s];
        let t_next = if s + 1 == steps {
            t_end
        } else {
            (s + 1) as f64 * h
        };
        let hs = t_next - t_n;
        // extrapolate the previous interval's polynomial as a first guess
        let mut prov = {
            let guess = if s == 0 {
                let y = traj.state(0);
                let f = traj.slope(0);
                (
                    y.iter().zip(f).map(|(y, f)| y + hs * f).collect(),
                    f.to_vec(),
                )
            } else {
                let mut y = vec![0.0; n];
                let (ta, tb) = (traj.times[s - 1], traj.times[s]);
                hermite_into(
                    ta,
                    tb - ta,
                    traj.state(s - 1),
                    traj.slope(s - 1),
                    traj.state(s),
                    traj.slope(s),
                    t_next,
                    &mut y,
                );
                (y, traj.slope(s).to_vec())
            };
            (hs, guess.0, guess.1)
        };
        let flag = Cell::new(false);
        let (mut y1, mut f1) = stepper.step(&traj, hs, &prov, &flag)?;
        if flag.get() {
            let mut converged = false;
            for _ in 0..MAX_SWEEPS {
                prov = (hs, y1.clone(), f1.clone());
                let (y2, f2) = stepper.step(&traj, hs, &prov, &flag)?;
                let change = y2
                    .iter()
                    .zip(&y1)
                    .chain(f2.iter().zip(&f1))
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                y1 = y2;
                f1 = f2;
                if change <= SWEEP_TOL * (1.0 + y1.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::FixedPoint(t_next));
            }
        }
        traj.times.push(t_next);
        traj.states.extend_from_slice(&y1);
        traj.slopes.extend_from_slice(&f1);
    }
    Ok(traj)
}

/// The initial history as a history segment at `t = 0`.
struct InitialAt<'a>(&'a InitialHistory);

impl History for InitialAt<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        self.0.eval_into(theta, out)
    }
}
