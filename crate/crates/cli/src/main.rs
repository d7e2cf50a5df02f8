//! `sddde`: equilibria, characteristic roots, Hopf/fold normal forms,
//! continuation and simulation for delay equations with state-dependent delays.

mod output;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use sddde_core::continuation::{
    continue_branch, continue_hopf_curve, solve_equilibrium, ContinuationSettings, EventKind,
    HopfCurveSettings,
};
use sddde_core::derivs::DerivSettings;
use sddde_core::ivp::{simulate, InitialHistory};
use sddde_core::normalform::{fold_coefficient, hopf_l1, Criticality};
use sddde_core::spectral::{characteristic_roots, linearize, RootSettings};
use sddde_core::{parse_model, Error, ExpPoly, Model};

use output::{Field, Format, Record, Sink};

#[derive(Parser)]
#[command(
    name = "sddde",
    version,
    about = "Local bifurcation analysis for state-dependent delay equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Parameter values, `name=value[,name=value…]`; may be repeated.
    #[arg(long = "par", value_name = "ASSIGNMENTS")]
    par: Vec<String>,
    /// Starting guess for the equilibrium (comma separated, default all zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    guess: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "ndjson")]
    format: Format,
}

#[derive(Args)]
struct RootOpts {
    /// Chebyshev collocation nodes used to seed the root search.
    #[arg(long, default_value_t = 32)]
    cheb_nodes: usize,
    /// Number of rightmost roots to report.
    #[arg(long, default_value_t = 6)]
    root_count: usize,
    /// Ignore roots with real part below minus this value.
    #[arg(long, default_value_t = 10.0)]
    re_cutoff: f64,
}

impl RootOpts {
    fn settings(&self) -> RootSettings {
        RootSettings {
            count: self.root_count,
            re_cutoff: self.re_cutoff,
            cheb_nodes: self.cheb_nodes,
        }
    }
}

#[derive(Args)]
struct DerivOpts {
    /// Base finite-difference step (relative to the direction's sup norm).
    #[arg(long, default_value_t = 5e-3)]
    fd_step: f64,
    /// Richardson extrapolation levels.
    #[arg(long, default_value_t = 2)]
    fd_richardson: usize,
}

impl DerivOpts {
    fn settings(&self) -> DerivSettings {
        DerivSettings {
            base_step: self.fd_step,
            richardson_levels: self.fd_richardson,
            ..DerivSettings::default()
        }
    }
}

#[derive(Args)]
struct StepOpts {
    /// Maximum number of accepted points.
    #[arg(long, default_value_t = 200)]
    max_points: usize,
    #[arg(long, default_value_t = 0.01)]
    initial_step: f64,
    #[arg(long, default_value_t = 0.5)]
    max_step: f64,
    /// Initial direction of the first free parameter (+1 or -1).
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    direction: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for an equilibrium and report its rightmost characteristic roots.
    Eq {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        roots: RootOpts,
    },
    /// Characteristic roots of the frozen-delay linearization.
    ///
    /// Columns: kind, re, im, multiplicity, residual.
    Roots {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        roots: RootOpts,
    },
    /// First Lyapunov coefficient at a Hopf point.
    HopfNf {
        #[command(flatten)]
        common: Common,
        /// Approximate critical frequency.
        #[arg(long)]
        omega_guess: f64,
        #[command(flatten)]
        derivs: DerivOpts,
    },
    /// Quadratic coefficient at a fold (simple zero root).
    FoldNf {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        derivs: DerivOpts,
    },
    /// Continue equilibria in one parameter, flagging HOPF and FOLD points.
    ///
    /// CSV columns: kind, event, <free>, x_1..x_n, re_pair, det_jacobian,
    /// stable, omega, step. Root lists are in the NDJSON output only.
    Branch {
        #[command(flatten)]
        common: Common,
        /// Free parameter name.
        #[arg(long)]
        free: String,
        /// Parameter range `lo,hi`.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        range: (f64, f64),
        #[command(flatten)]
        steps: StepOpts,
        #[command(flatten)]
        roots: RootOpts,
    },
    /// Continue a Hopf point in two parameters, optionally monitoring L1.
    ///
    /// CSV columns: kind, event, <free1>, <free2>, x_1..x_n, omega, l1,
    /// residual, note. L1_ZERO events mark degenerate Hopf (Bautin candidate) points.
    HopfCurve {
        #[command(flatten)]
        common: Common,
        /// Two free parameter names `a,b`.
        #[arg(long, value_parser = parse_names)]
        free: (String, String),
        #[arg(long)]
        omega_guess: f64,
        /// Bounds for the first free parameter `lo,hi`.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        range: Option<(f64, f64)>,
        /// Bounds for the second free parameter `lo,hi`.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        range2: Option<(f64, f64)>,
        #[arg(long)]
        monitor_l1: bool,
        #[command(flatten)]
        steps: StepOpts,
        #[command(flatten)]
        derivs: DerivOpts,
    },
    /// Integrate the equation with fixed-step RK4.
    ///
    /// CSV columns: kind, t, x_1..x_n.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// `equilibrium` (solved from --guess) or constant values `v1,v2,…`.
        #[arg(long, default_value = "equilibrium", allow_hyphen_values = true)]
        history: String,
        /// Adds `amp·cos(freq·θ)` to every component of the history.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        perturb: f64,
        #[arg(long, default_value_t = 1.0)]
        perturb_freq: f64,
        /// Emit every k-th mesh point.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    let (a, b) = (num(a)?, num(b)?);
    if !(a < b) {
        return Err("expected lo < hi".into());
    }
    Ok((a, b))
}

fn parse_names(s: &str) -> std::result::Result<(String, String), String> {
    let (a, b) = s.split_once(',').ok_or("expected two names a,b")?;
    Ok((a.trim().to_string(), b.trim().to_string()))
}

enum Failure {
    Usage(String),
    Numerical(String),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSettings(_) | Error::DimensionMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            e => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn load_model(path: &PathBuf) -> Run<Model> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot open model file {}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn parse_params(model: &Model, assignments: &[String]) -> Run<Vec<f64>> {
    let mut values: Vec<Option<f64>> = vec![None; model.num_params()];
    for item in assignments
        .iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.trim().is_empty())
    {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("expected name=value, got '{item}'")))?;
        let idx = model
            .param_index(name.trim())
            .ok_or_else(|| Failure::Usage(format!("unknown parameter '{}'", name.trim())))?;
        let v: f64 = value.trim().parse().map_err(|_| {
            Failure::Usage(format!(
                "invalid value for parameter '{}': '{value}'",
                name.trim()
            ))
        })?;
        values[idx] = Some(v);
    }
    values
        .iter()
        .zip(model.param_names())
        .map(|(v, name)| {
            v.ok_or_else(|| Failure::Usage(format!("parameter '{name}' not assigned")))
        })
        .collect()
}

fn free_index(model: &Model, name: &str) -> Run<usize> {
    model
        .param_index(name)
        .ok_or_else(|| Failure::Usage(format!("unknown parameter '{name}'")))
}

struct Setup {
    model: Model,
    params: Vec<f64>,
    guess: Vec<f64>,
}

fn setup(common: &Common) -> Run<Setup> {
    let model = load_model(&common.model)?;
    let params = parse_params(&model, &common.par)?;
    let guess = common
        .guess
        .clone()
        .unwrap_or_else(|| vec![0.0; model.dim()]);
    if guess.len() != model.dim() {
        return Err(Failure::Usage(format!(
            "--guess needs {} values, got {}",
            model.dim(),
            guess.len()
        )));
    }
    Ok(Setup {
        model,
        params,
        guess,
    })
}

/// Solves for the equilibrium and fixes `tau_max` there if the model left it open.
fn equilibrium(s: &mut Setup) -> Run<Vec<f64>> {
    let x = solve_equilibrium(&s.model, &s.params, &s.guess)?;
    s.model.ensure_tau_max(&s.params, &x)?;
    Ok(x)
}

fn run(cli: Cli, sink: &mut Sink<impl Write>) -> Run<()> {
    match cli.command {
        Command::Eq { common, roots } => {
            let mut s = setup(&common)?;
            let x = equilibrium(&mut s)?;
            let lin = linearize(&s.model, &s.params, &x)?;
            let list = characteristic_roots(&lin, &roots.settings())?;
            let residual = s
                .model
                .rhs_at_constant(&s.params, &x)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            for w in &list.warnings {
                sink.warning(w)?;
            }
            let stable = list.roots.first().is_none_or(|r| r.lambda.re < 0.0);
            sink.emit(
                &Record::new("result")
                    .with("x", Field::Nums(x.clone()))
                    .num("residual", residual)
                    .with("delays", Field::Nums(s.model.frozen_delays(&s.params, &x)?))
                    .with("stable", Field::Bool(stable))
                    .with("roots", Field::List(list.lambdas())),
            )?;
        }
        Command::Roots { common, roots } => {
            let mut s = setup(&common)?;
            let x = equilibrium(&mut s)?;
            let lin = linearize(&s.model, &s.params, &x)?;
            let list = characteristic_roots(&lin, &roots.settings())?;
            for w in &list.warnings {
                sink.warning(w)?;
            }
            for r in &list.roots {
                sink.emit(
                    &Record::new("point")
                        .num("re", r.lambda.re)
                        .num("im", r.lambda.im)
                        .with("multiplicity", Field::Int(r.multiplicity as u64))
                        .num("residual", r.residual),
                )?;
            }
        }
        Command::HopfNf {
            common,
            omega_guess,
            derivs,
        } => {
            let mut s = setup(&common)?;
            let x = equilibrium(&mut s)?;
            let nf = hopf_l1(&s.model, &s.params, &x, omega_guess, &derivs.settings())?;
            let mut rec = Record::new("result")
                .num("omega", nf.eig.omega)
                .num("L1", nf.l1)
                .str("criticality", nf.criticality.to_string())
                .with("h2_20", Field::Complexes(nf.h2_20_coef()))
                .with("h2_11", Field::Complexes(nf.h2_11_coef()))
                .with("g21", Field::Complexes(vec![nf.g21]))
                .with("q0", Field::Complexes(nf.eig.q0.iter().cloned().collect()))
                .with("p0", Field::Complexes(nf.eig.p0.iter().cloned().collect()))
                .with("x", Field::Nums(x));
            if nf.criticality == Criticality::Degenerate {
                rec = rec.str("note", "degenerate: higher-order analysis required");
            }
            sink.emit(&rec)?;
        }
        Command::FoldNf { common, derivs } => {
            let mut s = setup(&common)?;
            let x = equilibrium(&mut s)?;
            let a = fold_coefficient(&s.model, &s.params, &x, &derivs.settings())?;
            sink.emit(&Record::new("result").num("a", a).with("x", Field::Nums(x)))?;
        }
        Command::Branch {
            common,
            free,
            range,
            steps,
            roots,
        } => {
            let mut s = setup(&common)?;
            let free = free_index(&s.model, &free)?;
            let x = equilibrium(&mut s)?;
            let settings = ContinuationSettings {
                initial_step: steps.initial_step,
                max_step: steps.max_step,
                max_points: steps.max_points,
                direction: steps.direction,
                roots: roots.settings(),
                ..ContinuationSettings::default()
            };
            let name = s.model.param_names()[free].clone();
            let branch = continue_branch(&s.model, &s.params, free, range, &x, &settings)?;
            let row = |kind: &'static str,
                       label: &str,
                       p: &sddde_core::continuation::BranchPoint,
                       omega: f64| {
                Record::new(kind)
                    .str("event", label)
                    .num(name.clone(), p.params[free])
                    .with("x", Field::Nums(p.x.clone()))
                    .num("re_pair", p.re_pair.unwrap_or(f64::NAN))
                    .num("det_jacobian", p.det_jacobian)
                    .with("stable", Field::Bool(p.stable))
                    .num("omega", omega)
                    .num("step", p.step)
                    .with("roots", Field::List(p.roots.clone()))
            };
            for (k, p) in branch.points.iter().enumerate() {
                sink.emit(&row("point", "", p, f64::NAN))?;
                for ev in branch.events.iter().filter(|e| e.after == k) {
                    sink.emit(&row(
                        "event",
                        ev.kind.label(),
                        &ev.point,
                        ev.omega.unwrap_or(f64::NAN),
                    ))?;
                }
            }
            for w in &branch.warnings {
                sink.warning(w)?;
            }
        }
        Command::HopfCurve {
            common,
            free,
            omega_guess,
            range,
            range2,
            monitor_l1,
            steps,
            derivs,
        } => {
            let mut s = setup(&common)?;
            let free = [
                free_index(&s.model, &free.0)?,
                free_index(&s.model, &free.1)?,
            ];
            let x = equilibrium(&mut s)?;
            let bound = |r: Option<(f64, f64)>| r.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            let settings = HopfCurveSettings {
                continuation: ContinuationSettings {
                    initial_step: steps.initial_step,
                    max_step: steps.max_step,
                    max_points: steps.max_points,
                    direction: steps.direction,
                    ..ContinuationSettings::default()
                },
                bounds: [bound(range), bound(range2)],
                monitor_l1,
                derivs: derivs.settings(),
            };
            let names = [
                s.model.param_names()[free[0]].clone(),
                s.model.param_names()[free[1]].clone(),
            ];
            let curve = continue_hopf_curve(&s.model, &s.params, free, &x, omega_guess, &settings)?;
            let row =
                |kind: &'static str, label: &str, p: &sddde_core::continuation::HopfCurvePoint| {
                    let note = if label == EventKind::L1Zero.label() {
                        "degenerate Hopf (Bautin candidate)"
                    } else {
                        ""
                    };
                    Record::new(kind)
                        .str("event", label)
                        .num(names[0].clone(), p.params[free[0]])
                        .num(names[1].clone(), p.params[free[1]])
                        .with("x", Field::Nums(p.x.clone()))
                        .num("omega", p.omega)
                        .num("l1", p.l1.unwrap_or(f64::NAN))
                        .num("residual", p.residual)
                        .str("note", note)
                        .with("q0", Field::List(p.q0.iter().cloned().collect()))
                };
            for (k, p) in curve.points.iter().enumerate() {
                sink.emit(&row("point", "", p))?;
                for ev in curve.events.iter().filter(|e| e.after == k) {
                    sink.emit(&row("event", ev.kind.label(), &ev.point))?;
                }
            }
            for w in &curve.warnings {
                sink.warning(w)?;
            }
        }
        Command::Simulate {
            common,
            t_end,
            step,
            history,
            perturb,
            perturb_freq,
            stride,
        } => {
            let mut s = setup(&common)?;
            let base = if history == "equilibrium" {
                equilibrium(&mut s)?
            } else {
                let v: Vec<f64> = history
                    .split(',')
                    .map(|t| t.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Failure::Usage(format!("invalid --history '{history}'")))?;
                if v.len() != s.model.dim() {
                    return Err(Failure::Usage(format!(
                        "--history needs {} values",
                        s.model.dim()
                    )));
                }
                v
            };
            let init = if perturb == 0.0 {
                InitialHistory::Constant(base)
            } else {
                let wave = ExpPoly::exponential(
                    vec![Complex64::new(perturb, 0.0); s.model.dim()],
                    Complex64::new(0.0, perturb_freq),
                );
                let one = Complex64::new(1.0, 0.0);
                InitialHistory::ExpPoly(ExpPoly::combine(
                    one,
                    &ExpPoly::constant(&base),
                    one,
                    &wave,
                )?)
            };
            let traj = simulate(&s.model, &s.params, init, t_end, step)?;
            let n = traj.times().len();
            for k in (0..n).filter(|k| k % stride.max(1) == 0 || *k == n - 1) {
                sink.emit(
                    &Record::new("point")
                        .num("t", traj.times()[k])
                        .with("x", Field::Nums(traj.state(k).to_vec())),
                )?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = match &cli.command {
        Command::Eq { common, .. }
        | Command::Roots { common, .. }
        | Command::HopfNf { common, .. }
        | Command::FoldNf { common, .. }
        | Command::Branch { common, .. }
        | Command::HopfCurve { common, .. }
        | Command::Simulate { common, .. } => common.format,
    };
    let stdout = io::stdout();
    let mut sink = Sink::new(BufWriter::new(stdout.lock()), format);
    let outcome = run(cli, &mut sink);
    let flushed = sink.flush();
    match outcome.and(flushed.map_err(Failure::Io)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
