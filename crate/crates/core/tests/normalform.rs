use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use sddde_core::derivs::DerivSettings;
use sddde_core::normalform::{fold_coefficient, hopf_h2, hopf_l1, hopf_l1_with, Criticality};
use sddde_core::spectral::{hopf_eigendata, linearize};
use sddde_core::{parse_model, Error, Model};

const SCALAR: &str = include_str!("../examples/scalar_nested.mdl");
const POSITION: &str = include_str!("../examples/position_control.mdl");

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Hopf point on the ω₀⁺ curve for given `s0` (k = 1): ω = π/(2τ0 + s0), ω = sin(ωτ0).
fn hopf_tau0(s0: f64) -> (f64, f64) {
    let g = |t: f64| {
        let w = PI / (2.0 * t + s0);
        w - (w * t).sin()
    };
    let tau0 = bisect(g, 0.2, 3.0);
    (tau0, PI / (2.0 * tau0 + s0))
}

fn position() -> Model {
    parse_model(POSITION).unwrap()
}

fn position_point(s0: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let (tau0, w) = hopf_tau0(s0);
    (vec![tau0, s0, 1.0, 2.0, 1.0], vec![s0, s0], w)
}

#[test]
fn position_l1_signs_on_either_side_of_zero() {
    let m = position();
    for (s0, sign) in [(3.0, 1.0), (7.0, -1.0)] {
        let (p, x, w) = position_point(s0);
        let nf = hopf_l1(&m, &p, &x, w, &DerivSettings::default()).unwrap();
        assert!(nf.l1 * sign > 0.0, "s0 = {s0}: L1 = {}", nf.l1);
    }
}

#[test]
fn linear_model_has_zero_l1() {
    let m = parse_model("dim = 1\nparameters = [\"p\"]\ndelays = [\"0\", \"1.5707963267948966\"]\nrhs = [\"p - x1@2\"]\n")
        .unwrap();
    let p = [0.3];
    let nf = hopf_l1(&m, &p, &p, 1.0, &DerivSettings::default()).unwrap();
    assert!(nf.l1.abs() <= 1e-8);
    assert_eq!(nf.criticality, Criticality::Degenerate);
}

#[test]
fn h2_solves_defining_systems() {
    let m = position();
    let (p, x, w) = position_point(4.0);
    let s = DerivSettings::default();
    let lin = linearize(&m, &p, &x).unwrap();
    let eig = hopf_eigendata(&lin, w).unwrap();
    let (h20, h11) = hopf_h2(&m, &p, &x, &eig, &s).unwrap();
    let q = sddde_core::ExpPoly::exponential(eig.q0.iter().cloned().collect(), eig.lambda);
    let f2qq = sddde_core::derivs::multilinear_form(&m, &p, &x, &[&q, &q], &s).unwrap();
    let f2qqbar = sddde_core::derivs::multilinear_form(&m, &p, &x, &[&q, &q.conj()], &s).unwrap();
    let r20 = lin.char_matrix(eig.lambda * 2.0) * DVector::from_vec(h20.eval(0.0))
        - DVector::from_vec(f2qq);
    let r11 = lin.char_matrix(Complex64::new(0.0, 0.0)) * DVector::from_vec(h11.eval(0.0))
        - DVector::from_vec(f2qqbar) * Complex64::new(2.0, 0.0);
    assert!(r20.norm() < 1e-10 && r11.norm() < 1e-10);
}

/// Rotating `q0` by `e^{iφ}` (and `p0` by `e^{−iφ}`) leaves L₁ unchanged up
/// to finite-difference roundoff, which is amplified by `h^{-3}` in the
/// third-order forms.
fn phase_spread(m: &Model, p: &[f64], x: &[f64], w: f64) -> (f64, f64) {
    let s = DerivSettings::default();
    let lin = linearize(m, p, x).unwrap();
    let eig = hopf_eigendata(&lin, w).unwrap();
    let base = hopf_l1_with(m, p, x, &eig, &s).unwrap();
    let mut worst: f64 = 0.0;
    for phi in [0.3, 1.0, 2.5] {
        let rot = Complex64::from_polar(1.0, phi);
        let mut e = eig.clone();
        e.q0 *= rot;
        e.p0 /= rot;
        let nf = hopf_l1_with(m, p, x, &e, &s).unwrap();
        worst = worst.max((nf.l1 - base.l1).abs() / base.l1.abs());
    }
    for scale in [0.5, 2.0] {
        let mut e = eig.clone();
        e.q0 *= Complex64::new(scale, 0.0);
        e.p0 /= Complex64::new(scale, 0.0);
        let nf = hopf_l1_with(m, p, x, &e, &s).unwrap();
        assert_eq!(nf.l1.signum(), base.l1.signum());
    }
    (base.l1, worst)
}

#[test]
fn l1_phase_and_scale_invariance() {
    let p = [-PI / 2.0];
    let (_, spread) = phase_spread(&parse_model(SCALAR).unwrap(), &p, &p, 1.0);
    assert!(spread <= 1e-6, "scalar spread {spread:e}");
    let (p, x, w) = position_point(4.5);
    let (_, spread) = phase_spread(&position(), &p, &x, w);
    assert!(spread <= 1e-4, "position spread {spread:e}");
}

#[test]
fn l1_step_halving() {
    let m = parse_model(SCALAR).unwrap();
    let p = [-PI / 2.0];
    let s = DerivSettings::default();
    let a = hopf_l1(&m, &p, &p, 1.0, &s).unwrap().l1;
    let b = hopf_l1(
        &m,
        &p,
        &p,
        1.0,
        &DerivSettings {
            base_step: s.base_step / 2.0,
            ..s
        },
    )
    .unwrap()
    .l1;
    assert!((a - b).abs() <= 1e-5 * a.abs());
    let m = position();
    let (p, x, w) = position_point(3.5);
    let a = hopf_l1(&m, &p, &x, w, &s).unwrap().l1;
    let b = hopf_l1(
        &m,
        &p,
        &x,
        w,
        &DerivSettings {
            base_step: s.base_step / 2.0,
            ..s
        },
    )
    .unwrap()
    .l1;
    assert!((a - b).abs() <= 1e-5 * a.abs(), "{a} vs {b}");
}

#[test]
fn position_control_has_no_fold() {
    let (p, x, _) = position_point(4.0);
    let err = fold_coefficient(&position(), &p, &x, &DerivSettings::default()).unwrap_err();
    assert!(matches!(err, Error::NoZeroRoot(_)));
}

#[test]
fn fold_hopf_is_resonant() {
    // ẋ = Bx, y' = y²-type zero root alongside a rotation: Δ(0) singular
    let m = parse_model(
        "dim = 3\nparameters = []\ndelays = [\"0\"]\nrhs = [\"-x2@1 + x1@1*x3@1\", \"x1@1 + x2@1^2\", \"x3@1^2\"]\n",
    )
    .unwrap();
    let err = hopf_l1(&m, &[], &[0.0, 0.0, 0.0], 1.0, &DerivSettings::default()).unwrap_err();
    assert!(matches!(err, Error::Resonance(_)), "{err}");
}

/// Planar oracle: for ẋ = −ωy + f, ẏ = ωx + g the cubic coefficient of the
/// radial equation is
/// a = (f_xxx + f_xyy + g_xxy + g_yyy)/16
///   + (f_xy(f_xx + f_yy) − g_xy(g_xx + g_yy) − f_xx g_xx + f_yy g_yy)/(16ω),
/// and with a unit eigenvector L₁ = 2a/ω.
#[test]
fn planar_ode_matches_classical_formula() {
    let omega = 1.3;
    let cases: [[f64; 7]; 4] = [
        // f = a1 x² + a2 xy + a3 y² + a4 x³, g = b1 x² + b2 y² + b3 x²y
        [0.5, -0.3, 0.2, -0.7, 0.4, 0.1, 0.6],
        [-0.2, 0.8, 0.0, 0.3, -0.5, 0.9, -0.4],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [1.0, 0.5, -1.0, 0.0, 0.3, 0.2, 0.0],
    ];
    for k in cases {
        let src = format!(
            "dim = 2\nparameters = []\ndelays = [\"0\"]\nrhs = [\"-{omega}*x2@1 + {}*x1@1^2 + {}*x1@1*x2@1 + {}*x2@1^2 + {}*x1@1^3\", \"{omega}*x1@1 + {}*x1@1^2 + {}*x2@1^2 + {}*x1@1^2*x2@1\"]\n",
            k[0], k[1], k[2], k[3], k[4], k[5], k[6]
        );
        let m = parse_model(&src).unwrap();
        let nf = hopf_l1(&m, &[], &[0.0, 0.0], omega, &DerivSettings::default()).unwrap();
        let (fxx, fxy, fyy, fxxx) = (2.0 * k[0], k[1], 2.0 * k[2], 6.0 * k[3]);
        let (gxx, gyy, gxxy) = (2.0 * k[4], 2.0 * k[5], 2.0 * k[6]);
        let a = (fxxx + gxxy) / 16.0 + (fxy * (fxx + fyy) - fxx * gxx + fyy * gyy) / (16.0 * omega);
        assert!(
            (nf.l1 - 2.0 * a / omega).abs() < 1e-7,
            "{} vs {}",
            nf.l1,
            2.0 * a / omega
        );
    }
}
