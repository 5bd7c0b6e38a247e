//! Trapping potentials and the exactly solvable two-soliton benchmark.

use num_complex::Complex64;

use crate::fem::ScalarField;
use crate::{Error, Result};

/// `|x|^2 / 2 + 4 sum_i exp(-x_i^2 / 2)`.
pub fn double_well() -> ScalarField {
    ScalarField::new("double_well", true, |x| {
        x.iter().map(|xi| 0.5 * xi * xi + 4.0 * (-0.5 * xi * xi).exp()).sum()
    })
}

/// `|x|^2 / 2`.
pub fn harmonic() -> ScalarField {
    ScalarField::new("harmonic", true, |x| 0.5 * x.iter().map(|xi| xi * xi).sum::<f64>())
}

/// One on the half space `x_0 >= 0`.
pub fn indicator() -> ScalarField {
    ScalarField::new("indicator", false, |x| if x[0] >= 0.0 { 1.0 } else { 0.0 })
}

/// Checkerboard of unit cells: `2 ((sum_i floor(x_i)) mod 2)`.
pub fn lattice() -> ScalarField {
    ScalarField::new("lattice", false, |x| {
        let s: i64 = x.iter().map(|xi| xi.floor() as i64).sum();
        2.0 * s.rem_euclid(2) as f64
    })
}

/// Harmonic trap plus the half-space step.
pub fn harmonic_step() -> ScalarField {
    ScalarField::new("harmonic_step", false, |x| {
        0.5 * x.iter().map(|xi| xi * xi).sum::<f64>() + if x[0] >= 0.0 { 1.0 } else { 0.0 }
    })
}

/// Harmonic trap plus the checkerboard.
pub fn harmonic_lattice() -> ScalarField {
    let l = lattice();
    ScalarField::new("harmonic_lattice", false, move |x| 0.5 * x.iter().map(|xi| xi * xi).sum::<f64>() + l.eval(x))
}

pub const POTENTIAL_NAMES: [&str; 7] =
    ["zero", "harmonic", "double_well", "indicator", "lattice", "harmonic_step", "harmonic_lattice"];

/// Look up a potential by name.
pub fn potential(name: &str) -> Result<ScalarField> {
    Ok(match name {
        "zero" => ScalarField::zero(),
        "harmonic" => harmonic(),
        "double_well" => double_well(),
        "indicator" => indicator(),
        "lattice" => lattice(),
        "harmonic_step" => harmonic_step(),
        "harmonic_lattice" => harmonic_lattice(),
        other => {
            return Err(Error::Config(format!(
                "unknown potential '{other}', expected one of {}",
                POTENTIAL_NAMES.join(", ")
            )))
        }
    })
}

/// Terms `c e^{k x}` of the soliton numerator and denominator, each
/// multiplied by `e^{-6|x|}` so that nothing overflows.
fn scaled(k: f64, x: f64) -> f64 {
    (k * x - 6.0 * x.abs()).exp()
}

/// Two standing solitons of `i u_t = -u_xx - 2|u|^2 u`:
/// value and x-derivative at `(x, t)`.
pub fn exact_soliton_with_derivative(x: f64, t: f64) -> (Complex64, Complex64) {
    let p4 = Complex64::from_polar(1.0, 4.0 * t);
    let p16 = Complex64::from_polar(1.0, 16.0 * t);
    let c = -128.0 * (12.0 * t).cos();
    let e = |k: f64| scaled(k, x);
    let num = p4 * 8.0 * (9.0 * e(-4.0) + 16.0 * e(4.0)) - p16 * 32.0 * (4.0 * e(-2.0) + 9.0 * e(2.0));
    let den = c * e(0.0) + 4.0 * e(-6.0) + 16.0 * e(6.0) + 81.0 * e(-2.0) + 64.0 * e(2.0);
    let dnum = p4 * 8.0 * (-36.0 * e(-4.0) + 64.0 * e(4.0)) - p16 * 32.0 * (-8.0 * e(-2.0) + 18.0 * e(2.0));
    let dden = -24.0 * e(-6.0) + 96.0 * e(6.0) - 162.0 * e(-2.0) + 128.0 * e(2.0);
    (num / den, (dnum * den - num * dden) / (den * den))
}

pub fn exact_soliton(x: f64, t: f64) -> Complex64 {
    exact_soliton_with_derivative(x, t).0
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Initial profile written out separately, without rescaling.
    fn initial_profile(x: f64) -> f64 {
        let e = f64::exp;
        (8.0 * (9.0 * e(-4.0 * x) + 16.0 * e(4.0 * x)) - 32.0 * (4.0 * e(-2.0 * x) + 9.0 * e(2.0 * x)))
            / (-128.0 + 4.0 * e(-6.0 * x) + 16.0 * e(6.0 * x) + 81.0 * e(-2.0 * x) + 64.0 * e(2.0 * x))
    }

    #[test]
    fn value_at_origin() {
        assert_eq!(exact_soliton(0.0, 0.0), Complex64::new(-216.0 / 37.0, 0.0));
    }

    #[test]
    fn matches_initial_profile() {
        for i in 0..100 {
            let x = -10.0 + 20.0 * i as f64 / 99.0;
            let u = exact_soliton(x, 0.0);
            let v = initial_profile(x);
            assert!((u.re - v).abs() <= 1e-13 * v.abs().max(1.0), "x {x}");
            assert!(u.im.abs() < 1e-13);
        }
    }

    #[test]
    fn decays_at_the_boundary() {
        for i in 0..50 {
            let t = 0.37 * i as f64;
            assert!(exact_soliton(20.0, t).norm() < 1e-15);
            assert!(exact_soliton(-20.0, t).norm() < 1e-15);
            assert!(exact_soliton(400.0, t).norm().is_finite());
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for &(x, t) in &[(0.3, 0.1), (-1.2, 0.7), (2.5, 1.9), (0.0, 0.0)] {
            let h = 1e-5;
            let fd = (exact_soliton(x + h, t) - exact_soliton(x - h, t)) / (2.0 * h);
            let (_, d) = exact_soliton_with_derivative(x, t);
            assert!((fd - d).norm() < 1e-6 * d.norm().max(1.0), "x {x} t {t}");
        }
    }

    #[test]
    fn solves_the_equation() {
        // i u_t + u_xx + 2|u|^2 u = 0 by central differences
        let (x, t, h) = (0.4, 0.3, 1e-3);
        let u = exact_soliton(x, t);
        let ut = (exact_soliton(x, t + h) - exact_soliton(x, t - h)) / (2.0 * h);
        let uxx = (exact_soliton(x + h, t) - 2.0 * u + exact_soliton(x - h, t)) / (h * h);
        let r = Complex64::i() * ut + uxx + 2.0 * u.norm_sqr() * u;
        assert!(r.norm() < 1e-3 * u.norm(), "{r}");
    }

    #[test]
    fn potential_values() {
        assert!((double_well().eval(&[0.0, 0.0]) - 8.0).abs() < 1e-15);
        assert_eq!(indicator().eval(&[-1.0, 0.3]), 0.0);
        assert_eq!(indicator().eval(&[1.0, 0.3]), 1.0);
        assert_eq!(harmonic().eval(&[1.0, 1.0, 1.0]), 1.5);
        assert_eq!(lattice().eval(&[0.5, 0.5, 0.5]), 0.0);
        assert_eq!(lattice().eval(&[1.5, 0.5, 0.5]), 2.0);
        assert_eq!(lattice().eval(&[-0.5, 0.5, 0.5]), 2.0);
        assert!(!lattice().is_smooth() && !indicator().is_smooth() && harmonic().is_smooth());
        assert!(potential("nope").is_err());
        for name in POTENTIAL_NAMES {
            assert_eq!(potential(name).unwrap().name(), name);
        }
    }
}
