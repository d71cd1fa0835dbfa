use freq_lab_core::expr::Expr;
use freq_lab_core::frequency::{frequency_profile, ProfileOptions};
use freq_lab_core::model::{
    c_constant, check_a3, normalize_coordinates, normalize_coordinates_with, sublinear_floor, Clause, CoefficientField, NonlinearitySpec, PowerTerm,
    ProblemSpec, PullbackCandidate, SampleGrid, ScalarField,
};
use freq_lab_core::solver::radial_from_fn;
use freq_lab_core::Vector;
use proptest::prelude::*;

fn pt(x: f64, y: f64) -> Vector {
    [x, y, 0.0]
}

fn variable_spec() -> ProblemSpec {
    let mut spec = ProblemSpec::model(2, 1.0, 1.5);
    let entries = ["2 + x1^2", "x1*x2/4", "1 + x2^2/2"].iter().map(|s| Expr::parse(s).unwrap()).collect();
    spec.coefficients = CoefficientField::from_entries(2, entries).unwrap();
    spec
}

fn powers() -> NonlinearitySpec {
    NonlinearitySpec::sum_of_powers(vec![
        PowerTerm {
            q: 1.2,
            coeff: ScalarField::Expr(Expr::parse("1 + x1^2").unwrap()),
        },
        PowerTerm {
            q: 1.7,
            coeff: ScalarField::Const(0.5),
        },
    ])
}

proptest! {
    #[test]
    fn c_constant_positive(n in 2usize..12, q in 1.0f64..2.0) {
        prop_assert!(c_constant(n, q) > 0.0);
    }

    #[test]
    fn homogeneous_euler_relation(q in 1.0f64..1.999, s in -1.0f64..1.0) {
        let f = NonlinearitySpec::homogeneous(q);
        let x = pt(0.1, 0.2);
        let big_f = f.primitive(&x, s).unwrap();
        prop_assert!((s * f.f(&x, s) - q * big_f).abs() <= 1e-14 * big_f.max(1e-300));
        let kappa = sublinear_floor(&f, &x).unwrap();
        prop_assert!(big_f >= kappa * s.abs().powf(q) * (1.0 - 1e-14));
    }

    #[test]
    fn sum_of_powers_bounds(s in -1.0f64..1.0, x1 in -0.7f64..0.7, x2 in -0.7f64..0.7) {
        let f = powers();
        let x = pt(x1, x2);
        let big_f = f.primitive(&x, s).unwrap();
        prop_assert!(s * f.f(&x, s) <= f.q * big_f * (1.0 + 1e-12));
        let kappa = sublinear_floor(&f, &x).unwrap();
        prop_assert!(big_f >= kappa * s.abs().powf(f.q) * (1.0 - 1e-12));
    }

    #[test]
    fn standard_pullback_preserves_the_form(x0 in -0.4f64..0.4, y0 in -0.4f64..0.4, x in -0.2f64..0.2, y in -0.2f64..0.2) {
        // <Ã S ξ, S η> = <A(Tx) ξ, η> for the symmetric square root S
        let spec = variable_spec();
        let base = [x0, y0, 0.0];
        let out = normalize_coordinates(&spec, &base).unwrap();
        prop_assert!(out.coefficients.eval(&[0.0; 3]).max_abs_diff(&freq_lab_core::linalg::Mat::identity(2)) < 1e-12);
        let s = spec.coefficients.eval(&base).spd_sqrt().unwrap();
        let p = pt(x, y);
        let tp = s.mul_vec(&p);
        let tx = pt(tp[0] + x0, tp[1] + y0);
        let a = spec.coefficients.eval(&tx);
        let at = out.coefficients.eval(&p);
        for (xi, eta) in [(pt(1.0, 0.0), pt(0.0, 1.0)), (pt(1.0, 0.0), pt(1.0, 0.0)), (pt(0.3, -0.8), pt(0.6, 0.2))] {
            let lhs = at.form(&s.mul_vec(&xi), &s.mul_vec(&eta));
            prop_assert!((lhs - a.form(&xi, &eta)).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_is_idempotent(x in -0.3f64..0.3, y in -0.3f64..0.3) {
        let spec = variable_spec();
        let once = normalize_coordinates(&spec, &pt(0.1, -0.05)).unwrap();
        let twice = normalize_coordinates(&once, &[0.0; 3]).unwrap();
        prop_assert!((once.outer_radius - twice.outer_radius).abs() < 1e-12);
        let p = pt(x * once.outer_radius, y * once.outer_radius);
        prop_assert!(once.coefficients.eval(&p).max_abs_diff(&twice.coefficients.eval(&p)) < 1e-12);
    }

    #[test]
    fn linear_frequency_is_scale_invariant(k in 1usize..3, c in 0.1f64..10.0) {
        let spec = ProblemSpec::linear(2, 1.0);
        let g = |s: f64| s.powi(k as i32);
        let dg = |s: f64| k as f64 * s.powi(k as i32 - 1);
        let a = radial_from_fn(2, 1.0, 200, g, dg);
        let b = radial_from_fn(2, 1.0, 200, |s| c * g(s), |s| c * dg(s));
        let pa = frequency_profile(&spec, &a, ProfileOptions::default()).unwrap();
        let pb = frequency_profile(&spec, &b, ProfileOptions::default()).unwrap();
        for i in 10..pa.len() {
            let (na, nb) = (pa.freq[i].unwrap(), pb.freq[i].unwrap());
            prop_assert!((na - nb).abs() < 1e-9 * na.abs().max(1.0));
        }
    }
}

#[test]
fn inverse_sandwich_breaks_the_form() {
    let spec = variable_spec();
    let base = pt(0.3, 0.0);
    let out = normalize_coordinates_with(&spec, &base, PullbackCandidate::InverseSandwich).unwrap();
    let s = spec.coefficients.eval(&base).spd_sqrt().unwrap();
    let p = pt(0.2, 0.1);
    let tp = s.mul_vec(&p);
    let a = spec.coefficients.eval(&pt(tp[0] + 0.3, tp[1]));
    let xi = pt(1.0, 0.0);
    let lhs = out.coefficients.eval(&p).form(&s.mul_vec(&xi), &s.mul_vec(&xi));
    assert!((lhs - a.form(&xi, &xi)).abs() > 1e-3);
}

#[test]
fn translated_normalization() {
    let spec = variable_spec();
    let out = normalize_coordinates(&spec, &pt(0.3, 0.0)).unwrap();
    let a0 = spec.coefficients.eval(&pt(0.3, 0.0));
    let (_, lmax) = a0.eigen_bounds();
    assert!((out.outer_radius - 0.7 / lmax.sqrt()).abs() < 1e-14);
    let grid = SampleGrid::ball(2, out.outer_radius, 6, 1.0, 9);
    let report = check_a3(&out.nonlinearity, 2, &grid, out.fd_step()).unwrap();
    assert!(report.passed(), "{:?}", report.failed_clauses());
}

#[test]
fn sum_of_powers_passes_a3() {
    let f = powers().with_params(1.0, 2.0, 0.5);
    let grid = SampleGrid::ball(2, 0.5, 6, 1.0, 9);
    let report = check_a3(&f, 2, &grid, 1e-5).unwrap();
    assert!(report.passed(), "{:?}", report.failed_clauses());
    assert!(report.clause(Clause::A3i).unwrap().margin >= 0.0);
}
