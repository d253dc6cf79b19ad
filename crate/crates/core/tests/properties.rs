use hypfrac::frackernel::FracKernel;
use hypfrac::heat2poisson::{base_mean, poisson_increment, poisson_mass, HyperbolicProvider};
use hypfrac::hyperbolic::heat_kernel;
use hypfrac::manifolds::{radial_heat_solve, RotSymProfile, SolverGrid};
use hypfrac::operators::{neumann_frac, poisson_extend, quadratic_form, spectral_frac, RadialFunction};
use hypfrac::{FracOrder, HyperbolicDim};
use proptest::prelude::*;

fn order(g: f64) -> FracOrder {
    FracOrder::new(g).unwrap()
}

fn h3() -> HyperbolicDim {
    HyperbolicDim::new(3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spectral_operator_is_linear(
        w1 in 0.6f64..2.0, w2 in 0.6f64..2.0,
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        g in 0.15f64..0.85, rho in 0.0f64..3.0,
    ) {
        let f = RadialFunction::gaussian(w1);
        let h = RadialFunction::gaussian(w2);
        let o = order(g);
        let sum = f.clone().scaled(a).plus(h.clone().scaled(b));
        let lhs = spectral_frac(&o, &sum, rho).unwrap();
        let rhs = a * spectral_frac(&o, &f, rho).unwrap() + b * spectral_frac(&o, &h, rho).unwrap();
        let scale = (a.abs() + b.abs()) * 10.0;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn quadratic_form_is_a_squared_seminorm(
        w1 in 0.6f64..2.0, w2 in 0.6f64..2.0, a in -2.0f64..2.0, g in 0.15f64..0.85,
    ) {
        let f = RadialFunction::gaussian(w1);
        let h = RadialFunction::gaussian(w2).scaled(a);
        let qf = quadratic_form(g, &f).unwrap();
        let qh = quadratic_form(g, &h).unwrap();
        let qs = quadratic_form(g, &f.clone().plus(h)).unwrap();
        prop_assert!(qf > 0.0);
        // homogeneity of degree two
        let q2 = quadratic_form(g, &f.clone().scaled(2.0)).unwrap();
        prop_assert!((q2 - 4.0 * qf).abs() <= 1e-10 * qf);
        // Cauchy–Schwarz in triangle form
        prop_assert!(qs.sqrt() <= qf.sqrt() + qh.sqrt() + 1e-10);
    }

    #[test]
    fn heat_kernel_is_positive(n in 2usize..7, t in 0.01f64..20.0, rho in 0.0f64..15.0) {
        let p = heat_kernel(&HyperbolicDim::new(n).unwrap(), t, rho).unwrap();
        prop_assert!(p > 0.0 && p.is_finite(), "p_{t}({rho}) = {p} on H^{n}");
    }

    #[test]
    fn kernel_is_positive_and_decreasing(g in 0.1f64..0.9, n in 2usize..6, r1 in 0.05f64..6.0, dr in 0.01f64..2.0) {
        let k = FracKernel::new(HyperbolicDim::new(n).unwrap(), g).unwrap();
        let a = k.eval(r1).unwrap();
        let b = k.eval(r1 + dr).unwrap();
        prop_assert!(a > b && b > 0.0, "K({r1}) = {a}, K({}) = {b}", r1 + dr);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn extension_obeys_the_maximum_principle(
        r in 0.5f64..2.5, g in 0.2f64..0.8, rho in 0.0f64..3.0, y in 0.05f64..3.0,
    ) {
        let f = RadialFunction::bump(r);
        let u = poisson_extend(&h3(), &order(g), &f, rho, y).unwrap();
        prop_assert!(u >= -1e-12, "u = {u}");
        prop_assert!(u <= f.eval(0.0) + 1e-12, "u = {u} above sup f");
    }

    #[test]
    fn poisson_mass_is_one(g in 0.2f64..0.8, y in 0.05f64..3.0) {
        let p = HyperbolicProvider::new(h3()).unwrap();
        let m = poisson_mass(&p, &order(g), y).unwrap();
        prop_assert!((m - 1.0).abs() < 1e-6, "mass {m}");
    }

    #[test]
    fn constants_extend_to_themselves(c in -5.0f64..5.0, g in 0.2f64..0.8, rho in 0.0f64..3.0, y in 0.05f64..3.0) {
        let f = RadialFunction::constant(c);
        let u = poisson_extend(&h3(), &order(g), &f, rho, y).unwrap();
        prop_assert!((u - c).abs() <= 1e-12 * c.abs().max(1.0));
        prop_assert!(neumann_frac(&h3(), &order(g), &f, rho).unwrap().abs() <= 1e-10);
    }
}

#[test]
fn positive_data_with_a_minimum_at_a_point_has_negative_fractional_laplacian_there() {
    // f = 1 - bump has its minimum 0 at the origin
    let f = RadialFunction::constant(1.0).plus(RadialFunction::gaussian(1.0).scaled(-1.0));
    for g in [0.25, 0.5, 0.75] {
        let v = neumann_frac(&h3(), &order(g), &f, 0.0).unwrap();
        assert!(v < 0.0, "γ = {g}: {v}");
    }
}

#[test]
fn solved_kernel_reproduces_the_closed_form_poisson_extension() {
    let profile = RotSymProfile::hyperbolic(3).unwrap();
    let solved = radial_heat_solve(&profile, 30.0, &SolverGrid::default()).unwrap();
    let exact = HyperbolicProvider::new(h3()).unwrap();
    let f = RadialFunction::gaussian(1.0);
    let mean = base_mean(&f);
    let fx = f.eval(0.0);
    for g in [0.3, 0.7] {
        for y in [0.2, 1.0] {
            let a = poisson_increment(&solved, &order(g), &mean, fx, y).unwrap();
            let b = poisson_increment(&exact, &order(g), &mean, fx, y).unwrap();
            assert!((a - b).abs() <= 1e-2 * b.abs(), "γ = {g}, y = {y}: {a} vs {b}");
        }
    }
}

