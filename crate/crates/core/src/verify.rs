//! The acceptance suite: thirteen criteria, each a list of measured checks.
//!
//! Shared by `hypfrac verify` and the `acceptance` integration test. Every
//! tolerance is multiplied by a caller-supplied scale.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::frackernel::{calibrate_alpha, FracKernel};
use crate::heat2poisson::{
    check_hypothesis_iii, log_grid, poisson_mass, HeatKernelProvider, HyperbolicProvider, InjectedViolation,
    PolarPoint, GROWTH_SLACK,
};
use crate::hyperbolic::{dm_envelope, heat_kernel, spherical_k, spherical_normalization, HyperbolicDim};
use crate::manifolds::{
    curvature, default_r_grid, is_admissible_geomfinite, is_admissible_rotsym, radial_heat_solve, GeomRule,
    GroupDescriptor, RotSymProfile, SolverGrid,
};
use crate::operators::{
    energy_constant, neumann_frac, pv_frac_default, quadratic_form, spectral_frac, trace_energy_check,
    ExtensionField, Perturbation, RadialFunction, SpectralGrid,
};
use crate::quadrature::{composite_gauss, gauss_legendre, wynn_epsilon};
use crate::report::{Check, CriterionReport, Relation};
use crate::specfun::{d_gamma, neumann_slope_limit, FracOrder};

/// `(id, key, title, runtime budget in seconds)`.
pub const CRITERIA: [(u8, &str, &str, f64); 13] = [
    (1, "extension-constant", "s^a φ_γ'(s) → -1/d_γ", 1.0),
    (2, "energy-constant", "extension energy constant equals 1/d_γ", 5.0),
    (3, "heat-normalization", "heat kernel mass on ℍ³ and ℍ²", 30.0),
    (4, "semigroup", "p_{1/2} * p_{1/2} = p_1 on ℍ³", 120.0),
    (5, "envelope", "heat kernel within a bounded band of the two-sided envelope", 10.0),
    (6, "kernel-calibration", "α_γ routes, convergent-range oracle, asymptotic slopes", 60.0),
    (7, "triple-oracle", "spectral, principal value and Neumann limit agree", 300.0),
    (8, "poisson-routes", "heat-subordinated vs Fourier extension, Poisson mass", 120.0),
    (9, "trace-energy", "extension energy equality and strict inequality", 120.0),
    (10, "hypothesis-iii", "L² bound on p_t and ∂_t p_t at ε = 3/2", 10.0),
    (11, "solver-oracle", "radial heat solver against closed forms", 120.0),
    (12, "predicate-tables", "curvature and admissibility verdicts", 1.0),
    (13, "positivity", "kernel positivity and nonnegative quadratic form", 30.0),
];

/// Looks up a criterion by number or key.
pub fn criterion_id(name: &str) -> Option<u8> {
    CRITERIA
        .iter()
        .find(|c| c.1 == name || c.0.to_string() == name)
        .map(|c| c.0)
}

struct Checks {
    scale: f64,
    list: Vec<Check>,
    notes: Vec<String>,
}

impl Checks {
    fn new(scale: f64) -> Self {
        Self {
            scale,
            list: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, lhs: f64, rhs: f64, tol: f64, rel: Relation) {
        self.list.push(Check::new(name, lhs, rhs, tol * self.scale, rel));
    }

    /// Evaluates `(lhs, rhs)`; an error fails the check and is noted.
    fn attempt(&mut self, name: impl Into<String>, tol: f64, rel: Relation, f: impl FnOnce() -> Result<(f64, f64)>) {
        let name = name.into();
        match f() {
            Ok((lhs, rhs)) => self.push(name, lhs, rhs, tol, rel),
            Err(e) => {
                self.notes.push(format!("{name}: {e}"));
                self.list.push(Check::failed(name, tol * self.scale, rel));
            }
        }
    }
}

fn order(g: f64) -> FracOrder {
    FracOrder::new(g).expect("order in (0, 1)")
}

fn dim(n: usize) -> HyperbolicDim {
    HyperbolicDim::new(n).expect("n ≥ 2")
}

const GAMMAS: [f64; 3] = [0.25, 0.5, 0.75];

fn extension_constant(c: &mut Checks) {
    for g in GAMMAS {
        c.attempt(format!("gamma={g}"), 1e-6, Relation::RelClose, || {
            Ok((neumann_slope_limit(&order(g))?, -1.0 / d_gamma(g)?))
        });
    }
}

fn energy(c: &mut Checks) {
    for g in GAMMAS {
        c.attempt(format!("gamma={g}"), 1e-4, Relation::RelClose, || {
            Ok((energy_constant(&order(g))?, 1.0 / d_gamma(g)?))
        });
    }
    c.attempt("gamma=0.5 exact", 1e-4, Relation::RelClose, || Ok((energy_constant(&order(0.5))?, 1.0)));
}

fn heat_normalization(c: &mut Checks) {
    for (n, ts, tol) in [(3, vec![0.1, 1.0, 10.0], 1e-6), (2, vec![0.5, 1.0], 1e-4)] {
        for t in ts {
            c.attempt(format!("n={n} t={t}"), tol, Relation::AbsClose, || {
                Ok((HyperbolicProvider::new(dim(n))?.mass(t)?, 1.0))
            });
        }
    }
}

/// `∫∫ p_s(r) p_t(d(ρ, r, θ)) 2π sin θ sinh² r dθ dr` on ℍ³ by composite
/// Gauss–Legendre in `r` and `μ = cos θ`.
pub fn semigroup_convolution(s: f64, t: f64, rho: f64) -> Result<f64> {
    let d3 = dim(3);
    let r_max = 2.0 * (s.max(t) + (40.0 * s.max(t)).sqrt()) + rho + 2.0;
    let (nodes, weights) = gauss_legendre(12);
    let panels = 80;
    let h = r_max / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        for (x, w) in nodes.iter().zip(&weights) {
            let r = (p as f64 + 0.5 * (x + 1.0)) * h;
            let outer = heat_kernel(&d3, s, r)?;
            let inner = composite_gauss(
                |mu: f64| {
                    let d = (r.cosh() * rho.cosh() - r.sinh() * rho.sinh() * mu).max(1.0).acosh();
                    heat_kernel(&d3, t, d).unwrap_or(f64::NAN)
                },
                -1.0,
                1.0,
                8,
                12,
            );
            acc += 0.5 * h * w * outer * inner * 2.0 * PI * r.sinh().powi(2);
        }
    }
    Ok(acc)
}

fn semigroup(c: &mut Checks) {
    for rho in [0.0, 1.0, 2.0] {
        c.attempt(format!("rho={rho}"), 1e-3, Relation::RelClose, || {
            Ok((semigroup_convolution(0.5, 0.5, rho)?, heat_kernel(&dim(3), 1.0, rho)?))
        });
    }
}

fn envelope(c: &mut Checks) {
    c.attempt("max/min ratio", 50.0, Relation::AtMost, || {
        let d3 = dim(3);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for t in log_grid(1e-2, 10.0, 25) {
            for i in 0..=50 {
                let rho = 0.1 * i as f64;
                let q = heat_kernel(&d3, t, rho)? / dm_envelope(&d3, t, rho);
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        Ok((hi / lo, 0.0))
    });
}

/// `C_n ∫_ℝ (λ² + (n-1)²/4)^γ k_λ(ρ) dλ` for odd `n` where the integral
/// converges, summed over half-periods of `k_λ` and accelerated by Wynn's
/// epsilon algorithm.
pub fn kernel_by_lambda_quadrature(dim: &HyperbolicDim, gamma: f64, rho: f64) -> Result<f64> {
    if !dim.is_odd() || 2.0 * gamma + (dim.n as f64 - 1.0) / 2.0 >= 0.0 || !(rho > 0.0) {
        return Err(crate::Error::InvalidParameter(
            "the λ integral converges only for odd n and 2γ < -(n-1)/2".into(),
        ));
    }
    let c2 = dim.lambda1;
    let (nodes, weights) = gauss_legendre(24);
    let width = PI / rho;
    let mut sums = Vec::new();
    let mut acc = 0.0;
    for k in 0..60 {
        let a = k as f64 * width;
        for (x, w) in nodes.iter().zip(&weights) {
            let l = a + 0.5 * width * (x + 1.0);
            acc += 0.5 * width * w * (l * l + c2).powf(gamma) * spherical_k(dim, l, rho)?;
        }
        sums.push(acc);
    }
    // the integrand is even in λ
    Ok(2.0 * spherical_normalization(dim) * wynn_epsilon(&sums))
}

/// Local log-log slope of the kernel between `a` and `b`.
fn log_slope(k: &FracKernel, a: f64, b: f64) -> Result<f64> {
    Ok((k.eval(a)? / k.eval(b)?).ln() / (a / b).ln())
}

fn kernel_calibration(c: &mut Checks) {
    c.attempt("alpha routes n=3 gamma=0.5", 1e-4, Relation::RelClose, || {
        let cal = calibrate_alpha(&dim(3), 0.5)?;
        Ok((cal.fitted.unwrap_or(f64::NAN), cal.analytic))
    });
    for rho in [0.5, 1.0, 2.0] {
        c.attempt(format!("gamma=-0.75 rho={rho}"), 1e-4, Relation::RelClose, || {
            let k = FracKernel::new(dim(3), -0.75)?;
            Ok((k.eval(rho)?, kernel_by_lambda_quadrature(&dim(3), -0.75, rho)?))
        });
    }
    for g in GAMMAS {
        let n = 3.0;
        c.attempt(format!("near-zero slope gamma={g}"), 0.1, Relation::AbsClose, || {
            let k = FracKernel::new(dim(3), g)?;
            Ok((log_slope(&k, 0.01, 0.005)?, -(n + 2.0 * g)))
        });
        c.attempt(format!("far-field exponent gamma={g}"), 0.02, Relation::RelClose, || {
            let k = FracKernel::new(dim(3), g)?;
            let (a, b) = (10.0, 20.0);
            let la = (k.eval(a)? * a.powf(1.0 + g)).ln();
            let lb = (k.eval(b)? * b.powf(1.0 + g)).ln();
            Ok(((lb - la) / (b - a), -(n - 1.0)))
        });
    }
}

/// The eighteen `(γ, f, ρ)` cases of the triple oracle.
pub fn triple_oracle_cases() -> Vec<(f64, RadialFunction, f64)> {
    let mut v = Vec::new();
    for g in GAMMAS {
        for f in [RadialFunction::gaussian(1.0), RadialFunction::bump(1.5)] {
            for rho in [0.5, 1.0, 2.0] {
                v.push((g, f.clone(), rho));
            }
        }
    }
    v
}

fn triple_oracle(c: &mut Checks) {
    let d3 = dim(3);
    let rows: Vec<_> = triple_oracle_cases()
        .into_par_iter()
        .map(|(g, f, rho)| {
            let o = order(g);
            let s = spectral_frac(&o, &f, rho);
            let p = pv_frac_default(&d3, &o, &f, rho);
            let n = neumann_frac(&d3, &o, &f, rho);
            (g, f, rho, s, p, n)
        })
        .collect();
    for (g, f, rho, s, p, n) in rows {
        let case = format!("gamma={g} f={f} rho={rho}");
        let tol = 1e-2;
        match (s, p, n) {
            (Ok(s), Ok(p), Ok(n)) => {
                c.push(format!("{case} pv/spectral"), p, s, tol, Relation::RelClose);
                c.push(format!("{case} neumann/spectral"), n, s, tol, Relation::RelClose);
                c.push(format!("{case} neumann/pv"), n, p, tol, Relation::RelClose);
            }
            (s, p, n) => {
                for e in [s.err(), p.err(), n.err()].into_iter().flatten() {
                    c.notes.push(format!("{case}: {e}"));
                }
                c.list.push(Check::failed(case, tol * c.scale, Relation::RelClose));
            }
        }
    }
}

fn poisson_routes(c: &mut Checks) {
    let o = order(0.5);
    let f = RadialFunction::gaussian(1.0);
    let heat = ExtensionField::heat(dim(3), o, f.clone());
    let fourier = ExtensionField::fourier(o, f, SpectralGrid::default());
    let fourier = match fourier {
        Ok(u) => u,
        Err(e) => {
            c.notes.push(format!("fourier route: {e}"));
            c.list.push(Check::failed("fourier route", 1e-3 * c.scale, Relation::RelClose));
            return;
        }
    };
    for rho in [0.0, 0.5, 1.0, 1.5, 2.0] {
        for y in [0.1, 0.25, 0.5, 1.0, 2.0] {
            c.attempt(format!("u rho={rho} y={y}"), 1e-3, Relation::RelClose, || {
                Ok((heat.eval(rho, y)?, fourier.eval(rho, y)?))
            });
        }
    }
    for y in [0.1, 0.5, 2.0] {
        c.attempt(format!("mass y={y}"), 1e-3, Relation::AbsClose, || {
            Ok((poisson_mass(&HyperbolicProvider::new(dim(3))?, &o, y)?, 1.0))
        });
    }
}

fn trace_energy(c: &mut Checks) {
    let o = order(0.5);
    let f = RadialFunction::gaussian(1.0);
    c.attempt("extension ratio", 2e-2, Relation::AbsClose, || {
        Ok((trace_energy_check(&o, &f, None)?.ratio, 1.0))
    });
    c.attempt("perturbed ratio", 0.0, Relation::Above, || {
        let p = Perturbation { amplitude: 0.3 };
        Ok((trace_energy_check(&o, &f, Some(p))?.ratio, 1.0))
    });
}

/// Exponent at which the audit of criterion 10 is run.
pub const HYPOTHESIS_EPSILON: f64 = 1.5;

fn hypothesis(c: &mut Checks) {
    let grid = log_grid(1e-3, 10.0, 17);
    let x = PolarPoint::base();
    match HyperbolicProvider::new(dim(3)).and_then(|p| check_hypothesis_iii(&p, &x, HYPOTHESIS_EPSILON, &grid)) {
        Ok(r) => {
            c.push("h3 fitted C_x finite", r.fitted_cx, f64::MAX, 0.0, Relation::AtMost);
            c.push(
                "h3 growth exponent",
                r.growth_exponent,
                HYPOTHESIS_EPSILON,
                GROWTH_SLACK,
                Relation::AtMost,
            );
            if !r.pass {
                c.notes.push(format!(
                    "on ℍ³ ‖p_t‖ ~ t^(-3/4) and ‖∂_t p_t‖ ~ t^(-7/4) as t → 0 (measured {:.3}); \
                     no finite C_x gives the bound for ε < 7/4",
                    r.growth_exponent
                ));
            }
        }
        Err(e) => {
            c.notes.push(format!("h3 audit: {e}"));
            c.list.push(Check::failed("h3 audit", GROWTH_SLACK, Relation::AtMost));
        }
    }
    c.attempt("injected violation detected", 0.0, Relation::Above, || {
        let bad = InjectedViolation {
            inner: HyperbolicProvider::new(dim(3))?,
        };
        let r = check_hypothesis_iii(&bad, &x, HYPOTHESIS_EPSILON, &grid)?;
        Ok((r.growth_exponent, HYPOTHESIS_EPSILON + GROWTH_SLACK))
    });
}

fn solver(c: &mut Checks) {
    let grid = SolverGrid::default();
    let cases: [(&str, fn(usize) -> Result<RotSymProfile>, fn(f64) -> f64); 2] = [
        ("sinh", RotSymProfile::hyperbolic, |r| crate::heat2poisson::h3_closed_form(1.0, r)),
        ("r", RotSymProfile::euclidean, |r| {
            (4.0 * PI).powf(-1.5) * (-r * r / 4.0).exp()
        }),
    ];
    for (name, make, exact) in cases {
        let sol = match make(3).and_then(|p| radial_heat_solve(&p, 1.0, &grid)) {
            Ok(s) => s,
            Err(e) => {
                c.notes.push(format!("{name}: {e}"));
                c.list.push(Check::failed(format!("{name} solve"), 1e-3 * c.scale, Relation::RelClose));
                continue;
            }
        };
        // worst relative deviation on r ∈ [0, 3]
        let mut worst = (0.0, 0.0, 0.0);
        for i in 0..=30 {
            let r = 0.1 * i as f64;
            let got = sol.value(1.0, r).unwrap_or(f64::NAN);
            let want = exact(r);
            let dev = ((got - want) / want).abs();
            if !(dev <= worst.0) {
                worst = (dev, got, want);
            }
        }
        c.push(format!("{name} worst r in [0,3]"), worst.1, worst.2, 1e-3, Relation::RelClose);
        let m = *sol.masses.last().expect("nonempty");
        c.push(format!("{name} mass"), m, 1.0, 1e-3, Relation::AbsClose);
    }
}

fn predicate_tables(c: &mut Checks) {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    c.attempt("sinh curvature radial", 1e-12, Relation::AbsClose, || {
        Ok((curvature(&RotSymProfile::hyperbolic(3)?, 1.0)?.sectional_radial, -1.0))
    });
    c.attempt("sinh curvature tangential", 1e-12, Relation::AbsClose, || {
        Ok((curvature(&RotSymProfile::hyperbolic(3)?, 1.0)?.sectional_tangential, -1.0))
    });
    c.attempt("r+r^3 curvature radial at 1", 1e-12, Relation::AbsClose, || {
        Ok((curvature(&RotSymProfile::from_expr("cubic", 3, "r + r^3")?, 1.0)?.sectional_radial, -3.0))
    });
    c.attempt("r+r^3 curvature tangential at 1", 1e-12, Relation::AbsClose, || {
        let p = RotSymProfile::from_expr("cubic", 3, "r + r^3")?;
        Ok((curvature(&p, 1.0)?.sectional_tangential, -3.75))
    });
    let grid = default_r_grid();
    for (name, src, expected) in [
        ("sinh", "sinh(r)", true),
        ("r+r^3", "r + r^3", true),
        ("r*exp(r^2)", "r*exp(r^2)", false),
    ] {
        c.attempt(format!("{name} admissible"), 0.0, Relation::AbsClose, || {
            let p = RotSymProfile::from_expr(name, 3, src)?;
            Ok((flag(is_admissible_rotsym(&p, &grid)?.admissible), flag(expected)))
        });
    }
    c.attempt("sinh sup f1", 1e-9, Relation::AbsClose, || {
        Ok((is_admissible_rotsym(&RotSymProfile::hyperbolic(3)?, &grid)?.sup_f1, 1.0))
    });
    let rule_code = |r: GeomRule| match r {
        GeomRule::ConvexCocompact => 0.0,
        GeomRule::I => 1.0,
        GeomRule::Ii => 2.0,
        GeomRule::None => -1.0,
    };
    for (name, g, rule) in [
        (
            "delta=0.5 ranks=[1]",
            GroupDescriptor {
                n: 3,
                delta: 0.5,
                cusp_ranks: vec![1],
                has_maximal_cusp: false,
            },
            GeomRule::I,
        ),
        (
            "delta=1.5 ranks=[2]",
            GroupDescriptor {
                n: 3,
                delta: 1.5,
                cusp_ranks: vec![2],
                has_maximal_cusp: false,
            },
            GeomRule::Ii,
        ),
        (
            "delta=0.5 no cusps",
            GroupDescriptor {
                n: 3,
                delta: 0.5,
                cusp_ranks: vec![],
                has_maximal_cusp: false,
            },
            GeomRule::ConvexCocompact,
        ),
    ] {
        c.attempt(format!("geomfinite {name}"), 0.0, Relation::AbsClose, || {
            let v = is_admissible_geomfinite(&g)?;
            Ok((rule_code(v.rule) + flag(!v.admissible) * 10.0, rule_code(rule)))
        });
    }
}

/// Test functions of the positivity suite.
pub fn positivity_functions() -> Vec<RadialFunction> {
    vec![
        RadialFunction::gaussian(0.5),
        RadialFunction::gaussian(1.0),
        RadialFunction::gaussian(2.0),
        RadialFunction::bump(1.0),
        RadialFunction::bump(2.5),
        RadialFunction::gaussian(1.0).plus(RadialFunction::gaussian(0.5).scaled(-1.5)),
    ]
}

fn positivity(c: &mut Checks) {
    for g in GAMMAS {
        c.attempt(format!("min kernel gamma={g}"), 0.0, Relation::Above, || {
            let k = FracKernel::new(dim(3), g)?;
            let mut lo = f64::INFINITY;
            for rho in log_grid(0.05, 10.0, 60) {
                lo = lo.min(k.eval(rho)?);
            }
            Ok((lo, 0.0))
        });
    }
    for g in GAMMAS {
        for f in positivity_functions() {
            c.attempt(format!("quadratic form gamma={g} f={f}"), 1e-8, Relation::AtLeast, || {
                Ok((quadratic_form(g, &f)?, 0.0))
            });
        }
    }
}

/// Runs one criterion. `timed` adds the runtime budget as a check.
pub fn run_criterion(id: u8, tolerance_scale: f64, timed: bool) -> Option<CriterionReport> {
    let (_, key, title, budget) = *CRITERIA.iter().find(|c| c.0 == id)?;
    let mut c = Checks::new(tolerance_scale);
    let start = Instant::now();
    match id {
        1 => extension_constant(&mut c),
        2 => energy(&mut c),
        3 => heat_normalization(&mut c),
        4 => semigroup(&mut c),
        5 => envelope(&mut c),
        6 => kernel_calibration(&mut c),
        7 => triple_oracle(&mut c),
        8 => poisson_routes(&mut c),
        9 => trace_energy(&mut c),
        10 => hypothesis(&mut c),
        11 => solver(&mut c),
        12 => predicate_tables(&mut c),
        13 => positivity(&mut c),
        _ => return None,
    }
    let seconds = start.elapsed().as_secs_f64();
    if timed {
        c.list.push(Check::new("runtime seconds", seconds, budget, 0.0, Relation::AtMost));
    }
    Some(CriterionReport {
        id,
        key: key.to_string(),
        title: title.to_string(),
        pass: c.list.iter().all(|k| k.pass),
        seconds: timed.then_some(seconds),
        budget_seconds: budget,
        note: (!c.notes.is_empty()).then(|| c.notes.join("; ")),
        checks: c.list,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_resolve() {
        assert_eq!(criterion_id("energy-constant"), Some(2));
        assert_eq!(criterion_id("13"), Some(13));
        assert_eq!(criterion_id("nope"), None);
        assert!(run_criterion(14, 1.0, false).is_none());
    }

    #[test]
    fn lambda_quadrature_rejects_divergent_orders() {
        assert!(kernel_by_lambda_quadrature(&dim(3), -0.25, 1.0).is_err());
        assert!(kernel_by_lambda_quadrature(&dim(2), -0.75, 1.0).is_err());
    }

    #[test]
    fn semigroup_convolution_at_origin_is_p1() {
        let a = semigroup_convolution(0.5, 0.5, 0.0).unwrap();
        let b = heat_kernel(&dim(3), 1.0, 0.0).unwrap();
        assert!((a - b).abs() < 1e-6 * b, "{a} {b}");
    }
}
