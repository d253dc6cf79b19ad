//! Rotationally symmetric manifolds `dr² + φ(r)² dω²` and geometrically finite
//! hyperbolic quotients: curvature, the admissibility ratios, volumes, the
//! conjugation to a Euclidean Schrödinger operator, and a numeric radial heat
//! kernel.

pub mod expr;
pub mod solver;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::sphere_area;
use crate::quadrature::{integrate_with_breaks, QuadOptions};

pub use expr::{parse, Expr};
pub use solver::{radial_heat_solve, RadialHeatSolution, SolverGrid};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A warping function with its first two derivatives.
#[derive(Clone)]
pub struct RotSymProfile {
    pub name: String,
    pub n: usize,
    phi: RealFn,
    dphi: RealFn,
    ddphi: RealFn,
    /// `φ⁽⁴⁾(0)`, known only for symbolic profiles.
    d4_at_zero: Option<f64>,
}

impl fmt::Debug for RotSymProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RotSymProfile({}, n={})", self.name, self.n)
    }
}

/// Smallest admissible dimension for a rotationally symmetric profile.
const MIN_DIM: usize = 2;

impl RotSymProfile {
    /// A profile from closures, validated.
    pub fn new<F, G, H>(name: &str, n: usize, phi: F, dphi: G, ddphi: H) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let p = Self {
            name: name.to_string(),
            n,
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            ddphi: Arc::new(ddphi),
            d4_at_zero: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// A profile from an expression in `r`, with symbolic derivatives.
    pub fn from_expr(name: &str, n: usize, src: &str) -> Result<Self> {
        let e = parse(src)?;
        let d = e.derivative();
        let dd = d.derivative();
        let d4 = dd.derivative().derivative().eval(0.0);
        let p = Self {
            name: name.to_string(),
            n,
            phi: Arc::new(move |r| e.eval(r)),
            dphi: Arc::new(move |r| d.eval(r)),
            ddphi: Arc::new(move |r| dd.eval(r)),
            d4_at_zero: Some(d4),
        };
        p.validate()?;
        Ok(p)
    }

    /// `φ = sinh`: ℍⁿ.
    pub fn hyperbolic(n: usize) -> Result<Self> {
        Self::new("sinh", n, f64::sinh, f64::cosh, f64::sinh)
    }

    /// `φ = r`: ℝⁿ.
    pub fn euclidean(n: usize) -> Result<Self> {
        Self::new("r", n, |r| r, |_| 1.0, |_| 0.0)
    }

    pub fn phi(&self, r: f64) -> f64 {
        (self.phi)(r)
    }

    pub fn dphi(&self, r: f64) -> f64 {
        (self.dphi)(r)
    }

    pub fn ddphi(&self, r: f64) -> f64 {
        (self.ddphi)(r)
    }

    /// Checks `φ(0) = 0`, `φ'(0) = 1`, vanishing even derivatives at 0,
    /// positivity, and consistency of the derivatives.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(format!("{}: {msg}", self.name)));
        if self.n < MIN_DIM {
            return bad(format!("dimension {} below {MIN_DIM}", self.n));
        }
        if self.phi(0.0).abs() > 1e-9 {
            return bad(format!("phi(0) = {} != 0", self.phi(0.0)));
        }
        if (self.dphi(0.0) - 1.0).abs() > 1e-9 {
            return bad(format!("phi'(0) = {} != 1", self.dphi(0.0)));
        }
        if self.ddphi(0.0).abs() > 1e-9 {
            return bad(format!(
                "phi''(0) = {} != 0; the metric is not smooth at the pole",
                self.ddphi(0.0)
            ));
        }
        if let Some(d4) = self.d4_at_zero {
            if d4.abs() > 1e-7 {
                return bad(format!("phi''''(0) = {d4} != 0"));
            }
        }
        let h = 1e-4;
        for i in 1..=60 {
            let r = 0.05 * i as f64 * (1.0 + 0.01 * i as f64);
            let p = self.phi(r);
            if !(p > 0.0) {
                return bad(format!("phi({r}) = {p} is not positive"));
            }
            let fd1 = (self.phi(r + h) - self.phi(r - h)) / (2.0 * h);
            let fd2 = (self.dphi(r + h) - self.dphi(r - h)) / (2.0 * h);
            let scale1 = 1.0 + self.dphi(r).abs();
            let scale2 = 1.0 + self.ddphi(r).abs();
            if (fd1 - self.dphi(r)).abs() > 1e-5 * scale1 || (fd2 - self.ddphi(r)).abs() > 1e-5 * scale2 {
                return bad(format!("derivatives inconsistent at r = {r}"));
            }
        }
        Ok(())
    }

    /// `φ'/φ`.
    pub fn log_derivative(&self, r: f64) -> f64 {
        self.dphi(r) / self.phi(r)
    }
}

/// Sectional and Ricci curvatures at radius `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub r: f64,
    /// Planes containing `∂_r`: `-φ''/φ`.
    pub sectional_radial: f64,
    /// Planes tangent to the sphere: `-((φ')² - 1)/φ²`.
    pub sectional_tangential: f64,
    pub ricci_radial: f64,
    pub ricci_tangential: f64,
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "profile radius",
            value: r,
        });
    }
    Ok(())
}

/// `((φ')² - 1)/φ²` in a form that neither overflows nor cancels badly.
fn tangential_ratio(p: &RotSymProfile, r: f64) -> f64 {
    let phi = p.phi(r);
    let d = p.dphi(r);
    ((d - 1.0) / phi) * ((d + 1.0) / phi)
}

pub fn curvature(p: &RotSymProfile, r: f64) -> Result<CurvatureSample> {
    check_radius(r)?;
    let n = p.n as f64;
    let k_rad = -p.ddphi(r) / p.phi(r);
    let k_tan = -tangential_ratio(p, r);
    Ok(CurvatureSample {
        r,
        sectional_radial: k_rad,
        sectional_tangential: k_tan,
        ricci_radial: (n - 1.0) * k_rad,
        ricci_tangential: (n - 2.0) * k_tan + k_rad,
    })
}

/// `f₁ = φ''/φ` and `f₂ = (n-2)((φ')² - 1)/φ² + φ''/φ`.
pub fn admissibility_ratios(p: &RotSymProfile, r: f64) -> Result<(f64, f64)> {
    check_radius(r)?;
    let f1 = p.ddphi(r) / p.phi(r);
    let f2 = (p.n as f64 - 2.0) * tangential_ratio(p, r) + f1;
    Ok((f1, f2))
}

/// Verdict of [`is_admissible_rotsym`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotSymVerdict {
    pub admissible: bool,
    pub sup_f1: f64,
    pub sup_f2: f64,
    /// Values at the smallest grid radius.
    pub near_zero: (f64, f64),
    /// Log-log slopes of the positive parts over the outer third of the grid.
    pub tail_slopes: (f64, f64),
}

/// Tail slope above which a ratio counts as growing.
pub const TAIL_SLOPE_TOL: f64 = 0.05;

/// Default radial grid: 400 log-spaced points on `[10⁻³, 20]`.
pub fn default_r_grid() -> Vec<f64> {
    crate::heat2poisson::log_grid(1e-3, 20.0, 400)
}

/// `f₁`, `f₂` bounded above on the grid, finite at its inner end, and not
/// growing at its outer end.
pub fn is_admissible_rotsym(p: &RotSymProfile, r_grid: &[f64]) -> Result<RotSymVerdict> {
    if r_grid.len() < 6 {
        return Err(Error::InvalidParameter("radial grid needs at least 6 points".into()));
    }
    let mut grid = r_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let vals = grid
        .iter()
        .map(|&r| admissibility_ratios(p, r))
        .collect::<Result<Vec<_>>>()?;
    let sup = |k: usize| {
        vals.iter()
            .map(|v| if k == 0 { v.0 } else { v.1 })
            .fold(f64::NEG_INFINITY, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x) })
    };
    let (sup_f1, sup_f2) = (sup(0), sup(1));
    let start = 2 * grid.len() / 3;
    let slope = |k: usize| -> f64 {
        let pts: Vec<(f64, f64)> = grid[start..]
            .iter()
            .zip(&vals[start..])
            .map(|(&r, v)| (r.ln(), if k == 0 { v.0 } else { v.1 }))
            .collect();
        if pts.iter().any(|(_, v)| !v.is_finite()) {
            return f64::INFINITY;
        }
        // only upward growth of positive values threatens an upper bound
        let pos: Vec<(f64, f64)> = pts.iter().filter(|(_, v)| *v > 1e-12).map(|(x, v)| (*x, v.ln())).collect();
        if pos.len() < pts.len() / 2 || pos.len() < 2 {
            return 0.0;
        }
        let (x0, y0) = pos[0];
        let (x1, y1) = pos[pos.len() - 1];
        (y1 - y0) / (x1 - x0)
    };
    let tail_slopes = (slope(0), slope(1));
    let near_zero = vals[0];
    let admissible = sup_f1.is_finite()
        && sup_f2.is_finite()
        && near_zero.0.is_finite()
        && near_zero.1.is_finite()
        && tail_slopes.0 <= TAIL_SLOPE_TOL
        && tail_slopes.1 <= TAIL_SLOPE_TOL;
    Ok(RotSymVerdict {
        admissible,
        sup_f1,
        sup_f2,
        near_zero,
        tail_slopes,
    })
}

/// `β` with `Ric ≥ -(n-1)β²` implied by the verdict's sups.
pub fn ricci_beta(v: &RotSymVerdict, n: usize) -> f64 {
    // Ric(∂_r) = -(n-1) f₁, Ric(tangent) = -f₂
    let b2 = v.sup_f1.max(v.sup_f2 / (n as f64 - 1.0)).max(0.0);
    b2.sqrt()
}

/// `|B(R)| = |S^{n-1}| ∫₀^R φ^{n-1}`.
pub fn ball_volume(p: &RotSymProfile, big_r: f64) -> Result<f64> {
    check_radius(big_r)?;
    let k = p.n as i32 - 1;
    let mut breaks = vec![0.0];
    let mut b = 1.0;
    while b < big_r {
        breaks.push(b);
        b += 1.0;
    }
    breaks.push(big_r);
    let v = integrate_with_breaks(|r: f64| p.phi(r).powi(k), &breaks, QuadOptions::new(0.0, 1e-12))?;
    Ok(sphere_area(p.n - 1) * v.value)
}

/// Outcome of [`bishop_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BishopCheck {
    pub beta: f64,
    pub ratio: f64,
    pub model_ratio: f64,
    pub holds: bool,
}

/// `|B(R₂)|/|B(R₁)| ≤ |B_β(R₂)|/|B_β(R₁)|` against the space form of
/// curvature `-β²`, `β = √(sup f₁)`.
pub fn bishop_check(p: &RotSymProfile, r1: f64, r2: f64, sup_f1: f64) -> Result<BishopCheck> {
    let beta = sup_f1.max(0.0).sqrt();
    let model = if beta > 0.0 {
        RotSymProfile::new(
            "model",
            p.n,
            move |r| (beta * r).sinh() / beta,
            move |r| (beta * r).cosh(),
            move |r| beta * (beta * r).sinh(),
        )?
    } else {
        RotSymProfile::euclidean(p.n)?
    };
    let ratio = ball_volume(p, r2)? / ball_volume(p, r1)?;
    let model_ratio = ball_volume(&model, r2)? / ball_volume(&model, r1)?;
    Ok(BishopCheck {
        beta,
        ratio,
        model_ratio,
        holds: ratio <= model_ratio * (1.0 + 1e-12),
    })
}

/// `(w, V)` with `Δ_M (w v) = w (Δ_{ℝⁿ} - V) v` on radial `v`:
/// `w = (r/φ)^k`, `V = k φ''/φ + k(k-1)((φ'/φ)² - 1/r²)`, `k = (n-1)/2`.
pub fn conjugation_potential(p: &RotSymProfile, r: f64) -> Result<(f64, f64)> {
    check_radius(r)?;
    let k = (p.n as f64 - 1.0) / 2.0;
    let phi = p.phi(r);
    let q = p.dphi(r) / phi;
    let w = (r / phi).powf(k);
    let v = k * p.ddphi(r) / phi + k * (k - 1.0) * ((q - 1.0 / r) * (q + 1.0 / r));
    Ok((w, v))
}

/// Radial Laplace–Beltrami operator `h'' + (n-1)(φ'/φ) h'` by central
/// differences with step `h`.
pub fn radial_laplacian<F: Fn(f64) -> f64>(p: &RotSymProfile, f: F, r: f64, h: f64) -> f64 {
    let d1 = (f(r + h) - f(r - h)) / (2.0 * h);
    let d2 = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h);
    d2 + (p.n as f64 - 1.0) * p.log_derivative(r) * d1
}

/// Cusp data and critical exponent of a geometrically finite group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDescriptor {
    pub n: usize,
    pub delta: f64,
    pub cusp_ranks: Vec<usize>,
    pub has_maximal_cusp: bool,
}

impl GroupDescriptor {
    pub fn validate(&self) -> Result<()> {
        let top = self.n as f64 - 1.0;
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("dimension {} < 2", self.n)));
        }
        if !(self.delta >= 0.0 && self.delta <= top) {
            return Err(Error::InvalidParameter(format!(
                "critical exponent {} outside [0, {top}]",
                self.delta
            )));
        }
        if let Some(r) = self.cusp_ranks.iter().find(|&&r| r < 1 || r > self.n - 1) {
            return Err(Error::InvalidParameter(format!(
                "cusp rank {r} outside [1, {}]",
                self.n - 1
            )));
        }
        Ok(())
    }
}

/// Which sufficient condition certified a quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeomRule {
    ConvexCocompact,
    I,
    Ii,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeomVerdict {
    pub admissible: bool,
    pub rule: GeomRule,
}

/// Cusp-free quotients pass outright. Otherwise, with `r` the largest cusp
/// rank: (i) `δ < (n-1)/2`, `r < n-1` and no maximal cusp; (ii)
/// `δ = (n-1)/2 + β/2` with `r < (n-1)² - β²`.
pub fn is_admissible_geomfinite(g: &GroupDescriptor) -> Result<GeomVerdict> {
    g.validate()?;
    if g.cusp_ranks.is_empty() {
        return Ok(GeomVerdict {
            admissible: true,
            rule: GeomRule::ConvexCocompact,
        });
    }
    let top = g.n as f64 - 1.0;
    let r = *g.cusp_ranks.iter().max().expect("nonempty") as f64;
    if g.delta < top / 2.0 && r < top && !g.has_maximal_cusp {
        return Ok(GeomVerdict {
            admissible: true,
            rule: GeomRule::I,
        });
    }
    if g.delta >= top / 2.0 {
        let beta = 2.0 * g.delta - top;
        if r < top * top - beta * beta {
            return Ok(GeomVerdict {
                admissible: true,
                rule: GeomRule::Ii,
            });
        }
    }
    Ok(GeomVerdict {
        admissible: false,
        rule: GeomRule::None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn curvature_examples() {
        let h = RotSymProfile::hyperbolic(3).unwrap();
        let c = curvature(&h, 1.0).unwrap();
        assert_relative_eq!(c.sectional_radial, -1.0, max_relative = 1e-14);
        assert_relative_eq!(c.sectional_tangential, -1.0, max_relative = 1e-12);
        let e = RotSymProfile::euclidean(4).unwrap();
        let c = curvature(&e, 2.5).unwrap();
        assert_eq!((c.sectional_radial, c.sectional_tangential, c.ricci_radial), (0.0, 0.0, 0.0));
        let p = RotSymProfile::from_expr("cubic", 3, "r + r^3").unwrap();
        let c = curvature(&p, 1.0).unwrap();
        assert_relative_eq!(c.sectional_radial, -3.0);
        assert_relative_eq!(c.sectional_tangential, -15.0 / 4.0);
        assert_relative_eq!(c.ricci_radial, 2.0 * c.sectional_radial);
        assert_relative_eq!(c.ricci_tangential, c.sectional_tangential + c.sectional_radial);
    }

    #[test]
    fn validation_rejects_non_smooth_pole() {
        assert!(matches!(
            RotSymProfile::from_expr("quad", 3, "r + r^2"),
            Err(Error::InvalidProfile(_))
        ));
        assert!(RotSymProfile::from_expr("shift", 3, "1 + r").is_err());
        assert!(RotSymProfile::from_expr("slope", 3, "2*r").is_err());
        assert!(RotSymProfile::from_expr("quartic", 3, "r + r^4").is_err());
        assert!(RotSymProfile::from_expr("sine", 3, "sin(r)").is_err());
    }

    #[test]
    fn ratio_examples() {
        let h = RotSymProfile::hyperbolic(4).unwrap();
        for r in [0.1, 1.0, 7.0] {
            let (f1, f2) = admissibility_ratios(&h, r).unwrap();
            assert_relative_eq!(f1, 1.0, max_relative = 1e-12);
            assert_relative_eq!(f2, 3.0, max_relative = 1e-9);
        }
        let p = RotSymProfile::from_expr("cubic", 3, "r + r^3").unwrap();
        assert_relative_eq!(admissibility_ratios(&p, 1e-4).unwrap().0, 6.0, max_relative = 1e-7);
    }

    #[test]
    fn admissibility_verdicts() {
        let g = default_r_grid();
        let v = is_admissible_rotsym(&RotSymProfile::hyperbolic(3).unwrap(), &g).unwrap();
        assert!(v.admissible);
        assert_relative_eq!(v.sup_f1, 1.0, max_relative = 1e-9);
        let cubic = RotSymProfile::from_expr("cubic", 3, "r + r^3").unwrap();
        assert!(is_admissible_rotsym(&cubic, &g).unwrap().admissible);
        let fast = RotSymProfile::from_expr("gauss", 3, "r*exp(r^2)").unwrap();
        let v = is_admissible_rotsym(&fast, &g).unwrap();
        assert!(!v.admissible);
        assert!(v.tail_slopes.0 > 1.5);
    }

    #[test]
    fn volumes() {
        let e = RotSymProfile::euclidean(3).unwrap();
        assert_relative_eq!(ball_volume(&e, 1.0).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-12);
        let h = RotSymProfile::hyperbolic(2).unwrap();
        assert_relative_eq!(ball_volume(&h, 1.0).unwrap(), 2.0 * PI * (1f64.cosh() - 1.0), max_relative = 1e-12);
        let cubic = RotSymProfile::from_expr("cubic", 3, "r + r^3").unwrap();
        let v = is_admissible_rotsym(&cubic, &default_r_grid()).unwrap();
        assert!(bishop_check(&cubic, 1.0, 2.0, v.sup_f1).unwrap().holds);
    }

    #[test]
    fn conjugation_examples() {
        let h = RotSymProfile::hyperbolic(3).unwrap();
        let (w, v) = conjugation_potential(&h, 1.0).unwrap();
        assert_relative_eq!(w, 1.0 / 1f64.sinh(), max_relative = 1e-14);
        assert_relative_eq!(v, 1.0, max_relative = 1e-14);
        for n in [2, 3, 5] {
            let (w, v) = conjugation_potential(&RotSymProfile::euclidean(n).unwrap(), 0.8).unwrap();
            assert_eq!((w, v), (1.0, 0.0));
        }
    }

    #[test]
    fn conjugation_identity_by_differences() {
        // Δ_M h = w (Δ_E - V)(h / w), checked where the two k-dependent terms
        // of V both matter
        for (n, src) in [(3, "sinh(r)"), (5, "sinh(r)"), (5, "r + r^3"), (4, "r*cosh(r)")] {
            let p = RotSymProfile::from_expr(src, n, src).unwrap();
            let e = RotSymProfile::euclidean(n).unwrap();
            let hf = |r: f64| (-r * r).exp() * r;
            for r in [0.5, 1.0, 2.0] {
                let lhs = radial_laplacian(&p, hf, r, 1e-4);
                let wf = |s: f64| conjugation_potential(&p, s).unwrap().0;
                let v = |s: f64| hf(s) / wf(s);
                let (w, pot) = conjugation_potential(&p, r).unwrap();
                let rhs = w * (radial_laplacian(&e, v, r, 1e-4) - pot * v(r));
                assert!((lhs - rhs).abs() < 1e-5, "n={n} {src} r={r}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn geometrically_finite_rules() {
        let d = |n, delta, ranks: Vec<usize>, max| GroupDescriptor {
            n,
            delta,
            cusp_ranks: ranks,
            has_maximal_cusp: max,
        };
        assert_eq!(is_admissible_geomfinite(&d(3, 0.5, vec![1], false)).unwrap().rule, GeomRule::I);
        assert_eq!(is_admissible_geomfinite(&d(3, 1.5, vec![2], true)).unwrap().rule, GeomRule::Ii);
        assert_eq!(
            is_admissible_geomfinite(&d(3, 0.5, vec![], false)).unwrap().rule,
            GeomRule::ConvexCocompact
        );
        let v = is_admissible_geomfinite(&d(3, 2.0, vec![2], true)).unwrap();
        assert!(!v.admissible);
        assert!(is_admissible_geomfinite(&d(3, 2.5, vec![1], false)).is_err());
        assert!(is_admissible_geomfinite(&d(3, 1.0, vec![3], false)).is_err());
    }
}
