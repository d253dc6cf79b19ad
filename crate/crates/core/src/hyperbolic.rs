//! Geometry of ℍⁿ and its explicit radial kernels.
//!
//! Radial kernels on ℍⁿ are built by applying `D = (1/sinh ρ) ∂_ρ` to a 1-D
//! seed. `D` is applied symbolically: a term `c · cosh^p ρ · sinh^{-q} ρ ·
//! g^{(j)}(ρ)` always has `q - p = m` after `m` applications, so every term
//! is evaluated as `e^{-mρ} · (cosh ρ e^{-ρ})^p / (sinh ρ e^{-ρ})^{p+m}`,
//! which neither overflows nor underflows for large ρ.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_with_breaks, QuadOptions};
use crate::specfun::{bessel_k_scaled, gamma_fn, BesselOrder};

/// Dimension of ℍⁿ with its derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicDim {
    pub n: usize,
    /// `(n-1)/2`
    pub half_nm1: f64,
    /// Bottom of the spectrum, `(n-1)²/4`.
    pub lambda1: f64,
}

impl HyperbolicDim {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "hyperbolic dimension must be at least 2, got {n}"
            )));
        }
        let half = (n as f64 - 1.0) / 2.0;
        Ok(Self {
            n,
            half_nm1: half,
            lambda1: half * half,
        })
    }

    pub fn is_odd(&self) -> bool {
        self.n % 2 == 1
    }

    /// Number of applications of `D` in the kernel formulas: `(n-1)/2` for
    /// odd n, `n/2` for even n.
    pub fn operator_power(&self) -> usize {
        if self.is_odd() {
            (self.n - 1) / 2
        } else {
            self.n / 2
        }
    }
}

/// Area of the unit sphere `S^{k}` embedded in `ℝ^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    let h = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma_fn(h).expect("positive argument")
}

/// A point on the upper sheet of the hyperboloid `[x,x] = 1`, `x₀ > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperboloidPoint(Vec<f64>);

/// Lorentzian product `x₀y₀ - Σ xᵢyᵢ`.
pub fn lorentz(x: &[f64], y: &[f64]) -> f64 {
    x[0] * y[0] - x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
}

impl HyperboloidPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::InvalidPoint(format!(
                "need at least 3 coordinates, got {}",
                coords.len()
            )));
        }
        let q = lorentz(&coords, &coords);
        if !(coords[0] > 0.0) || (q - 1.0).abs() > 1e-9 * coords[0] * coords[0] {
            return Err(Error::InvalidPoint(format!(
                "[x,x] = {q}, x0 = {}",
                coords[0]
            )));
        }
        Ok(Self(coords))
    }

    /// The base point `(1, 0, …, 0)` of ℍⁿ.
    pub fn origin(n: usize) -> Self {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        Self(v)
    }

    /// The point at distance ρ from the origin in the direction of a unit
    /// vector `dir ∈ ℝⁿ`.
    pub fn from_polar(rho: f64, dir: &[f64]) -> Result<Self> {
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidPoint("zero direction".into()));
        }
        let mut v = Vec::with_capacity(dir.len() + 1);
        v.push(rho.cosh());
        v.extend(dir.iter().map(|d| rho.sinh() * d / norm));
        Ok(Self(v))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }
}

/// Geodesic distance `arccosh [x, x']`, computed from the Lorentzian norm of
/// `x - x'` so that nearby points keep full relative accuracy.
pub fn hyperbolic_distance(x: &HyperboloidPoint, x2: &HyperboloidPoint) -> Result<f64> {
    if x.0.len() != x2.0.len() {
        return Err(Error::InvalidPoint("dimension mismatch".into()));
    }
    let d: Vec<f64> = x.0.iter().zip(&x2.0).map(|(a, b)| a - b).collect();
    // -[d,d] = 4 sinh²(ρ/2)
    let q = (-lorentz(&d, &d)).max(0.0);
    Ok(2.0 * (0.5 * q.sqrt()).asinh())
}

/// Distance between points at radii ρ, r whose directions have cosine μ.
pub fn distance_law_of_cosines(rho: f64, r: f64, mu: f64) -> f64 {
    // cosh d - 1 = 2 sinh²((ρ-r)/2) + sinh ρ sinh r (1-μ)
    let h = (0.5 * (rho - r)).sinh();
    let x = 2.0 * h * h + rho.sinh() * r.sinh() * (1.0 - mu);
    2.0 * (0.5 * x.max(0.0)).sqrt().asinh()
}

/// `sinh^{n-1} ρ`; callers multiply by the sphere area `ω_{n-1}`.
pub fn volume_element(dim: &HyperbolicDim, rho: f64) -> f64 {
    rho.sinh().powi(dim.n as i32 - 1)
}

/// One term `coef · cosh^p ρ · sinh^{-q} ρ · g^{(j)}(ρ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpTerm {
    pub coef: f64,
    pub p: u32,
    pub q: u32,
    pub j: u32,
}

/// `D^m` as a list of terms with `q - p = m`.
pub fn operator_terms(m: usize) -> Vec<OpTerm> {
    let mut terms = vec![OpTerm {
        coef: 1.0,
        p: 0,
        q: 0,
        j: 0,
    }];
    for _ in 0..m {
        let mut next: HashMap<(u32, u32, u32), f64> = HashMap::new();
        for t in &terms {
            if t.p > 0 {
                *next.entry((t.p - 1, t.q, t.j)).or_default() += t.coef * t.p as f64;
            }
            if t.q > 0 {
                *next.entry((t.p + 1, t.q + 2, t.j)).or_default() -= t.coef * t.q as f64;
            }
            *next.entry((t.p, t.q + 1, t.j + 1)).or_default() += t.coef;
        }
        let mut v: Vec<OpTerm> = next
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((p, q, j), coef)| OpTerm { coef, p, q, j })
            .collect();
        v.sort_by_key(|t| (t.j, t.p, t.q));
        terms = v;
    }
    terms
}

/// One-dimensional seed functions fed to `D^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Seed {
    /// `cos λρ`
    Cos { lambda: f64 },
    /// `exp(-ρ²/4t)`
    Gauss { t: f64 },
    /// `ρ^{-ν} K_ν(cρ)`
    Bessel { nu: f64, c: f64 },
}

/// Derivatives `g^{(j)}(ρ) = e^{log_scale} · values[j]`.
#[derive(Debug, Clone)]
pub struct SeedJet {
    pub log_scale: f64,
    pub values: Vec<f64>,
}

impl Seed {
    /// Length scale below which `D^m` of a smooth even seed cancels badly.
    fn smooth_scale(&self) -> Option<f64> {
        match *self {
            Seed::Cos { lambda } => Some(1f64.min(1.0 / lambda.abs().max(1e-300))),
            Seed::Gauss { t } => Some(1f64.min(2.0 * t.sqrt())),
            Seed::Bessel { .. } => None,
        }
    }

    pub fn jet(&self, order: usize, rho: f64) -> Result<SeedJet> {
        match *self {
            Seed::Cos { lambda } => Ok(SeedJet {
                log_scale: 0.0,
                values: (0..=order)
                    .map(|j| lambda.powi(j as i32) * (lambda * rho + j as f64 * FRAC_PI_2).cos())
                    .collect(),
            }),
            Seed::Gauss { t } => {
                let s = 2.0 * t.sqrt();
                let x = rho / s;
                // d^j/dρ^j e^{-x²} = (-1/s)^j H_j(x) e^{-x²}
                let mut h = Vec::with_capacity(order + 1);
                h.push(1.0);
                if order >= 1 {
                    h.push(2.0 * x);
                }
                for k in 1..order {
                    let next = 2.0 * x * h[k] - 2.0 * k as f64 * h[k - 1];
                    h.push(next);
                }
                let values = h
                    .iter()
                    .enumerate()
                    .map(|(j, hj)| (-1.0 / s).powi(j as i32) * hj)
                    .collect();
                Ok(SeedJet {
                    log_scale: -x * x,
                    values,
                })
            }
            Seed::Bessel { nu, c } => bessel_seed_jet(nu, c, order, rho),
        }
    }
}

/// Jet of `ρ^{-ν} K_ν(cρ) = c^ν · s^{-ν} K_ν(s)` with `s = cρ`, using
/// `d/ds [s^e K_μ(s)] = (e+μ) s^{e-1} K_μ(s) - s^e K_{μ+1}(s)`.
fn bessel_seed_jet(nu: f64, c: f64, order: usize, rho: f64) -> Result<SeedJet> {
    if !(rho > 0.0) {
        return Err(Error::Domain {
            what: "Bessel seed",
            value: rho,
        });
    }
    let s = c * rho;
    let kvals = (0..=order)
        .map(|k| bessel_k_scaled(BesselOrder(nu + k as f64), s))
        .collect::<Result<Vec<f64>>>()?;
    // terms (coef, e, k) meaning coef · s^e · K_{ν+k}(s)
    let mut terms: Vec<(f64, f64, usize)> = vec![(1.0, -nu, 0)];
    let mut values = Vec::with_capacity(order + 1);
    let ln_s = s.ln();
    for j in 0..=order {
        let v: f64 = terms
            .iter()
            .map(|&(cf, e, k)| cf * (e * ln_s).exp() * kvals[k])
            .sum();
        values.push(v * c.powf(nu + j as f64));
        if j == order {
            break;
        }
        let mut next = Vec::with_capacity(terms.len() * 2);
        for &(cf, e, k) in &terms {
            let mu = nu + k as f64;
            if e + mu != 0.0 {
                next.push((cf * (e + mu), e - 1.0, k));
            }
            next.push((-cf, e, k + 1));
        }
        terms = next;
    }
    Ok(SeedJet {
        log_scale: -s,
        values,
    })
}

/// `D^m g(ρ)` as `e^{log} · mantissa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub log: f64,
    pub mantissa: f64,
}

impl Scaled {
    pub fn value(&self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa * self.log.exp()
        }
    }

    /// Multiplies by `e^{extra}`.
    pub fn shift(self, extra: f64) -> Self {
        Self {
            log: self.log + extra,
            mantissa: self.mantissa,
        }
    }
}

/// `D^m` with its term list cached.
#[derive(Debug, Clone)]
pub struct SinhOperator {
    pub m: usize,
    terms: Vec<OpTerm>,
}

impl SinhOperator {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            terms: operator_terms(m),
        }
    }

    pub fn terms(&self) -> &[OpTerm] {
        &self.terms
    }

    fn apply_direct(&self, seed: &Seed, rho: f64) -> Result<Scaled> {
        if self.m == 0 {
            let jet = seed.jet(0, rho)?;
            return Ok(Scaled {
                log: jet.log_scale,
                mantissa: jet.values[0],
            });
        }
        let jet = seed.jet(self.m, rho)?;
        let e2 = (-2.0 * rho).exp();
        let ch = 0.5 * (1.0 + e2);
        let sh = -0.5 * (-2.0 * rho).exp_m1();
        let ln_ch = ch.ln();
        let ln_sh = sh.ln();
        let m = self.m as f64;
        let sum: f64 = self
            .terms
            .iter()
            .map(|t| {
                let lp = t.p as f64 * ln_ch - (t.p as f64 + m) * ln_sh;
                t.coef * lp.exp() * jet.values[t.j as usize]
            })
            .sum();
        Ok(Scaled {
            log: jet.log_scale - m * rho,
            mantissa: sum,
        })
    }

    /// `D^m g(ρ)` for `ρ >= 0`. Near zero, smooth even seeds are evaluated by
    /// extrapolation in ρ² from four nodes outside the cancellation zone.
    pub fn apply(&self, seed: &Seed, rho: f64) -> Result<Scaled> {
        if rho.is_nan() || rho < 0.0 {
            return Err(Error::Domain {
                what: "radial operator",
                value: rho,
            });
        }
        if self.m == 0 {
            return self.apply_direct(seed, rho);
        }
        match seed.smooth_scale() {
            Some(ell) => {
                let delta = 0.02 * self.m as f64 * ell;
                if rho >= delta {
                    return self.apply_direct(seed, rho);
                }
                let xs: Vec<f64> = (1..=4).map(|k| k as f64 * delta).collect();
                let ys = xs
                    .iter()
                    .map(|&x| self.apply_direct(seed, x).map(|s| s.value()))
                    .collect::<Result<Vec<f64>>>()?;
                let u: Vec<f64> = xs.iter().map(|x| x * x).collect();
                Ok(Scaled {
                    log: 0.0,
                    mantissa: lagrange(&u, &ys, rho * rho),
                })
            }
            None => {
                if rho == 0.0 {
                    return Err(Error::Domain {
                        what: "singular seed at the origin",
                        value: rho,
                    });
                }
                self.apply_direct(seed, rho)
            }
        }
    }
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() {
        let mut w = 1.0;
        for j in 0..xs.len() {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w * ys[i];
    }
    acc
}

pub(crate) fn operator_cache(m: usize) -> SinhOperator {
    static CACHE: OnceLock<Mutex<HashMap<usize, SinhOperator>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().unwrap_or_else(|e| e.into_inner());
    g.entry(m).or_insert_with(|| SinhOperator::new(m)).clone()
}

/// `ln(sinh s / √(cosh s - cosh ρ))` for `s > ρ >= 0`.
fn ln_abel_weight(s: f64, rho: f64) -> f64 {
    let ln_sinh = s + (-0.5 * (-2.0 * s).exp_m1()).ln();
    // cosh s - cosh ρ = 2 sinh((s+ρ)/2) sinh((s-ρ)/2)
    let a = 0.5 * (s + rho);
    let b = 0.5 * (s - rho);
    let ln_diff = 2f64.ln() + a + (-0.5 * (-2.0 * a).exp_m1()).ln() + b.sinh().ln();
    ln_sinh - 0.5 * ln_diff
}

/// `∫_ρ^{s_max} sinh s / √(cosh s - cosh ρ) · D^k g(s) ds`.
///
/// On `[ρ, ρ+1]` the substitution `u = √(cosh s - cosh ρ)` turns the weight
/// into `2 du`; beyond that the weight is smooth.
pub fn abel_integral(op: &SinhOperator, seed: &Seed, rho: f64, s_max: f64, opts: QuadOptions) -> Result<f64> {
    abel_integral_shifted(op, seed, rho, s_max, 0.0, opts)
}

/// [`abel_integral`] multiplied by `e^{shift}` inside the integrand, for
/// results that would otherwise underflow.
pub fn abel_integral_shifted(
    op: &SinhOperator,
    seed: &Seed,
    rho: f64,
    s_max: f64,
    shift: f64,
    opts: QuadOptions,
) -> Result<f64> {
    let s_mid = (rho + 1.0).min(s_max);
    let weighted = |s: f64| match op.apply(seed, s) {
        Ok(v) => {
            if v.mantissa == 0.0 {
                0.0
            } else {
                v.mantissa * (v.log + shift + ln_abel_weight(s, rho)).exp()
            }
        }
        Err(_) => f64::NAN,
    };
    if rho > 30.0 {
        // cosh ρ is out of reach; s = ρ + w² absorbs the square-root endpoint
        let w_mid = (s_mid - rho).sqrt();
        let inner = integrate_with_breaks(
            |w: f64| 2.0 * w * weighted(rho + w * w),
            &[0.0, 0.1 * w_mid, w_mid],
            opts,
        )?;
        if s_max <= s_mid {
            return Ok(inner.value);
        }
        return Ok(inner.value + integrate(weighted, s_mid, s_max, opts)?.value);
    }
    let cosh_rho = rho.cosh();
    // u² = cosh s - cosh ρ = 2 sinh((s+ρ)/2) sinh((s-ρ)/2)
    let u_of = |s: f64| (2.0 * (0.5 * (s + rho)).sinh() * (0.5 * (s - rho)).sinh()).sqrt();
    let u_mid = u_of(s_mid);
    let eval_u = |u: f64| -> f64 {
        let s = (cosh_rho + u * u).acosh();
        let s = if s < rho { rho } else { s };
        match op.apply(seed, s) {
            Ok(v) => 2.0 * v.shift(shift).value(),
            Err(_) => f64::NAN,
        }
    };
    let mut breaks = vec![0.0];
    // resolve the seed scale near the lower end
    for frac in [1e-3, 1e-2, 0.1] {
        let u = frac * u_mid;
        if u > 0.0 && u < u_mid {
            breaks.push(u);
        }
    }
    breaks.push(u_mid);
    let inner = integrate_with_breaks(eval_u, &breaks, opts)?;
    if s_max <= s_mid {
        return Ok(inner.value);
    }
    let outer = integrate(weighted, s_mid, s_max, opts)?;
    Ok(inner.value + outer.value)
}

pub(crate) fn kernel_opts() -> QuadOptions {
    QuadOptions::new(0.0, 1e-11).with_max_segments(4000)
}

/// The spherical function `k_λ(ρ)` in the unnormalized operator form.
pub fn spherical_k(dim: &HyperbolicDim, lambda: f64, rho: f64) -> Result<f64> {
    let op = operator_cache(dim.operator_power());
    let seed = Seed::Cos { lambda };
    if dim.is_odd() {
        return Ok(op.apply(&seed, rho)?.value());
    }
    // the integrand decays like e^{-(n-1)s/2}
    let s_max = rho + 90.0 / (dim.n as f64 - 1.0);
    abel_integral(&op, &seed, rho, s_max, kernel_opts())
}

/// Normalization of `k_λ` such that `∫ (λ²+(n-1)²/4)^γ C_n k_λ(ρ) dλ` over
/// the real line is the kernel of the spectral multiplier.
pub fn spherical_normalization(dim: &HyperbolicDim) -> f64 {
    let base = -1.0 / (2.0 * PI);
    if dim.is_odd() {
        base.powi(((dim.n - 1) / 2) as i32) / (2.0 * PI)
    } else {
        2f64.sqrt() * base.powi((dim.n / 2) as i32) / (2.0 * PI)
    }
}

fn heat_raw(dim: &HyperbolicDim, t: f64, rho: f64) -> Result<f64> {
    let op = operator_cache(dim.operator_power());
    let seed = Seed::Gauss { t };
    let pre = -0.5 * t.ln() - dim.lambda1 * t;
    if dim.is_odd() {
        let v = op.apply(&seed, rho)?;
        return Ok(v.shift(pre).value());
    }
    let s_max = (rho * rho + 160.0 * t).sqrt();
    let v = abel_integral(&op, &seed, rho, s_max, kernel_opts())?;
    Ok(v * pre.exp())
}

/// The heat kernel of ℍⁿ normalized to unit mass.
///
/// The constant `N_n` is fixed once per dimension by a mass quadrature at
/// `t = 1` and cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicHeatKernel {
    pub dim: HyperbolicDim,
    pub norm: f64,
}

impl HyperbolicHeatKernel {
    pub fn new(dim: HyperbolicDim) -> Result<Self> {
        static NORMS: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
        let cache = NORMS.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(&norm) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&dim.n) {
            return Ok(Self { dim, norm });
        }
        let rmax = dim.n as f64 + 18.0;
        let mass = integrate_with_breaks(
            |r: f64| heat_raw(&dim, 1.0, r).unwrap_or(f64::NAN) * volume_element(&dim, r),
            &[0.0, 1.0, 2.0, 4.0, 8.0, rmax],
            QuadOptions::new(0.0, 1e-12),
        )?;
        let norm = 1.0 / (sphere_area(dim.n - 1) * mass.value);
        cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(dim.n, norm);
        Ok(Self { dim, norm })
    }

    /// `p_t(ρ)`.
    pub fn eval(&self, t: f64, rho: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain {
                what: "heat kernel time",
                value: t,
            });
        }
        Ok(self.norm * heat_raw(&self.dim, t, rho)?)
    }

    /// `p_t(ρ) · sinh^{n-1} ρ`, evaluated without forming either factor.
    pub fn eval_weighted(&self, t: f64, rho: f64) -> Result<f64> {
        if !self.dim.is_odd() || rho < 1.0 {
            return Ok(self.eval(t, rho)? * volume_element(&self.dim, rho));
        }
        let op = operator_cache(self.dim.operator_power());
        let v = op.apply(&Seed::Gauss { t }, rho)?;
        let k = (self.dim.n - 1) as f64;
        let ln_w = k * (rho + (-0.5 * (-2.0 * rho).exp_m1()).ln());
        Ok(self.norm * v.shift(ln_w - 0.5 * t.ln() - self.dim.lambda1 * t).value())
    }
}

/// Normalized heat kernel `p_t(ρ)` on ℍⁿ.
pub fn heat_kernel(dim: &HyperbolicDim, t: f64, rho: f64) -> Result<f64> {
    HyperbolicHeatKernel::new(*dim)?.eval(t, rho)
}

/// The two-sided comparison function
/// `(1+ρ)(1+ρ+t)^{(n-3)/2} t^{-n/2} exp(-(n-1)²t/4 - (n-1)ρ/2 - ρ²/4t)`.
pub fn dm_envelope(dim: &HyperbolicDim, t: f64, rho: f64) -> f64 {
    let n = dim.n as f64;
    (1.0 + rho)
        * (1.0 + rho + t).powf((n - 3.0) / 2.0)
        * t.powf(-n / 2.0)
        * (-dim.lambda1 * t - dim.half_nm1 * rho - rho * rho / (4.0 * t)).exp()
}

/// Radial kernel with its asymptotic metadata.
pub trait RadialKernel: Sync {
    fn dim(&self) -> HyperbolicDim;
    fn eval(&self, rho: f64) -> Result<f64>;
    /// Exponent `e` with `kernel ~ ρ^e` as ρ → 0, if singular.
    fn singular_exponent_at_zero(&self) -> Option<f64>;
    /// `(power, rate)` with `kernel ~ ρ^power e^{-rate ρ}` as ρ → ∞.
    fn decay_at_infinity(&self) -> (f64, f64);
}

/// The heat kernel frozen at a time `t`.
#[derive(Debug, Clone, Copy)]
pub struct HeatKernelAt {
    pub kernel: HyperbolicHeatKernel,
    pub t: f64,
}

impl RadialKernel for HeatKernelAt {
    fn dim(&self) -> HyperbolicDim {
        self.kernel.dim
    }

    fn eval(&self, rho: f64) -> Result<f64> {
        self.kernel.eval(self.t, rho)
    }

    fn singular_exponent_at_zero(&self) -> Option<f64> {
        None
    }

    /// The Gaussian factor dominates; the reported pair is the exponential
    /// part at the probe scale, `ρ e^{-(n-1)ρ/2}` times `e^{-ρ²/4t}`.
    fn decay_at_infinity(&self) -> (f64, f64) {
        (1.0, self.kernel.dim.half_nm1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn d(n: usize) -> HyperbolicDim {
        HyperbolicDim::new(n).unwrap()
    }

    #[test]
    fn dim_constants() {
        let h = d(5);
        assert_eq!(h.half_nm1, 2.0);
        assert_eq!(h.lambda1, 4.0);
        assert!(HyperbolicDim::new(1).is_err());
        assert_relative_eq!(sphere_area(2), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(1), 2.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn distance_examples() {
        let o = HyperboloidPoint::origin(3);
        assert_eq!(hyperbolic_distance(&o, &o).unwrap(), 0.0);
        let x = HyperboloidPoint::new(vec![1f64.cosh(), 1f64.sinh(), 0.0, 0.0]).unwrap();
        assert_relative_eq!(hyperbolic_distance(&x, &o).unwrap(), 1.0, max_relative = 1e-14);
        assert!(HyperboloidPoint::new(vec![1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(HyperboloidPoint::new(vec![-1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn law_of_cosines_matches_embedding() {
        let (rho, r) = (1.3, 0.4);
        for mu in [-1.0f64, -0.3, 0.2, 0.999] {
            let a = HyperboloidPoint::from_polar(rho, &[1.0, 0.0, 0.0]).unwrap();
            let sin = (1.0 - mu * mu).sqrt();
            let b = HyperboloidPoint::from_polar(r, &[mu, sin, 0.0]).unwrap();
            assert_relative_eq!(
                distance_law_of_cosines(rho, r, mu),
                hyperbolic_distance(&a, &b).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn volume_element_examples() {
        assert_eq!(volume_element(&d(3), 0.0), 0.0);
        assert_relative_eq!(volume_element(&d(2), 1.0), 1.175_201_193_643_801_4, max_relative = 1e-14);
        assert_relative_eq!(volume_element(&d(3), 2.0), 2f64.sinh().powi(2), max_relative = 1e-14);
        assert!((volume_element(&d(3), 2.0) - 13.154_11).abs() < 1e-5);
    }

    #[test]
    fn operator_terms_for_two_steps() {
        // D² g = g''/sinh² - cosh g'/sinh³
        let t = operator_terms(2);
        assert_eq!(t.len(), 2);
        assert!(t.contains(&OpTerm { coef: -1.0, p: 1, q: 3, j: 1 }));
        assert!(t.contains(&OpTerm { coef: 1.0, p: 0, q: 2, j: 2 }));
        for m in 0..6 {
            assert!(operator_terms(m).iter().all(|t| t.q - t.p == m as u32));
        }
    }

    #[test]
    fn spherical_function_n3() {
        let h = d(3);
        let v = spherical_k(&h, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, -(1f64.sin()) / 1f64.sinh(), max_relative = 1e-14);
        // mpmath: -sin(1)/sinh(1)
        assert_relative_eq!(v, -0.716_022_915_360_433_9, max_relative = 1e-13);
        for rho in [0.0, 0.3, 4.0] {
            assert_eq!(spherical_k(&h, 0.0, rho).unwrap(), 0.0);
        }
    }

    #[test]
    fn spherical_function_small_rho_limit() {
        // -λ sin(λρ)/sinh ρ → -λ² at ρ = 0
        let h = d(3);
        for lambda in [0.5, 2.0] {
            assert_relative_eq!(spherical_k(&h, lambda, 0.0).unwrap(), -lambda * lambda, max_relative = 1e-8);
            let r = 1e-3;
            let exact = -lambda * (lambda * r).sin() / r.sinh();
            assert_relative_eq!(spherical_k(&h, lambda, r).unwrap(), exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn spherical_function_n5_matches_hand_derivative() {
        // D² cos λρ = (-λ² cos λρ)/sinh² + λ sin λρ cosh/sinh³
        let h = d(5);
        let (l, r): (f64, f64) = (1.3, 0.8);
        let exact = -l * l * (l * r).cos() / r.sinh().powi(2) + l * (l * r).sin() * r.cosh() / r.sinh().powi(3);
        assert_relative_eq!(spherical_k(&h, l, r).unwrap(), exact, max_relative = 1e-13);
    }

    #[test]
    fn spherical_function_n2_matches_direct_quadrature() {
        // -λ ∫_ρ^∞ sin(λs)/√(cosh s - cosh ρ) ds, singular weight handled by power substitution
        let (lambda, rho) = (1.0, 1.0);
        let opts = QuadOptions::new(1e-14, 1e-12).with_max_segments(5000);
        let near = crate::quadrature::integrate_left_power(
            |s: f64| -lambda * (lambda * s).sin() / (s.cosh() - rho.cosh()).sqrt(),
            rho,
            rho + 1.0,
            -0.5,
            opts,
        )
        .unwrap()
        .value;
        let far = integrate(
            |s: f64| -lambda * (lambda * s).sin() / (s.cosh() - rho.cosh()).sqrt(),
            rho + 1.0,
            rho + 90.0,
            opts,
        )
        .unwrap()
        .value;
        let got = spherical_k(&d(2), lambda, rho).unwrap();
        assert_relative_eq!(got, near + far, max_relative = 1e-6);
    }

    #[test]
    fn eigenfunction_residual_n3() {
        let h = d(3);
        let step = 1e-4;
        for lambda in [0.5, 1.0, 2.0] {
            let mut rho = 0.2;
            while rho <= 5.0 {
                let f = |r: f64| spherical_k(&h, lambda, r).unwrap();
                let (fm, f0, fp) = (f(rho - step), f(rho), f(rho + step));
                let d1 = (fp - fm) / (2.0 * step);
                let d2 = (fp - 2.0 * f0 + fm) / (step * step);
                let res = d2 + 2.0 / rho.tanh() * d1 + (lambda * lambda + 1.0) * f0;
                assert!(res.abs() < 1e-6, "lambda={lambda} rho={rho} res={res}");
                rho += 0.4;
            }
        }
    }

    #[test]
    fn heat_kernel_n3_closed_form() {
        let h = d(3);
        let closed = |t: f64, r: f64| {
            let ratio = if r == 0.0 { 1.0 } else { r / r.sinh() };
            (4.0 * PI * t).powf(-1.5) * (-t).exp() * ratio * (-r * r / (4.0 * t)).exp()
        };
        for &(t, r) in &[(1.0, 0.0), (1.0, 1.0), (0.01, 0.05), (5.0, 12.0), (0.3, 0.002)] {
            assert_relative_eq!(heat_kernel(&h, t, r).unwrap(), closed(t, r), max_relative = 1e-9);
        }
        assert!((heat_kernel(&h, 1.0, 0.0).unwrap() - 8.259e-3).abs() < 1e-6);
        assert!((heat_kernel(&h, 1.0, 1.0).unwrap() - 5.473e-3).abs() < 1e-6);
    }

    #[test]
    fn heat_kernel_normalization_constants() {
        let n3 = HyperbolicHeatKernel::new(d(3)).unwrap();
        assert_relative_eq!(n3.norm.abs(), 2.0 * (4.0 * PI).powf(-1.5), max_relative = 1e-9);
        let n2 = HyperbolicHeatKernel::new(d(2)).unwrap();
        assert_relative_eq!(n2.norm.abs(), 2.0 * 2f64.sqrt() * (4.0 * PI).powf(-1.5), max_relative = 1e-6);
    }

    #[test]
    fn heat_kernel_n2_matches_classical_formula() {
        // √2 (4πt)^{-3/2} e^{-t/4} ∫_ρ^∞ s e^{-s²/4t} / √(cosh s - cosh ρ) ds
        let h = d(2);
        let (t, rho): (f64, f64) = (0.7, 0.9);
        let opts = QuadOptions::new(0.0, 1e-12);
        let g = |s: f64| s * (-s * s / (4.0 * t)).exp() / (s.cosh() - rho.cosh()).sqrt();
        let near = crate::quadrature::integrate_left_power(g, rho, rho + 1.0, -0.5, opts).unwrap().value;
        let far = integrate(g, rho + 1.0, rho + 30.0, opts).unwrap().value;
        let want = 2f64.sqrt() * (4.0 * PI * t).powf(-1.5) * (-t / 4.0).exp() * (near + far);
        assert_relative_eq!(heat_kernel(&h, t, rho).unwrap(), want, max_relative = 1e-7);
    }

    #[test]
    fn heat_kernel_positive_and_monotone_on_diagonal() {
        for n in [2, 3, 4, 5] {
            let h = d(n);
            let k = HyperbolicHeatKernel::new(h).unwrap();
            let mut t = 0.05;
            while t < 8.0 {
                for r in [0.0, 0.5, 2.0, 6.0] {
                    assert!(k.eval(t, r).unwrap() > 0.0, "n={n} t={t} r={r}");
                }
                assert!(k.eval(2.0 * t, 0.0).unwrap() <= k.eval(t, 0.0).unwrap());
                t *= 2.3;
            }
        }
    }

    #[test]
    fn heat_kernel_mass_is_one() {
        for n in [3, 5] {
            let k = HyperbolicHeatKernel::new(d(n)).unwrap();
            for t in [0.1, 1.0, 10.0] {
                let rmax = (n as f64 - 1.0) * t + 12.0 * t.sqrt() + 10.0;
                let m = integrate_with_breaks(
                    |r: f64| k.eval_weighted(t, r).unwrap(),
                    &[0.0, t.sqrt(), 4.0 * t.sqrt() + 1.0, rmax],
                    QuadOptions::new(0.0, 1e-12),
                )
                .unwrap()
                .value
                    * sphere_area(n - 1);
                assert!((m - 1.0).abs() < 1e-8, "n={n} t={t} mass={m}");
            }
        }
    }

    #[test]
    fn spherical_normalization_matches_heat_normalization() {
        // ∫ e^{-tλ²} cos λρ dλ = √(π/t) e^{-ρ²/4t}, so C_n √π = N_n
        for n in 2..=6 {
            let k = HyperbolicHeatKernel::new(d(n)).unwrap();
            assert_relative_eq!(spherical_normalization(&d(n)) * PI.sqrt(), k.norm, max_relative = 1e-7);
        }
    }

    #[test]
    fn weighted_eval_matches_product() {
        let k = HyperbolicHeatKernel::new(d(3)).unwrap();
        for r in [1.5, 4.0, 9.0] {
            let a = k.eval_weighted(2.0, r).unwrap();
            let b = k.eval(2.0, r).unwrap() * r.sinh().powi(2);
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn envelope_examples() {
        assert_relative_eq!(dm_envelope(&d(3), 1.0, 0.0), (-1.0f64).exp(), max_relative = 1e-15);
        // (1+ρ+t)^{-1/2} = 2^{-1/2} at t = 1, ρ = 0
        assert_relative_eq!(dm_envelope(&d(2), 1.0, 0.0), (-0.25f64).exp() / 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn bessel_seed_jet_matches_finite_differences() {
        let seed = Seed::Bessel { nu: 1.0, c: 1.0 };
        let r = 0.9;
        let jet = seed.jet(2, r).unwrap();
        let f = |x: f64| {
            let j = seed.jet(0, x).unwrap();
            j.values[0] * j.log_scale.exp()
        };
        let h = 1e-4;
        let d1 = (f(r + h) - f(r - h)) / (2.0 * h);
        let d2 = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h);
        let s = jet.log_scale.exp();
        assert_relative_eq!(jet.values[0] * s, crate::specfun::bessel_k(BesselOrder(1.0), r).unwrap() / r, max_relative = 1e-13);
        assert_relative_eq!(jet.values[1] * s, d1, max_relative = 1e-7);
        assert_relative_eq!(jet.values[2] * s, d2, max_relative = 1e-5);
    }
}
