//! Realizations of `(-Δ)^γ` on radial functions on ℍⁿ.
//!
//! * [`spectral_frac`]: the multiplier `(λ²+1)^γ` on ℍ³, where `g = sinh ρ · f`
//!   turns the radial Laplacian into `∂² - 1` on the line.
//! * [`pv_frac`]: the principal value `∫ (f(x) - f(x')) 𝒦_γ dx'` in geodesic
//!   polar coordinates about the evaluation point.
//! * [`neumann_limit`]: `-d_γ lim y^a ∂_y u` for the extension `u`.

use std::f64::consts::PI;
use std::fmt;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frackernel::FracKernel;
use crate::heat2poisson::{poisson_increment, HyperbolicProvider, PolarPoint};
use crate::hyperbolic::{distance_law_of_cosines, sphere_area, HyperbolicDim};
use crate::quadrature::{
    integrate, integrate_left_power, integrate_with_breaks, richardson_limit, QuadOptions,
};
use crate::specfun::{phi_gamma, phi_gamma_derivative, FracOrder};

/// Decay class of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decay {
    CompactlySupported,
    Gaussian,
    Exponential(f64),
    /// Tends to a nonzero constant.
    None,
}

#[derive(Clone)]
enum Shape {
    Gaussian { width: f64 },
    Bump { radius: f64 },
    Constant,
    WindowedEigen { lambda0: f64, window: f64 },
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, support: f64 },
    Sum(Vec<RadialFunction>),
}

/// A radial test function `amp · shape(ρ)` with its regularity and decay.
#[derive(Clone)]
pub struct RadialFunction {
    shape: Shape,
    amp: f64,
    /// Hölder exponent; `f64::INFINITY` for smooth functions.
    pub holder: f64,
    pub decay: Decay,
}

impl fmt::Display for RadialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.shape {
            Shape::Gaussian { width } => format!("gaussian(width={width})"),
            Shape::Bump { radius } => format!("bump(radius={radius})"),
            Shape::Constant => "constant".to_string(),
            Shape::WindowedEigen { lambda0, window } => {
                format!("eigen(lambda0={lambda0}, window={window})")
            }
            Shape::Custom { support, .. } => format!("custom(support={support})"),
            Shape::Sum(v) => {
                let parts: Vec<String> = v.iter().map(|g| g.to_string()).collect();
                format!("({})", parts.join(" + "))
            }
        };
        if self.amp == 1.0 {
            write!(f, "{name}")
        } else {
            write!(f, "{}*{name}", self.amp)
        }
    }
}

impl fmt::Debug for RadialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl RadialFunction {
    /// `exp(-ρ²/w²)`.
    pub fn gaussian(width: f64) -> Self {
        Self {
            shape: Shape::Gaussian { width },
            amp: 1.0,
            holder: f64::INFINITY,
            decay: Decay::Gaussian,
        }
    }

    /// The smooth bump `exp(1 - 1/(1 - (ρ/R)²))` on `ρ < R`.
    pub fn bump(radius: f64) -> Self {
        Self {
            shape: Shape::Bump { radius },
            amp: 1.0,
            holder: f64::INFINITY,
            decay: Decay::CompactlySupported,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, Shape::Constant)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            shape: Shape::Constant,
            amp: c,
            holder: f64::INFINITY,
            decay: Decay::None,
        }
    }

    /// `sin(λ₀ρ)/(λ₀ sinh ρ) · exp(-(ρ/W)²)`: a spherical function of
    /// eigenvalue `λ₀² + 1` under a wide window.
    pub fn windowed_eigen(lambda0: f64, window: f64) -> Self {
        Self {
            shape: Shape::WindowedEigen { lambda0, window },
            amp: 1.0,
            holder: f64::INFINITY,
            decay: Decay::Gaussian,
        }
    }

    /// A user function vanishing (to double precision) beyond `support`.
    pub fn custom<F>(f: F, support: f64, holder: f64, decay: Decay) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            shape: Shape::Custom {
                f: Arc::new(f),
                support,
            },
            amp: 1.0,
            holder,
            decay,
        }
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.amp *= a;
        self
    }

    pub fn plus(self, other: RadialFunction) -> Self {
        let holder = self.holder.min(other.holder);
        let decay = match (self.decay, other.decay) {
            (Decay::None, _) | (_, Decay::None) => Decay::None,
            (Decay::CompactlySupported, d) | (d, Decay::CompactlySupported) => d,
            (Decay::Exponential(a), Decay::Exponential(b)) => Decay::Exponential(a.min(b)),
            (Decay::Exponential(a), _) | (_, Decay::Exponential(a)) => Decay::Exponential(a),
            _ => Decay::Gaussian,
        };
        Self {
            shape: Shape::Sum(vec![self, other]),
            amp: 1.0,
            holder,
            decay,
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let r = rho.abs();
        self.amp
            * match &self.shape {
                Shape::Gaussian { width } => (-(r / width) * (r / width)).exp(),
                Shape::Bump { radius } => {
                    let x = r / radius;
                    if x >= 1.0 {
                        0.0
                    } else {
                        (1.0 - 1.0 / (1.0 - x * x)).exp()
                    }
                }
                Shape::Constant => 1.0,
                Shape::WindowedEigen { lambda0, window } => {
                    let w = (-(r / window) * (r / window)).exp();
                    if r < 1e-8 {
                        w
                    } else {
                        (lambda0 * r).sin() / (lambda0 * r.sinh()) * w
                    }
                }
                Shape::Custom { f, .. } => f(r),
                Shape::Sum(v) => v.iter().map(|g| g.eval(r)).sum(),
            }
    }

    /// Radius beyond which the function equals its limit at infinity to
    /// double precision.
    pub fn support_radius(&self) -> f64 {
        match &self.shape {
            Shape::Gaussian { width } => 6.3 * width,
            Shape::Bump { radius } => *radius,
            Shape::Constant => 0.0,
            Shape::WindowedEigen { window, .. } => 6.3 * window,
            Shape::Custom { support, .. } => *support,
            Shape::Sum(v) => v.iter().map(|g| g.support_radius()).fold(0.0, f64::max),
        }
    }

    /// `lim_{ρ→∞} f(ρ)`.
    pub fn limit_at_infinity(&self) -> f64 {
        match &self.shape {
            Shape::Constant => self.amp,
            Shape::Sum(v) => self.amp * v.iter().map(|g| g.limit_at_infinity()).sum::<f64>(),
            _ => 0.0,
        }
    }

    /// `f'(ρ)` by a five-point stencil, extended evenly through 0.
    pub fn derivative(&self, rho: f64) -> f64 {
        let h = 1e-3;
        let f = |x: f64| self.eval(x);
        (f(rho - 2.0 * h) - 8.0 * f(rho - h) + 8.0 * f(rho + h) - f(rho + 2.0 * h)) / (12.0 * h)
    }

    /// Radial Laplacian `f'' + (n-1) coth ρ f'` (`n f''(0)` at the origin).
    pub fn laplacian(&self, n: usize, rho: f64) -> f64 {
        let h = 1e-3;
        let f = |x: f64| self.eval(x);
        let d2 = (-f(rho - 2.0 * h) + 16.0 * f(rho - h) - 30.0 * f(rho) + 16.0 * f(rho + h)
            - f(rho + 2.0 * h))
            / (12.0 * h * h);
        if rho < 1e-6 {
            return n as f64 * d2;
        }
        d2 + (n as f64 - 1.0) / rho.tanh() * self.derivative(rho)
    }

    /// True when the declared decay holds on `[5, 10]`.
    pub fn tail_probe(&self) -> bool {
        let limit = self.limit_at_infinity();
        (0..=50).all(|i| {
            let r = 5.0 + 0.1 * i as f64;
            let v = (self.eval(r) - limit).abs();
            match self.decay {
                Decay::CompactlySupported => r < self.support_radius() || v == 0.0,
                Decay::Gaussian => v <= self.amp.abs() * 10.0 * (-(r / (self.support_radius() / 6.3)).powi(2)).exp().max(f64::MIN_POSITIVE) + 1e-300,
                Decay::Exponential(a) => v <= self.amp.abs() * 10.0 * (-a * r).exp(),
                Decay::None => true,
            }
        })
    }
}

/// Quadrature controls for the principal-value route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub pv_inner_radius: f64,
    /// Outer radius of direct integration; 0 selects `ρ + support + 1`.
    pub outer_cutoff: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            pv_inner_radius: 0.01,
            outer_cutoff: 0.0,
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_nodes: 4000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pv_inner_radius > 0.0 && self.pv_inner_radius < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pv_inner_radius {} outside (0, 1)",
                self.pv_inner_radius
            )));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn opts(&self) -> QuadOptions {
        QuadOptions::new(self.abs_tol, self.rel_tol).with_max_segments(self.max_nodes)
    }
}

/// `g(ρ) = Σ_k b_k sin(λ_k ρ)`, the odd periodic sine series of
/// `sinh ρ · f(ρ)` on `[-L, L)`.
#[derive(Debug, Clone)]
pub struct SineSeries {
    pub lambdas: Vec<f64>,
    pub coefs: Vec<f64>,
    pub half_length: f64,
}

impl SineSeries {
    /// Samples `sinh ρ · f(ρ)` on `N` points of `[-L, L)` and keeps the modes
    /// above `1e-18` of the largest.
    pub fn of_conjugated(f: &RadialFunction, half_length: f64, points: usize) -> Result<Self> {
        if points < 8 || points % 2 != 0 {
            return Err(Error::InvalidParameter(format!("grid size {points} must be even")));
        }
        let h = 2.0 * half_length / points as f64;
        let mut buf: Vec<Complex<f64>> = (0..points)
            .map(|j| {
                let x = -half_length + j as f64 * h;
                let v = f.eval(x.abs());
                let g = if v == 0.0 { 0.0 } else { x.sinh() * v };
                Complex::new(g, 0.0)
            })
            .collect();
        if buf.iter().any(|c| !c.re.is_finite()) {
            return Err(Error::Overflow {
                what: "conjugated test function",
                value: half_length,
            });
        }
        FftPlanner::new().plan_fft_forward(points).process(&mut buf);
        let mut lambdas = Vec::new();
        let mut coefs = Vec::new();
        let scale = 1.0 / points as f64;
        for (k, c) in buf.iter().enumerate().take(points / 2).skip(1) {
            let lambda = PI * k as f64 / half_length;
            // shift by L: coefficient of e^{iλ(x+L)} is c_k e^{iλL}/N relative to x
            let phase = Complex::from_polar(1.0, lambda * half_length);
            let ck = c * phase * scale;
            // odd real g: c_k e^{iλx} + conj ⇒ -2 Im(c_k) sin(λx)
            lambdas.push(lambda);
            coefs.push(-2.0 * ck.im);
        }
        let peak = coefs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let keep: Vec<usize> = (0..coefs.len()).filter(|&i| coefs[i].abs() > 1e-18 * peak).collect();
        Ok(Self {
            lambdas: keep.iter().map(|&i| lambdas[i]).collect(),
            coefs: keep.iter().map(|&i| coefs[i]).collect(),
            half_length,
        })
    }

    /// `Σ b_k m(λ_k) sin(λ_k ρ) / sinh ρ`, with the limit `Σ b_k m(λ_k) λ_k`
    /// at the origin.
    pub fn apply<M: Fn(f64) -> f64>(&self, m: M, rho: f64) -> f64 {
        let weights: Vec<f64> = self.lambdas.iter().map(|&l| m(l)).collect();
        self.apply_weights(&weights, rho)
    }

    /// [`SineSeries::apply`] with precomputed multiplier values.
    pub fn apply_weights(&self, weights: &[f64], rho: f64) -> f64 {
        if rho.abs() < 1e-8 {
            return self
                .lambdas
                .iter()
                .zip(&self.coefs)
                .zip(weights)
                .map(|((l, b), w)| b * w * l)
                .sum();
        }
        let s: f64 = self
            .lambdas
            .iter()
            .zip(&self.coefs)
            .zip(weights)
            .map(|((l, b), w)| b * w * (l * rho).sin())
            .sum();
        s / rho.sinh()
    }

    /// `∂_ρ` of [`SineSeries::apply_weights`].
    pub fn apply_weights_drho(&self, weights: &[f64], rho: f64) -> f64 {
        if rho.abs() < 1e-8 {
            return 0.0;
        }
        let (mut s, mut ds) = (0.0, 0.0);
        for ((l, b), w) in self.lambdas.iter().zip(&self.coefs).zip(weights) {
            let (sn, cs) = (l * rho).sin_cos();
            s += b * w * sn;
            ds += b * w * l * cs;
        }
        let (sh, ch) = (rho.sinh(), rho.cosh());
        (ds * sh - s * ch) / (sh * sh)
    }
}

/// Grid for the spectral route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub half_length: f64,
    pub points: usize,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self {
            half_length: 40.0,
            points: 4096,
        }
    }
}

impl SpectralGrid {
    fn refined(self) -> Self {
        Self {
            half_length: 2.0 * self.half_length,
            points: 4 * self.points,
        }
    }
}

/// Relative tolerance for the grid-doubling stability check.
pub const SPECTRAL_REL_TOL: f64 = 1e-6;

/// `(-Δ)^γ f` on ℍ³ through a precomputed sine series.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub gamma: f64,
    series: SineSeries,
    weights: Vec<f64>,
}

impl SpectralField {
    pub fn new(gamma: f64, f: &RadialFunction, grid: SpectralGrid) -> Result<Self> {
        let series = SineSeries::of_conjugated(f, grid.half_length, grid.points)?;
        let weights = series.lambdas.iter().map(|l| (l * l + 1.0).powf(gamma)).collect();
        Ok(Self {
            gamma,
            series,
            weights,
        })
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.series.apply_weights(&self.weights, rho)
    }

    pub fn series(&self) -> &SineSeries {
        &self.series
    }
}

/// `(-Δ_{ℍ³})^γ f(ρ)` by the spectral multiplier, checked against a grid of
/// twice the length and twice the resolution.
pub fn spectral_frac(order: &FracOrder, f: &RadialFunction, rho: f64) -> Result<f64> {
    spectral_frac_on(order.gamma, f, rho, SpectralGrid::default())
}

/// [`spectral_frac`] on an explicit grid.
pub fn spectral_frac_on(gamma: f64, f: &RadialFunction, rho: f64, grid: SpectralGrid) -> Result<f64> {
    // constants sit at the bottom of the spectrum, where the multiplier vanishes
    if f.is_constant() {
        return Ok(0.0);
    }
    if f.decay == Decay::None {
        return Err(Error::Unsupported(
            "spectral multiplier needs a decaying function".into(),
        ));
    }
    let coarse = SpectralField::new(gamma, f, grid)?.eval(rho);
    let fine = SpectralField::new(gamma, f, grid.refined())?.eval(rho);
    let scale = coarse.abs().max(f.eval(0.0).abs()).max(f64::MIN_POSITIVE);
    let rel = (coarse - fine).abs() / scale;
    if rel > 10.0 * SPECTRAL_REL_TOL {
        return Err(Error::Instability(rel));
    }
    Ok(fine)
}

/// Mean of `f` over the geodesic sphere of radius `r` about the point at
/// distance ρ from the origin, in ℍⁿ.
pub fn spherical_mean(n: usize, f: &RadialFunction, rho: f64, r: f64, opts: QuadOptions) -> Result<f64> {
    if rho == 0.0 || r == 0.0 {
        return Ok(f.eval(rho.max(r)));
    }
    // beyond the support the mean is the limit value
    if r - rho > f.support_radius() && f.support_radius() > 0.0 {
        return Ok(f.limit_at_infinity());
    }
    let support = f.support_radius();
    let compact = f.decay == Decay::CompactlySupported;
    if n == 3 {
        // in the distance d to the origin the measure is sinh d dd
        // and only f - f(∞) needs integrating
        let limit = f.limit_at_infinity();
        let lo = (rho - r).abs();
        let hi = if support > 0.0 { (rho + r).min(support) } else { lo };
        if hi <= lo {
            return Ok(limit);
        }
        let v = integrate(|d: f64| (f.eval(d) - limit) * d.sinh(), lo, hi, opts)?;
        return Ok(limit + 0.5 * v.value / (rho.sinh() * r.sinh()));
    }
    let k = n as i32 - 2;
    let norm = sphere_area(n - 1) / sphere_area(n - 2);
    // directions farther than the support contribute nothing
    let th_hi = if compact {
        let mu = (rho.cosh() * r.cosh() - support.cosh()) / (rho.sinh() * r.sinh());
        if mu >= 1.0 {
            return Ok(0.0);
        }
        mu.max(-1.0).acos()
    } else {
        PI
    };
    let v = integrate(
        |th: f64| f.eval(distance_law_of_cosines(rho, r, th.cos())) * th.sin().powi(k),
        0.0,
        th_hi,
        opts,
    )?;
    Ok(v.value / norm)
}

/// Spherical means about a fixed point, tabulated once on Chebyshev panels
/// and interpolated barycentrically; past the support the mean is the limit
/// at infinity.
#[derive(Debug, Clone)]
pub struct MeanTable {
    width: f64,
    r_hi: f64,
    limit: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: Vec<Vec<f64>>,
}

const CHEB_NODES: usize = 20;
const PANEL_WIDTH: f64 = 0.125;

impl MeanTable {
    pub fn new(n: usize, f: &RadialFunction, rho: f64) -> Result<Self> {
        let opts = QuadOptions::new(1e-16, 1e-13);
        let r_hi = if f.decay == Decay::None && f.support_radius() == 0.0 {
            0.0
        } else {
            rho + f.support_radius()
        };
        let count = (r_hi / PANEL_WIDTH).ceil() as usize;
        let m = CHEB_NODES;
        // Chebyshev points of the first kind on [-1, 1] and their weights
        let nodes: Vec<f64> = (0..m)
            .map(|j| -((2 * j + 1) as f64 * PI / (2 * m) as f64).cos())
            .collect();
        let weights: Vec<f64> = (0..m)
            .map(|j| {
                let th = (2 * j + 1) as f64 * PI / (2 * m) as f64;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * th.sin()
            })
            .collect();
        let panels = (0..count)
            .map(|k| {
                let a = k as f64 * PANEL_WIDTH;
                nodes
                    .iter()
                    .map(|x| spherical_mean(n, f, rho, a + 0.5 * PANEL_WIDTH * (x + 1.0), opts))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width: PANEL_WIDTH,
            r_hi: count as f64 * PANEL_WIDTH,
            limit: f.limit_at_infinity(),
            nodes,
            weights,
            panels,
        })
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.r_hi || self.panels.is_empty() {
            return self.limit;
        }
        let k = ((r / self.width) as usize).min(self.panels.len() - 1);
        let x = 2.0 * (r - k as f64 * self.width) / self.width - 1.0;
        let vals = &self.panels[k];
        let (mut num, mut den) = (0.0, 0.0);
        for ((xj, wj), vj) in self.nodes.iter().zip(&self.weights).zip(vals) {
            let d = x - xj;
            if d == 0.0 {
                return *vj;
            }
            let c = wj / d;
            num += c * vj;
            den += c;
        }
        num / den
    }
}

/// `∫_R^∞ 𝒦_γ(r) sinh^{n-1} r dr` for `γ ∈ (0,1)`.
///
/// The substitution `r = R u^{-1/γ}` flattens the `r^{-1-γ}` tail; beyond
/// `r = 10⁶` the kernel is replaced by its power law, fitted at `10⁶`.
pub fn kernel_tail(kernel: &FracKernel, big_r: f64, opts: QuadOptions) -> Result<f64> {
    let g = kernel.gamma.gamma;
    if g <= 0.0 {
        return Err(Error::InvalidParameter("kernel tail diverges for γ <= 0".into()));
    }
    let cap = 1e6;
    let amp = kernel.eval_weighted(cap)? * cap.powf(1.0 + g);
    let weighted = |r: f64| -> f64 {
        if r > cap {
            amp * r.powf(-1.0 - g)
        } else {
            kernel.eval_weighted(r).unwrap_or(f64::NAN)
        }
    };
    let v = integrate(
        |u: f64| {
            if u <= 0.0 {
                return amp * big_r.powf(-g) / g;
            }
            let r = big_r * u.powf(-1.0 / g);
            weighted(r) * big_r / g * u.powf(-1.0 / g - 1.0)
        },
        0.0,
        1.0,
        opts,
    )?;
    Ok(v.value)
}

/// `PV ∫ (f(x) - f(x')) 𝒦_γ(d(x,x')) dx'` at the point at distance ρ from
/// the origin.
///
/// On `r < ε` the increment is replaced by its mean-value expansion
/// `-Δf(x) r²/(2n)`; past the support the mean is constant and the kernel
/// tail is integrated separately.
pub fn pv_frac(kernel: &FracKernel, f: &RadialFunction, rho: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    let g = kernel.gamma.gamma;
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "principal value needs γ in (0, 1), got {g}"
        )));
    }
    let alpha = kernel.alpha()?;
    if f.holder <= 2.0 * g {
        return Err(Error::Smoothness {
            alpha: f.holder,
            gamma: g,
        });
    }
    let n = kernel.dim.n;
    let omega = sphere_area(n - 1);
    let opts = spec.opts();
    let inner_opts = QuadOptions::new(spec.abs_tol * 1e-2, spec.rel_tol * 1e-2);
    let fx = f.eval(rho);
    let eps = spec.pv_inner_radius;

    let lap = f.laplacian(n, rho);
    let inner = integrate_left_power(
        |r: f64| kernel.eval_weighted(r).unwrap_or(f64::NAN) * r * r,
        0.0,
        eps,
        1.0 - 2.0 * g,
        opts,
    )?
    .value
        * (-lap / (2.0 * n as f64));

    let big_r = if spec.outer_cutoff > 0.0 {
        spec.outer_cutoff
    } else {
        rho + f.support_radius() + 1.0
    };
    let mut breaks = vec![eps];
    let mut b = 2.0 * eps;
    while b < 1.0f64.min(big_r) {
        breaks.push(b);
        b *= 2.0;
    }
    let mut b = 1.0;
    while b < big_r {
        breaks.push(b);
        b += 1.0;
    }
    if rho > eps && rho < big_r {
        breaks.push(rho);
    }
    breaks.push(big_r);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let outer = integrate_with_breaks(
        |r: f64| {
            let m = spherical_mean(n, f, rho, r, inner_opts).unwrap_or(f64::NAN);
            kernel.eval_weighted(r).unwrap_or(f64::NAN) * (fx - m)
        },
        &breaks,
        opts,
    )?
    .value;

    let diff_inf = fx - f.limit_at_infinity();
    let tail = if diff_inf == 0.0 {
        0.0
    } else {
        diff_inf * kernel_tail(&kernel.clone().with_alpha(1.0), big_r, opts)? * alpha
    };
    Ok(omega * (inner + outer + tail))
}

/// Which construction evaluates an extension field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtensionRoute {
    /// Subordinated heat semigroup on ℍⁿ.
    Heat,
    /// `φ_γ(√(λ²+1) y)` multiplier on ℍ³.
    Fourier,
}

/// The extension `u(ρ, y)` of a radial boundary datum.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    pub gamma: FracOrder,
    pub boundary: RadialFunction,
    pub dim: HyperbolicDim,
    pub route: ExtensionRoute,
    series: Option<SineSeries>,
    means: Arc<Mutex<HashMap<u64, Arc<MeanTable>>>>,
}

impl ExtensionField {
    pub fn heat(dim: HyperbolicDim, gamma: FracOrder, boundary: RadialFunction) -> Self {
        Self {
            gamma,
            boundary,
            dim,
            route: ExtensionRoute::Heat,
            series: None,
            means: Arc::default(),
        }
    }

    pub fn fourier(gamma: FracOrder, boundary: RadialFunction, grid: SpectralGrid) -> Result<Self> {
        // the sine series of sinh·f diverges unless f decays
        if boundary.decay == Decay::None {
            return Err(Error::Unsupported(
                "the Fourier extension needs a decaying function".into(),
            ));
        }
        let series = SineSeries::of_conjugated(&boundary, grid.half_length, grid.points)?;
        Ok(Self {
            gamma,
            boundary,
            dim: HyperbolicDim::new(3)?,
            route: ExtensionRoute::Fourier,
            series: Some(series),
            means: Arc::default(),
        })
    }

    /// Spherical means about the point at distance ρ, built on first use.
    fn mean_table(&self, rho: f64) -> Result<Arc<MeanTable>> {
        let key = rho.to_bits();
        if let Some(t) = self.means.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(MeanTable::new(self.dim.n, &self.boundary, rho)?);
        self.means
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, t.clone());
        Ok(t)
    }

    /// `u(ρ, y) - f(ρ)`.
    pub fn increment(&self, rho: f64, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        if !(y > 0.0) {
            return Err(Error::Domain {
                what: "extension height",
                value: y,
            });
        }
        match self.route {
            ExtensionRoute::Heat => {
                let provider = HyperbolicProvider::new(self.dim)?;
                let table = self.mean_table(rho)?;
                let mean = |r: f64| Ok(table.eval(r));
                poisson_increment(&provider, &self.gamma, &mean, self.boundary.eval(rho), y)
            }
            ExtensionRoute::Fourier => {
                let s = self.series.as_ref().expect("fourier field has a series");
                let w: Vec<f64> = s
                    .lambdas
                    .iter()
                    .map(|l| phi_gamma(&self.gamma, (l * l + 1.0).sqrt() * y).map(|p| p - 1.0))
                    .collect::<Result<_>>()?;
                Ok(s.apply_weights(&w, rho))
            }
        }
    }

    /// `u(ρ, y)`.
    pub fn eval(&self, rho: f64, y: f64) -> Result<f64> {
        Ok(self.boundary.eval(rho) + self.increment(rho, y)?)
    }

    /// Weights `φ_γ(μ_k y)` and `∂_y φ_γ(μ_k y)` of the Fourier route.
    fn fourier_weights(&self, y: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.series.as_ref().ok_or_else(|| {
            Error::Unsupported("derivatives need the Fourier route".into())
        })?;
        let mut w = Vec::with_capacity(s.lambdas.len());
        let mut dw = Vec::with_capacity(s.lambdas.len());
        for l in &s.lambdas {
            let mu = (l * l + 1.0).sqrt();
            w.push(phi_gamma(&self.gamma, mu * y)?);
            dw.push(if y > 0.0 {
                mu * phi_gamma_derivative(&self.gamma, mu * y)?
            } else {
                0.0
            });
        }
        Ok((w, dw))
    }
}

/// `u(ρ, y)` by the heat-subordination route.
pub fn poisson_extend(dim: &HyperbolicDim, order: &FracOrder, f: &RadialFunction, rho: f64, y: f64) -> Result<f64> {
    ExtensionField::heat(*dim, *order, f.clone()).eval(rho, y)
}

/// Heights used by [`neumann_limit`]: `y = 2^{-k}`, `k = 1..=7`.
pub fn neumann_heights() -> Vec<f64> {
    (1..=7).map(|k| 0.5f64.powi(k)).collect()
}

/// Exponents of the small-y expansion `(u - f)/y^{2γ} = A + Σ c_p y^p`.
pub fn neumann_exponents(gamma: f64, count: usize) -> Vec<f64> {
    let mut e = Vec::new();
    for k in 0..count {
        e.push(2.0 - 2.0 * gamma + 2.0 * k as f64);
        e.push(2.0 + 2.0 * k as f64);
    }
    e.sort_by(|a, b| a.total_cmp(b));
    e.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    e.truncate(count);
    e
}

/// Report of a Neumann-limit extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeumannEstimate {
    pub value: f64,
    pub heights: Vec<f64>,
    pub quotients: Vec<f64>,
    /// Spread of the last two extrapolation orders, relative.
    pub stability: f64,
}

/// `-d_γ lim_{y→0} y^a ∂_y u(ρ, y) = -2γ d_γ lim (u - f)/y^{2γ}`.
pub fn neumann_limit(u: &ExtensionField, rho: f64) -> Result<f64> {
    Ok(neumann_limit_report(u, rho)?.value)
}

/// [`neumann_limit`] with its intermediate quotients.
pub fn neumann_limit_report(u: &ExtensionField, rho: f64) -> Result<NeumannEstimate> {
    let g = u.gamma.gamma;
    let heights = neumann_heights();
    let quotients = heights
        .iter()
        .map(|&y| Ok(u.increment(rho, y)? / y.powf(2.0 * g)))
        .collect::<Result<Vec<f64>>>()?;
    let scale = -2.0 * g * u.gamma.d_gamma;
    let hi = richardson_limit(&heights, &quotients, &neumann_exponents(g, 5))?;
    let lo = richardson_limit(&heights, &quotients, &neumann_exponents(g, 4))?;
    let stability = (hi - lo).abs() / hi.abs().max(f64::MIN_POSITIVE);
    Ok(NeumannEstimate {
        value: scale * hi,
        heights,
        quotients,
        stability,
    })
}

/// `C_γ = ∫₀^∞ (φ_γ² + φ_γ'²) s^a ds`, which equals `1/d_γ`.
pub fn energy_constant(order: &FracOrder) -> Result<f64> {
    let a = order.a;
    let integrand = |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let p = phi_gamma(order, s).unwrap_or(f64::NAN);
        let dp = phi_gamma_derivative(order, s).unwrap_or(f64::NAN);
        (p * p + dp * dp) * s.powf(a)
    };
    let opts = QuadOptions::new(1e-15, 1e-12);
    let near = integrate_left_power(integrand, 0.0, 1.0, -(a.abs()), opts)?.value;
    let far = integrate_with_breaks(integrand, &[1.0, 4.0, 10.0, 25.0, 60.0], opts)?.value;
    Ok(near + far)
}

/// Outcome of [`trace_energy_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEnergy {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Adds `b(y) f(ρ)` with `b(0) = 0` to the extension before measuring energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// `b(y) = amplitude · y e^{-y}`.
    pub amplitude: f64,
}

/// Weighted Dirichlet energy `∫∫ y^a (u_ρ² + u_y²) dV dy` of the extension of
/// `f` on ℍ³ against `d_γ^{-1} ∫ f (-Δ)^γ f dV`.
pub fn trace_energy_check(order: &FracOrder, f: &RadialFunction, perturbation: Option<Perturbation>) -> Result<TraceEnergy> {
    let grid = SpectralGrid::default();
    let field = ExtensionField::fourier(*order, f.clone(), grid)?;
    let omega = 4.0 * PI;
    let r_max = f.support_radius() + 12.0;
    let h = 0.01;
    let nr = (r_max / h).ceil() as usize;
    let rs: Vec<f64> = (0..=nr).map(|i| i as f64 * h).collect();
    let fvals: Vec<f64> = rs.iter().map(|&r| f.eval(r)).collect();
    let dfvals: Vec<f64> = rs.iter().map(|&r| f.derivative(r)).collect();
    let series = field.series.as_ref().expect("fourier series");
    let modes = series.lambdas.len();
    // mode tables b_k sin(λ_k ρ_i) and b_k λ_k cos(λ_k ρ_i), shared by all y slices
    let mut sin_tab = Vec::with_capacity((nr + 1) * modes);
    let mut cos_tab = Vec::with_capacity((nr + 1) * modes);
    for &r in &rs {
        for (l, b) in series.lambdas.iter().zip(&series.coefs) {
            let (sn, cs) = (l * r).sin_cos();
            sin_tab.push(b * sn);
            cos_tab.push(b * l * cs);
        }
    }
    let (sh, ch): (Vec<f64>, Vec<f64>) = rs.iter().map(|r| (r.sinh(), r.cosh())).unzip();

    // even integrands in ρ: the trapezoid rule with half weight at 0 is spectral
    let trap = |vals: &dyn Fn(usize) -> f64| -> f64 {
        let mut s = 0.5 * vals(0);
        for i in 1..=nr {
            s += vals(i);
        }
        s * h
    };
    let dot = |tab: &[f64], i: usize, w: &[f64]| -> f64 {
        tab[i * modes..(i + 1) * modes].iter().zip(w).map(|(a, b)| a * b).sum()
    };
    let slice = |y: f64| -> f64 {
        let (w, dw) = match field.fourier_weights(y) {
            Ok(p) => p,
            Err(_) => return f64::NAN,
        };
        let (b, db) = match perturbation {
            Some(p) => (p.amplitude * y * (-y).exp(), p.amplitude * (1.0 - y) * (-y).exp()),
            None => (0.0, 0.0),
        };
        // (u_ρ² + u_y²) sinh²ρ, which vanishes at ρ = 0
        let e = trap(&|i| {
            if i == 0 {
                return 0.0;
            }
            let ur = (dot(&cos_tab, i, &w) * sh[i] - dot(&sin_tab, i, &w) * ch[i]) / sh[i] + b * dfvals[i] * sh[i];
            let uy = dot(&sin_tab, i, &dw) + db * fvals[i] * sh[i];
            ur * ur + uy * uy
        });
        e * omega * y.powf(order.a)
    };
    let opts = QuadOptions::new(1e-12, 1e-8);
    let p = (2.0 * order.gamma - 1.0).min(order.a).min(0.0);
    let lhs = integrate_left_power(slice, 0.0, 1.0, p, opts)?.value
        + integrate_with_breaks(slice, &[1.0, 3.0, 8.0, 20.0, 40.0], opts)?.value;

    let frac = SpectralField::new(order.gamma, f, grid)?;
    let quad = trap(&|i| {
        let r = rs[i];
        fvals[i] * frac.eval(r) * r.sinh().powi(2)
    }) * omega;
    let rhs = quad / order.d_gamma;
    Ok(TraceEnergy {
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

/// `∫ f (-Δ)^γ f dV` on ℍ³ by the spectral route.
pub fn quadratic_form(gamma: f64, f: &RadialFunction) -> Result<f64> {
    let frac = SpectralField::new(gamma, f, SpectralGrid::default())?;
    let r_max = f.support_radius() + 12.0;
    let h = 0.005;
    let nr = (r_max / h).ceil() as usize;
    let mut s = 0.0;
    for i in 1..=nr {
        let r = i as f64 * h;
        s += f.eval(r) * frac.eval(r) * r.sinh().powi(2);
    }
    Ok(4.0 * PI * s * h)
}

/// Evaluates [`pv_frac`] with a freshly calibrated kernel on ℍⁿ.
pub fn pv_frac_default(dim: &HyperbolicDim, order: &FracOrder, f: &RadialFunction, rho: f64) -> Result<f64> {
    let k = FracKernel::new(*dim, order.gamma)?;
    pv_frac(&k, f, rho, &QuadratureSpec::default())
}

/// Neumann limit through the heat route on ℍⁿ.
pub fn neumann_frac(dim: &HyperbolicDim, order: &FracOrder, f: &RadialFunction, rho: f64) -> Result<f64> {
    neumann_limit(&ExtensionField::heat(*dim, *order, f.clone()), rho)
}

/// Evaluation point at distance ρ from the origin.
pub fn polar(rho: f64) -> PolarPoint {
    PolarPoint { r: rho, theta: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn order(g: f64) -> FracOrder {
        FracOrder::new(g).unwrap()
    }

    #[test]
    fn test_functions_decay_as_declared() {
        for f in [
            RadialFunction::gaussian(1.0),
            RadialFunction::bump(2.0),
            RadialFunction::windowed_eigen(2.0, 3.0),
            RadialFunction::constant(1.0),
        ] {
            assert!(f.tail_probe(), "{f:?}");
        }
    }

    #[test]
    fn laplacian_of_gaussian() {
        // Δ e^{-ρ²} = (4ρ² - 2) e^{-ρ²} - 4ρ coth ρ e^{-ρ²} on ℍ³
        let f = RadialFunction::gaussian(1.0);
        for r in [0.5f64, 1.3] {
            let want = ((4.0 * r * r - 2.0) - 4.0 * r / r.tanh()) * (-r * r).exp();
            assert_relative_eq!(f.laplacian(3, r), want, max_relative = 1e-8);
        }
        assert_relative_eq!(f.laplacian(3, 0.0), -6.0, max_relative = 1e-8);
    }

    #[test]
    fn spectral_identity_and_eigenfunction() {
        let f = RadialFunction::gaussian(1.0);
        let id = spectral_frac_on(0.0, &f, 0.8, SpectralGrid::default()).unwrap();
        assert!((id - f.eval(0.8)).abs() < 1e-8);
        // the window perturbs the eigenvalue relation at order 1/W²
        let g = RadialFunction::windowed_eigen(2.0, 60.0);
        let grid = SpectralGrid { half_length: 400.0, points: 1 << 16 };
        for rho in [0.5, 1.0, 2.0] {
            let v = spectral_frac_on(0.5, &g, rho, grid).unwrap();
            assert_relative_eq!(v, 5f64.sqrt() * g.eval(rho), max_relative = 1e-3);
        }
    }

    #[test]
    fn spectral_integer_order_is_minus_laplacian() {
        let f = RadialFunction::gaussian(0.8);
        for rho in [0.0, 0.7, 1.5] {
            let v = spectral_frac_on(1.0, &f, rho, SpectralGrid::default()).unwrap();
            assert_relative_eq!(v, -f.laplacian(3, rho), max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn spherical_mean_of_constant_and_small_radius() {
        let opts = QuadOptions::new(1e-15, 1e-12);
        let c = RadialFunction::constant(2.5);
        assert_eq!(spherical_mean(3, &c, 1.0, 0.7, opts).unwrap(), 2.5);
        let f = RadialFunction::gaussian(1.0);
        let r = 1e-3;
        for n in [2, 3, 4] {
            let m = spherical_mean(n, &f, 0.9, r, opts).unwrap();
            let want = f.eval(0.9) + f.laplacian(n, 0.9) * r * r / (2.0 * n as f64);
            assert_relative_eq!(m, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn mean_table_matches_direct_means() {
        let opts = QuadOptions::new(1e-16, 1e-13);
        for f in [RadialFunction::gaussian(1.0), RadialFunction::bump(1.5)] {
            for n in [2, 3] {
                let t = MeanTable::new(n, &f, 0.9).unwrap();
                for i in 0..200 {
                    let r = 0.0371 * i as f64;
                    let want = spherical_mean(n, &f, 0.9, r, opts).unwrap();
                    assert!((t.eval(r) - want).abs() < 1e-10, "{f:?} n={n} r={r}");
                }
            }
        }
    }

    #[test]
    fn pv_constant_is_zero_and_linear() {
        let k = FracKernel::new(HyperbolicDim::new(3).unwrap(), 0.3).unwrap();
        let spec = QuadratureSpec::default();
        let c = RadialFunction::constant(1.0);
        assert!(pv_frac(&k, &c, 0.7, &spec).unwrap().abs() < 1e-6);
        let f = RadialFunction::gaussian(1.0);
        let a = pv_frac(&k, &f, 1.0, &spec).unwrap();
        let b = pv_frac(&k, &f.clone().scaled(-1.0), 1.0, &spec).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn pv_rejects_rough_functions() {
        let k = FracKernel::new(HyperbolicDim::new(3).unwrap(), 0.6).unwrap();
        let f = RadialFunction::custom(|r| (-r).exp(), 40.0, 1.0, Decay::Exponential(1.0));
        assert!(matches!(
            pv_frac(&k, &f, 1.0, &QuadratureSpec::default()),
            Err(Error::Smoothness { .. })
        ));
    }

    #[test]
    fn pv_matches_spectral_on_h3() {
        let f = RadialFunction::gaussian(1.0);
        let o = order(0.3);
        let k = FracKernel::new(HyperbolicDim::new(3).unwrap(), 0.3).unwrap();
        let pv = pv_frac(&k, &f, 1.0, &QuadratureSpec::default()).unwrap();
        let sp = spectral_frac(&o, &f, 1.0).unwrap();
        assert_relative_eq!(pv, sp, max_relative = 1e-3);
    }

    #[test]
    fn energy_constant_is_inverse_d() {
        for g in [0.25, 0.5, 0.75] {
            let o = order(g);
            assert_relative_eq!(energy_constant(&o).unwrap(), 1.0 / o.d_gamma, max_relative = 1e-8);
        }
    }

    #[test]
    fn neumann_exponents_sorted() {
        assert_eq!(neumann_exponents(0.5, 4), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(neumann_exponents(0.25, 3), vec![1.5, 2.0, 3.5]);
    }

    #[test]
    fn neumann_limit_of_pure_profile() {
        // -d_γ lim y^a ∂_y φ_γ(μ y) = μ^{2γ}
        for g in [0.25, 0.5, 0.75] {
            let o = order(g);
            let mu = 1.7f64;
            let lim = crate::specfun::neumann_slope_limit(&o).unwrap();
            assert_relative_eq!(-o.d_gamma * lim * mu.powf(2.0 * g), mu.powf(2.0 * g), max_relative = 1e-6);
        }
    }

    #[test]
    fn fourier_extension_boundary_values() {
        let f = RadialFunction::gaussian(1.0);
        let u = ExtensionField::fourier(order(0.5), f.clone(), SpectralGrid::default()).unwrap();
        assert!((u.eval(1.0, 1e-3).unwrap() - f.eval(1.0)).abs() < 1e-3);
        assert_eq!(u.increment(0.7, 0.0).unwrap(), 0.0);
        // u - f ≈ -y^{2γ} (-Δ)^γ f / (2γ d_γ) to leading order
        let y: f64 = 1e-4;
        for g in [0.25, 0.5, 0.75] {
            let o = order(g);
            let u = ExtensionField::fourier(o, f.clone(), SpectralGrid::default()).unwrap();
            let lead = -y.powf(2.0 * g) * spectral_frac(&o, &f, 0.7).unwrap() / (2.0 * g * o.d_gamma);
            assert_relative_eq!(u.increment(0.7, y).unwrap(), lead, max_relative = 2e-2);
        }
    }

    #[test]
    fn quadratic_form_positive() {
        for f in [RadialFunction::gaussian(1.0), RadialFunction::bump(1.5)] {
            for g in [0.25, 0.5, 0.75] {
                assert!(quadratic_form(g, &f).unwrap() > 0.0);
            }
        }
    }
}
