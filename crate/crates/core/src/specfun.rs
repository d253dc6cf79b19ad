//! Special functions: Gamma, modified Bessel functions `I_ν`, `K_ν` of real
//! order, the extension profile `φ_γ` and the constant `d_γ`.
//!
//! Bessel functions use Temme's series for `s < 2`, Steed's continued
//! fraction between 2 and the asymptotic crossover, and the large-argument
//! Hankel expansion beyond it. Orders are reduced to `μ ∈ [-1/2, 1/2]` and
//! raised again by the three-term recurrence, which is stable upward for
//! `K` and is never used upward for `I`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Taylor coefficients of `1/Γ(z) = Σ c_k z^k`, k = 1..26.
const RGAMMA_SERIES: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// `sin(πx)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let r = x - n;
    let s = (PI * r).sin();
    if (n as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// The Gamma function. Poles at the non-positive integers are errors.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if x.is_nan() || is_nonpositive_integer(x) {
        return Err(Error::GammaPole(x));
    }
    if x < 0.5 {
        // reflection: Γ(x) Γ(1-x) = π / sin(πx)
        return Ok(PI / (sin_pi(x) * gamma_fn(1.0 - x)?));
    }
    if x > 171.7 {
        return Ok(f64::INFINITY);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    let half = t.powf(0.5 * (z + 0.5));
    Ok((2.0 * PI).sqrt() * half * (-t).exp() * half * acc)
}

/// Reciprocal Gamma function; zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else {
        gamma_fn(x).map(|g| 1.0 / g).unwrap_or(0.0)
    }
}

/// Natural log of `|Γ(x)|` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Domain {
            what: "ln_gamma",
            value: x,
        });
    }
    if x < 100.0 {
        return Ok(gamma_fn(x)?.ln());
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln())
}

/// Order of a modified Bessel function. Any real value is allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselOrder(pub f64);

impl BesselOrder {
    pub fn nu(self) -> f64 {
        self.0
    }
}

impl From<f64> for BesselOrder {
    fn from(nu: f64) -> Self {
        BesselOrder(nu)
    }
}

/// `e^{-x} I_ν(x)` and `e^{x} K_ν(x)` for `ν >= 0`, `x > 0`.
#[derive(Debug, Clone, Copy)]
struct ScaledPair {
    i: f64,
    k: f64,
}

fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    // 1/Γ(1+x) = Σ_{k>=0} c_{k+1} x^k; gam2 is the even part, gam1 = -(odd part)/x
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut p = 1.0;
    for pair in RGAMMA_SERIES.chunks(2) {
        gam2 += pair[0] * p;
        gam1 -= pair[1] * p;
        p *= mu * mu;
    }
    let gampl = gam2 - mu * gam1;
    let gammi = gam2 + mu * gam1;
    (gam1, gam2, gampl, gammi)
}

fn asymptotic_crossover(nu: f64) -> f64 {
    25.0 + nu * nu
}

fn hankel_scaled(nu: f64, x: f64) -> ScaledPair {
    let mu4 = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum_k = 1.0;
    let mut sum_i = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu4 - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        sum_k += term;
        sum_i += if k % 2 == 1 { -term } else { term };
        if term.abs() < 1e-17 * sum_k.abs() {
            break;
        }
    }
    ScaledPair {
        i: sum_i / (2.0 * PI * x).sqrt(),
        k: (PI / (2.0 * x)).sqrt() * sum_k,
    }
}

/// `e^{-x} Σ_k (x/2)^{2k+ν} / (k! Γ(ν+k+1))`, for `ν >= 0` and moderate `x`.
fn i_series_scaled(nu: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = (nu * (0.5 * x).ln() - x).exp() * rgamma(nu + 1.0);
    let mut sum = term;
    for k in 1..500 {
        let fk = k as f64;
        term *= q / (fk * (nu + fk));
        sum += term;
        if term < f64::EPSILON * 0.25 * sum {
            break;
        }
    }
    sum
}

fn bessel_ik_scaled(nu: f64, x: f64) -> Result<ScaledPair> {
    debug_assert!(nu >= 0.0);
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain {
            what: "modified Bessel function",
            value: x,
        });
    }
    if x > asymptotic_crossover(nu) {
        return Ok(hankel_scaled(nu, x));
    }
    const MAXIT: usize = 100_000;
    const EPS: f64 = f64::EPSILON;
    const FPMIN: f64 = f64::MIN_POSITIVE / f64::EPSILON;
    const XMIN: f64 = 2.0;

    let nl = (nu + 0.5).floor() as usize;
    let xmu = nu - nl as f64;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    // CF1 for I'_ν / I_ν
    let mut h = (nu * xi).max(FPMIN);
    let mut b = xi2 * nu;
    let mut d = 0.0;
    let mut c = h;
    let mut converged = false;
    for _ in 0..MAXIT {
        b += xi2;
        d = 1.0 / (b + d);
        c = b + 1.0 / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() <= EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Quadrature {
            context: "Bessel continued fraction CF1",
            estimate: h,
            error: f64::INFINITY,
        });
    }
    let mut ril = FPMIN;
    let mut ripl = h * ril;
    let ril1 = ril;
    let mut fact = nu * xi;
    for _ in 0..nl {
        let ritemp = fact * ril + ripl;
        fact -= xi;
        ripl = fact * ritemp + ril;
        ril = ritemp;
    }
    let f = ripl / ril;

    // K_μ and K_{μ+1}, scaled by e^x
    let (rkmu, rk1) = if x < XMIN {
        let x2 = 0.5 * x;
        let pimu = PI * xmu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = xmu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(xmu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = 1.0;
        let dd = x2 * x2;
        let mut sum1 = p;
        let mut ok = false;
        for i in 1..MAXIT {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - xmu2);
            c *= dd / fi;
            p /= fi - xmu;
            q /= fi + xmu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Quadrature {
                context: "Temme series for K",
                estimate: sum,
                error: f64::INFINITY,
            });
        }
        let scale = x.exp();
        (sum * scale, sum1 * xi2 * scale)
    } else {
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - xmu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        let mut ok = false;
        for i in 1..MAXIT {
            let fi = i as f64;
            a -= 2.0 * fi;
            c = -a * c / (fi + 1.0);
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Quadrature {
                context: "Steed continued fraction CF2",
                estimate: s,
                error: f64::INFINITY,
            });
        }
        let h = a1 * h;
        let rkmu = (PI / (2.0 * x)).sqrt() / s;
        let rk1 = rkmu * (xmu + x + 0.5 - h) * xi;
        (rkmu, rk1)
    };
    let ri = if x < XMIN {
        // the Wronskian loses digits here when μ < 0; the series does not
        i_series_scaled(nu, x)
    } else {
        let rkmup = xmu * xi * rkmu - rk1;
        let rimu = xi / (f * rkmu - rkmup);
        rimu * ril1 / ril
    };
    let mut rkmu = rkmu;
    let mut rk1 = rk1;
    for i in 1..=nl {
        let rktemp = (xmu + i as f64) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = rktemp;
    }
    Ok(ScaledPair { i: ri, k: rkmu })
}

fn check_arg(s: f64, what: &'static str) -> Result<()> {
    if s.is_nan() || s <= 0.0 {
        Err(Error::Domain { what, value: s })
    } else {
        Ok(())
    }
}

/// `e^{s} K_ν(s)`.
pub fn bessel_k_scaled(order: BesselOrder, s: f64) -> Result<f64> {
    check_arg(s, "bessel_k")?;
    Ok(bessel_ik_scaled(order.0.abs(), s)?.k)
}

/// Modified Bessel function of the second kind `K_ν(s)`, `s > 0`.
pub fn bessel_k(order: BesselOrder, s: f64) -> Result<f64> {
    Ok(bessel_k_scaled(order, s)? * (-s).exp())
}

/// `e^{-s} I_ν(s)`.
pub fn bessel_i_scaled(order: BesselOrder, s: f64) -> Result<f64> {
    check_arg(s, "bessel_i")?;
    let nu = order.0;
    let pair = bessel_ik_scaled(nu.abs(), s)?;
    if nu >= 0.0 {
        return Ok(pair.i);
    }
    // I_{-ν} = I_ν + (2/π) sin(νπ) K_ν
    let sp = sin_pi(nu.abs());
    if sp == 0.0 {
        return Ok(pair.i);
    }
    Ok(pair.i + 2.0 / PI * sp * pair.k * (-2.0 * s).exp())
}

/// Modified Bessel function of the first kind `I_ν(s)`, `s > 0`.
///
/// Beyond `s = 700` the value overflows; [`bessel_i_scaled`] carries the
/// exponent separately.
pub fn bessel_i(order: BesselOrder, s: f64) -> Result<f64> {
    if s > 700.0 {
        return Err(Error::Overflow {
            what: "bessel_i",
            value: s,
        });
    }
    Ok(bessel_i_scaled(order, s)? * s.exp())
}

/// Fractional order γ together with the derived exponent `a = 1 - 2γ` and the
/// constant `d_γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracOrder {
    pub gamma: f64,
    pub a: f64,
    /// `d_γ`; `NaN` outside `(0, 1)` where the constant is not defined.
    pub d_gamma: f64,
    /// Set when γ lies outside `(0, 1)` (kernel experiments only).
    pub extended: bool,
}

impl FracOrder {
    /// An operator order `γ ∈ (0, 1)`.
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fractional order {gamma} outside (0, 1)"
            )));
        }
        Ok(Self {
            gamma,
            a: 1.0 - 2.0 * gamma,
            d_gamma: d_gamma(gamma)?,
            extended: false,
        })
    }

    /// An order in `(-1, 1)`, flagged as extended when outside `(0, 1)`.
    pub fn extended(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma < 1.0 {
            return Self::new(gamma);
        }
        if !(gamma > -1.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fractional order {gamma} outside (-1, 1)"
            )));
        }
        Ok(Self {
            gamma,
            a: 1.0 - 2.0 * gamma,
            d_gamma: f64::NAN,
            extended: true,
        })
    }
}

/// `d_γ = 2^{2γ-1} Γ(γ) / Γ(1-γ)`.
pub fn d_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "d_gamma needs gamma in (0, 1), got {gamma}"
        )));
    }
    Ok(2f64.powf(2.0 * gamma - 1.0) * gamma_fn(gamma)? / gamma_fn(1.0 - gamma)?)
}

fn phi_prefactor(gamma: f64) -> Result<f64> {
    Ok(2f64.powf(1.0 - gamma) / gamma_fn(gamma)?)
}

/// The extension profile `φ_γ(s) = 2^{1-γ} Γ(γ)^{-1} s^γ K_γ(s)`, with
/// `φ_γ(0) = 1`.
pub fn phi_gamma(order: &FracOrder, s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::Domain {
            what: "phi_gamma",
            value: s,
        });
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let g = order.gamma;
    let k = bessel_k_scaled(BesselOrder(g), s)?;
    Ok(phi_prefactor(g)? * (g * s.ln() - s).exp() * k)
}

/// `φ_γ'(s) = -2^{1-γ} Γ(γ)^{-1} s^γ K_{1-γ}(s)` for `s > 0`.
pub fn phi_gamma_derivative(order: &FracOrder, s: f64) -> Result<f64> {
    check_arg(s, "phi_gamma_derivative")?;
    let g = order.gamma;
    let k = bessel_k_scaled(BesselOrder(1.0 - g), s)?;
    Ok(-phi_prefactor(g)? * (g * s.ln() - s).exp() * k)
}

/// Richardson-extrapolated `lim_{s→0+} s^a φ_γ'(s)`, which equals `-1/d_γ`.
pub fn neumann_slope_limit(order: &FracOrder) -> Result<f64> {
    let g = order.gamma;
    let mut exps = vec![2.0 - 2.0 * g, 2.0, 4.0 - 2.0 * g];
    exps.sort_by(|a, b| a.total_cmp(b));
    let hs: Vec<f64> = (6..=12).map(|k| 0.5f64.powi(k)).collect();
    let vals = hs
        .iter()
        .map(|&s| Ok(s.powf(order.a) * phi_gamma_derivative(order, s)?))
        .collect::<Result<Vec<f64>>>()?;
    crate::quadrature::richardson_limit(&hs, &vals, &exps)
}
