//! The convolution kernel `𝒦_γ` of `(-Δ)^γ` on ℍⁿ.
//!
//! `𝒦_γ = α_γ D^m [ρ^{-ν} K_ν(cρ)]` with `ν = 1/2 + γ`, `c = (n-1)/2` for odd
//! n, and the Abel transform of `D^{n/2}` of the same seed for even n.
//! The sign of `α_γ` makes `𝒦_γ > 0`: for `γ ∈ (0,1)` the operator is
//! `PV ∫ (f(x) - f(x')) 𝒦_γ dx'`, for `γ < 0` it is `∫ f(x') 𝒦_γ dx'`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{
    abel_integral_shifted, kernel_opts, operator_cache, spherical_normalization, HyperbolicDim,
    RadialKernel, Seed, SinhOperator,
};
use crate::specfun::{gamma_fn, FracOrder};

/// `∫_ℝ (λ² + c²)^γ e^{-iλρ} dλ = α₀ ρ^{-1/2-γ} K_{1/2+γ}(cρ)` with
/// `α₀ = 2√π (2c)^{γ+1/2} / Γ(-γ)`.
pub fn fourier_constant(c: f64, gamma: f64) -> Result<f64> {
    Ok(2.0 * PI.sqrt() * (2.0 * c).powf(gamma + 0.5) / gamma_fn(-gamma)?)
}

/// `α_γ` from the distributional Fourier transform, signed so that the
/// kernel is positive.
pub fn alpha_analytic(dim: &HyperbolicDim, gamma: f64) -> Result<f64> {
    check_order(gamma)?;
    let raw = spherical_normalization(dim) * fourier_constant(dim.half_nm1, gamma)?;
    Ok(if gamma > 0.0 { -raw } else { raw })
}

fn check_order(gamma: f64) -> Result<()> {
    if gamma == 0.0 || !(gamma > -1.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kernel order {gamma} must lie in (-1, 1) without 0"
        )));
    }
    Ok(())
}

/// The radial kernel `𝒦_γ` on ℍⁿ.
#[derive(Debug, Clone)]
pub struct FracKernel {
    pub gamma: FracOrder,
    pub dim: HyperbolicDim,
    pub alpha: Option<f64>,
    op: SinhOperator,
}

impl FracKernel {
    /// A kernel whose calibration constant is not yet fixed.
    pub fn uncalibrated(dim: HyperbolicDim, gamma: f64) -> Result<Self> {
        check_order(gamma)?;
        Ok(Self {
            gamma: FracOrder::extended(gamma)?,
            dim,
            alpha: None,
            op: operator_cache(dim.operator_power()),
        })
    }

    /// A kernel calibrated by the analytic Fourier constant.
    pub fn new(dim: HyperbolicDim, gamma: f64) -> Result<Self> {
        let a = alpha_analytic(&dim, gamma)?;
        Ok(Self::uncalibrated(dim, gamma)?.with_alpha(a))
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn alpha(&self) -> Result<f64> {
        self.alpha.ok_or(Error::CalibrationMissing)
    }

    fn seed(&self) -> Seed {
        Seed::Bessel {
            nu: 0.5 + self.gamma.gamma,
            c: self.dim.half_nm1,
        }
    }

    /// The kernel shape with `α = 1`, multiplied by `e^{shift}`.
    fn shape_shifted(&self, rho: f64, shift: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain {
                what: "fractional kernel radius",
                value: rho,
            });
        }
        if self.dim.is_odd() {
            return Ok(self.op.apply(&self.seed(), rho)?.shift(shift).value());
        }
        // integrand decays like e^{-(n-1)s}
        let s_max = rho + 45.0 / (self.dim.n as f64 - 1.0);
        abel_integral_shifted(&self.op, &self.seed(), rho, s_max, shift, kernel_opts())
    }

    /// `𝒦_γ / α_γ`.
    pub fn shape(&self, rho: f64) -> Result<f64> {
        self.shape_shifted(rho, 0.0)
    }

    /// `𝒦_γ(ρ)`.
    pub fn eval(&self, rho: f64) -> Result<f64> {
        let a = self.alpha()?;
        Ok(a * self.shape(rho)?)
    }

    /// `𝒦_γ(ρ) sinh^{n-1} ρ`, finite for every ρ (it decays like `ρ^{-1-γ}`).
    pub fn eval_weighted(&self, rho: f64) -> Result<f64> {
        let a = self.alpha()?;
        let k = (self.dim.n - 1) as f64;
        if rho < 1.0 {
            return Ok(a * self.shape(rho)? * rho.sinh().powf(k));
        }
        let sh = -0.5 * (-2.0 * rho).exp_m1();
        Ok(a * self.shape_shifted(rho, k * rho)? * sh.powf(k))
    }
}

impl RadialKernel for FracKernel {
    fn dim(&self) -> HyperbolicDim {
        self.dim
    }

    fn eval(&self, rho: f64) -> Result<f64> {
        FracKernel::eval(self, rho)
    }

    fn singular_exponent_at_zero(&self) -> Option<f64> {
        let e = -(self.dim.n as f64) - 2.0 * self.gamma.gamma;
        (e < 0.0).then_some(e)
    }

    fn decay_at_infinity(&self) -> (f64, f64) {
        (-1.0 - self.gamma.gamma, self.dim.n as f64 - 1.0)
    }
}

/// `𝒦_γ(ρ)` with the analytic calibration.
pub fn frac_kernel(dim: &HyperbolicDim, gamma: f64, rho: f64) -> Result<f64> {
    FracKernel::new(*dim, gamma)?.eval(rho)
}

/// Outcome of [`calibrate_alpha`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub alpha: f64,
    pub analytic: f64,
    /// Least-squares value against the spectral multiplier (ℍ³, `γ ∈ (0,1)`).
    pub fitted: Option<f64>,
}

/// Relative tolerance for agreement of the two calibration routes.
pub const CALIBRATION_TOL: f64 = 1e-4;

/// Fixes `α_γ`. On ℍ³ with `γ ∈ (0,1)` the analytic constant is checked
/// against a least-squares fit of the principal-value operator to the
/// spectral multiplier on two test functions.
pub fn calibrate_alpha(dim: &HyperbolicDim, gamma: f64) -> Result<Calibration> {
    let analytic = alpha_analytic(dim, gamma)?;
    if dim.n != 3 || gamma <= 0.0 {
        return Ok(Calibration {
            alpha: analytic,
            analytic,
            fitted: None,
        });
    }
    let fitted = fit_alpha_spectral(gamma)?;
    let rel_diff = ((fitted - analytic) / analytic).abs();
    if rel_diff > CALIBRATION_TOL {
        return Err(Error::CalibrationInconsistent {
            analytic,
            fitted,
            rel_diff,
        });
    }
    Ok(Calibration {
        alpha: analytic,
        analytic,
        fitted: Some(fitted),
    })
}

/// `argmin_α Σ (S f - α P₁ f)²` over two Gaussians and three radii, where
/// `S` is the spectral multiplier and `P₁` the PV operator with `α = 1`.
pub fn fit_alpha_spectral(gamma: f64) -> Result<f64> {
    use crate::operators::{pv_frac, spectral_frac, QuadratureSpec, RadialFunction};
    let dim = HyperbolicDim::new(3)?;
    let unit = FracKernel::uncalibrated(dim, gamma)?.with_alpha(1.0);
    let order = FracOrder::new(gamma)?;
    let spec = QuadratureSpec::default();
    let mut num = 0.0;
    let mut den = 0.0;
    for width in [1.0, 0.6] {
        let f = RadialFunction::gaussian(width);
        for rho in [0.3, 1.0, 1.7] {
            let s = spectral_frac(&order, &f, rho)?;
            let p = pv_frac(&unit, &f, rho, &spec)?;
            num += s * p;
            den += p * p;
        }
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h3() -> HyperbolicDim {
        HyperbolicDim::new(3).unwrap()
    }

    #[test]
    fn half_order_closed_form_on_h3() {
        // |α| = 1/(2π²) and 𝒦 = ρ^{-1} K_2(ρ) / (2π² sinh ρ); the sign of α
        // cancels the one produced by D acting on ρ^{-1} K_1(ρ)
        let a = alpha_analytic(&h3(), 0.5).unwrap();
        assert_relative_eq!(a, -1.0 / (2.0 * PI * PI), max_relative = 1e-14);
        for rho in [0.1, 1.0, 4.0] {
            let want = crate::specfun::bessel_k(crate::BesselOrder(2.0), rho).unwrap()
                / (rho * rho.sinh() * 2.0 * PI * PI);
            assert_relative_eq!(frac_kernel(&h3(), 0.5, rho).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn near_zero_behaviour_matches_euclidean_riesz_constant() {
        // ℍ³, γ = 1/2: 𝒦 ~ 1/(π² ρ⁴)
        let k = frac_kernel(&h3(), 0.5, 1e-4).unwrap();
        assert_relative_eq!(k * 1e-16 * PI * PI, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn missing_calibration_is_an_error() {
        let k = FracKernel::uncalibrated(h3(), 0.3).unwrap();
        assert!(matches!(k.eval(1.0), Err(Error::CalibrationMissing)));
        assert!(FracKernel::uncalibrated(h3(), 0.0).is_err());
        assert!(FracKernel::uncalibrated(h3(), 1.0).is_err());
    }

    #[test]
    fn positive_on_probe_grid() {
        for n in [2, 3, 4, 5] {
            let dim = HyperbolicDim::new(n).unwrap();
            for g in [-0.75, -0.3, 0.25, 0.5, 0.75] {
                let k = FracKernel::new(dim, g).unwrap();
                let mut rho = 0.05;
                while rho <= 10.0 {
                    let v = k.eval(rho).unwrap();
                    assert!(v > 0.0, "n={n} g={g} rho={rho} v={v}");
                    rho *= 1.4;
                }
            }
        }
    }

    #[test]
    fn weighted_matches_product_and_stays_finite() {
        for n in [2, 3, 5] {
            let k = FracKernel::new(HyperbolicDim::new(n).unwrap(), 0.4).unwrap();
            for rho in [0.5, 3.0, 8.0] {
                let a = k.eval_weighted(rho).unwrap();
                let b = k.eval(rho).unwrap() * rho.sinh().powi(n as i32 - 1);
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
            let far = k.eval_weighted(2000.0).unwrap();
            assert!(far > 0.0 && far.is_finite());
        }
    }

    #[test]
    fn weighted_tail_decays_like_power() {
        // 𝒦 sinh^{n-1} ~ ρ^{-1-γ}
        let g = 0.4;
        let k = FracKernel::new(h3(), g).unwrap();
        let r = (k.eval_weighted(800.0).unwrap() / k.eval_weighted(400.0).unwrap()).ln() / 2f64.ln();
        assert!((r + 1.0 + g).abs() < 0.01, "slope {r}");
    }

    #[test]
    fn even_dimension_near_zero_exponent() {
        let k = FracKernel::new(HyperbolicDim::new(2).unwrap(), 0.5).unwrap();
        let (a, b) = (0.01, 0.005);
        let slope = (k.eval(a).unwrap() / k.eval(b).unwrap()).ln() / (a / b as f64).ln();
        assert!((slope + 3.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn metadata_matches_measured_slopes() {
        for g in [0.25, 0.75] {
            let k = FracKernel::new(h3(), g).unwrap();
            let e = k.singular_exponent_at_zero().unwrap();
            let s0 = (k.eval(1e-3).unwrap() / k.eval(2e-3).unwrap()).ln() / 0.5f64.ln();
            assert!(((s0 - e) / e).abs() < 0.1);
            let (p, rate) = k.decay_at_infinity();
            let (r1, r2) = (10.0, 20.0);
            let s = ((k.eval(r2).unwrap() * r2.powf(-p)) / (k.eval(r1).unwrap() * r1.powf(-p))).ln() / (r2 - r1);
            assert!(((-s - rate) / rate).abs() < 0.1);
        }
    }
}
