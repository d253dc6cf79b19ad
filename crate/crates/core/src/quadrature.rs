//! One-dimensional quadrature and extrapolation utilities.
//!
//! The workhorse is an adaptive 15-point Gauss–Kronrod rule with global
//! bisection of the worst panel. Semi-infinite ranges are mapped onto a
//! finite interval, and algebraic endpoint behaviour is removed by a power
//! substitution before handing the integrand to the adaptive rule.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and budget for the adaptive rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_segments: 2000,
        }
    }
}

impl QuadOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn with_max_segments(mut self, max_segments: usize) -> Self {
        self.max_segments = max_segments;
        self
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, bool) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut finite = fc.is_finite();
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        finite &= f1.is_finite() && f2.is_finite();
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err, finite)
}

/// Adaptive Gauss–Kronrod integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Integral> {
    integrate_with_breaks(f, &[a, b], opts)
}

/// Same as [`integrate`] but starting from a user-supplied partition.
///
/// `points` must be sorted; consecutive duplicates are skipped.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<Integral> {
    if points.len() < 2 {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut segments: Vec<Segment> = Vec::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (value, error, finite) = kronrod15(&f, w[0], w[1]);
        evaluations += 15;
        if !finite {
            return Err(Error::Quadrature {
                context: "non-finite integrand",
                estimate: f64::NAN,
                error: f64::INFINITY,
            });
        }
        segments.push(Segment {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target {
            return Ok(Integral {
                value: total,
                error: err,
                evaluations,
            });
        }
        if segments.len() >= opts.max_segments {
            return Err(Error::Quadrature {
                context: "segment budget exhausted",
                estimate: total,
                error: err,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| {
                if s.error > acc.1 {
                    (i, s.error)
                } else {
                    acc
                }
            });
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval can no longer be split in floating point
            return Err(Error::Quadrature {
                context: "interval underflow",
                estimate: total,
                error: err,
            });
        }
        for (lo, hi) in [(seg.a, mid), (mid, seg.b)] {
            let (value, error, finite) = kronrod15(&f, lo, hi);
            evaluations += 15;
            if !finite {
                return Err(Error::Quadrature {
                    context: "non-finite integrand",
                    estimate: total,
                    error: f64::INFINITY,
                });
            }
            segments.push(Segment {
                a: lo,
                b: hi,
                value,
                error,
            });
        }
    }
}

/// Integral over `[a, ∞)` using the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Result<Integral> {
    integrate(
        |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let x = a + t / s;
            let v = f(x);
            if v == 0.0 {
                0.0
            } else {
                v / (s * s)
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Integral over `[a, b]` of an integrand behaving like `(x - a)^p` at the
/// left end (`p > -1`).
///
/// The substitution `x = a + (b - a) w^q` with `q = 1 / (1 + p)` turns the
/// leading behaviour into a constant.
pub fn integrate_left_power<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    p: f64,
    opts: QuadOptions,
) -> Result<Integral> {
    if p <= -1.0 {
        return Err(Error::InvalidParameter(format!(
            "endpoint exponent {p} is not integrable"
        )));
    }
    let q = 1.0 / (1.0 + p);
    let len = b - a;
    integrate(
        |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            let x = a + len * w.powf(q);
            f(x) * len * q * w.powf(q - 1.0)
        },
        0.0,
        1.0,
        opts,
    )
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order composite Gauss–Legendre rule over `panels` equal panels.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let c = lo + 0.5 * h;
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(c + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Limit as `h -> 0` of samples `v(h) = L + sum_k c_k h^{p_k}`.
///
/// Uses the last `exponents.len() + 1` samples and solves the resulting
/// linear system exactly.
pub fn richardson_limit(hs: &[f64], values: &[f64], exponents: &[f64]) -> Result<f64> {
    let m = exponents.len() + 1;
    if hs.len() != values.len() || hs.len() < m {
        return Err(Error::InvalidParameter(format!(
            "Richardson extrapolation needs {m} samples, got {}",
            hs.len()
        )));
    }
    let start = hs.len() - m;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (row, i) in (start..hs.len()).enumerate() {
        a[row][0] = 1.0;
        for (k, p) in exponents.iter().enumerate() {
            a[row][k + 1] = hs[i].powf(*p);
        }
        a[row][m] = values[i];
    }
    let sol = solve_dense(a)?;
    Ok(sol[0])
}

fn solve_dense(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[piv][col] == 0.0 {
            return Err(Error::InvalidParameter("singular extrapolation system".into()));
        }
        a.swap(col, piv);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = a[row][n];
        for k in (row + 1)..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Ok(x)
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums.
///
/// Returns the last even-column entry, which accelerates alternating and
/// linearly convergent sequences.
pub fn wynn_epsilon(partial_sums: &[f64]) -> f64 {
    let n = partial_sums.len();
    if n < 3 {
        return partial_sums.last().copied().unwrap_or(0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial_sums.to_vec();
    let mut best = *partial_sums.last().unwrap();
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            let val = if diff == 0.0 {
                f64::INFINITY
            } else {
                prev[i + 1] + 1.0 / diff
            };
            next.push(val);
        }
        col += 1;
        if col % 2 == 0 {
            if let Some(&v) = next.last() {
                if v.is_finite() {
                    best = v;
                } else {
                    break;
                }
            }
        }
        prev = cur;
        cur = next;
    }
    best
}

/// Scans `f` on a uniform grid over `[lo, hi]` and returns the sub-range
/// where `|f|` exceeds `rel` times its maximum, padded by one step.
pub fn significant_range<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, steps: usize, rel: f64) -> (f64, f64) {
    let h = (hi - lo) / steps as f64;
    let vals: Vec<f64> = (0..=steps).map(|i| f(lo + i as f64 * h).abs()).collect();
    let peak = vals.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return (lo, hi);
    }
    let first = vals.iter().position(|&v| v > rel * peak).unwrap_or(0);
    let last = vals.iter().rposition(|&v| v > rel * peak).unwrap_or(steps);
    let a = lo + first.saturating_sub(1) as f64 * h;
    let b = lo + (last + 1).min(steps) as f64 * h;
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kronrod_is_exact_for_polynomials() {
        for deg in 0..=22 {
            let r = kronrod15(&|x: f64| x.powi(deg), 0.0, 1.0);
            assert_relative_eq!(r.0, 1.0 / (deg as f64 + 1.0), max_relative = 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_smooth_and_peaked() {
        let r = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-13);
        let r = integrate(|x: f64| (-(x - 0.3).powi(2) * 1e4).exp(), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, std::f64::consts::PI.sqrt() / 100.0, max_relative = 1e-11);
    }

    #[test]
    fn semi_infinite_and_power_endpoint() {
        let r = integrate_to_infinity(|x: f64| (-x).exp(), 0.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-12);
        // ∫_0^1 x^{-1/2} cos x dx
        let r = integrate_left_power(|x: f64| x.powf(-0.5) * x.cos(), 0.0, 1.0, -0.5, QuadOptions::default()).unwrap();
        let exact = composite_gauss(|u: f64| 2.0 * (u * u).cos(), 0.0, 1.0, 8, 20);
        assert_relative_eq!(r.value, exact, max_relative = 1e-12);
    }

    #[test]
    fn gauss_legendre_weights() {
        for n in [1, 2, 5, 16, 40] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-13);
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
            if n > 1 {
                assert_relative_eq!(m2, 2.0 / 3.0, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn richardson_recovers_limit() {
        let hs: Vec<f64> = (0..5).map(|k| 0.5f64.powi(k)).collect();
        let vs: Vec<f64> = hs.iter().map(|h| 3.0 + 2.0 * h.powf(0.5) - h * h + 0.1 * h.powf(2.5)).collect();
        let l = richardson_limit(&hs, &vs, &[0.5, 2.0, 2.5]).unwrap();
        assert_relative_eq!(l, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        // ln 2 = 1 - 1/2 + 1/3 - ...
        let mut s = 0.0;
        let sums: Vec<f64> = (1..=15)
            .map(|k| {
                s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
                s
            })
            .collect();
        assert!((wynn_epsilon(&sums) - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let opts = QuadOptions::new(1e-15, 1e-15).with_max_segments(3);
        assert!(integrate(|x: f64| x.abs().sqrt().recip(), -1.0, 1.0, opts).is_err());
    }
}
