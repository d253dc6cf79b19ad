//! Radial heat kernel `p_t(o, r)` of a rotationally symmetric manifold by
//! implicit time stepping.
//!
//! The operator `φ^{1-n} ∂_r(φ^{n-1} ∂_r)` is discretized in flux form on a
//! uniform vertex grid, so the discrete mass `Σ V_i p_i` changes only through
//! the absorbing outer boundary. The delta initial datum is replaced by the
//! Euclidean Gaussian at a short time `t₀`; running from `t₀` and `t₀/2` and
//! combining `2 p_{t₀/2} - p_{t₀}` removes the `O(t₀)` bootstrap error.

use serde::{Deserialize, Serialize};

use super::RotSymProfile;
use crate::error::{Error, Result};
use crate::heat2poisson::HeatKernelProvider;
use crate::hyperbolic::sphere_area;

/// Discretization controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverGrid {
    pub dr: f64,
    /// Bootstrap time of the coarser run.
    pub t0: f64,
    /// First stored time.
    pub first_snapshot: f64,
    /// Ratio `Δt/t` between stored times is `(1 + growth)^{steps_per_snapshot}`.
    pub growth: f64,
    pub steps_per_snapshot: usize,
    /// Outer radius; `None` selects `6√t_end + 3 t_end sup_{r≥1} φ'/φ`.
    pub r_max: Option<f64>,
}

impl Default for SolverGrid {
    fn default() -> Self {
        Self {
            dr: 0.005,
            t0: 1e-3,
            first_snapshot: 4e-3,
            growth: 0.02,
            steps_per_snapshot: 5,
            r_max: None,
        }
    }
}

/// Pole values below this are too close to the scheme's error for the λ₁ fit.
const LAMBDA_FIT_FLOOR: f64 = 1e-8;

/// Minimum mass retained at the final time.
pub const MASS_FLOOR: f64 = 0.99;

/// Stored solution; also a [`HeatKernelProvider`] about the pole.
#[derive(Debug, Clone)]
pub struct RadialHeatSolution {
    pub profile: RotSymProfile,
    pub dr: f64,
    pub r_max: f64,
    pub times: Vec<f64>,
    /// `values[k][i] = p(times[k], i·dr)`.
    pub values: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
    /// Spectral bottom estimated from the on-diagonal decay at late times.
    pub lambda1_estimate: f64,
    /// `ω_{n-1} φ(r_i)^{n-1}` on the nodes.
    measure: Vec<f64>,
    /// `sup φ'/φ` on `r ≥ 1`, the drift of the radial process.
    drift: f64,
}

struct Stencil {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    volumes: Vec<f64>,
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn stencil(p: &RotSymProfile, dr: f64, nodes: usize) -> Stencil {
    let k = p.n as i32 - 1;
    let w = |r: f64| p.phi(r).powi(k);
    let volumes: Vec<f64> = (0..nodes)
        .map(|i| {
            let r = i as f64 * dr;
            let a = (r - 0.5 * dr).max(0.0);
            let b = r + 0.5 * dr;
            // two Simpson panels resolve φ^{n-1} ~ r^{n-1} at the pole
            simpson(w, a, 0.5 * (a + b)) + simpson(w, 0.5 * (a + b), b)
        })
        .collect();
    let flux: Vec<f64> = (0..nodes).map(|i| w((i as f64 + 0.5) * dr) / dr).collect();
    let mut lower = vec![0.0; nodes];
    let mut diag = vec![0.0; nodes];
    let mut upper = vec![0.0; nodes];
    for i in 0..nodes {
        let right = flux[i] / volumes[i];
        let left = if i == 0 { 0.0 } else { flux[i - 1] / volumes[i] };
        lower[i] = left;
        upper[i] = right;
        diag[i] = -(left + right);
    }
    Stencil {
        lower,
        diag,
        upper,
        volumes,
    }
}

/// One θ-scheme step `(I - θ dt L) p' = (I + (1-θ) dt L) p` with `p_N = 0`
/// beyond the last node.
fn step(s: &Stencil, p: &mut [f64], dt: f64, theta: f64, scratch: &mut (Vec<f64>, Vec<f64>)) {
    let n = p.len();
    let explicit = (1.0 - theta) * dt;
    let (rhs, cp) = scratch;
    for i in 0..n {
        let lp = s.diag[i] * p[i]
            + if i > 0 { s.lower[i] * p[i - 1] } else { 0.0 }
            + if i + 1 < n { s.upper[i] * p[i + 1] } else { 0.0 };
        rhs[i] = p[i] + explicit * lp;
    }
    // Thomas algorithm on a = -θdt·lower, b = 1 - θdt·diag, c = -θdt·upper
    let td = theta * dt;
    let mut b0 = 1.0 - td * s.diag[0];
    cp[0] = -td * s.upper[0] / b0;
    rhs[0] /= b0;
    for i in 1..n {
        let a = -td * s.lower[i];
        b0 = 1.0 - td * s.diag[i] - a * cp[i - 1];
        cp[i] = if i + 1 < n { -td * s.upper[i] / b0 } else { 0.0 };
        rhs[i] = (rhs[i] - a * rhs[i - 1]) / b0;
    }
    p[n - 1] = rhs[n - 1];
    for i in (0..n - 1).rev() {
        p[i] = rhs[i] - cp[i] * p[i + 1];
    }
}

fn snapshot_times(grid: &SolverGrid, t_end: f64) -> Vec<f64> {
    let ratio = (1.0 + grid.growth).powi(grid.steps_per_snapshot as i32);
    let mut ts = vec![grid.first_snapshot];
    while *ts.last().expect("nonempty") * ratio < t_end * (1.0 - 1e-9) {
        let next = ts.last().expect("nonempty") * ratio;
        ts.push(next);
    }
    ts.push(t_end);
    ts
}

fn run(
    p: &RotSymProfile,
    s: &Stencil,
    dr: f64,
    t0: f64,
    grid: &SolverGrid,
    snaps: &[f64],
) -> Vec<Vec<f64>> {
    let nodes = s.volumes.len();
    let omega = sphere_area(p.n - 1);
    let nd = p.n as f64;
    let mut u: Vec<f64> = (0..nodes)
        .map(|i| {
            let r = i as f64 * dr;
            (4.0 * std::f64::consts::PI * t0).powf(-nd / 2.0) * (-r * r / (4.0 * t0)).exp()
        })
        .collect();
    let mass: f64 = omega * u.iter().zip(&s.volumes).map(|(a, v)| a * v).sum::<f64>();
    u.iter_mut().for_each(|x| *x /= mass);
    let mut scratch = (vec![0.0; nodes], vec![0.0; nodes]);
    let mut out = Vec::with_capacity(snaps.len());
    let mut t = t0;
    // geometric steps up to the first stored time
    let m = (((snaps[0] / t0).ln() / (1.0 + grid.growth).ln()).ceil() as usize).max(1);
    let ratio = (snaps[0] / t0).powf(1.0 / m as f64);
    let mut first = true;
    for _ in 0..m {
        let dt = t * (ratio - 1.0);
        if first {
            // Rannacher start: four implicit Euler quarter steps
            for _ in 0..4 {
                step(s, &mut u, 0.25 * dt, 1.0, &mut scratch);
            }
            first = false;
        } else {
            step(s, &mut u, dt, 0.5, &mut scratch);
        }
        t *= ratio;
    }
    out.push(u.clone());
    for w in snaps.windows(2) {
        let dt = (w[1] - w[0]) / grid.steps_per_snapshot as f64;
        for _ in 0..grid.steps_per_snapshot {
            step(s, &mut u, dt, 0.5, &mut scratch);
        }
        out.push(u.clone());
    }
    out
}

/// Solves `∂_t p = ∂_rr p + (n-1)(φ'/φ) ∂_r p` from the pole up to `t_end`.
pub fn radial_heat_solve(p: &RotSymProfile, t_end: f64, grid: &SolverGrid) -> Result<RadialHeatSolution> {
    if !(t_end > grid.first_snapshot) {
        return Err(Error::InvalidParameter(format!(
            "t_end {t_end} must exceed the first stored time {}",
            grid.first_snapshot
        )));
    }
    if !(grid.dr > 0.0 && grid.t0 > 0.0 && grid.t0 < grid.first_snapshot) {
        return Err(Error::InvalidParameter("solver grid is inconsistent".into()));
    }
    let drift = (0..=200)
        .map(|i| 1.0 + 0.25 * i as f64)
        .map(|r| p.log_derivative(r))
        .fold(0.0, f64::max);
    let r_max = grid
        .r_max
        .unwrap_or(6.0 * t_end.sqrt() + 3.0 * t_end * drift + 2.0);
    let nodes = (r_max / grid.dr).ceil() as usize;
    let s = stencil(p, grid.dr, nodes);
    let snaps = snapshot_times(grid, t_end);
    let coarse = run(p, &s, grid.dr, grid.t0, grid, &snaps);
    let fine = run(p, &s, grid.dr, 0.5 * grid.t0, grid, &snaps);
    let values: Vec<Vec<f64>> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| c.iter().zip(f).map(|(a, b)| 2.0 * b - a).collect())
        .collect();
    let omega = sphere_area(p.n - 1);
    let masses: Vec<f64> = values
        .iter()
        .map(|v| omega * v.iter().zip(&s.volumes).map(|(a, w)| a * w).sum::<f64>())
        .collect();
    let last = *masses.last().expect("nonempty");
    if last < MASS_FLOOR {
        return Err(Error::MassLeak {
            mass: last,
            required: MASS_FLOOR,
        });
    }
    // on-diagonal decay e^{-λ₁t} t^{-n/2}, fitted over [t_b/2, t_b] where t_b is
    // the last time the pole value stays above the scheme's absolute error
    let k = values
        .iter()
        .rposition(|v| v[0] > LAMBDA_FIT_FLOOR)
        .unwrap_or(0)
        .max(1);
    let j = snaps.iter().position(|&t| t >= 0.5 * snaps[k]).unwrap_or(0).min(k - 1);
    let (ta, tb) = (snaps[j], snaps[k]);
    let (pa, pb) = (values[j][0], values[k][0]);
    let lambda1_estimate = if pa > 0.0 && pb > 0.0 && tb > ta {
        ((pa / pb).ln() - 0.5 * p.n as f64 * (tb / ta).ln()) / (tb - ta)
    } else {
        0.0
    }
    .max(0.0);
    let measure = (0..values[0].len())
        .map(|i| omega * p.phi(i as f64 * grid.dr).powi(p.n as i32 - 1))
        .collect();
    Ok(RadialHeatSolution {
        measure,
        drift,
        profile: p.clone(),
        dr: grid.dr,
        r_max: nodes as f64 * grid.dr,
        times: snaps,
        values,
        masses,
        lambda1_estimate,
    })
}

fn lagrange4(xs: &[f64; 4], ys: &[f64; 4], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let mut w = 1.0;
        for j in 0..4 {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w * ys[i];
    }
    acc
}

impl RadialHeatSolution {
    /// Cubic interpolation in `r` of snapshot `k`, even through the pole.
    fn at_snapshot(&self, k: usize, r: f64) -> f64 {
        let v = &self.values[k];
        let x = r / self.dr;
        let i = (x.floor() as isize).max(0);
        let get = |j: isize| -> f64 {
            let j = j.unsigned_abs();
            v.get(j).copied().unwrap_or(0.0)
        };
        let xs = [
            (i - 1) as f64,
            i as f64,
            (i + 1) as f64,
            (i + 2) as f64,
        ];
        let ys = [get(i - 1), get(i), get(i + 1), get(i + 2)];
        lagrange4(&xs, &ys, x)
    }

    /// Snapshots and weights of the cubic interpolation in `ln t`.
    fn time_weights(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        let (lo, hi) = (self.times[0], *self.times.last().expect("nonempty"));
        if !(t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12)) {
            return Err(Error::Domain {
                what: "solved heat kernel time",
                value: t,
            });
        }
        let lt = t.ln();
        let k = self.times.partition_point(|&s| s < t).clamp(1, self.times.len() - 1);
        if self.times.len() < 4 {
            let (a, b) = (self.times[k - 1].ln(), self.times[k].ln());
            let w = (lt - a) / (b - a);
            return Ok((k - 1, vec![1.0 - w, w]));
        }
        let start = k.saturating_sub(2).min(self.times.len() - 4);
        let xs = [0, 1, 2, 3].map(|j| self.times[start + j].ln());
        let w = (0..4)
            .map(|i| {
                let mut e = [0.0; 4];
                e[i] = 1.0;
                lagrange4(&xs, &e, lt)
            })
            .collect();
        Ok((start, w))
    }

    /// `p(t, r)`, cubic in `ln t` between stored times.
    pub fn value(&self, t: f64, r: f64) -> Result<f64> {
        let (start, w) = self.time_weights(t)?;
        if r > self.r_max {
            return Ok(0.0);
        }
        Ok(w.iter().enumerate().map(|(j, w)| w * self.at_snapshot(start + j, r)).sum())
    }

    /// `(t, r, value)` rows on the stored times and a radial stride.
    pub fn table(&self, r_stride: f64) -> Vec<(f64, f64, f64)> {
        let step = ((r_stride / self.dr).round() as usize).max(1);
        let mut rows = Vec::new();
        for (k, &t) in self.times.iter().enumerate() {
            for (i, v) in self.values[k].iter().enumerate().step_by(step) {
                rows.push((t, i as f64 * self.dr, *v));
            }
        }
        rows
    }
}

impl HeatKernelProvider for RadialHeatSolution {
    fn dim(&self) -> usize {
        self.profile.n
    }

    fn lambda1(&self) -> f64 {
        self.lambda1_estimate
    }

    fn radial(&self, t: f64, r: f64) -> Result<f64> {
        self.value(t, r)
    }

    fn sphere_measure(&self, r: f64) -> f64 {
        sphere_area(self.profile.n - 1) * self.profile.phi(r).powi(self.profile.n as i32 - 1)
    }

    fn radial_cutoff(&self, t: f64) -> f64 {
        (12.0 * t.sqrt() + 3.0 * t * self.drift + 2.0).min(self.r_max)
    }

    fn max_time(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    fn min_time(&self) -> f64 {
        self.times[0]
    }

    fn grid_spacing(&self) -> Option<f64> {
        Some(self.dr)
    }

    fn grid_densities(&self, t: f64) -> Result<Vec<f64>> {
        let (start, w) = self.time_weights(t)?;
        let used = ((self.radial_cutoff(t) / self.dr).ceil() as usize + 2).min(self.measure.len());
        let mut row = vec![0.0; used];
        for (j, w) in w.iter().enumerate() {
            for (acc, v) in row.iter_mut().zip(&self.values[start + j]) {
                *acc += w * v;
            }
        }
        for (acc, m) in row.iter_mut().zip(&self.measure) {
            *acc *= m;
        }
        Ok(row)
    }

    fn time_nodes(&self) -> &[f64] {
        &self.times
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat2poisson::h3_closed_form;

    #[test]
    fn flat_space_matches_gaussian() {
        let p = RotSymProfile::euclidean(3).unwrap();
        let sol = radial_heat_solve(&p, 1.0, &SolverGrid::default()).unwrap();
        let peak = (4.0 * std::f64::consts::PI).powf(-1.5);
        for i in 0..=30 {
            let r = 0.1 * i as f64;
            let want = peak * (-r * r / 4.0).exp();
            let got = sol.value(1.0, r).unwrap();
            assert!((got - want).abs() < 1e-3 * want, "r={r}: {got} vs {want}");
        }
        let m = *sol.masses.last().unwrap();
        assert!((m - 1.0).abs() < 1e-3, "{m}");
    }

    #[test]
    fn hyperbolic_profile_matches_closed_form() {
        let p = RotSymProfile::hyperbolic(3).unwrap();
        let sol = radial_heat_solve(&p, 1.0, &SolverGrid::default()).unwrap();
        for i in 0..=30 {
            let r = 0.1 * i as f64;
            let want = h3_closed_form(1.0, r);
            let got = sol.value(1.0, r).unwrap();
            assert!((got - want).abs() < 1e-3 * want, "r={r}: {got} vs {want}");
        }
        assert!(sol.value(1e-5, 0.0).is_err());
    }
}
