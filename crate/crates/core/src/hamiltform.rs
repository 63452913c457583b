//! The ABC flow written as a one-degree-of-freedom Hamiltonian system with
//! `z` as time, and a spectral fixed-point solver for the 2pi-periodic
//! solution `(x(z), p(z))` that stays in one cell while `z` grows linearly.
//!
//! Hat variables measure the offset from the cell-centre line:
//! `y = pi/2 + y_hat`, `p = p0 + p_hat` with `p0 = C + B pi/2`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{AbcParams, State};

const NEWTON_STEPS: usize = 50;

/// `p = B y cos x + C (1 - cos y)`.
pub fn momentum(params: &AbcParams, x: f64, y: f64) -> f64 {
    params.b * y * x.cos() + params.c * (1.0 - y.cos())
}

/// Momentum on the cell-centre line, `C + B pi/2`.
pub fn p0(params: &AbcParams) -> f64 {
    params.c + params.b * FRAC_PI_2
}

/// Solves `momentum(x, y) = p` for `y` by Newton's method from `guess`.
pub fn invert_momentum(params: &AbcParams, x: f64, p: f64, guess: f64) -> Result<f64> {
    let (b, c) = (params.b, params.c);
    let cx = x.cos();
    let mut y = guess;
    for _ in 0..NEWTON_STEPS {
        let r = b * y * cx + c * (1.0 - y.cos()) - p;
        if r.abs() < 1e-13 {
            return Ok(y);
        }
        let d = b * cx + c * y.sin();
        y -= r / d;
        if !y.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence { iterations: NEWTON_STEPS, residual: (momentum(params, x, y) - p).abs() })
}

/// Hat-variable inversion: `y_hat` with
/// `p_hat = B (pi/2 + y_hat)(cos x - 1) + B y_hat + C sin y_hat`.
fn invert_hat(params: &AbcParams, x: f64, p_hat: f64, guess: f64) -> Result<f64> {
    let (b, c) = (params.b, params.c);
    let cx = x.cos();
    let mut y = guess;
    for _ in 0..NEWTON_STEPS {
        let (sy, cy) = y.sin_cos();
        let r = b * (FRAC_PI_2 + y) * (cx - 1.0) + b * y + c * sy - p_hat;
        let d = b * cx + c * cy;
        let dy = r / d;
        y -= dy;
        if !y.is_finite() {
            break;
        }
        if dy.abs() < 1e-15 * (1.0 + y.abs()) {
            return Ok(y);
        }
    }
    Err(Error::NoConvergence { iterations: NEWTON_STEPS, residual: f64::NAN })
}

/// Hamiltonian `B cos x + A (y sin z - x cos z) + C sin y` with `y = y(x, p)`.
pub fn script_h(params: &AbcParams, x: f64, p: f64, z: f64) -> Result<f64> {
    let y = invert_momentum(params, x, p, FRAC_PI_2)?;
    Ok(params.b * x.cos() + params.a * (y * z.sin() - x * z.cos()) + params.c * y.sin())
}

/// `(dx/dz, dp_hat/dz, y_hat, D)` at one point, with `D = B cos x + C cos y_hat = dz/dt`.
fn hat_rhs(params: &AbcParams, x: f64, p_hat: f64, z: f64, guess: f64) -> Result<[f64; 4]> {
    let (a, b, c) = (params.a, params.b, params.c);
    let yh = invert_hat(params, x, p_hat, guess)?;
    let (sx, cx) = x.sin_cos();
    let (sy, cy) = yh.sin_cos();
    let (sz, cz) = z.sin_cos();
    let d = b * cx + c * cy;
    let fx = (-c * sy + a * sz) / d;
    let fp = b * sx + a * cz - b * (FRAC_PI_2 + yh) * sx * fx;
    Ok([fx, fp, yh, d])
}

fn mode_index(n: usize, j: i64) -> usize {
    (j + n as i64) as usize
}

/// Truncated Fourier series in `z` of `x(z)` and `p_hat(z)`, modes `-N..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FourierPair {
    pub n: usize,
    #[serde(skip)]
    pub x_modes: Vec<Complex64>,
    #[serde(skip)]
    pub p_modes: Vec<Complex64>,
}

fn eval_series(n: usize, modes: &[Complex64], z: f64) -> f64 {
    let mut acc = modes[n].re;
    for j in 1..=n {
        let e = Complex64::from_polar(1.0, j as f64 * z);
        acc += 2.0 * (modes[n + j] * e).re;
    }
    acc
}

impl FourierPair {
    pub fn zero(n: usize) -> Self {
        Self { n, x_modes: vec![Complex64::new(0.0, 0.0); 2 * n + 1], p_modes: vec![Complex64::new(0.0, 0.0); 2 * n + 1] }
    }

    pub fn x_mode(&self, j: i64) -> Complex64 {
        self.x_modes[mode_index(self.n, j)]
    }

    pub fn p_mode(&self, j: i64) -> Complex64 {
        self.p_modes[mode_index(self.n, j)]
    }

    pub fn x_at(&self, z: f64) -> f64 {
        eval_series(self.n, &self.x_modes, z)
    }

    pub fn p_at(&self, z: f64) -> f64 {
        eval_series(self.n, &self.p_modes, z)
    }

    /// Largest deviation from `c(-j) = conj(c(j))`.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.n as i64;
        (0..=n)
            .map(|j| {
                (self.x_mode(-j) - self.x_mode(j).conj()).norm().max((self.p_mode(-j) - self.p_mode(j).conj()).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Discrete L2 distance (root mean square over a period), via Parseval.
    pub fn l2_distance(&self, other: &FourierPair) -> f64 {
        let s: f64 = self
            .x_modes
            .iter()
            .zip(&other.x_modes)
            .chain(self.p_modes.iter().zip(&other.p_modes))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        s.sqrt()
    }
}

/// Uniform collocation grid of `4N` points with forward/inverse transforms.
struct Spectral {
    n: usize,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let m = 4 * n;
        let mut planner = FftPlanner::new();
        Self { n, m, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    fn z(&self, k: usize) -> f64 {
        TAU * k as f64 / self.m as f64
    }

    /// Coefficients `c_j = mean(f e^{-ijz})` for `|j| <= N`, made exactly conjugate-symmetric.
    fn modes(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.m as f64;
        let n = self.n;
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
        out[n] = Complex64::new(buf[0].re * scale, 0.0);
        for j in 1..=n {
            let c = buf[j] * scale;
            out[n + j] = c;
            out[n - j] = c.conj();
        }
        out
    }

    fn samples(&self, modes: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.m];
        buf[0] = modes[n];
        for j in 1..=n {
            buf[j] = modes[n + j];
            buf[self.m - j] = modes[n - j];
        }
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    fn derivative(&self, modes: &[Complex64]) -> Vec<f64> {
        let n = self.n as i64;
        let d: Vec<Complex64> =
            modes.iter().enumerate().map(|(k, c)| c * Complex64::new(0.0, (k as i64 - n) as f64)).collect();
        self.samples(&d)
    }
}

/// Solves `i j x_j + c p_j = f_j`, `-B x_j + i j p_j = g_j` with
/// `c = C / (B + C)^2` for every mode `j` in `-N..=N` (slices indexed `j + N`).
pub fn solve_linear_modes(
    b: f64,
    c: f64,
    f_modes: &[Complex64],
    g_modes: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if !(b > 0.0 && c > 0.0) {
        return Err(Error::InvalidInput("B and C must be positive".into()));
    }
    if f_modes.len() != g_modes.len() || f_modes.len() % 2 == 0 {
        return Err(Error::InvalidInput("mode vectors must have equal odd length 2N+1".into()));
    }
    let n = (f_modes.len() / 2) as i64;
    let cc = c / (b + c).powi(2);
    let mut xs = Vec::with_capacity(f_modes.len());
    let mut ps = Vec::with_capacity(f_modes.len());
    for (k, (f, g)) in f_modes.iter().zip(g_modes).enumerate() {
        let j = k as i64 - n;
        let jf = j as f64;
        let det = b * cc - jf * jf;
        if det.abs() < 1e-12 {
            return Err(Error::ResonantMode { mode: j, det });
        }
        let ij = Complex64::new(0.0, jf);
        xs.push((ij * f - cc * g) / det);
        ps.push((b * f + ij * g) / det);
    }
    Ok((xs, ps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralConfig {
    /// Mode cutoff `N`; the grid has `4N` points.
    pub modes: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        Self { modes: 64, tol: 1e-12, max_iter: 200 }
    }
}

/// Periodic spiral orbit in hat variables.
#[derive(Debug, Clone, Serialize)]
pub struct SpiralSolution {
    pub params: AbcParams,
    pub series: FourierPair,
    /// `y_hat` on the collocation grid `z_k = 2 pi k / 4N`.
    pub y_hat_samples: Vec<f64>,
    /// Mean vertical speed `dz/dt`.
    pub speed: f64,
    /// Spectral ODE residual of the returned series.
    pub residual: f64,
    pub iterations: usize,
    /// Ratios of successive iterate distances.
    pub contraction_ratios: Vec<f64>,
    pub final_step: f64,
}

/// Samples of `x`, `p_hat`, `y_hat`, `D`, and the right-hand sides on the grid.
struct GridEval {
    x: Vec<f64>,
    p: Vec<f64>,
    fx: Vec<f64>,
    fp: Vec<f64>,
    y_hat: Vec<f64>,
    d: Vec<f64>,
}

fn evaluate(params: &AbcParams, sp: &Spectral, pair: &FourierPair, y_guess: Option<&[f64]>) -> Result<GridEval> {
    let x = sp.samples(&pair.x_modes);
    let p = sp.samples(&pair.p_modes);
    let b_plus_c = params.b + params.c;
    let mut out = GridEval {
        fx: Vec::with_capacity(sp.m),
        fp: Vec::with_capacity(sp.m),
        y_hat: Vec::with_capacity(sp.m),
        d: Vec::with_capacity(sp.m),
        x,
        p,
    };
    for k in 0..sp.m {
        let guess = y_guess.map_or(out.p[k] / b_plus_c, |g| g[k]);
        let [fx, fp, yh, d] = hat_rhs(params, out.x[k], out.p[k], sp.z(k), guess)?;
        out.fx.push(fx);
        out.fp.push(fp);
        out.y_hat.push(yh);
        out.d.push(d);
    }
    Ok(out)
}

fn apply_map_on(params: &AbcParams, sp: &Spectral, pair: &FourierPair) -> Result<(FourierPair, GridEval)> {
    let ev = evaluate(params, sp, pair, None)?;
    let (b, c) = (params.b, params.c);
    let cc = c / (b + c).powi(2);
    let f: Vec<f64> = ev.fx.iter().zip(&ev.p).map(|(fx, p)| fx + cc * p).collect();
    let g: Vec<f64> = ev.fp.iter().zip(&ev.x).map(|(fp, x)| fp - b * x).collect();
    let (xm, pm) = solve_linear_modes(b, c, &sp.modes(&f), &sp.modes(&g))?;
    Ok((FourierPair { n: pair.n, x_modes: xm, p_modes: pm }, ev))
}

/// One application of the fixed-point map: evaluate the exact nonlinear right
/// hand sides on the grid, move the linear part to the left and solve mode by mode.
pub fn apply_map(params: &AbcParams, pair: &FourierPair) -> Result<FourierPair> {
    Ok(apply_map_on(params, &Spectral::new(pair.n), pair)?.0)
}

/// Runs the fixed-point iteration from the zero function.
pub fn spiral_fixed_point(params: &AbcParams, cfg: &SpiralConfig) -> Result<SpiralSolution> {
    params.validate()?;
    if cfg.modes < 16 {
        return Err(Error::InvalidInput(format!("need at least 16 modes, got {}", cfg.modes)));
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidInput("tol must be positive and max_iter nonzero".into()));
    }
    let sp = Spectral::new(cfg.modes);
    let mut cur = FourierPair::zero(cfg.modes);
    let mut prev_dist = f64::INFINITY;
    let mut ratios = Vec::new();
    let mut slow = 0usize;
    for it in 1..=cfg.max_iter {
        let (next, _) = apply_map_on(params, &sp, &cur).map_err(|e| match e {
            Error::NoConvergence { .. } => Error::NotContracting { iterations: it, ratio: f64::NAN },
            other => other,
        })?;
        let dist = next.l2_distance(&cur);
        cur = next;
        if !dist.is_finite() {
            return Err(Error::NotContracting { iterations: it, ratio: f64::NAN });
        }
        if prev_dist.is_finite() && prev_dist > 0.0 {
            let ratio = dist / prev_dist;
            ratios.push(ratio);
            slow = if ratio >= 0.9 { slow + 1 } else { 0 };
            if slow >= 10 {
                return Err(Error::NotContracting { iterations: it, ratio });
            }
        }
        prev_dist = dist;
        if dist < cfg.tol {
            return finish(params, &sp, cur, it, ratios, dist);
        }
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter, residual: prev_dist })
}

fn finish(
    params: &AbcParams,
    sp: &Spectral,
    series: FourierPair,
    iterations: usize,
    ratios: Vec<f64>,
    final_step: f64,
) -> Result<SpiralSolution> {
    let ev = evaluate(params, sp, &series, None)?;
    let dx = sp.derivative(&series.x_modes);
    let dp = sp.derivative(&series.p_modes);
    let residual = (0..sp.m).map(|k| (dx[k] - ev.fx[k]).abs().max((dp[k] - ev.fp[k]).abs())).fold(0.0, f64::max);
    let min_d = ev.d.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_d > 0.0) {
        return Err(Error::NonMonotone { min: min_d });
    }
    let mean_inv = ev.d.iter().map(|d| 1.0 / d).sum::<f64>() / sp.m as f64;
    Ok(SpiralSolution {
        params: *params,
        series,
        y_hat_samples: ev.y_hat,
        speed: 1.0 / mean_inv,
        residual,
        iterations,
        contraction_ratios: ratios,
        final_step,
    })
}

impl SpiralSolution {
    pub fn grid_len(&self) -> usize {
        self.y_hat_samples.len()
    }

    pub fn x_at(&self, z: f64) -> f64 {
        self.series.x_at(z)
    }

    pub fn p_hat_at(&self, z: f64) -> f64 {
        self.series.p_at(z)
    }

    /// `y_hat(z)` by inverting the momentum at the series values.
    pub fn y_hat_at(&self, z: f64) -> Result<f64> {
        let p = self.p_hat_at(z);
        invert_hat(&self.params, self.x_at(z), p, p / (self.params.b + self.params.c))
    }

    /// Point of the orbit at height `z`.
    pub fn state_at(&self, z: f64) -> Result<State> {
        Ok(State::new(self.x_at(z), FRAC_PI_2 + self.y_hat_at(z)?, z))
    }

    /// `dz/dt = B cos x + C cos y_hat` at height `z`.
    pub fn dz_dt(&self, z: f64) -> Result<f64> {
        let yh = self.y_hat_at(z)?;
        Ok(self.params.b * self.x_at(z).cos() + self.params.c * yh.cos())
    }

    pub fn sup_x(&self) -> f64 {
        let sp = Spectral::new(self.series.n);
        sp.samples(&self.series.x_modes).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_p_hat(&self) -> f64 {
        let sp = Spectral::new(self.series.n);
        sp.samples(&self.series.p_modes).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_y_hat(&self) -> f64 {
        self.y_hat_samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Observed contraction factor: ratio of the second to the first iterate
    /// distance (later ratios approach rounding noise).
    pub fn contraction_factor(&self) -> f64 {
        self.contraction_ratios.first().copied().unwrap_or(0.0)
    }
}

/// Time along the spiral orbit as a function of height:
/// `t(z) = (z - z0) / speed + P(z) - P(z0)`, `P` periodic.
#[derive(Debug, Clone, Serialize)]
pub struct TimeMap {
    pub z0: f64,
    pub speed: f64,
    #[serde(skip)]
    periodic: Vec<Complex64>,
    n: usize,
}

/// Builds `t(z)` from `dt/dz = 1 / (B cos x + C cos y_hat)` with `t(z0) = 0`.
pub fn recover_time(sol: &SpiralSolution, z0: f64) -> Result<TimeMap> {
    let n = sol.series.n;
    let sp = Spectral::new(n);
    let x = sp.samples(&sol.series.x_modes);
    let inv_d: Vec<f64> = (0..sp.m)
        .map(|k| 1.0 / (sol.params.b * x[k].cos() + sol.params.c * sol.y_hat_samples[k].cos()))
        .collect();
    let min = inv_d.iter().map(|v| 1.0 / v).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || inv_d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonMonotone { min });
    }
    let modes = sp.modes(&inv_d);
    let mean = modes[n].re;
    let periodic = modes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let j = k as i64 - n as i64;
            if j == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                c / Complex64::new(0.0, j as f64)
            }
        })
        .collect();
    Ok(TimeMap { z0, speed: 1.0 / mean, periodic, n })
}

impl TimeMap {
    pub fn time_at(&self, z: f64) -> f64 {
        (z - self.z0) / self.speed + eval_series(self.n, &self.periodic, z) - eval_series(self.n, &self.periodic, self.z0)
    }

    /// Inverse of [`TimeMap::time_at`] by Newton's method.
    pub fn z_at(&self, t: f64) -> f64 {
        let mut z = self.z0 + self.speed * t;
        for _ in 0..50 {
            let r = self.time_at(z) - t;
            let dtdz = 1.0 / self.speed + eval_series(self.n, &self.d_periodic(), z);
            let dz = r / dtdz;
            z -= dz;
            if dz.abs() < 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        z
    }

    fn d_periodic(&self) -> Vec<Complex64> {
        let n = self.n as i64;
        self.periodic.iter().enumerate().map(|(k, c)| c * Complex64::new(0.0, (k as i64 - n) as f64)).collect()
    }

    /// `(t, z(t))` at `count` uniform times on `[0, t_end]`.
    pub fn samples(&self, t_end: f64, count: usize) -> Vec<(f64, f64)> {
        let count = count.max(2);
        (0..count)
            .map(|k| {
                let t = t_end * k as f64 / (count - 1) as f64;
                (t, self.z_at(t))
            })
            .collect()
    }
}

/// Largest `epsilon` on the grid `step, 2 step, ..., max_eps` for which the
/// solver still converges at the given `B`, `C`; `0` if none does.
pub fn largest_convergent_epsilon(b: f64, c: f64, cfg: &SpiralConfig, step: f64, max_eps: f64) -> f64 {
    let mut best = 0.0;
    let mut k = 1;
    loop {
        let eps = step * k as f64;
        if eps > max_eps + 1e-12 {
            return best;
        }
        match spiral_fixed_point(&AbcParams::new(eps, b, c), cfg) {
            Ok(sol) if sol.sup_x() < FRAC_PI_2 && sol.sup_p_hat() < FRAC_PI_2 => best = eps,
            _ => return best,
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::velocity;
    use proptest::prelude::*;

    fn unit(eps: f64) -> AbcParams {
        AbcParams::unit(eps)
    }

    #[test]
    fn momentum_examples() {
        let p = unit(0.0);
        assert!((momentum(&p, 0.0, FRAC_PI_2) - (1.0 + FRAC_PI_2)).abs() < 1e-15);
        assert!((momentum(&p, 0.0, FRAC_PI_2) - p0(&p)).abs() < 1e-15);
        assert_eq!(momentum(&p, 0.0, 0.0), 0.0);
        assert!((momentum(&p, FRAC_PI_2, FRAC_PI_2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inversion_examples() {
        let p = unit(0.0);
        assert!((invert_momentum(&p, 0.0, 1.0 + FRAC_PI_2, 1.2).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(invert_momentum(&p, 0.0, 0.0, 0.0).unwrap(), 0.0);
        // pi/2 + 10 is far outside the invertible band around the centre line.
        assert!(invert_momentum(&AbcParams::new(0.0, 1.0, 1.0), 3.1, 10.0, FRAC_PI_2).is_err());
    }

    #[test]
    fn script_h_examples() {
        assert!((script_h(&unit(0.0), 0.0, 1.0 + FRAC_PI_2, 0.3).unwrap() - 2.0).abs() < 1e-13);
        let v = script_h(&unit(0.01), 0.0, 1.0 + FRAC_PI_2, FRAC_PI_2).unwrap();
        assert!((v - (2.0 + 0.01 * FRAC_PI_2)).abs() < 1e-13);
    }

    #[test]
    fn hamilton_equations_match_field() {
        let params = AbcParams::new(0.07, 1.0, 1.3);
        let h = 1e-6;
        for &(x, y, z) in &[(0.1, 1.7, 0.4), (-0.3, 1.4, 2.0), (0.25, 1.6, -1.0)] {
            let p = momentum(&params, x, y);
            let dh_dp = (script_h(&params, x, p + h, z).unwrap() - script_h(&params, x, p - h, z).unwrap()) / (2.0 * h);
            let dh_dx = (script_h(&params, x + h, p, z).unwrap() - script_h(&params, x - h, p, z).unwrap()) / (2.0 * h);
            let v = velocity(&params, &State::new(x, y, z));
            let dx_dz = v[0] / v[2];
            let dp_dz = (v[1] * (params.b * x.cos() + params.c * y.sin()) - params.b * y * x.sin() * v[0]) / v[2];
            assert!((dh_dp - dx_dz).abs() < 1e-6, "{dh_dp} {dx_dz}");
            assert!((-dh_dx - dp_dz).abs() < 1e-6, "{dh_dx} {dp_dz}");
        }
    }

    #[test]
    fn linear_mode_examples() {
        let n = 4;
        let zero = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
        let mut f = zero.clone();
        f[n] = Complex64::new(1.0, 0.0);
        let (x, p) = solve_linear_modes(1.0, 1.0, &f, &zero).unwrap();
        assert!(x.iter().all(|c| c.norm() < 1e-15));
        assert!((p[n] - Complex64::new(4.0, 0.0)).norm() < 1e-14);
        assert!(p.iter().enumerate().all(|(k, c)| k == n || c.norm() < 1e-15));

        let (x, p) = solve_linear_modes(1.0, 1.0, &zero, &zero).unwrap();
        assert!(x.iter().chain(&p).all(|c| c.norm() == 0.0));

        // Bounded inverse: |x_j| + |p_j| <= alpha (|f_j| + |g_j|) uniformly in j.
        let cc = 0.25;
        let mut worst: f64 = 0.0;
        for j in 1..200 {
            let m = 2 * j + 1;
            let mut f = vec![Complex64::new(0.0, 0.0); m];
            let mut g = f.clone();
            f[m - 1] = Complex64::new(0.3, -0.7);
            g[m - 1] = Complex64::new(-1.1, 0.2);
            let (x, p) = solve_linear_modes(1.0, 1.0, &f, &g).unwrap();
            let ij = Complex64::new(0.0, j as f64);
            let r1 = ij * x[m - 1] + cc * p[m - 1] - f[m - 1];
            let r2 = -x[m - 1] + ij * p[m - 1] - g[m - 1];
            assert!(r1.norm() < 1e-14 && r2.norm() < 1e-14);
            worst = worst.max((x[m - 1].norm() + p[m - 1].norm()) / (f[m - 1].norm() + g[m - 1].norm()));
        }
        assert!(worst < 2.0, "{worst}");
    }

    #[test]
    fn unperturbed_solution_is_trivial() {
        let sol = spiral_fixed_point(&unit(0.0), &SpiralConfig::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.speed, 2.0);
        assert_eq!(sol.sup_x(), 0.0);
        let tm = recover_time(&sol, 0.0).unwrap();
        assert_eq!(tm.speed, 2.0);
    }

    #[test]
    fn converges_at_small_epsilon() {
        let sol = spiral_fixed_point(&unit(0.01), &SpiralConfig::default()).unwrap();
        assert!(sol.residual < 1e-10, "{}", sol.residual);
        assert!(sol.sup_x() <= 0.1 && sol.sup_p_hat() <= 0.1);
        assert!(sol.sup_x() <= 0.1 && sol.sup_y_hat() <= 0.1);
        assert!((sol.speed - 2.0).abs() <= 0.05 && sol.speed <= 2.0);
        assert!(sol.series.conjugate_asymmetry() == 0.0);
        let moved = apply_map(&sol.params, &sol.series).unwrap().l2_distance(&sol.series);
        assert!(moved < 2.0 * SpiralConfig::default().tol, "{moved}");
    }

    #[test]
    fn speeds_and_contraction_scale_with_epsilon() {
        let cfg = SpiralConfig::default();
        let mut prev_gap = f64::INFINITY;
        for eps in [0.04, 0.02, 0.01, 0.005] {
            let sol = spiral_fixed_point(&unit(eps), &cfg).unwrap();
            let gap = 2.0 - sol.speed;
            assert!(gap > 0.0 && gap < prev_gap, "eps {eps}: {gap} vs {prev_gap}");
            prev_gap = gap;
            assert!(sol.sup_x() <= 10.0 * eps && sol.sup_y_hat() <= 10.0 * eps);
        }
        let beta: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&e| spiral_fixed_point(&unit(e), &cfg).unwrap().contraction_factor())
            .collect();
        assert!(beta[0] > beta[1] && beta[1] > beta[2], "{beta:?}");
    }

    #[test]
    fn time_map_round_trip() {
        let sol = spiral_fixed_point(&unit(0.03), &SpiralConfig::default()).unwrap();
        let tm = recover_time(&sol, 0.4).unwrap();
        assert!((tm.speed - sol.speed).abs() < 1e-14);
        assert_eq!(tm.time_at(0.4), 0.0);
        for t in [0.0, 1.0, 17.5, 300.0] {
            assert!((tm.time_at(tm.z_at(t)) - t).abs() < 1e-11);
        }
        // one full period in z takes 2 pi / speed
        assert!((tm.time_at(0.4 + TAU) - TAU / tm.speed).abs() < 1e-12);
        let s = tm.samples(10.0, 11);
        assert_eq!(s.len(), 11);
        assert!(s.windows(2).all(|w| w[1].1 > w[0].1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn momentum_round_trip(x in -0.5..0.5f64, y in 1.0..2.1f64) {
            let p = unit(0.0);
            let m = momentum(&p, x, y);
            let back = invert_momentum(&p, x, m, FRAC_PI_2).unwrap();
            prop_assert!((back - y).abs() < 1e-12);
        }

        #[test]
        fn hamiltonian_identity(x in -0.6..0.6f64, y in 1.1..2.0f64, z in -3.0..3.0f64, a in 0.0..0.2f64) {
            // d/dy of the Hamiltonian in (x, y) equals d/dp in (x, p) times H(x, y).
            let params = AbcParams::unit(a);
            let hy = 1e-6;
            let h_xy = |yy: f64| params.b * x.cos() + a * (yy * z.sin() - x * z.cos()) + params.c * yy.sin();
            let dh_dy = (h_xy(y + hy) - h_xy(y - hy)) / (2.0 * hy);
            let p = momentum(&params, x, y);
            let dh_dp = (script_h(&params, x, p + hy, z).unwrap() - script_h(&params, x, p - hy, z).unwrap()) / (2.0 * hy);
            let hh = params.b * x.cos() + params.c * y.sin();
            prop_assert!((dh_dy - dh_dp * hh).abs() < 1e-8);
        }

        #[test]
        fn mode_solver_exact(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 16usize;
            let sp = Spectral::new(n);
            // smooth random functions: geometrically decaying coefficients
            let mut fm = vec![Complex64::new(0.0, 0.0); 2 * n + 1];
            let mut gm = fm.clone();
            fm[n] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
            gm[n] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in 1..=n {
                let decay = 0.5f64.powi(j as i32);
                let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
                let b = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
                fm[n + j] = a; fm[n - j] = a.conj();
                gm[n + j] = b; gm[n - j] = b.conj();
            }
            let (xm, pm) = solve_linear_modes(1.0, 1.0, &fm, &gm).unwrap();
            let dx = sp.derivative(&xm);
            let dp = sp.derivative(&pm);
            let x = sp.samples(&xm);
            let p = sp.samples(&pm);
            let f = sp.samples(&fm);
            let g = sp.samples(&gm);
            for k in 0..sp.m {
                prop_assert!((dx[k] + 0.25 * p[k] - f[k]).abs() < 1e-12);
                prop_assert!((dp[k] - x[k] - g[k]).abs() < 1e-12);
            }
        }
    }
}
