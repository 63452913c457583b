//! Unperturbed heteroclinic orbits of the cell boundary, first-order
//! corrections along the lower-left edge, the two-equation estimate of the
//! critical height, and the straight-line solutions on the invariant planes.
//! Everything here assumes `B = C = 1`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{AbcParams, CellIndex, State, TimePoint, Trajectory};
use crate::integrate::{
    integrate, integrate_until_event, sample_at, solve_autonomous, Direction, EventFunctional, EventSpec, IntegratorConfig,
};
use crate::quad;

/// Catalan's constant; `int_0^inf (pi/2 - gd) = 2 G`.
pub const CATALAN: f64 = 0.915_965_594_177_219_015_054_603_514_932_384_110_774;

/// `gd(t) = 2 atan(tanh(t/2))`.
pub fn gudermannian(t: f64) -> f64 {
    2.0 * (0.5 * t).tanh().atan()
}

/// `int_0^t gd(s) ds`, by adaptive quadrature to 1e-12.
pub fn gd_integral(t: f64) -> f64 {
    // gd is odd, so the integral is even.
    quad::integrate(gudermannian, 0.0, t.abs(), 1e-12)
}

/// One of the four heteroclinic edges of the cell centred at `(0, pi/2)`,
/// numbered counterclockwise starting from the lower-right edge. Time zero
/// sits at the edge midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HeteroclinicOrbit {
    pub index: u8,
}

impl HeteroclinicOrbit {
    pub fn new(index: i64) -> Result<Self> {
        if (1..=4).contains(&index) {
            Ok(Self { index: index as u8 })
        } else {
            Err(Error::BadIndex(index))
        }
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        let g = gudermannian(t);
        match self.index {
            1 => (g + FRAC_PI_2, g),
            2 => (FRAC_PI_2 - g, PI + g),
            3 => (-FRAC_PI_2 - g, PI - g),
            _ => (-FRAC_PI_2 + g, -g),
        }
    }
}

/// `(x0(t), y0(t))` on heteroclinic orbit `index`.
pub fn heteroclinic(index: i64, t: f64) -> Result<(f64, f64)> {
    Ok(HeteroclinicOrbit::new(index)?.at(t))
}

/// First-order correction along orbit 4 (the edge through `(-pi/2, 0)`,
/// where `cos x0 = tanh t`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderSolution {
    pub z0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl FirstOrderSolution {
    pub fn new(z0: f64, c1: f64, c2: f64) -> Self {
        Self { z0, c1, c2 }
    }

    /// `x1 + y1`, growing like `cosh t`.
    pub fn sum(&self, t: f64) -> f64 {
        let ch = t.cosh();
        self.c1 * ch + SQRT_2 * (self.z0 + FRAC_PI_4).sin() * ch * gudermannian(t)
    }

    /// `x1 - y1`, tending to `sqrt2 sin(z0 - pi/4)`.
    pub fn diff(&self, t: f64) -> f64 {
        self.c2 / t.cosh() + SQRT_2 * (self.z0 - FRAC_PI_4).sin() * t.tanh()
    }

    /// `z1` given a precomputed `int_0^t gd`.
    fn z1_with(&self, t: f64, gd_int: f64) -> f64 {
        self.c1 * t + SQRT_2 * (self.z0 + FRAC_PI_4).sin() * gd_int
    }

    pub fn at(&self, t: f64) -> (f64, f64, f64) {
        let (s, d) = (self.sum(t), self.diff(t));
        (0.5 * (s + d), 0.5 * (s - d), self.z1_with(t, gd_integral(t)))
    }
}

/// `(x1, y1, z1)` at time `t`.
pub fn first_order(z0: f64, c1: f64, c2: f64, t: f64) -> (f64, f64, f64) {
    FirstOrderSolution::new(z0, c1, c2).at(t)
}

fn approx_state(eps: f64, sol: &FirstOrderSolution, t: f64, gd_int: f64) -> State {
    let (x0, y0) = HeteroclinicOrbit { index: 4 }.at(t);
    let (s, d) = (sol.sum(t), sol.diff(t));
    State::new(x0 + eps * 0.5 * (s + d), y0 + eps * 0.5 * (s - d), sol.z0 + eps * sol.z1_with(t, gd_int))
}

/// Sample spacing of [`approximate_trajectory`].
pub const APPROX_DT: f64 = 0.01;

/// `orbit4 + eps * first-order correction` (with `c1 = c2 = 0`) sampled on
/// `[0, t_max]`.
pub fn approximate_trajectory(epsilon: f64, z0: f64, t_max: f64) -> Result<Trajectory> {
    if !(0.0..=0.2).contains(&epsilon) {
        return Err(Error::InvalidInput(format!("epsilon must lie in [0, 0.2], got {epsilon}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidInput("t_max must be positive".into()));
    }
    let sol = FirstOrderSolution::new(z0, 0.0, 0.0);
    let n = (t_max / APPROX_DT).ceil() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    let mut gd_int = 0.0;
    let mut t_prev = 0.0;
    for k in 0..=n {
        let t = if k == n { t_max } else { k as f64 * APPROX_DT };
        if k > 0 && t <= t_prev {
            continue;
        }
        gd_int += quad::integrate(gudermannian, t_prev, t, 1e-14);
        t_prev = t;
        samples.push(TimePoint { t, state: approx_state(epsilon, &sol, t, gd_int) });
    }
    Trajectory::new(AbcParams::unit(epsilon), samples)
}

/// Cell the first-order orbit started at `(-pi/2, 0, z0)` enters after
/// passing the saddle `(0, -pi/2)`. `None` within `margin` of a switching
/// value, where the first-order sign is undecided.
pub fn predicted_exit_cell(z0: f64, margin: f64) -> Option<CellIndex> {
    let along = (z0 + FRAC_PI_4).sin();
    let across = (z0 - FRAC_PI_4).sin();
    if along.abs() < margin || across.abs() < margin {
        return None;
    }
    Some(match (along > 0.0, across > 0.0) {
        (true, false) => CellIndex::new(0, 0),
        (true, true) => CellIndex::new(1, 0),
        (false, true) => CellIndex::new(1, -1),
        (false, false) => CellIndex::new(0, -1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalEstimate {
    pub a_est: f64,
    pub t_a_est: f64,
    pub system_residual: f64,
    pub iterations: usize,
}

fn estimator_residual(eps: f64, a: f64, t: f64) -> ([f64; 2], f64) {
    let amp = eps * SQRT_2 * (a + FRAC_PI_4).sin();
    let g_int = gd_integral(t);
    let f = [amp * t.cosh() * gudermannian(t) - PI, a + amp * g_int - FRAC_PI_4];
    (f, g_int)
}

/// Solves `eps sqrt2 sin(a + pi/4) cosh(t) gd(t) = pi` together with
/// `a + eps sqrt2 sin(a + pi/4) int_0^t gd = pi/4` for `(a, t)` by damped Newton.
pub fn estimate_critical(epsilon: f64) -> Result<CriticalEstimate> {
    if !(epsilon > 0.0 && epsilon <= 0.2) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 0.2], got {epsilon}")));
    }
    let eps = epsilon;
    let mut t = (2.0 * SQRT_2 / eps).ln();
    let mut a = (FRAC_PI_4 - eps * SQRT_2 * (FRAC_PI_2 * t - 2.0 * CATALAN)).clamp(-FRAC_PI_4 + 0.01, FRAC_PI_4 - 0.01);
    let norm = |f: &[f64; 2]| f[0].abs().max(f[1].abs());
    let (mut f, mut g_int) = estimator_residual(eps, a, t);
    for it in 0..100 {
        if norm(&f) < 1e-12 {
            return Ok(CriticalEstimate { a_est: a, t_a_est: t, system_residual: norm(&f), iterations: it });
        }
        let s = (a + FRAC_PI_4).sin();
        let c = (a + FRAC_PI_4).cos();
        let gd = gudermannian(t);
        let k = eps * SQRT_2;
        let j = [[k * c * t.cosh() * gd, k * s * (t.sinh() * gd + 1.0)], [1.0 + k * c * g_int, k * s * gd]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let da = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
        let dt = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
        let mut lambda = 1.0;
        loop {
            let (an, tn) = (a - lambda * da, t - lambda * dt);
            if tn > 0.0 {
                let (fn_, gn) = estimator_residual(eps, an, tn);
                if norm(&fn_) < norm(&f) || lambda < 1e-6 {
                    a = an;
                    t = tn;
                    f = fn_;
                    g_int = gn;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-9 {
                return Err(Error::NoConvergence { iterations: it, residual: norm(&f) });
            }
        }
    }
    if norm(&f) < 1e-10 {
        return Ok(CriticalEstimate { a_est: a, t_a_est: t, system_residual: norm(&f), iterations: 100 });
    }
    Err(Error::NoConvergence { iterations: 100, residual: norm(&f) })
}

/// Invariant planes carrying straight-line solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpecialBranch {
    /// `z = pi/4`, `y = x - pi/2`, `x' = sin x + eps/sqrt2`
    Quarter,
    /// `z = 3pi/4`, `y = -x - pi/2`, `x' = -sin x + eps/sqrt2`
    ThreeQuarter,
    /// `z = 5pi/4`, `y = x - pi/2`, `x' = sin x - eps/sqrt2`
    FiveQuarter,
    /// `z = 7pi/4`, `y = -x - pi/2`, `x' = -sin x - eps/sqrt2`
    SevenQuarter,
}

impl SpecialBranch {
    pub const ALL: [SpecialBranch; 4] =
        [SpecialBranch::Quarter, SpecialBranch::ThreeQuarter, SpecialBranch::FiveQuarter, SpecialBranch::SevenQuarter];

    pub fn z(&self) -> f64 {
        match self {
            SpecialBranch::Quarter => FRAC_PI_4,
            SpecialBranch::ThreeQuarter => 3.0 * FRAC_PI_4,
            SpecialBranch::FiveQuarter => 5.0 * FRAC_PI_4,
            SpecialBranch::SevenQuarter => 7.0 * FRAC_PI_4,
        }
    }

    /// Branch whose plane is `z` (within 1e-12).
    pub fn from_z(z: f64) -> Result<Self> {
        Self::ALL.into_iter().find(|b| (b.z() - z).abs() < 1e-12).ok_or(Error::BadBranch(z))
    }

    /// `(sign of sin x, sign of eps/sqrt2)` in the scalar equation.
    fn signs(&self) -> (f64, f64) {
        match self {
            SpecialBranch::Quarter => (1.0, 1.0),
            SpecialBranch::ThreeQuarter => (-1.0, 1.0),
            SpecialBranch::FiveQuarter => (1.0, -1.0),
            SpecialBranch::SevenQuarter => (-1.0, -1.0),
        }
    }

    fn state(&self, x: f64) -> State {
        match self {
            SpecialBranch::Quarter | SpecialBranch::FiveQuarter => State::new(x, x - FRAC_PI_2, self.z()),
            _ => State::new(x, -x - FRAC_PI_2, self.z()),
        }
    }
}

/// Straight-line solution on an invariant plane at time `t` (either sign).
pub fn special_solution(epsilon: f64, branch: SpecialBranch, x0: f64, t: f64) -> Result<State> {
    let (s1, s2) = branch.signs();
    let forcing = s2 * epsilon / SQRT_2;
    let cfg = IntegratorConfig::adaptive(1e-12).with_max_time(t.abs().max(1.0));
    let x = solve_autonomous(|y: &[f64; 1]| [s1 * y[0].sin() + forcing], [x0], t, &cfg)?;
    Ok(branch.state(x[0]))
}

/// First time the numerical orbit from `(-pi/2, 0, z0)` crosses `x + y = pi/2`
/// rising: the end of the first quarter-traverse.
pub fn quarter_traverse_time(epsilon: f64, z0: f64) -> Result<f64> {
    let cfg = IntegratorConfig::adaptive(1e-12).with_max_time(200.0);
    let event = EventSpec::new(EventFunctional::XPlusY, FRAC_PI_2, Direction::Rising);
    let (_, hit) = integrate_until_event(&AbcParams::unit(epsilon), &State::new(-FRAC_PI_2, 0.0, z0), &[event], &cfg)?;
    Ok(hit.time)
}

/// Largest coordinate deviation on `[0, t_max]` between [`approximate_trajectory`]
/// and a tight-tolerance integration, compared at equal times.
pub fn approximation_error(epsilon: f64, z0: f64, t_max: f64) -> Result<f64> {
    let approx = approximate_trajectory(epsilon, z0, t_max)?;
    let cfg = IntegratorConfig::adaptive(1e-12).with_max_time(t_max.max(1.0));
    let direct = integrate(&AbcParams::unit(epsilon), &State::new(-FRAC_PI_2, 0.0, z0), (0.0, t_max), &cfg)?;
    approx
        .samples()
        .iter()
        .map(|p| {
            sample_at(&direct, p.t).map(|s| (s.x - p.state.x).abs().max((s.y - p.state.y).abs()).max((s.z - p.state.z).abs()))
        })
        .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{hamiltonian_h, velocity};
    use proptest::prelude::*;

    // gd(1) evaluated in 30-digit arithmetic.
    const GD_ONE: f64 = 0.865_769_483_239_658_624_289_601_846_192;

    #[test]
    fn gudermannian_values() {
        assert_eq!(gudermannian(0.0), 0.0);
        assert!((gudermannian(20.0) - FRAC_PI_2).abs() < 1e-8);
        assert!((gudermannian(1.0) - GD_ONE).abs() < 1e-15);
        assert_eq!(gudermannian(-1.3), -gudermannian(1.3));
    }

    #[test]
    fn gd_integral_asymptote() {
        // int_0^t gd = (pi/2) t - 2 G + O(e^{-t}).
        let t = 30.0;
        assert!((gd_integral(t) - (FRAC_PI_2 * t - 2.0 * CATALAN)).abs() < 1e-10);
        assert!((gd_integral(-2.0) - gd_integral(2.0)).abs() < 1e-15);
    }

    #[test]
    fn heteroclinic_examples() {
        assert_eq!(heteroclinic(1, 0.0).unwrap(), (FRAC_PI_2, 0.0));
        let (x, y) = heteroclinic(4, 0.0).unwrap();
        assert_eq!((x, y), (-FRAC_PI_2, 0.0));
        assert!(x.cos().abs() < 1e-15);
        assert!(matches!(heteroclinic(5, 0.0), Err(Error::BadIndex(5))));
        assert!(matches!(heteroclinic(0, 0.0), Err(Error::BadIndex(0))));
        for k in 0..100 {
            let t = -10.0 + 0.2 * k as f64;
            assert!(((heteroclinic(4, t).unwrap().0).cos() - t.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn heteroclinic_orbits_solve_unperturbed_field() {
        let p = AbcParams::unit(0.0);
        let h = 1e-5;
        for idx in 1..=4 {
            let orb = HeteroclinicOrbit::new(idx).unwrap();
            for k in 0..100 {
                let t = -8.0 + 0.16 * k as f64;
                let (x, y) = orb.at(t);
                // derivative of gd is sech, exactly
                let (xp, yp) = orb.at(t + h);
                let (xm, ym) = orb.at(t - h);
                let v = velocity(&p, &State::new(x, y, 0.0));
                assert!(((xp - xm) / (2.0 * h) - v[0]).abs() < 1e-9);
                assert!(((yp - ym) / (2.0 * h) - v[1]).abs() < 1e-9);
                let dgd = 1.0 / t.cosh();
                let sgn_x = [1.0, -1.0, -1.0, 1.0][idx as usize - 1];
                assert!((sgn_x * dgd - v[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heteroclinic_on_boundary() {
        let p = AbcParams::unit(0.0);
        for idx in 1..=4 {
            for k in 0..1000 {
                let t = -15.0 + 0.03 * k as f64;
                let (x, y) = heteroclinic(idx, t).unwrap();
                assert!(hamiltonian_h(&p, x, y).abs() < 1e-12);
                assert!((-y.sin() - x.cos()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn first_order_examples() {
        assert_eq!(first_order(0.3, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0));
        for t in [0.0, 0.5, 2.0, 7.0] {
            let (x1, y1, _) = first_order(-FRAC_PI_4, 0.0, 0.4, t);
            assert!((x1 + y1).abs() < 1e-15);
        }
        for z0 in [0.0, 1.0, 2.5, -0.7] {
            // x1 and y1 are each ~cosh(30); their difference is formed directly.
            let d = FirstOrderSolution::new(z0, 0.0, 0.0).diff(30.0);
            assert!((d - SQRT_2 * (z0 - FRAC_PI_4).sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn estimator_examples() {
        let e = estimate_critical(0.1).unwrap();
        assert!(e.system_residual < 1e-10);
        // Independent solve of the same system (scipy fsolve at 1e-14).
        assert!((e.a_est - 0.31629).abs() < 1e-4, "{e:?}");
        assert!((e.t_a_est - 3.4951).abs() < 1e-3, "{e:?}");
        let mut prev = e.a_est;
        for eps in [0.05, 0.02, 0.01] {
            let e = estimate_critical(eps).unwrap();
            assert!(e.system_residual < 1e-10);
            assert!(e.a_est > prev && e.a_est < FRAC_PI_4);
            prev = e.a_est;
        }
        assert!(estimate_critical(0.0).is_err());
        assert!(estimate_critical(0.3).is_err());
    }

    #[test]
    fn approximate_trajectory_unperturbed_is_heteroclinic() {
        let traj = approximate_trajectory(0.0, 0.7, 5.0).unwrap();
        assert_eq!(traj.t_end(), 5.0);
        for tp in traj.samples() {
            let (x, y) = heteroclinic(4, tp.t).unwrap();
            assert_eq!((tp.state.x, tp.state.y, tp.state.z), (x, y, 0.7));
        }
    }

    #[test]
    fn cumulative_integral_matches_direct() {
        let traj = approximate_trajectory(0.1, 0.0, 4.0).unwrap();
        let sol = FirstOrderSolution::new(0.0, 0.0, 0.0);
        for tp in traj.samples().iter().step_by(57) {
            let direct = sol.at(tp.t).2;
            assert!((0.1 * direct - tp.state.z).abs() < 1e-13);
        }
    }

    #[test]
    fn special_solutions() {
        for branch in SpecialBranch::ALL {
            assert_eq!(SpecialBranch::from_z(branch.z()).unwrap(), branch);
            let p = AbcParams::unit(0.1);
            for k in 0..=20 {
                let s = special_solution(0.1, branch, 0.3, k as f64).unwrap();
                let v = velocity(&p, &s);
                assert!(v[2].abs() < 1e-15);
                // along-line field component matches the scalar equation
                let (s1, s2) = branch.signs();
                assert!((v[0] - (s1 * s.x.sin() + s2 * 0.1 / SQRT_2)).abs() < 1e-10);
                let dy_dx = if matches!(branch, SpecialBranch::Quarter | SpecialBranch::FiveQuarter) { 1.0 } else { -1.0 };
                assert!((v[1] - dy_dx * v[0]).abs() < 1e-10);
            }
        }
        assert!(matches!(SpecialBranch::from_z(0.0), Err(Error::BadBranch(_))));
        // eps = 0: x' = sin x, so tan(x/2) = tan(x0/2) e^t.
        let s = special_solution(0.0, SpecialBranch::Quarter, 0.3, 2.0).unwrap();
        assert!((s.x - 2.0 * ((0.15f64).tan() * 2f64.exp()).atan()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn first_order_solves_linearized_system(z0 in -3.2..3.2f64, c1 in -1.0..1.0f64, c2 in -1.0..1.0f64, t in -4.0..4.0f64) {
            let sol = FirstOrderSolution::new(z0, c1, c2);
            let h = 1e-5;
            let (x1, y1, _) = sol.at(t);
            let (xp, yp, zp) = sol.at(t + h);
            let (xm, ym, zm) = sol.at(t - h);
            let (x0, y0) = heteroclinic(4, t).unwrap();
            let rx = (xp - xm) / (2.0 * h) - (-y0.sin() * y1 + z0.sin());
            let ry = (yp - ym) / (2.0 * h) - (x0.cos() * x1 + z0.cos());
            let rz = (zp - zm) / (2.0 * h) - (y0.cos() * y1 - x0.sin() * x1);
            prop_assert!(rx.abs() < 1e-6 && ry.abs() < 1e-6 && rz.abs() < 1e-6, "{rx} {ry} {rz}");
        }

        #[test]
        fn prediction_table_is_consistent(z0 in 0.0..6.28f64) {
            if let Some(c) = predicted_exit_cell(z0, 0.05) {
                let (cx, cy) = c.center();
                // all four cells touch the saddle (0, -pi/2)
                prop_assert!((cx.abs() + (cy + FRAC_PI_2).abs() - PI).abs() < 1e-12);
            }
        }
    }
}
