//! Periodic edge orbits for `B = C = 1`: orbits started at `(-pi/2, 0, a)`
//! on the lower-left cell edge that advance by a lattice vector every four
//! quarter-periods. The critical height `a` is found by shooting on the
//! miss in `z` at the first crossing of the exit plane.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{velocity, AbcParams, State, TimePoint, Trajectory};
use crate::integrate::{
    integrate, locate_event, sample_at, Direction, EventFunctional, EventHit, EventSpec, IntegratorConfig, Stepper,
};
use crate::scan::{poincare, PoincareSection};

/// Probes in the sign-change scan of the miss function.
pub const SCAN_PROBES: usize = 17;
/// Bisection stops below this bracket width.
pub const BRACKET_TOL: f64 = 1e-12;
/// Both criticality conditions must hold to this accuracy.
pub const SIMULTANEITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrbitType {
    /// Diagonal translation `(2pi, 2pi, 0)`; exit plane `x + y = pi/2`, target `z = pi/4`.
    TypeA,
    /// Axis translation `(2pi, 0, 0)`; exit plane `x = 0`, target `z = pi/2`.
    TypeB,
}

impl OrbitType {
    pub fn default_bracket(&self) -> (f64, f64) {
        match self {
            OrbitType::TypeA => (-FRAC_PI_4 + 0.05, FRAC_PI_4 - 0.01),
            OrbitType::TypeB => (0.8, 1.6),
        }
    }

    fn exit_event(&self) -> EventSpec {
        match self {
            OrbitType::TypeA => EventSpec::new(EventFunctional::XPlusY, FRAC_PI_2, Direction::Rising),
            OrbitType::TypeB => EventSpec::new(EventFunctional::X, 0.0, Direction::Rising),
        }
    }

    pub fn target_z(&self) -> f64 {
        match self {
            OrbitType::TypeA => FRAC_PI_4,
            OrbitType::TypeB => FRAC_PI_2,
        }
    }

    pub fn translation(&self) -> [f64; 3] {
        match self {
            OrbitType::TypeA => [TAU, TAU, 0.0],
            OrbitType::TypeB => [TAU, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingProblem {
    pub epsilon: f64,
    pub orbit_type: OrbitType,
    pub bracket: (f64, f64),
    pub cfg: IntegratorConfig,
}

impl ShootingProblem {
    /// Default bracket, adaptive integration at 1e-12 and the a-priori
    /// horizon `2 pi / eps + 100`.
    pub fn new(epsilon: f64, orbit_type: OrbitType) -> Result<Self> {
        let p = Self {
            epsilon,
            orbit_type,
            bracket: orbit_type.default_bracket(),
            cfg: IntegratorConfig::adaptive(1e-12).with_max_time(TAU / epsilon + 100.0),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_bracket(mut self, low: f64, high: f64) -> Result<Self> {
        self.bracket = (low, high);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let (lo, hi) = self.bracket;
        if !(lo < hi && lo > -FRAC_PI_4 && hi < FRAC_PI_2 + 0.5) {
            return Err(Error::InvalidInput(format!("bad bracket ({lo}, {hi})")));
        }
        self.cfg.validate()
    }

    pub fn params(&self) -> AbcParams {
        AbcParams::unit(self.epsilon)
    }

    pub fn initial_state(&self, a: f64) -> State {
        State::new(-FRAC_PI_2, 0.0, a)
    }
}

/// Result of one shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shot {
    pub a: f64,
    /// `z - target` at the exit crossing; positive means `z` arrived too high.
    pub miss: f64,
    pub hit: EventHit,
}

/// Integrates from `(-pi/2, 0, a)` to the first crossing of the exit plane
/// with `x' > 0`.
pub fn shoot(problem: &ShootingProblem, a: f64) -> Result<Shot> {
    let params = problem.params();
    let event = problem.orbit_type.exit_event();
    let mut st = Stepper::new(params, problem.initial_state(a).to_array(), 0.0, problem.cfg.max_time, &problem.cfg)?;
    while let Some(step) = st.step()? {
        if let Some(hit) = locate_event(&st, &step, &event, 0) {
            if velocity(&params, &hit.state)[0] > 0.0 {
                return Ok(Shot { a, miss: hit.state.z - problem.orbit_type.target_z(), hit });
            }
        }
    }
    Err(Error::NoCrossing { max_time: problem.cfg.max_time })
}

/// Miss function: `z - pi/4` (TypeA) or `z - pi/2` (TypeB) at the exit crossing.
pub fn shoot_miss(problem: &ShootingProblem, a: f64) -> Result<f64> {
    Ok(shoot(problem, a)?.miss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingResult {
    pub orbit_type: OrbitType,
    pub epsilon: f64,
    /// Critical initial height.
    pub a: f64,
    /// Quarter period.
    pub t_a: f64,
    pub simultaneity_residual: f64,
    pub bracket_width: f64,
    /// Scan cell in which bisection started.
    pub scan_bracket: (f64, f64),
    pub hit_state: State,
}

fn simultaneity_residual(orbit_type: OrbitType, s: &State) -> f64 {
    let plane = match orbit_type {
        OrbitType::TypeA => s.x + s.y - FRAC_PI_2,
        OrbitType::TypeB => s.x,
    };
    plane.abs().max((s.z - orbit_type.target_z()).abs())
}

/// Miss values at the evenly spaced scan probes (failed shots are `None`).
pub fn scan_miss(problem: &ShootingProblem) -> Vec<(f64, Option<f64>)> {
    let (lo, hi) = problem.bracket;
    (0..SCAN_PROBES)
        .into_par_iter()
        .map(|k| {
            let a = lo + (hi - lo) * k as f64 / (SCAN_PROBES - 1) as f64;
            (a, shoot_miss(problem, a).ok())
        })
        .collect()
}

fn bisect(problem: &ShootingProblem, mut lo: Shot, mut hi: Shot) -> Result<ShootingResult> {
    let scan_bracket = (lo.a.min(hi.a), lo.a.max(hi.a));
    while (hi.a - lo.a).abs() > BRACKET_TOL {
        let mid = 0.5 * (lo.a + hi.a);
        if mid == lo.a || mid == hi.a {
            break;
        }
        let s = shoot(problem, mid)?;
        if s.miss == 0.0 {
            lo = s;
            hi = s;
            break;
        }
        if (s.miss < 0.0) == (lo.miss < 0.0) {
            lo = s;
        } else {
            hi = s;
        }
    }
    let best = if lo.miss.abs() <= hi.miss.abs() { lo } else { hi };
    let residual = simultaneity_residual(problem.orbit_type, &best.hit.state);
    if !(residual < SIMULTANEITY_TOL) {
        return Err(Error::VerificationFailed { a: best.a, residual });
    }
    Ok(ShootingResult {
        orbit_type: problem.orbit_type,
        epsilon: problem.epsilon,
        a: best.a,
        t_a: best.hit.time,
        simultaneity_residual: residual,
        bracket_width: (hi.a - lo.a).abs(),
        scan_bracket,
        hit_state: best.hit.state,
    })
}

/// Every verified root found by the sign-change scan, in increasing `a`.
pub fn find_all_critical(problem: &ShootingProblem) -> Result<Vec<ShootingResult>> {
    problem.validate()?;
    let probes = scan_miss(problem);
    let valid: Vec<(f64, f64)> = probes.iter().filter_map(|(a, m)| m.map(|m| (*a, m))).collect();
    let mut roots = Vec::new();
    let mut last_err = None;
    for w in valid.windows(2) {
        let ((a0, m0), (a1, m1)) = (w[0], w[1]);
        if m0 == 0.0 || (m0 < 0.0) != (m1 < 0.0) {
            let res = shoot(problem, a0).and_then(|lo| shoot(problem, a1).and_then(|hi| bisect(problem, lo, hi)));
            match res {
                Ok(r) => roots.push(r),
                Err(e) => last_err = Some(e),
            }
        }
    }
    if roots.is_empty() {
        return Err(last_err.unwrap_or(Error::NoSignChange { low: problem.bracket.0, high: problem.bracket.1 }));
    }
    Ok(roots)
}

/// Lowest verified root of the miss function in the problem's bracket.
pub fn find_critical(problem: &ShootingProblem) -> Result<ShootingResult> {
    Ok(find_all_critical(problem)?.remove(0))
}

/// Whether the miss function increases strictly across `k` interior points
/// of the scan cell that contained `result`.
pub fn miss_is_monotone(problem: &ShootingProblem, result: &ShootingResult, k: usize) -> Result<bool> {
    let (lo, hi) = result.scan_bracket;
    let misses: Vec<f64> = (1..=k)
        .map(|i| shoot_miss(problem, lo + (hi - lo) * i as f64 / (k + 1) as f64))
        .collect::<Result<_>>()?;
    Ok(misses.windows(2).all(|w| w[1] > w[0]))
}

/// A full period `[t_start, t_start + period]` of a lattice-periodic orbit.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicEdgeOrbit {
    pub orbit_type: OrbitType,
    pub a: f64,
    pub t_a: f64,
    pub base: Trajectory,
    pub period: f64,
    pub translation: [f64; 3],
}

/// Integrates the critical orbit over `[-t_a, 3 t_a]`.
pub fn build_periodic_orbit(result: &ShootingResult, problem: &ShootingProblem) -> Result<PeriodicEdgeOrbit> {
    let params = problem.params();
    let s0 = problem.initial_state(result.a);
    let t_a = result.t_a;
    let fwd = integrate(&params, &s0, (0.0, 3.0 * t_a), &problem.cfg)?;
    let back = integrate(&params, &s0, (0.0, -t_a), &problem.cfg)?;
    let mut samples: Vec<TimePoint> = back.into_samples();
    samples.pop();
    samples.extend(fwd.into_samples());
    Ok(PeriodicEdgeOrbit {
        orbit_type: result.orbit_type,
        a: result.a,
        t_a,
        base: Trajectory::new(params, samples)?,
        period: 4.0 * t_a,
        translation: result.orbit_type.translation(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TranslationCheck {
    /// max over samples of `|X(t + period) - X(t) - translation|`.
    pub translation_residual: f64,
    /// max over samples of `|z(t + period) - z(t)|`.
    pub z_periodicity: f64,
}

impl PeriodicEdgeOrbit {
    pub fn t_start(&self) -> f64 {
        self.base.t_start()
    }

    pub fn state_at(&self, t: f64) -> Result<State> {
        sample_at(&self.base, t)
    }

    /// `(pi/2 - y, pi/2 + x, z - pi/2)`: the quarter-turn image about the cell
    /// centre, translating by `(-dy, dx, 0)`.
    pub fn rotated(&self) -> PeriodicEdgeOrbit {
        let [dx, dy, dz] = self.translation;
        PeriodicEdgeOrbit {
            base: self.base.map_states(|s| State::new(FRAC_PI_2 - s.y, FRAC_PI_2 + s.x, s.z - FRAC_PI_2)),
            translation: [-dy, dx, dz],
            ..self.clone()
        }
    }

    /// `X(-t) - (pi, pi, pi)`, translating by the negated vector.
    pub fn reversed(&self) -> PeriodicEdgeOrbit {
        let [dx, dy, dz] = self.translation;
        PeriodicEdgeOrbit {
            base: self.base.reverse_time().translate([-PI, -PI, -PI]),
            translation: [-dx, -dy, -dz],
            ..self.clone()
        }
    }

    /// The orbit and its three images: rotated, reversed, rotated-and-reversed.
    pub fn siblings(&self) -> [PeriodicEdgeOrbit; 4] {
        let rot = self.rotated();
        [self.clone(), rot.clone(), self.reversed(), rot.reversed()]
    }

    /// Integrates `periods` further periods from the first sample.
    pub fn extend(&self, periods: usize, cfg: &IntegratorConfig) -> Result<Trajectory> {
        let t0 = self.t_start();
        integrate(&self.base.params, &self.base.first().state, (t0, t0 + self.period * (1 + periods) as f64), cfg)
    }

    /// Checks the lattice translation at `n` times spread over one period,
    /// against an independent integration over two periods.
    pub fn translation_check(&self, n: usize, cfg: &IntegratorConfig) -> Result<TranslationCheck> {
        let ext = self.extend(1, cfg)?;
        let t0 = self.t_start();
        let mut tr = 0.0f64;
        let mut zp = 0.0f64;
        for k in 0..n {
            let t = t0 + self.period * k as f64 / n as f64;
            let a = sample_at(&ext, t)?;
            let b = sample_at(&ext, t + self.period)?;
            let d = [b.x - a.x - self.translation[0], b.y - a.y - self.translation[1], b.z - a.z - self.translation[2]];
            tr = tr.max((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
            zp = zp.max((b.z - a.z).abs());
        }
        Ok(TranslationCheck { translation_residual: tr, z_periodicity: zp })
    }

    /// Peak-to-peak amplitude of `z` over the base period.
    pub fn z_amplitude(&self) -> f64 {
        let (lo, hi) = self
            .base
            .samples()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.state.z), hi.max(p.state.z)));
        hi - lo
    }

    /// `count` states at uniformly spaced times over one period.
    pub fn phase_states(&self, count: usize) -> Result<Vec<State>> {
        let t0 = self.t_start();
        (0..count).map(|k| self.state_at(t0 + self.period * k as f64 / count as f64)).collect()
    }
}

/// Section points at `x = 0 mod 2pi` for orbits started at `(-pi/2, 0, a + offset)`.
pub fn poincare_fixed_point_check(
    orbit: &PeriodicEdgeOrbit,
    offsets: &[f64],
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<PoincareSection>> {
    if let Some(o) = offsets.iter().find(|o| o.abs() > 0.5) {
        return Err(Error::InvalidInput(format!("offset {o} larger than 0.5")));
    }
    let initials: Vec<State> = offsets.iter().map(|o| State::new(-FRAC_PI_2, 0.0, orbit.a + o)).collect();
    poincare(&orbit.base.params, &initials, t_max, cfg)
}
