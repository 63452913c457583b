//! Batch experiments over ensembles of initial conditions: KAM masks, growth
//! classification, linear-growth fractions, Poincare sections at
//! `x = 0 mod 2pi` and the empirical front-speed functional.
//!
//! Work items run on the rayon pool and are merged by point index, so results
//! do not depend on the worker count.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::edge::{build_periodic_orbit, find_critical, OrbitType, ShootingProblem};
use crate::error::{Error, Result};
use crate::flow::{cell_of, hamiltonian_h, velocity, AbcParams, CellIndex, CellLocation, State, Trajectory};
use crate::hamiltform::{spiral_fixed_point, SpiralConfig};
use crate::integrate::{
    integrate, integrate_to, locate_event, Direction, EventFunctional, EventSpec, IntegratorConfig, Stepper,
};

/// Default test horizon of the scans.
pub const DEFAULT_HORIZON: f64 = 50.0;
/// Step of the fixed-step scan integrator.
pub const SCAN_STEP: f64 = 0.01;
/// Trapped points whose orbit comes this close to `H = 0` are re-integrated.
pub const REVERIFY_MARGIN: f64 = 1e-2;
/// Tolerance of the re-verification integration.
pub const REVERIFY_TOL: f64 = 1e-10;

pub const SLOPE_THRESHOLD: f64 = 0.1;
pub const FIT_THRESHOLD: f64 = 0.98;
pub const RANGE_THRESHOLD: f64 = 4.0 * PI;
pub const DEFAULT_WINDOW: f64 = 0.5;
/// Shortest trajectory [`classify_growth`] accepts.
pub const MIN_GROWTH_SPAN: f64 = 20.0;
const GROWTH_RESAMPLES: usize = 501;

/// Phase states taken from each solver-produced orbit in [`speed_functional`].
pub const PHASE_SAMPLES: usize = 64;

/// A flat rectangle `center + s u + w v` with `|s| < width/2`, `|w| < height/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RectRegion {
    pub center: State,
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub width: f64,
    pub height: f64,
}

impl RectRegion {
    /// `R(r)`: in the plane `x + y = -pi/2`, centred at `(-pi/2, 0, a_c)`,
    /// width `sqrt2 pi r` along `(1, -1, 0)/sqrt2` and height `(pi/2) r` in `z`.
    pub fn r_of(r: f64, a_c: f64) -> Self {
        Self {
            center: State::new(-FRAC_PI_2, 0.0, a_c),
            u: [1.0 / SQRT_2, -1.0 / SQRT_2, 0.0],
            v: [0.0, 0.0, 1.0],
            width: SQRT_2 * PI * r,
            height: FRAC_PI_2 * r,
        }
    }

    /// `R'`: the whole edge rectangle, `x in (-pi, 0)`, `z in (pi/4, 3pi/4)`.
    pub fn r_prime() -> Self {
        Self { height: FRAC_PI_2, ..Self::r_of(1.0, FRAC_PI_2) }
    }

    /// Point at rectangle coordinates `(s, w)` in `(-1, 1)^2`.
    pub fn point(&self, s: f64, w: f64) -> State {
        let (hs, hw) = (0.5 * self.width * s, 0.5 * self.height * w);
        State::new(
            self.center.x + hs * self.u[0] + hw * self.v[0],
            self.center.y + hs * self.u[1] + hw * self.v[1],
            self.center.z + hs * self.u[2] + hw * self.v[2],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Region {
    Cell(CellIndex),
    Rect(RectRegion),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sampling {
    /// Cell-centred tensor grid.
    Grid,
    /// Independent uniform points from a ChaCha8 stream.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub region: Region,
    pub n_points: usize,
    pub sampling: Sampling,
}

fn centred(k: usize, n: usize) -> f64 {
    -1.0 + (2 * k + 1) as f64 / n as f64
}

impl GridSpec {
    pub fn new(region: Region, n_points: usize, sampling: Sampling) -> Result<Self> {
        let g = Self { region, n_points, sampling };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::InvalidInput("grid needs at least one point".into()));
        }
        if let Region::Rect(r) = &self.region {
            if !(r.width > 0.0 && r.height > 0.0) {
                return Err(Error::InvalidInput("rectangle must have positive size".into()));
            }
        }
        Ok(())
    }

    /// Grid shape `(columns, rows)` for tensor sampling. A cell uses a square
    /// grid; a rectangle matches its aspect ratio, so the count may differ
    /// slightly from `n_points`.
    pub fn shape(&self) -> (usize, usize) {
        match &self.region {
            Region::Cell(_) => {
                let side = ((self.n_points as f64).sqrt().round() as usize).max(1);
                (side, side)
            }
            Region::Rect(r) => {
                let aspect = r.width / r.height;
                let rows = (((self.n_points as f64) / aspect).sqrt().round() as usize).max(1);
                let cols = ((self.n_points as f64 / rows as f64).round() as usize).max(1);
                (cols, rows)
            }
        }
    }

    /// Unit coordinates in `(-1, 1)^2`, row-major (first coordinate fastest).
    fn unit_points(&self) -> Vec<(f64, f64)> {
        match self.sampling {
            Sampling::Grid => {
                let (nc, nr) = self.shape();
                (0..nr).flat_map(|r| (0..nc).map(move |c| (centred(c, nc), centred(r, nr)))).collect()
            }
            Sampling::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..self.n_points).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
            }
        }
    }

    /// Initial states. For a cell `z0` is the common height; a rectangle
    /// carries its own `z` and ignores it.
    pub fn states(&self, z0: f64) -> Vec<State> {
        let pts = self.unit_points();
        match &self.region {
            Region::Cell(cell) => pts
                .into_iter()
                .map(|(a, b)| {
                    let (x, y) = cell.point(a, b);
                    State::new(x, y, z0)
                })
                .collect(),
            Region::Rect(r) => pts.into_iter().map(|(s, w)| r.point(s, w)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KamDiagnostics {
    /// Indices whose integration failed; excluded from the fraction.
    pub undetermined: Vec<usize>,
    /// Trapped points re-integrated at tight tolerance.
    pub reverified: usize,
    /// Re-verified points found to escape after all.
    pub flipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KamMask {
    pub grid: GridSpec,
    pub cell: CellIndex,
    pub z0: f64,
    pub a: f64,
    pub horizon: f64,
    pub points: Vec<(f64, f64)>,
    pub trapped: Vec<bool>,
    pub exit_times: Vec<Option<f64>>,
    /// Mean of `trapped` over determined points.
    pub trapped_fraction: f64,
    pub diagnostics: KamDiagnostics,
}

impl KamMask {
    /// Number of points on which two masks of the same grid disagree.
    pub fn symmetric_difference(&self, other: &KamMask) -> usize {
        self.trapped.iter().zip(&other.trapped).filter(|(a, b)| a != b).count()
    }
}

struct CellTrack {
    exit_time: Option<f64>,
    /// Smallest `sign * H` seen at step ends.
    min_depth: f64,
}

/// Follows an orbit until it leaves `cell` or `horizon` passes. An exit is
/// flagged when `sign * H` drops to zero or `cell_of` names another cell at a
/// step end; the time is refined on `H = 0` when that crossing lies in the step.
fn track_cell(params: &AbcParams, s0: &State, cell: CellIndex, horizon: f64, cfg: &IntegratorConfig) -> Result<CellTrack> {
    let sign = cell.sign();
    let dir = if sign > 0.0 { Direction::Falling } else { Direction::Rising };
    let event = EventSpec::new(EventFunctional::H, 0.0, dir);
    let mut st = Stepper::new(*params, s0.to_array(), 0.0, horizon, cfg)?;
    let mut min_depth = sign * hamiltonian_h(params, s0.x, s0.y);
    while let Some(step) = st.step()? {
        let [x, y, _] = step.y1;
        let depth = sign * hamiltonian_h(params, x, y);
        min_depth = min_depth.min(depth);
        let moved = matches!(cell_of(x, y), CellLocation::Cell(c) if c != cell);
        if depth <= 0.0 || moved {
            let t = locate_event(&st, &step, &event, 0).map_or(step.t1, |h| h.time);
            return Ok(CellTrack { exit_time: Some(t), min_depth });
        }
    }
    Ok(CellTrack { exit_time: None, min_depth })
}

/// [`kam_scan_with`] using RK4 at `h = 0.01`.
pub fn kam_scan(params: &AbcParams, cell: CellIndex, z0: f64, grid: &GridSpec, horizon: f64) -> Result<KamMask> {
    kam_scan_with(params, cell, z0, grid, horizon, &IntegratorConfig::rk4(SCAN_STEP))
}

/// Marks which grid points of `cell` at height `z0` stay in the cell up to
/// `horizon`. Trapped points that came within [`REVERIFY_MARGIN`] of the
/// boundary are re-integrated adaptively and that verdict is kept.
pub fn kam_scan_with(
    params: &AbcParams,
    cell: CellIndex,
    z0: f64,
    grid: &GridSpec,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<KamMask> {
    params.validate()?;
    grid.validate()?;
    cfg.validate()?;
    if params.b != params.c {
        return Err(Error::InvalidInput("cell scans need B = C".into()));
    }
    match grid.region {
        Region::Cell(c) if c == cell => {}
        _ => return Err(Error::InvalidInput("grid region must be the scanned cell".into())),
    }
    if !(horizon > 0.0 && horizon <= cfg.max_time) {
        return Err(Error::InvalidInput(format!("horizon {horizon} outside (0, max_time]")));
    }
    let initials = grid.states(z0);
    let fine = IntegratorConfig::adaptive(REVERIFY_TOL).with_max_time(cfg.max_time);

    // (exit time, reverified, flipped), or None when the integration failed.
    let outcomes: Vec<Option<(Option<f64>, bool, bool)>> = initials
        .par_iter()
        .map(|s0| {
            let coarse = track_cell(params, s0, cell, horizon, cfg).ok()?;
            if coarse.exit_time.is_some() || coarse.min_depth >= REVERIFY_MARGIN {
                return Some((coarse.exit_time, false, false));
            }
            let check = track_cell(params, s0, cell, horizon, &fine).ok()?;
            Some((check.exit_time, true, check.exit_time.is_some()))
        })
        .collect();

    let mut diagnostics = KamDiagnostics::default();
    let mut trapped = Vec::with_capacity(outcomes.len());
    let mut exit_times = Vec::with_capacity(outcomes.len());
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Some((exit, rev, flip)) => {
                diagnostics.reverified += rev as usize;
                diagnostics.flipped += flip as usize;
                trapped.push(exit.is_none());
                exit_times.push(exit);
            }
            None => {
                diagnostics.undetermined.push(k);
                trapped.push(false);
                exit_times.push(None);
            }
        }
    }
    let determined = trapped.len() - diagnostics.undetermined.len();
    let n_trapped = trapped
        .iter()
        .enumerate()
        .filter(|(k, t)| **t && diagnostics.undetermined.binary_search(k).is_err())
        .count();
    let trapped_fraction = if determined == 0 { 0.0 } else { n_trapped as f64 / determined as f64 };
    Ok(KamMask {
        grid: *grid,
        cell,
        z0,
        a: params.a,
        horizon,
        points: initials.iter().map(|s| (s.x, s.y)).collect(),
        trapped,
        exit_times,
        trapped_fraction,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowthClass {
    Ballistic,
    Bounded,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReport {
    /// Least-squares slopes of `(x, y, z)` per unit time.
    pub slopes: [f64; 3],
    /// Coefficients of determination of the three fits.
    pub r2: [f64; 3],
    /// Peak-to-peak range of each coordinate in the window.
    pub ranges: [f64; 3],
    pub classes: [GrowthClass; 3],
}

fn fit_line(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        let (dt, dy) = (t - tm, y - ym);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r2 = if syy > 0.0 { (sty * sty / (stt * syy)).min(1.0) } else { 0.0 };
    (slope, r2)
}

/// Linear interpolation between stored samples; unlike the Hermite dense
/// output it does not consult the vector field, so shifted copies of an orbit
/// resample identically.
fn lerp_at(traj: &Trajectory, t: f64) -> State {
    let s = traj.samples();
    let k = s.partition_point(|p| p.t <= t).clamp(1, s.len() - 1);
    let (a, b) = (&s[k - 1], &s[k]);
    let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
    let (ya, yb) = (a.state.to_array(), b.state.to_array());
    State::from_array(std::array::from_fn(|i| ya[i] + w * (yb[i] - ya[i])))
}

/// Fits a line to each coordinate over the trailing `window_fraction` of the
/// trajectory, resampled at 501 uniform times.
pub fn classify_growth(traj: &Trajectory, window_fraction: f64) -> Result<GrowthReport> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("window fraction must lie in (0, 1], got {window_fraction}")));
    }
    let (t0, t1) = (traj.t_start(), traj.t_end());
    let span = t1 - t0;
    if span < MIN_GROWTH_SPAN {
        return Err(Error::TooShort { span, required: MIN_GROWTH_SPAN });
    }
    let w0 = t1 - window_fraction * span;
    let last = (GROWTH_RESAMPLES - 1) as f64;
    let ts: Vec<f64> =
        (0..GROWTH_RESAMPLES).map(|k| if k + 1 == GROWTH_RESAMPLES { t1 } else { w0 + (t1 - w0) * k as f64 / last }).collect();
    let states: Vec<State> = ts.iter().map(|&t| lerp_at(traj, t)).collect();
    let mut report = GrowthReport { slopes: [0.0; 3], r2: [0.0; 3], ranges: [0.0; 3], classes: [GrowthClass::Undetermined; 3] };
    for i in 0..3 {
        let ys: Vec<f64> = states.iter().map(|s| s.to_array()[i]).collect();
        let (slope, r2) = fit_line(&ts, &ys);
        let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
        report.slopes[i] = slope;
        report.r2[i] = r2;
        report.ranges[i] = hi - lo;
        report.classes[i] = if slope.abs() > SLOPE_THRESHOLD && r2 > FIT_THRESHOLD {
            GrowthClass::Ballistic
        } else if hi - lo < RANGE_THRESHOLD {
            GrowthClass::Bounded
        } else {
            GrowthClass::Undetermined
        };
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFraction {
    pub epsilon: f64,
    pub fraction: f64,
    pub n_points: usize,
    pub ballistic: usize,
    /// Per-point flags, in grid order.
    pub ballistic_mask: Vec<bool>,
}

/// Fraction of an evenly spaced grid on `rect` whose `x` grows ballistically
/// over `[0, horizon]` (RK4 at `h = 0.01`, trailing half window).
pub fn linear_fraction(epsilon: f64, rect: &RectRegion, n: usize, horizon: f64) -> Result<LinearFraction> {
    let params = AbcParams::unit(epsilon);
    params.validate()?;
    let grid = GridSpec::new(Region::Rect(*rect), n, Sampling::Grid)?;
    let cfg = IntegratorConfig::rk4(SCAN_STEP).with_max_time(horizon.max(1.0));
    let initials = grid.states(0.0);
    let ballistic_mask: Vec<bool> = initials
        .par_iter()
        .map(|s0| {
            integrate(&params, s0, (0.0, horizon), &cfg)
                .and_then(|tr| classify_growth(&tr, DEFAULT_WINDOW))
                .map_or(false, |r| r.classes[0] == GrowthClass::Ballistic)
        })
        .collect();
    let ballistic = ballistic_mask.iter().filter(|b| **b).count();
    Ok(LinearFraction {
        epsilon,
        fraction: ballistic as f64 / initials.len() as f64,
        n_points: initials.len(),
        ballistic,
        ballistic_mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub y_wrapped: f64,
    pub z_wrapped: f64,
    /// `x' > 0` at the crossing.
    pub rising: bool,
}

/// Crossings of `x = 0 mod 2pi` by one orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareSection {
    pub initial: State,
    pub points: Vec<SectionPoint>,
}

fn circular(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

impl PoincareSection {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest wrapped distance of a crossing from the first crossing in the
    /// same direction.
    pub fn spread(&self) -> f64 {
        let mut worst = 0.0f64;
        for rising in [true, false] {
            let mut it = self.points.iter().filter(|p| p.rising == rising);
            if let Some(first) = it.next() {
                for p in it {
                    worst = worst.max(circular(p.y_wrapped, first.y_wrapped).hypot(circular(p.z_wrapped, first.z_wrapped)));
                }
            }
        }
        worst
    }

    /// `(min, max)` of raw `z` over the crossings.
    pub fn z_extent(&self) -> Option<(f64, f64)> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z))))
    }
}

fn section_of(params: &AbcParams, s0: &State, t_max: f64, cfg: &IntegratorConfig) -> Result<PoincareSection> {
    let mut st = Stepper::new(*params, s0.to_array(), 0.0, t_max, cfg)?;
    let mut points = Vec::new();
    while let Some(step) = st.step()? {
        let (xa, xb) = (step.y0[0], step.y1[0]);
        let k_lo = (xa.min(xb) / TAU).ceil() as i64;
        let k_hi = (xa.max(xb) / TAU).floor() as i64;
        let mut hits = Vec::new();
        for k in k_lo..=k_hi {
            let spec = EventSpec::new(EventFunctional::X, TAU * k as f64, Direction::Either);
            if let Some(hit) = locate_event(&st, &step, &spec, 0) {
                hits.push(hit);
            }
        }
        hits.sort_by(|a, b| a.time.total_cmp(&b.time));
        for h in hits {
            let s = h.state;
            points.push(SectionPoint {
                t: h.time,
                x: s.x,
                y: s.y,
                z: s.z,
                y_wrapped: s.y.rem_euclid(TAU),
                z_wrapped: s.z.rem_euclid(TAU),
                rising: velocity(params, &s)[0] > 0.0,
            });
        }
    }
    Ok(PoincareSection { initial: *s0, points })
}

/// Section at `x = 0 mod 2pi` for each initial state over `[0, t_max]`.
pub fn poincare(params: &AbcParams, initials: &[State], t_max: f64, cfg: &IntegratorConfig) -> Result<Vec<PoincareSection>> {
    params.validate()?;
    initials.par_iter().map(|s0| section_of(params, s0, t_max, cfg)).collect()
}

/// Initial conditions of [`speed_functional`]: a grid evaluated at each height.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub grid: GridSpec,
    pub z0s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CandidateSource {
    Ensemble,
    Spiral,
    Edge(OrbitType),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedEstimate {
    pub direction: [f64; 3],
    pub horizon: f64,
    /// Max of `p . (X(T) - X(0)) / T`.
    pub best: f64,
    pub arg_best: State,
    pub arg_source: CandidateSource,
    pub candidates_evaluated: usize,
    /// Candidates whose integration failed.
    pub failed: usize,
    pub spiral_included: bool,
    pub edge_orbits_included: usize,
}

/// Phase states of the spiral orbit and, for `B = C = 1`, of every sibling of
/// both periodic edge orbits. Orbits whose solver fails are left out.
fn solver_candidates(params: &AbcParams) -> (Vec<(State, CandidateSource)>, bool, usize) {
    let mut out = Vec::new();
    let mut spiral_included = false;
    if let Ok(sol) = spiral_fixed_point(params, &SpiralConfig::default()) {
        let phases: Result<Vec<State>> =
            (0..PHASE_SAMPLES).map(|k| sol.state_at(TAU * k as f64 / PHASE_SAMPLES as f64)).collect();
        if let Ok(ps) = phases {
            out.extend(ps.into_iter().map(|s| (s, CandidateSource::Spiral)));
            spiral_included = true;
        }
    }
    let mut edges = 0;
    if params.b == 1.0 && params.c == 1.0 && params.a > 0.0 {
        for ty in [OrbitType::TypeA, OrbitType::TypeB] {
            let Ok(problem) = ShootingProblem::new(params.a, ty) else { continue };
            let Ok(orbit) = find_critical(&problem).and_then(|r| build_periodic_orbit(&r, &problem)) else { continue };
            for sib in orbit.siblings() {
                if let Ok(ps) = sib.phase_states(PHASE_SAMPLES) {
                    out.extend(ps.into_iter().map(|s| (s, CandidateSource::Edge(ty))));
                    edges += 1;
                }
            }
        }
    }
    (out, spiral_included, edges)
}

/// Best average advance along `p` over `[0, horizon]` among the ensemble and
/// the solver-produced orbits.
pub fn speed_functional(
    params: &AbcParams,
    p: [f64; 3],
    ensemble: &Ensemble,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<SpeedEstimate> {
    params.validate()?;
    ensemble.grid.validate()?;
    let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    if !((norm - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidInput(format!("direction must be a unit vector, |p| = {norm}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let mut candidates: Vec<(State, CandidateSource)> = match ensemble.grid.region {
        Region::Cell(_) => ensemble
            .z0s
            .iter()
            .flat_map(|&z0| ensemble.grid.states(z0))
            .map(|s| (s, CandidateSource::Ensemble))
            .collect(),
        Region::Rect(_) => ensemble.grid.states(0.0).into_iter().map(|s| (s, CandidateSource::Ensemble)).collect(),
    };
    let (extra, spiral_included, edge_orbits_included) = solver_candidates(params);
    candidates.extend(extra);

    let values: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|(s0, _)| {
            let s1 = integrate_to(params, s0, (0.0, horizon), cfg).ok()?;
            let v = (p[0] * (s1.x - s0.x) + p[1] * (s1.y - s0.y) + p[2] * (s1.z - s0.z)) / horizon;
            v.is_finite().then_some(v)
        })
        .collect();
    let failed = values.iter().filter(|v| v.is_none()).count();
    let (k, best) = values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .fold(None, |acc: Option<(usize, f64)>, (k, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((k, v)),
        })
        .ok_or_else(|| Error::InvalidInput("every candidate failed".into()))?;
    Ok(SpeedEstimate {
        direction: p,
        horizon,
        best,
        arg_best: candidates[k].0,
        arg_source: candidates[k].1,
        candidates_evaluated: candidates.len(),
        failed,
        spiral_included,
        edge_orbits_included,
    })
}
