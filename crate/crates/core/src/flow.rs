//! The ABC vector field, its stream function on the `xy`-plane, the diamond
//! cell lattice and the three time-reversal symmetries.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};

/// Flow coefficients. `a` is the perturbation amplitude (epsilon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbcParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AbcParams {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// `A = epsilon`, `B = C = 1`.
    pub const fn unit(epsilon: f64) -> Self {
        Self::new(epsilon, 1.0, 1.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.a
    }

    /// Checks the solver-module invariant `A >= 0`, `B > 0`, `C > 0`.
    pub fn validate(&self) -> Result<()> {
        let ok = self.a.is_finite()
            && self.b.is_finite()
            && self.c.is_finite()
            && self.a >= 0.0
            && self.b > 0.0
            && self.c > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "need A >= 0, B > 0, C > 0 (got A={}, B={}, C={})",
                self.a, self.b, self.c
            )))
        }
    }
}

/// A point in space. Coordinates are never reduced mod 2pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &State) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    pub fn offset(&self, dx: f64, dy: f64, dz: f64) -> State {
        State::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimePoint {
    pub t: f64,
    pub state: State,
}

/// The ABC velocity at `s`.
#[inline]
pub fn velocity(params: &AbcParams, s: &State) -> [f64; 3] {
    velocity_arr(params, &s.to_array())
}

#[inline]
pub(crate) fn velocity_arr(p: &AbcParams, s: &[f64; 3]) -> [f64; 3] {
    let (sx, cx) = s[0].sin_cos();
    let (sy, cy) = s[1].sin_cos();
    let (sz, cz) = s[2].sin_cos();
    [p.a * sz + p.c * cy, p.b * sx + p.a * cz, p.c * sy + p.b * cx]
}

/// Stream function of the unperturbed planar flow, `B cos x + C sin y`.
#[inline]
pub fn hamiltonian_h(params: &AbcParams, x: f64, y: f64) -> f64 {
    params.b * x.cos() + params.c * y.sin()
}

/// Divergence of the field. Each component is independent of its own
/// coordinate, so this is identically zero.
pub fn divergence(_params: &AbcParams, _s: &State) -> f64 {
    0.0
}

/// `|H| below this` counts as lying on a cell boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Lattice coordinates of a diamond cell. `cell(i, j)` is the open diamond
/// `|x - cx| + |y - cy| < pi` centred at `(cx, cy) = (pi (i + j), pi/2 + pi (j - i))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CellIndex {
    pub i: i64,
    pub j: i64,
}

impl CellIndex {
    pub const fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }

    pub fn center(&self) -> (f64, f64) {
        (PI * (self.i + self.j) as f64, FRAC_PI_2 + PI * (self.j - self.i) as f64)
    }

    /// Sign of `H` inside the cell for `B = C`.
    pub fn sign(&self) -> f64 {
        if (self.i + self.j).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Maps diamond coordinates `(a, b)` in `(-1, 1)^2` into the cell:
    /// `a` runs along `(1, 1)`, `b` along `(1, -1)`; the corners are the saddles.
    pub fn point(&self, a: f64, b: f64) -> (f64, f64) {
        let (cx, cy) = self.center();
        (cx + FRAC_PI_2 * (a + b), cy + FRAC_PI_2 * (a - b))
    }
}

/// Result of [`cell_of`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CellLocation {
    Cell(CellIndex),
    Boundary,
}

/// Locates `(x, y)` in the cell lattice of the `B = C` stream function
/// `cos x + sin y`; points with `|H| < BOUNDARY_TOL` are on the boundary.
pub fn cell_of(x: f64, y: f64) -> CellLocation {
    if (x.cos() + y.sin()).abs() < BOUNDARY_TOL {
        return CellLocation::Boundary;
    }
    let u = x / PI;
    let v = (y - FRAC_PI_2) / PI;
    CellLocation::Cell(CellIndex::new(((u - v) / 2.0).round() as i64, ((u + v) / 2.0).round() as i64))
}

/// The three time-reversal symmetries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SymmetryId {
    /// `(t, x, y, z) -> (-t, -pi - x, -y, z)`
    S1,
    /// `(t, x, y, z) -> (-t, pi/2 - y, pi/2 - x, pi/2 - z)`; a symmetry only when `B == C`.
    S2,
    /// `(t, x, y, z) -> (-t, -x, y, pi - z)`
    S3,
}

impl SymmetryId {
    pub const ALL: [SymmetryId; 3] = [SymmetryId::S1, SymmetryId::S2, SymmetryId::S3];

    /// Whether the map sends orbits to orbits for these coefficients.
    pub fn holds_for(&self, params: &AbcParams) -> bool {
        match self {
            SymmetryId::S2 => params.b == params.c,
            _ => true,
        }
    }

    /// Spatial part of the map.
    pub fn map_state(&self, s: &State) -> State {
        match self {
            SymmetryId::S1 => State::new(-PI - s.x, -s.y, s.z),
            SymmetryId::S2 => State::new(FRAC_PI_2 - s.y, FRAC_PI_2 - s.x, FRAC_PI_2 - s.z),
            SymmetryId::S3 => State::new(-s.x, s.y, PI - s.z),
        }
    }
}

/// A sampled orbit with strictly increasing sample times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub params: AbcParams,
    samples: Vec<TimePoint>,
}

impl Trajectory {
    pub fn new(params: AbcParams, samples: Vec<TimePoint>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("trajectory needs at least one sample".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidInput(format!(
                    "sample times not strictly increasing at t = {}",
                    w[1].t
                )));
            }
        }
        if samples.iter().any(|p| !p.t.is_finite() || !p.state.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self { params, samples })
    }

    pub(crate) fn from_sorted(params: AbcParams, samples: Vec<TimePoint>) -> Self {
        debug_assert!(samples.windows(2).all(|w| w[1].t > w[0].t));
        Self { params, samples }
    }

    pub fn samples(&self) -> &[TimePoint] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<TimePoint> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &TimePoint {
        &self.samples[0]
    }

    pub fn last(&self) -> &TimePoint {
        &self.samples[self.samples.len() - 1]
    }

    pub fn t_start(&self) -> f64 {
        self.first().t
    }

    pub fn t_end(&self) -> f64 {
        self.last().t
    }

    /// Same orbit with every sample time shifted by `dt`.
    pub fn shift_time(&self, dt: f64) -> Trajectory {
        let samples = self.samples.iter().map(|p| TimePoint { t: p.t + dt, state: p.state }).collect();
        Trajectory::from_sorted(self.params, samples)
    }

    /// Same orbit translated in space.
    pub fn translate(&self, d: [f64; 3]) -> Trajectory {
        let samples = self
            .samples
            .iter()
            .map(|p| TimePoint { t: p.t, state: p.state.offset(d[0], d[1], d[2]) })
            .collect();
        Trajectory::from_sorted(self.params, samples)
    }

    /// Applies a pointwise map to every state, keeping the times.
    pub fn map_states(&self, f: impl Fn(&State) -> State) -> Trajectory {
        let samples = self.samples.iter().map(|p| TimePoint { t: p.t, state: f(&p.state) }).collect();
        Trajectory::from_sorted(self.params, samples)
    }

    /// Time-reversed copy `t -> -t` (samples re-sorted).
    pub fn reverse_time(&self) -> Trajectory {
        let samples = self.samples.iter().rev().map(|p| TimePoint { t: -p.t, state: p.state }).collect();
        Trajectory::from_sorted(self.params, samples)
    }
}

/// Image of `traj` under a symmetry, re-sorted into increasing time.
pub fn apply_symmetry(id: SymmetryId, traj: &Trajectory) -> Trajectory {
    traj.reverse_time().map_states(|s| id.map_state(s))
}
