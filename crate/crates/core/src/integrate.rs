//! Trajectory integration: Dormand-Prince 5(4) with step control on both the
//! local error and the cubic Hermite dense output, fixed-step RK4 for bulk
//! sweeps, and plane-crossing events refined to near machine precision.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{hamiltonian_h, velocity_arr, AbcParams, State, TimePoint, Trajectory};

/// Steps shorter than this abort an adaptive integration.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Classical RK4 with step `initial_step`.
    FixedRk4,
    /// Dormand-Prince 5(4) with error-per-step control.
    AdaptiveDopri5,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Longest time span a single call may cover.
    pub max_time: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::adaptive(1e-10)
    }
}

impl IntegratorConfig {
    /// Adaptive DOPRI5 with `abs_tol = rel_tol = tol`.
    pub fn adaptive(tol: f64) -> Self {
        Self {
            method: Method::AdaptiveDopri5,
            abs_tol: tol,
            rel_tol: tol,
            initial_step: 1e-2,
            max_step: 0.1,
            max_time: 1e6,
        }
    }

    /// Fixed-step RK4 with step `h`.
    pub fn rk4(h: f64) -> Self {
        Self {
            method: Method::FixedRk4,
            abs_tol: 1e-2,
            rel_tol: 1e-2,
            initial_step: h,
            max_step: h,
            max_time: 1e6,
        }
    }

    pub fn with_max_time(mut self, max_time: f64) -> Self {
        self.max_time = max_time;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let tol_ok = |v: f64| v > 0.0 && v <= 1e-2;
        if !tol_ok(self.abs_tol) || !tol_ok(self.rel_tol) {
            return Err(Error::InvalidInput(format!(
                "tolerances must lie in (0, 1e-2], got abs {} rel {}",
                self.abs_tol, self.rel_tol
            )));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::InvalidInput("max_time must be positive".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::InvalidInput("initial_step must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidInput("max_step must be positive".into()));
        }
        Ok(())
    }
}

/// Autonomous vector field on `R^N`.
pub trait VectorField<const N: usize> {
    fn eval(&self, y: &[f64; N]) -> [f64; N];
}

impl VectorField<3> for AbcParams {
    #[inline]
    fn eval(&self, y: &[f64; 3]) -> [f64; 3] {
        velocity_arr(self, y)
    }
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F>(pub F);

impl<const N: usize, F: Fn(&[f64; N]) -> [f64; N]> VectorField<N> for FnField<F> {
    #[inline]
    fn eval(&self, y: &[f64; N]) -> [f64; N] {
        (self.0)(y)
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        let hc = h * c;
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

pub(crate) fn rk4_step<const N: usize, F: VectorField<N>>(f: &F, y: &[f64; N], k1: &[f64; N], h: f64) -> [f64; N] {
    let k2 = f.eval(&axpy(y, 0.5 * h, &[(1.0, k1)]));
    let k3 = f.eval(&axpy(y, 0.5 * h, &[(1.0, &k2)]));
    let k4 = f.eval(&axpy(y, h, &[(1.0, &k3)]));
    axpy(y, h / 6.0, &[(1.0, k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)])
}

struct DopriOut<const N: usize> {
    y: [f64; N],
    k7: [f64; N],
    err: [f64; N],
    /// Quartic dense-output correction; the Hermite midpoint error is `herm / 16`.
    herm: [f64; N],
}

mod dp {
    pub const A21: f64 = 1.0 / 5.0;
    pub const A31: f64 = 3.0 / 40.0;
    pub const A32: f64 = 9.0 / 40.0;
    pub const A41: f64 = 44.0 / 45.0;
    pub const A42: f64 = -56.0 / 15.0;
    pub const A43: f64 = 32.0 / 9.0;
    pub const A51: f64 = 19372.0 / 6561.0;
    pub const A52: f64 = -25360.0 / 2187.0;
    pub const A53: f64 = 64448.0 / 6561.0;
    pub const A54: f64 = -212.0 / 729.0;
    pub const A61: f64 = 9017.0 / 3168.0;
    pub const A62: f64 = -355.0 / 33.0;
    pub const A63: f64 = 46732.0 / 5247.0;
    pub const A64: f64 = 49.0 / 176.0;
    pub const A65: f64 = -5103.0 / 18656.0;
    pub const A71: f64 = 35.0 / 384.0;
    pub const A73: f64 = 500.0 / 1113.0;
    pub const A74: f64 = 125.0 / 192.0;
    pub const A75: f64 = -2187.0 / 6784.0;
    pub const A76: f64 = 11.0 / 84.0;
    pub const E1: f64 = 71.0 / 57600.0;
    pub const E3: f64 = -71.0 / 16695.0;
    pub const E4: f64 = 71.0 / 1920.0;
    pub const E5: f64 = -17253.0 / 339200.0;
    pub const E6: f64 = 22.0 / 525.0;
    pub const E7: f64 = -1.0 / 40.0;
    pub const D1: f64 = -12715105075.0 / 11282082432.0;
    pub const D3: f64 = 87487479700.0 / 32700410799.0;
    pub const D4: f64 = -10690763975.0 / 1880347072.0;
    pub const D5: f64 = 701980252875.0 / 199316789632.0;
    pub const D6: f64 = -1453857185.0 / 822651844.0;
    pub const D7: f64 = 69997945.0 / 29380423.0;
}

fn dopri_step<const N: usize, F: VectorField<N>>(f: &F, y: &[f64; N], k1: &[f64; N], h: f64) -> DopriOut<N> {
    use dp::*;
    let k2 = f.eval(&axpy(y, h, &[(A21, k1)]));
    let k3 = f.eval(&axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f.eval(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f.eval(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f.eval(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y5 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f.eval(&y5);
    let mut err = [0.0; N];
    let mut herm = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        herm[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    DopriOut { y: y5, k7, err, herm }
}

/// Cubic Hermite interpolation between `(y0, v0)` at `theta = 0` and
/// `(y1, v1)` at `theta = 1`; `h` is the step length.
#[inline]
pub fn hermite<const N: usize>(y0: &[f64; N], v0: &[f64; N], y1: &[f64; N], v1: &[f64; N], h: f64, theta: f64) -> [f64; N] {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * v0[i] + h01 * y1[i] + h11 * h * v1[i];
    }
    out
}

/// One accepted step, with the field evaluated at both ends.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub y0: [f64; N],
    pub v0: [f64; N],
    pub t1: f64,
    pub y1: [f64; N],
    pub v1: [f64; N],
}

impl<const N: usize> Step<N> {
    /// Dense output at time `t` within the step.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        hermite(&self.y0, &self.v0, &self.y1, &self.v1, h, (t - self.t0) / h)
    }
}

/// Incremental integrator from `t0` towards `t_end` (either direction).
pub struct OdeStepper<const N: usize, F: VectorField<N>> {
    field: F,
    cfg: IntegratorConfig,
    t0: f64,
    t: f64,
    y: [f64; N],
    v: [f64; N],
    h: f64,
    dir: f64,
    t_end: f64,
    n_steps: u64,
}

/// Stepper for the ABC flow.
pub type Stepper = OdeStepper<3, AbcParams>;

impl<const N: usize, F: VectorField<N>> OdeStepper<N, F> {
    pub fn new(field: F, y0: [f64; N], t0: f64, t_end: f64, cfg: &IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        if !t0.is_finite() || !t_end.is_finite() || t_end == t0 {
            return Err(Error::InvalidInput(format!("empty or non-finite span ({t0}, {t_end})")));
        }
        let span = (t_end - t0).abs();
        if span > cfg.max_time {
            return Err(Error::MaxTimeExceeded { span, max_time: cfg.max_time });
        }
        if y0.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite initial state".into()));
        }
        let dir = (t_end - t0).signum();
        let v = field.eval(&y0);
        let h = match cfg.method {
            Method::FixedRk4 => cfg.initial_step,
            Method::AdaptiveDopri5 => cfg.initial_step.min(cfg.max_step),
        };
        Ok(Self { field, cfg: *cfg, t0, t: t0, y: y0, v, h, dir, t_end, n_steps: 0 })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn field(&self) -> &F {
        &self.field
    }

    pub fn is_done(&self) -> bool {
        self.t == self.t_end
    }

    /// Advances by one accepted step; `None` once `t_end` has been reached.
    pub fn step(&mut self) -> Result<Option<Step<N>>> {
        if self.is_done() {
            return Ok(None);
        }
        let (t1, y1, v1) = match self.cfg.method {
            Method::FixedRk4 => self.rk4_advance(),
            Method::AdaptiveDopri5 => self.dopri_advance()?,
        };
        if y1.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { t: t1 });
        }
        let step = Step { t0: self.t, y0: self.y, v0: self.v, t1, y1, v1 };
        self.t = t1;
        self.y = y1;
        self.v = v1;
        Ok(Some(step))
    }

    fn rk4_advance(&mut self) -> (f64, [f64; N], [f64; N]) {
        // Grid times are t0 + k h so long sweeps do not accumulate drift.
        self.n_steps += 1;
        let mut t1 = self.t0 + self.dir * self.h * self.n_steps as f64;
        if (t1 - self.t_end) * self.dir > -1e-9 * self.h {
            t1 = self.t_end;
        }
        let y1 = rk4_step(&self.field, &self.y, &self.v, t1 - self.t);
        let v1 = self.field.eval(&y1);
        (t1, y1, v1)
    }

    fn dopri_advance(&mut self) -> Result<(f64, [f64; N], [f64; N])> {
        let cfg = self.cfg;
        loop {
            let remaining = (self.t_end - self.t).abs();
            let mut h = self.h.min(cfg.max_step);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h < MIN_STEP && !last {
                return Err(Error::StepUnderflow { t: self.t, min: MIN_STEP });
            }
            let out = dopri_step(&self.field, &self.y, &self.v, self.dir * h);
            let mut err = 0.0f64;
            let mut herm = 0.0f64;
            for i in 0..N {
                let sc = cfg.abs_tol + cfg.rel_tol * self.y[i].abs().max(out.y[i].abs());
                err = err.max(out.err[i].abs() / sc);
                herm = herm.max(out.herm[i].abs() / (16.0 * cfg.abs_tol));
            }
            if !err.is_finite() || !herm.is_finite() {
                err = 1e10;
                herm = 1e10;
            }
            let fac_err = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
            let fac_herm = if herm > 0.0 { 0.9 * herm.powf(-0.25) } else { 5.0 };
            let fac = fac_err.min(fac_herm).clamp(0.2, 5.0);
            if err <= 1.0 && herm <= 1.0 {
                if !last || h >= self.h * 0.5 {
                    self.h = (h * fac).min(cfg.max_step);
                }
                let t1 = if last { self.t_end } else { self.t + self.dir * h };
                return Ok((t1, out.y, out.k7));
            }
            self.h = h * fac.min(0.9);
            if self.h < MIN_STEP {
                return Err(Error::StepUnderflow { t: self.t, min: MIN_STEP });
            }
        }
    }

    /// Exact (single, uncontrolled) step of the configured method from the
    /// left end of `step`; used to polish event times.
    pub fn restep(&self, step: &Step<N>, t: f64) -> [f64; N] {
        let h = t - step.t0;
        if h == 0.0 {
            return step.y0;
        }
        match self.cfg.method {
            Method::FixedRk4 => rk4_step(&self.field, &step.y0, &step.v0, h),
            Method::AdaptiveDopri5 => dopri_step(&self.field, &step.y0, &step.v0, h).y,
        }
    }
}

/// Scalar functionals available as event surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventFunctional {
    Z,
    XPlusY,
    X,
    Y,
    /// The stream function `B cos x + C sin y`.
    H,
}

impl EventFunctional {
    pub fn value(&self, params: &AbcParams, s: &[f64; 3]) -> f64 {
        match self {
            EventFunctional::Z => s[2],
            EventFunctional::XPlusY => s[0] + s[1],
            EventFunctional::X => s[0],
            EventFunctional::Y => s[1],
            EventFunctional::H => hamiltonian_h(params, s[0], s[1]),
        }
    }

    pub fn gradient(&self, params: &AbcParams, s: &[f64; 3]) -> [f64; 3] {
        match self {
            EventFunctional::Z => [0.0, 0.0, 1.0],
            EventFunctional::XPlusY => [1.0, 1.0, 0.0],
            EventFunctional::X => [1.0, 0.0, 0.0],
            EventFunctional::Y => [0.0, 1.0, 0.0],
            EventFunctional::H => [-params.b * s[0].sin(), params.c * s[1].cos(), 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

/// Fires when `functional - target` changes sign in `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventSpec {
    pub functional: EventFunctional,
    pub target: f64,
    pub direction: Direction,
}

impl EventSpec {
    pub fn new(functional: EventFunctional, target: f64, direction: Direction) -> Self {
        Self { functional, target, direction }
    }

    pub fn g(&self, params: &AbcParams, s: &[f64; 3]) -> f64 {
        self.functional.value(params, s) - self.target
    }

    fn triggered(&self, g0: f64, g1: f64) -> bool {
        let rising = g0 < 0.0 && g1 >= 0.0;
        let falling = g0 > 0.0 && g1 <= 0.0;
        match self.direction {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Either => rising || falling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventHit {
    pub time: f64,
    pub state: State,
    pub event_index: usize,
}

/// Bisection on the dense output below this functional value.
const BISECT_TOL: f64 = 1e-12;

/// Finds the crossing of `spec` inside `step`, if it fires there. The hit is
/// bisected on the Hermite interpolant, then polished by Newton iterations
/// that re-step exactly from the left end of the step.
pub fn locate_event(stepper: &Stepper, step: &Step<3>, spec: &EventSpec, event_index: usize) -> Option<EventHit> {
    let p = stepper.field();
    let g0 = spec.g(p, &step.y0);
    let g1 = spec.g(p, &step.y1);
    if !spec.triggered(g0, g1) {
        return None;
    }
    let (mut lo, mut hi) = (step.t0, step.t1);
    let mut glo = g0;
    let mut t_star = step.t1;
    if g1 != 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let gm = spec.g(p, &step.interpolate(mid));
            t_star = mid;
            if gm.abs() < BISECT_TOL || (hi - lo).abs() < 1e-15 * (1.0 + mid.abs()) {
                break;
            }
            if (gm < 0.0) == (glo < 0.0) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
    }
    let mut y = stepper.restep(step, t_star);
    for _ in 0..4 {
        let g = spec.g(p, &y);
        let grad = spec.functional.gradient(p, &y);
        let v = p.eval(&y);
        let dg = grad[0] * v[0] + grad[1] * v[1] + grad[2] * v[2];
        if g == 0.0 || dg == 0.0 || !dg.is_finite() {
            break;
        }
        let t_new = t_star - g / dg;
        let span = step.t1 - step.t0;
        if ((t_new - step.t0) / span) < -0.5 || ((t_new - step.t0) / span) > 1.5 {
            break;
        }
        let y_new = stepper.restep(step, t_new);
        if spec.g(p, &y_new).abs() >= g.abs() {
            break;
        }
        t_star = t_new;
        y = y_new;
    }
    Some(EventHit { time: t_star, state: State::from_array(y), event_index })
}

fn push_sample(samples: &mut Vec<TimePoint>, t: f64, y: &[f64; 3]) {
    samples.push(TimePoint { t, state: State::from_array(*y) });
}

/// Integrates over `t_span`. A decreasing span integrates backwards; samples
/// are always returned in increasing time and include both endpoints.
pub fn integrate(params: &AbcParams, s0: &State, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory> {
    let mut st = Stepper::new(*params, s0.to_array(), t_span.0, t_span.1, cfg)?;
    let mut samples = Vec::new();
    push_sample(&mut samples, t_span.0, &s0.to_array());
    while let Some(step) = st.step()? {
        push_sample(&mut samples, step.t1, &step.y1);
    }
    if t_span.1 < t_span.0 {
        samples.reverse();
    }
    Ok(Trajectory::from_sorted(*params, samples))
}

/// Final state only, without keeping samples.
pub fn integrate_to(params: &AbcParams, s0: &State, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<State> {
    let mut st = Stepper::new(*params, s0.to_array(), t_span.0, t_span.1, cfg)?;
    while st.step()?.is_some() {}
    Ok(State::from_array(*st.y()))
}

/// Integrates forward from `t = 0` until the first event of `events` fires,
/// or `cfg.max_time` elapses.
pub fn integrate_until_event(
    params: &AbcParams,
    s0: &State,
    events: &[EventSpec],
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, EventHit)> {
    if events.is_empty() {
        return Err(Error::InvalidInput("need at least one event".into()));
    }
    let mut st = Stepper::new(*params, s0.to_array(), 0.0, cfg.max_time, cfg)?;
    let mut samples = Vec::new();
    push_sample(&mut samples, 0.0, &s0.to_array());
    while let Some(step) = st.step()? {
        let hit = events
            .iter()
            .enumerate()
            .filter_map(|(k, e)| locate_event(&st, &step, e, k))
            .min_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(hit) = hit {
            if hit.time > samples[samples.len() - 1].t {
                push_sample(&mut samples, hit.time, &hit.state.to_array());
            }
            return Ok((Trajectory::from_sorted(*params, samples), hit));
        }
        push_sample(&mut samples, step.t1, &step.y1);
    }
    Err(Error::NoEventBeforeMaxTime { max_time: cfg.max_time })
}

/// Cubic Hermite interpolation of a trajectory at time `t`.
pub fn sample_at(traj: &Trajectory, t: f64) -> Result<State> {
    let s = traj.samples();
    let (start, end) = (traj.t_start(), traj.t_end());
    if !(t >= start && t <= end) {
        return Err(Error::OutOfRange { t, start, end });
    }
    let k = s.partition_point(|p| p.t <= t);
    if k > 0 && s[k - 1].t == t {
        return Ok(s[k - 1].state);
    }
    let (a, b) = (&s[k - 1], &s[k]);
    let ya = a.state.to_array();
    let yb = b.state.to_array();
    let va = velocity_arr(&traj.params, &ya);
    let vb = velocity_arr(&traj.params, &yb);
    let h = b.t - a.t;
    Ok(State::from_array(hermite(&ya, &va, &yb, &vb, h, (t - a.t) / h)))
}

/// Largest deviation between the sampled orbit's derivative (from a local
/// Lagrange interpolant through up to 9 neighbouring samples) and the field.
pub fn ode_residual(traj: &Trajectory) -> f64 {
    const STENCIL: usize = 9;
    let s = traj.samples();
    let n = s.len();
    if n < 3 {
        return 0.0;
    }
    let m = STENCIL.min(n);
    let mut worst = 0.0f64;
    for c in 0..n {
        let lo = c.saturating_sub(m / 2).min(n - m);
        let nodes = &s[lo..lo + m];
        let ci = c - lo;
        let tc = nodes[ci].t;
        let mut d = [0.0f64; 3];
        for (k, pk) in nodes.iter().enumerate() {
            let w = if k == ci {
                nodes.iter().enumerate().filter(|(q, _)| *q != ci).map(|(_, pq)| 1.0 / (tc - pq.t)).sum::<f64>()
            } else {
                let mut num = 1.0;
                let mut den = 1.0;
                for (q, pq) in nodes.iter().enumerate() {
                    if q != k {
                        den *= pk.t - pq.t;
                        if q != ci {
                            num *= tc - pq.t;
                        }
                    }
                }
                num / den
            };
            let y = pk.state.to_array();
            for i in 0..3 {
                d[i] += w * y[i];
            }
        }
        let v = velocity_arr(&traj.params, &nodes[ci].state.to_array());
        for i in 0..3 {
            worst = worst.max((d[i] - v[i]).abs());
        }
    }
    worst
}

/// Integrates a general autonomous system to `t_end` and returns the final state.
pub fn solve_autonomous<const N: usize, F: Fn(&[f64; N]) -> [f64; N]>(
    f: F,
    y0: [f64; N],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<[f64; N]> {
    if t_end == 0.0 {
        return Ok(y0);
    }
    let mut st = OdeStepper::new(FnField(f), y0, 0.0, t_end, cfg)?;
    while st.step()?.is_some() {}
    Ok(*st.y())
}
