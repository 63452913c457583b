//! Subcommands. Each resolves its options first (so the recorded config and
//! the output slug are known), then runs and writes its files.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;
use std::str::FromStr;

use abc_orbits::edge::{build_periodic_orbit, find_critical, poincare_fixed_point_check, OrbitType, ShootingProblem};
use abc_orbits::flow::hamiltonian_h;
use abc_orbits::hamiltform::{recover_time, spiral_fixed_point, SpiralConfig};
use abc_orbits::integrate::{integrate, sample_at};
use abc_orbits::perturb::{
    approximate_trajectory, approximation_error, estimate_critical, predicted_exit_cell, quarter_traverse_time,
};
use abc_orbits::scan::{
    kam_scan, linear_fraction, speed_functional, Ensemble, GridSpec, RectRegion, Region, Sampling,
};
use abc_orbits::{AbcParams, CellIndex, IntegratorConfig, State, Trajectory};
use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{F64List, Resolver};
use crate::error::CliError;
use crate::figure::{render, FigureKind};
use crate::output::{read_columns, Cell, Outputs, Table};

macro_rules! simple_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("expected one of {:?}, got {s:?}", [$($text),+])),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(match self { $($name::$variant => $text),+ })
            }
        }
    };
}

simple_enum!(MethodArg { Adaptive => "adaptive", Rk4 => "rk4" });
simple_enum!(EdgeType { A => "A", B => "B" });
simple_enum!(SamplingArg { Grid => "grid", Random => "random" });
simple_enum!(FractionRegion { R => "r", RPrime => "r-prime" });

impl EdgeType {
    fn orbit_type(self) -> OrbitType {
        match self {
            EdgeType::A => OrbitType::TypeA,
            EdgeType::B => OrbitType::TypeB,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn params(r: &mut Resolver, a: Option<f64>, b: Option<f64>, c: Option<f64>, default_a: f64) -> Result<AbcParams, CliError> {
    let p = AbcParams::new(r.value("A", a, default_a)?, r.value("B", b, 1.0)?, r.value("C", c, 1.0)?);
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

fn trajectory_table(tr: &Trajectory) -> Table {
    let mut t = Table::new(&["t", "x", "y", "z"]);
    for p in tr.samples() {
        t.push(vec![p.t.into(), p.state.x.into(), p.state.y.into(), p.state.z.into()]);
    }
    t
}

/// Writes the figure of `table` next to its CSV; an empty table gets none.
fn write_figure(out: &mut Outputs, suffix: &str, kind: FigureKind, table: &Table) -> Result<(), CliError> {
    if table.rows.is_empty() {
        return Ok(());
    }
    out.svg(suffix, &render(kind, &read_columns(&table.to_csv())?)?)?;
    Ok(())
}

fn state_json(s: &State) -> Value {
    json!([s.x, s.y, s.z])
}

// ---------------------------------------------------------------- integrate

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "B")]
    b: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    y0: Option<f64>,
    #[arg(long)]
    z0: Option<f64>,
    /// End time (negative integrates backwards).
    #[arg(long)]
    t: Option<f64>,
    /// adaptive | rk4
    #[arg(long)]
    method: Option<MethodArg>,
    /// Tolerance of the adaptive method.
    #[arg(long)]
    tol: Option<f64>,
    /// RK4 step.
    #[arg(long)]
    h: Option<f64>,
    /// Resample at this spacing instead of writing every step.
    #[arg(long)]
    dt: Option<f64>,
}

pub struct Integrate {
    params: AbcParams,
    s0: State,
    t: f64,
    cfg: IntegratorConfig,
    dt: Option<f64>,
}

impl IntegrateArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Integrate, CliError> {
        let params = params(r, self.a, self.b, self.c, 0.1)?;
        let s0 = State::new(r.value("x0", self.x0, -FRAC_PI_2)?, r.value("y0", self.y0, 0.0)?, r.value("z0", self.z0, 0.0)?);
        let t = r.value("t", self.t, 100.0)?;
        let method = r.value("method", self.method, MethodArg::Adaptive)?;
        let tol = r.value("tol", self.tol, 1e-10)?;
        let h = r.value("h", self.h, 0.01)?;
        let dt = r.optional("dt", self.dt)?;
        if let Some(dt) = dt {
            positive("dt", dt)?;
        }
        let cfg = match method {
            MethodArg::Adaptive => IntegratorConfig::adaptive(tol),
            MethodArg::Rk4 => IntegratorConfig::rk4(positive("h", h)?),
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        if !(t.is_finite() && t != 0.0) || !s0.is_finite() {
            return Err(usage("need a finite initial state and a nonzero finite end time"));
        }
        Ok(Integrate { params, s0, t, cfg, dt })
    }
}

impl Integrate {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let mut tr = integrate(&self.params, &self.s0, (0.0, self.t), &self.cfg)?;
        if let Some(dt) = self.dt {
            let n = (self.t.abs() / dt).floor() as usize;
            let samples = (0..=n)
                .map(|k| {
                    let t = (k as f64 * dt).min(self.t.abs()) * self.t.signum();
                    sample_at(&tr, t).map(|state| abc_orbits::TimePoint { t, state })
                })
                .collect::<abc_orbits::Result<Vec<_>>>()?;
            let mut samples = samples;
            if self.t < 0.0 {
                samples.reverse();
            }
            tr = Trajectory::new(self.params, samples)?;
        }
        let table = trajectory_table(&tr);
        out.csv("", &table)?;
        write_figure(out, "", FigureKind::XyProjection, &table)?;
        let h0 = hamiltonian_h(&self.params, self.s0.x, self.s0.y);
        let end = tr.samples().iter().max_by(|a, b| a.t.abs().total_cmp(&b.t.abs())).expect("nonempty");
        Ok(json!({
            "samples": tr.len(),
            "final_time": end.t,
            "final_state": state_json(&end.state),
            "h_initial": h0,
        }))
    }
}

// ------------------------------------------------------------- spiral-solve

#[derive(Debug, Args)]
pub struct SpiralArgs {
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "B")]
    b: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    /// Fourier mode cutoff.
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Orbit is written for z in [0, z_max].
    #[arg(long)]
    z_max: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

pub struct Spiral {
    params: AbcParams,
    cfg: SpiralConfig,
    z_max: f64,
    samples: usize,
}

impl SpiralArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Spiral, CliError> {
        let params = params(r, self.a, self.b, self.c, 0.01)?;
        let d = SpiralConfig::default();
        let cfg = SpiralConfig {
            modes: r.value("modes", self.modes, d.modes)?,
            tol: r.value("tol", self.tol, d.tol)?,
            max_iter: r.value("max_iter", self.max_iter, d.max_iter)?,
        };
        let z_max = positive("z_max", r.value("z_max", self.z_max, 20.0 * PI)?)?;
        let samples = r.value("samples", self.samples, 1001)?;
        if samples < 2 {
            return Err(usage("samples must be at least 2"));
        }
        Ok(Spiral { params, cfg, z_max, samples })
    }
}

impl Spiral {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let sol = spiral_fixed_point(&self.params, &self.cfg)?;
        let tm = recover_time(&sol, 0.0)?;
        let mut table = Table::new(&["z", "t", "x", "y", "p_hat"]);
        for k in 0..self.samples {
            let z = self.z_max * k as f64 / (self.samples - 1) as f64;
            let s = sol.state_at(z)?;
            table.push(vec![z.into(), tm.time_at(z).into(), s.x.into(), s.y.into(), sol.p_hat_at(z).into()]);
        }
        out.csv("", &table)?;
        write_figure(out, "", FigureKind::Path3d, &table)?;
        let summary = json!({
            "speed": sol.speed,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "contraction_factor": sol.contraction_factor(),
            "sup_x": sol.sup_x(),
            "sup_p_hat": sol.sup_p_hat(),
            "sup_y_hat": sol.sup_y_hat(),
        });
        let mut full = summary.clone();
        full["params"] = serde_json::to_value(self.params).expect("serializable");
        full["contraction_ratios"] = json!(sol.contraction_ratios);
        full["final_step"] = json!(sol.final_step);
        out.json("", &full)?;
        Ok(summary)
    }
}

// --------------------------------------------------------------- edge-shoot

#[derive(Debug, Args)]
pub struct EdgeArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    /// A (diagonal) or B (axis)
    #[arg(long = "type")]
    orbit_type: Option<EdgeType>,
    #[arg(long)]
    bracket_lo: Option<f64>,
    #[arg(long)]
    bracket_hi: Option<f64>,
    /// Periods of the written orbit.
    #[arg(long)]
    periods: Option<usize>,
}

pub struct Edge {
    problem: ShootingProblem,
    periods: usize,
}

impl EdgeArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Edge, CliError> {
        let eps = r.value("epsilon", self.epsilon, 0.1)?;
        let ty = r.value("type", self.orbit_type, EdgeType::A)?.orbit_type();
        let (dlo, dhi) = ty.default_bracket();
        let lo = r.value("bracket_lo", self.bracket_lo, dlo)?;
        let hi = r.value("bracket_hi", self.bracket_hi, dhi)?;
        let periods = r.value("periods", self.periods, 3)?;
        let problem = ShootingProblem::new(eps, ty)
            .and_then(|p| p.with_bracket(lo, hi))
            .map_err(|e| usage(e.to_string()))?;
        Ok(Edge { problem, periods })
    }
}

impl Edge {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let res = find_critical(&self.problem)?;
        let orbit = build_periodic_orbit(&res, &self.problem)?;
        let cfg = IntegratorConfig::default();
        let check = orbit.translation_check(100, &cfg)?;
        let ext = orbit.extend(self.periods.saturating_sub(1), &cfg)?;
        let table = trajectory_table(&ext);
        out.csv("-orbit", &table)?;
        write_figure(out, "-orbit", FigureKind::XyProjection, &table)?;
        let summary = json!({
            "type": if res.orbit_type == OrbitType::TypeA { "A" } else { "B" },
            "epsilon": res.epsilon,
            "a": res.a,
            "t_a": res.t_a,
            "period": orbit.period,
            "translation": orbit.translation,
            "translation_residual": check.translation_residual,
            "z_periodicity": check.z_periodicity,
            "z_amplitude": orbit.z_amplitude(),
            "simultaneity_residual": res.simultaneity_residual,
        });
        let mut full = summary.clone();
        full["bracket_width"] = json!(res.bracket_width);
        full["scan_bracket"] = json!([res.scan_bracket.0, res.scan_bracket.1]);
        full["hit_state"] = state_json(&res.hit_state);
        out.json("", &full)?;
        Ok(summary)
    }
}

// --------------------------------------------------------- perturb-estimate

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    /// Initial height of the boundary orbit started at (-pi/2, 0).
    #[arg(long)]
    z0: Option<f64>,
    /// Also shoot for the exact critical height.
    #[arg(long)]
    shoot: Option<bool>,
    #[arg(long)]
    samples: Option<usize>,
}

pub struct Perturb {
    eps: f64,
    z0: f64,
    shoot: bool,
    samples: usize,
}

impl PerturbArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Perturb, CliError> {
        let eps = r.value("epsilon", self.epsilon, 0.1)?;
        if !(eps > 0.0 && eps <= 0.2) {
            return Err(usage(format!("epsilon must lie in (0, 0.2], got {eps}")));
        }
        let samples = r.value("samples", self.samples, 401)?;
        if samples < 2 {
            return Err(usage("samples must be at least 2"));
        }
        Ok(Perturb { eps, z0: r.value("z0", self.z0, 0.0)?, shoot: r.value("shoot", self.shoot, true)?, samples })
    }
}

impl Perturb {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let est = estimate_critical(self.eps)?;
        let tq = quarter_traverse_time(self.eps, self.z0)?;
        let err = approximation_error(self.eps, self.z0, tq)?;
        let approx = approximate_trajectory(self.eps, self.z0, tq)?;
        let params = AbcParams::unit(self.eps);
        let direct = integrate(&params, &State::new(-FRAC_PI_2, 0.0, self.z0), (0.0, tq), &IntegratorConfig::adaptive(1e-12))?;
        let mut table = Table::new(&["t", "x", "y", "z", "x_direct", "y_direct", "z_direct"]);
        let t_end = approx.t_end().min(direct.t_end());
        for k in 0..self.samples {
            let t = t_end * (k as f64 / (self.samples - 1) as f64);
            let a = sample_at(&approx, t)?;
            let d = sample_at(&direct, t)?;
            table.push(vec![t.into(), a.x.into(), a.y.into(), a.z.into(), d.x.into(), d.y.into(), d.z.into()]);
        }
        out.csv("", &table)?;
        let shot = if self.shoot {
            Some(find_critical(&ShootingProblem::new(self.eps, OrbitType::TypeA)?)?.a)
        } else {
            None
        };
        let exit = predicted_exit_cell(self.z0, 0.1).map(|c| json!([c.i, c.j]));
        let summary = json!({
            "epsilon": self.eps,
            "a_est": est.a_est,
            "t_a_est": est.t_a_est,
            "system_residual": est.system_residual,
            "a_shooting": shot,
            "estimate_gap": shot.map(|a| (a - est.a_est).abs()),
            "quarter_traverse_time": tq,
            "approximation_error": err,
            "predicted_exit_cell": exit,
        });
        out.json("", &summary)?;
        Ok(summary)
    }
}

// ----------------------------------------------------------------- kam-scan

#[derive(Debug, Args)]
pub struct KamArgs {
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "B")]
    b: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    z0: Option<f64>,
    /// Points per side; the scan uses grid^2 points.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    cell_i: Option<i64>,
    #[arg(long)]
    cell_j: Option<i64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// grid | random
    #[arg(long)]
    sampling: Option<SamplingArg>,
    #[arg(long)]
    seed: Option<u64>,
}

pub struct Kam {
    params: AbcParams,
    cell: CellIndex,
    z0: f64,
    grid: GridSpec,
    horizon: f64,
}

fn sampling(kind: SamplingArg, seed: u64) -> Sampling {
    match kind {
        SamplingArg::Grid => Sampling::Grid,
        SamplingArg::Random => Sampling::Random { seed },
    }
}

impl KamArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Kam, CliError> {
        let params = params(r, self.a, self.b, self.c, 0.05)?;
        let z0 = r.value("z0", self.z0, 0.0)?;
        let side = r.value("grid", self.grid, 200)?;
        let cell = CellIndex::new(r.value("cell_i", self.cell_i, 0)?, r.value("cell_j", self.cell_j, 0)?);
        let horizon = positive("horizon", r.value("horizon", self.horizon, 50.0)?)?;
        let kind = r.value("sampling", self.sampling, SamplingArg::Grid)?;
        let seed = r.value("seed", self.seed, 0)?;
        let grid = GridSpec::new(Region::Cell(cell), side * side, sampling(kind, seed)).map_err(|e| usage(e.to_string()))?;
        Ok(Kam { params, cell, z0, grid, horizon })
    }
}

impl Kam {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let m = kam_scan(&self.params, self.cell, self.z0, &self.grid, self.horizon)?;
        let mut table = Table::new(&["index", "x", "y", "trapped", "exit_time"]);
        for (k, &(x, y)) in m.points.iter().enumerate() {
            table.push(vec![k.into(), x.into(), y.into(), m.trapped[k].into(), m.exit_times[k].into()]);
        }
        out.csv("", &table)?;
        write_figure(out, "", FigureKind::Mask, &table)?;
        let summary = json!({
            "trapped_fraction": m.trapped_fraction,
            "points": m.points.len(),
            "reverified": m.diagnostics.reverified,
            "flipped": m.diagnostics.flipped,
            "undetermined": m.diagnostics.undetermined.len(),
        });
        let mut full = summary.clone();
        full["undetermined_indices"] = json!(m.diagnostics.undetermined);
        out.json("", &full)?;
        Ok(summary)
    }
}

// ----------------------------------------------------------- fraction-sweep

#[derive(Debug, Args)]
pub struct FractionArgs {
    /// r (rectangles R(r) around the axis orbit) | r-prime (fixed rectangle)
    #[arg(long)]
    region: Option<FractionRegion>,
    /// Comma-separated forcing amplitudes.
    #[arg(long)]
    epsilons: Option<F64List>,
    /// Comma-separated rectangle scales (region r only).
    #[arg(long)]
    r: Option<F64List>,
    /// Points per rectangle.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Centre height of R(r); by default the axis-orbit critical height.
    #[arg(long)]
    a_c: Option<f64>,
}

pub struct Fraction {
    region: FractionRegion,
    epsilons: Vec<f64>,
    rs: Vec<f64>,
    n: usize,
    horizon: f64,
    a_c: Option<f64>,
}

impl FractionArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Fraction, CliError> {
        let region = r.value("region", self.region, FractionRegion::R)?;
        let default_eps = match region {
            FractionRegion::R => F64List(vec![0.1]),
            FractionRegion::RPrime => F64List(vec![0.05, 0.1, 0.2, 0.3]),
        };
        let epsilons = r.value("epsilons", self.epsilons, default_eps)?.0;
        let rs = r.value("r", self.r, F64List(vec![0.2, 0.4, 0.6, 0.8, 1.0]))?.0;
        let default_n = if region == FractionRegion::R { 400 } else { 1000 };
        let n = r.value("n", self.n, default_n)?;
        let horizon = positive("horizon", r.value("horizon", self.horizon, 50.0)?)?;
        let a_c = r.optional("a_c", self.a_c)?;
        if n == 0 || epsilons.iter().any(|e| !(*e > 0.0)) || rs.iter().any(|v| !(*v > 0.0)) {
            return Err(usage("n, epsilons and r must be positive"));
        }
        Ok(Fraction { region, epsilons, rs, n, horizon, a_c })
    }
}

impl Fraction {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let mut table = Table::new(&["series", "param", "epsilon", "r", "a_c", "fraction", "n_points", "ballistic"]);
        let mut rows = Vec::new();
        match self.region {
            FractionRegion::R => {
                for (s, &eps) in self.epsilons.iter().enumerate() {
                    let a_c = match self.a_c {
                        Some(a) => a,
                        None => find_critical(&ShootingProblem::new(eps, OrbitType::TypeB)?)?.a,
                    };
                    for &r in &self.rs {
                        let f = linear_fraction(eps, &RectRegion::r_of(r, a_c), self.n, self.horizon)?;
                        table.push(vec![
                            s.into(),
                            r.into(),
                            eps.into(),
                            r.into(),
                            a_c.into(),
                            f.fraction.into(),
                            f.n_points.into(),
                            f.ballistic.into(),
                        ]);
                        rows.push(json!({ "epsilon": eps, "r": r, "a_c": a_c, "fraction": f.fraction }));
                    }
                }
            }
            FractionRegion::RPrime => {
                for &eps in &self.epsilons {
                    let f = linear_fraction(eps, &RectRegion::r_prime(), self.n, self.horizon)?;
                    table.push(vec![
                        0usize.into(),
                        eps.into(),
                        eps.into(),
                        Cell::Empty,
                        Cell::Empty,
                        f.fraction.into(),
                        f.n_points.into(),
                        f.ballistic.into(),
                    ]);
                    rows.push(json!({ "epsilon": eps, "fraction": f.fraction }));
                }
            }
        }
        out.csv("", &table)?;
        write_figure(out, "", FigureKind::FractionCurve, &table)?;
        let summary = json!({ "fractions": rows });
        out.json("", &summary)?;
        Ok(summary)
    }
}

// ----------------------------------------------------------------- poincare

#[derive(Debug, Args)]
pub struct PoincareArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    /// Edge orbit whose critical height anchors the offsets.
    #[arg(long = "type")]
    orbit_type: Option<EdgeType>,
    /// Comma-separated height offsets from the critical height.
    #[arg(long)]
    offsets: Option<F64List>,
    #[arg(long)]
    t: Option<f64>,
}

pub struct Poincare {
    problem: ShootingProblem,
    offsets: Vec<f64>,
    t: f64,
}

impl PoincareArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Poincare, CliError> {
        let eps = r.value("epsilon", self.epsilon, 0.1)?;
        let ty = r.value("type", self.orbit_type, EdgeType::B)?.orbit_type();
        let offsets = r.value("offsets", self.offsets, F64List(vec![0.0, 0.05, 0.15, 0.3, -0.05]))?.0;
        let t = positive("t", r.value("t", self.t, 2000.0)?)?;
        let problem = ShootingProblem::new(eps, ty).map_err(|e| usage(e.to_string()))?;
        Ok(Poincare { problem, offsets, t })
    }
}

impl Poincare {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let res = find_critical(&self.problem)?;
        let orbit = build_periodic_orbit(&res, &self.problem)?;
        let sections = poincare_fixed_point_check(&orbit, &self.offsets, self.t, &IntegratorConfig::default())?;
        let mut table =
            Table::new(&["orbit", "offset", "t", "x", "y", "z", "y_wrapped", "z_wrapped", "rising"]);
        let mut per_orbit = Vec::new();
        for (k, (sec, off)) in sections.iter().zip(&self.offsets).enumerate() {
            for p in &sec.points {
                table.push(vec![
                    k.into(),
                    (*off).into(),
                    p.t.into(),
                    p.x.into(),
                    p.y.into(),
                    p.z.into(),
                    p.y_wrapped.into(),
                    p.z_wrapped.into(),
                    p.rising.into(),
                ]);
            }
            per_orbit.push(json!({
                "offset": off,
                "points": sec.len(),
                "spread": sec.spread(),
                "z_extent": sec.z_extent().map(|(lo, hi)| json!([lo, hi])),
            }));
        }
        out.csv("", &table)?;
        write_figure(out, "", FigureKind::Poincare, &table)?;
        let summary = json!({ "a": res.a, "t_a": res.t_a, "orbits": per_orbit });
        out.json("", &summary)?;
        Ok(summary)
    }
}

// ----------------------------------------------------------- speed-estimate

#[derive(Debug, Args)]
pub struct SpeedArgs {
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "B")]
    b: Option<f64>,
    #[arg(long = "C")]
    c: Option<f64>,
    /// Direction as three comma-separated components; normalized.
    #[arg(long)]
    p: Option<F64List>,
    /// Ensemble points per side of the centre cell.
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated initial heights of the ensemble.
    #[arg(long)]
    z0s: Option<F64List>,
    #[arg(long)]
    t: Option<f64>,
}

pub struct Speed {
    params: AbcParams,
    p: [f64; 3],
    ensemble: Ensemble,
    t: f64,
}

impl SpeedArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Speed, CliError> {
        let params = params(r, self.a, self.b, self.c, 0.1)?;
        let p = r.value("p", self.p, F64List(vec![0.0, 0.0, 1.0]))?.0;
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if p.len() != 3 || !(norm > 0.0 && norm.is_finite()) {
            return Err(usage("p needs three components, not all zero"));
        }
        let p = [p[0] / norm, p[1] / norm, p[2] / norm];
        let side = r.value("grid", self.grid, 6)?;
        let z0s = r.value("z0s", self.z0s, F64List(vec![0.0, PI]))?.0;
        let t = positive("t", r.value("t", self.t, 200.0)?)?;
        let grid = GridSpec::new(Region::Cell(CellIndex::new(0, 0)), side * side, Sampling::Grid)
            .map_err(|e| usage(e.to_string()))?;
        Ok(Speed { params, p, ensemble: Ensemble { grid, z0s }, t })
    }
}

impl Speed {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let s = speed_functional(&self.params, self.p, &self.ensemble, self.t, &IntegratorConfig::default())?;
        let summary = serde_json::to_value(&s).expect("serializable");
        out.json("", &summary)?;
        Ok(json!({ "best": s.best, "candidates_evaluated": s.candidates_evaluated, "failed": s.failed }))
    }
}

// ------------------------------------------------------------------- figure

#[derive(Debug, Args)]
pub struct FigureArgs {
    /// xy-projection | 3d-path | mask | poincare | fraction-curve
    #[arg(long)]
    kind: Option<FigureKind>,
    /// CSV produced by another subcommand.
    #[arg(long)]
    input: Option<PathBuf>,
}

pub struct Figure {
    kind: FigureKind,
    input: PathBuf,
}

impl FigureArgs {
    pub fn resolve(self, r: &mut Resolver) -> Result<Figure, CliError> {
        let kind = r.value("kind", self.kind, FigureKind::XyProjection)?;
        let input: String = r
            .optional("input", self.input.map(|p| p.to_string_lossy().into_owned()))?
            .ok_or_else(|| usage("figure needs --input"))?;
        Ok(Figure { kind, input: PathBuf::from(input) })
    }
}

impl Figure {
    pub fn run(&self, out: &mut Outputs) -> Result<Value, CliError> {
        let text = std::fs::read_to_string(&self.input)
            .map_err(|e| usage(format!("cannot read {}: {e}", self.input.display())))?;
        let svg = render(self.kind, &read_columns(&text)?)?;
        out.svg("", &svg)?;
        Ok(json!({ "bytes": svg.len() }))
    }
}
