//! Semi-implicit time integration of the diffusive SIR system.
//!
//! One step solves two M-matrix systems in sequence:
//!
//! ```text
//! (Id + dt·L_S + dt·diag(α Iⁿ)) Sⁿ⁺¹ = Sⁿ
//! (Id + dt·L_I + dt·diag(μ))    Iⁿ⁺¹ = Iⁿ + dt·α Sⁿ⁺¹ Iⁿ
//! ```
//!
//! where `L_S`, `L_I` are the zero-potential diffusion operators. Both
//! solutions stay non-negative and, summing over cells, the total mass obeys
//! `∫(Sⁿ⁺¹ + Iⁿ⁺¹) = ∫(Sⁿ + Iⁿ) − dt ∫ μ Iⁿ⁺¹` exactly.

use std::sync::Arc;

use crate::elliptic::diffusion_stencil;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::linalg::{Stencil, SymMatrix, TridiagonalLu};
use crate::ode::OdeParams;
use crate::scenario::{DiffusionField, Scenario};

#[derive(Debug, Clone)]
pub struct PdeState {
    pub t: f64,
    pub s: ScalarField,
    pub i: ScalarField,
}

impl PdeState {
    pub fn initial(sc: &Scenario) -> Self {
        Self {
            t: 0.0,
            s: sc.s0.clone(),
            i: sc.i0.clone(),
        }
    }

    /// `∫(S + I)`.
    pub fn mass(&self) -> f64 {
        self.s.integrate() + self.i.integrate()
    }
}

enum Solver {
    Tridiagonal(TridiagonalLu),
    Iterative(SymMatrix),
}

impl Solver {
    fn new(m: SymMatrix) -> Result<Self> {
        if m.stencil().is_tridiagonal() {
            Ok(Solver::Tridiagonal(TridiagonalLu::factor(&m)?))
        } else {
            Ok(Solver::Iterative(m))
        }
    }

    fn solve(&self, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        match self {
            Solver::Tridiagonal(lu) => lu.solve(b),
            Solver::Iterative(m) => m.solve(b, Some(x0), true),
        }
    }
}

/// Fixed-step integrator for one scenario. The infected system matrix does
/// not change between steps and is factored once.
pub struct Stepper {
    grid: Arc<Grid>,
    dt: f64,
    alpha: Vec<f64>,
    stencil_s: Arc<Stencil>,
    rows_s: Vec<f64>,
    solver_i: Solver,
}

impl Stepper {
    pub fn new(sc: &Scenario, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        let stencil_s = diffusion_stencil(&sc.a_s);
        let rows_s = stencil_s.row_sums();
        let stencil_i = diffusion_stencil(&sc.a_i);
        let diag_i = stencil_i
            .row_sums()
            .iter()
            .zip(sc.mu.values())
            .map(|(r, m)| 1.0 + dt * (r + m))
            .collect();
        let solver_i = Solver::new(SymMatrix::new(stencil_i, diag_i, dt))?;
        Ok(Self {
            grid: sc.grid().clone(),
            dt,
            alpha: sc.alpha.values().to_vec(),
            stencil_s,
            rows_s,
            solver_i,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Rate `|Δ mean S| / dt` that rounding in one S solve can produce on
    /// its own: a few ulps of `S`, amplified by `1 + dt ‖L_S‖∞`.
    pub fn rounding_rate(&self, s_scale: f64) -> f64 {
        let norm = 2.0 * self.rows_s.iter().copied().fold(0.0, f64::max);
        4.0 * f64::EPSILON * (1.0 + self.dt * norm) * s_scale / self.dt
    }

    pub fn stencil_s(&self) -> &Arc<Stencil> {
        &self.stencil_s
    }

    pub fn step(&self, state: &PdeState) -> Result<PdeState> {
        state.s.check_same_grid(&state.i)?;
        if **state.s.grid() != *self.grid {
            return Err(Error::GridMismatch("state and scenario grids differ".into()));
        }
        let dt = self.dt;
        let (s, i) = (state.s.values(), state.i.values());
        let diag_s = self
            .rows_s
            .iter()
            .zip(&self.alpha)
            .zip(i)
            .map(|((r, a), iv)| 1.0 + dt * (r + a * iv))
            .collect();
        let s_new = Solver::new(SymMatrix::new(self.stencil_s.clone(), diag_s, dt))?.solve(s, s)?;
        let rhs: Vec<f64> = i
            .iter()
            .zip(&s_new)
            .zip(&self.alpha)
            .map(|((iv, sv), a)| iv + dt * a * sv * iv)
            .collect();
        let i_new = self.solver_i.solve(&rhs, i)?;
        let min_s = s_new.iter().copied().fold(f64::INFINITY, f64::min);
        let min_i = i_new.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_s > 0.0) {
            return Err(Error::PositivityFailure {
                what: "susceptible update",
                min: min_s,
            });
        }
        if !(min_i >= 0.0) {
            return Err(Error::PositivityFailure {
                what: "infected update",
                min: min_i,
            });
        }
        Ok(PdeState {
            t: state.t + dt,
            s: ScalarField::from_raw(self.grid.clone(), s_new),
            i: ScalarField::from_raw(self.grid.clone(), i_new),
        })
    }
}

/// One step from `state`; builds a fresh [`Stepper`].
pub fn step(state: &PdeState, sc: &Scenario, dt: f64) -> Result<PdeState> {
    Stepper::new(sc, dt)?.step(state)
}

/// `⨍ f(S) + (α/μ) ⨍ I` with `f(x) = (α/μ)x − ln x`.
pub fn energy_functional(state: &PdeState, params: OdeParams) -> Result<f64> {
    let min_s = state.s.min_value();
    if !(min_s > 0.0) {
        return Err(Error::Domain(format!("energy needs S > 0, found {min_s}")));
    }
    Ok(state.s.map(|x| params.f(x)).mean() + params.ratio() * state.i.mean())
}

/// `dt · (1/|Ω|) Σ_faces t_f (S_b − S_a)² / S̄_f² · |cell|`, where `t_f`
/// is the face transmissibility (`d_S/h²` for constant diffusion) and `S̄_f`
/// the arithmetic face average.
pub fn dissipation_rate(stencil: &Stencil, s: &ScalarField) -> f64 {
    let v = s.values();
    let sum: f64 = stencil
        .faces()
        .iter()
        .zip(stencil.weights())
        .map(|(f, t)| {
            let avg = 0.5 * (v[f.lo] + v[f.hi]);
            t * (v[f.hi] - v[f.lo]).powi(2) / (avg * avg)
        })
        .sum();
    let g = s.grid();
    sum * g.cell_volume() / g.volume()
}

/// Dissipation accumulated over one step, evaluated at the new state.
pub fn dissipation_increment(a_s: &DiffusionField, state_new: &PdeState, dt: f64) -> f64 {
    dt * dissipation_rate(&diffusion_stencil(a_s), &state_new.s)
}

/// `½ Σ_faces ((v_b − v_a)/h)² · |cell|`.
pub fn gradient_energy(field: &ScalarField) -> f64 {
    let g = field.grid();
    let v = field.values();
    let h = g.spacing();
    let sum: f64 = g
        .faces()
        .iter()
        .map(|f| ((v[f.hi] - v[f.lo]) / h[f.axis]).powi(2))
        .sum();
    0.5 * sum * g.cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub mean_s: f64,
    pub mean_i: f64,
    pub max_i: f64,
    pub min_s: f64,
    pub flatness: f64,
    /// Only for spatially constant α and μ.
    pub energy: Option<f64>,
    pub dissipation_cum: f64,
    pub grad_energy_s: f64,
    pub grad_energy_i: f64,
}

pub const TRACE_COLUMNS: [&str; 10] = [
    "t",
    "mean_S",
    "mean_I",
    "max_I",
    "min_S",
    "flatness",
    "energy",
    "dissipation_cum",
    "grad_energy_S",
    "grad_energy_I",
];

/// Run-wide checks of the structural properties of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantReport {
    /// Smallest value of `S` seen during the run.
    pub eta_empirical: f64,
    /// `max_t ‖I(t)‖∞ / ‖I₀‖∞` (1 when `I₀ ≡ 0`).
    pub harnack_k: f64,
    /// Largest one-step increase of `∫(S+I)` (0 if it never increased).
    pub max_mass_increase: f64,
    pub mass_violations: usize,
    pub max_principle_violations: usize,
    pub mean_s_violations: usize,
    pub steps: usize,
}

impl InvariantReport {
    pub fn clean(&self) -> bool {
        self.mass_violations == 0 && self.max_principle_violations == 0 && self.mean_s_violations == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub dt: f64,
    pub t_max: f64,
    pub tol_i: f64,
    pub tol_s: f64,
    pub trace_every: usize,
}

impl RunOptions {
    pub fn from_scenario(sc: &Scenario) -> Self {
        let n = sc.numerics();
        Self::with_dt(sc, sc.default_dt(), n.t_max)
    }

    /// Options with an explicit step; the trace cadence follows the
    /// scenario setting or one row per 0.01 time units.
    pub fn with_dt(sc: &Scenario, dt: f64, t_max: f64) -> Self {
        let n = sc.numerics();
        Self {
            dt,
            t_max,
            tol_i: n.tol_i,
            tol_s: n.tol_s,
            trace_every: n
                .trace_every
                .unwrap_or_else(|| ((0.01 / dt).round() as usize).max(1)),
        }
    }
}

/// A running simulation: stepper, state, trace and invariant bookkeeping.
pub struct Simulation {
    stepper: Stepper,
    state: PdeState,
    energy_params: Option<OdeParams>,
    trace: Vec<TraceRow>,
    trace_every: usize,
    dissipation_cum: f64,
    linf_s0: f64,
    linf_i0: f64,
    invariants: InvariantReport,
    last_mean_s_rate: Option<f64>,
}

/// Relative slack for invariants that hold exactly in exact arithmetic.
const ROUNDING_SLACK: f64 = 1e-11;

impl Simulation {
    pub fn new(sc: &Scenario, dt: f64, trace_every: usize) -> Result<Self> {
        let stepper = Stepper::new(sc, dt)?;
        let flat = |f: &ScalarField| f.flatness() == 0.0;
        let energy_params = if flat(&sc.alpha) && flat(&sc.mu) {
            Some(OdeParams::new(sc.alpha.values()[0], sc.mu.values()[0])?)
        } else {
            None
        };
        let state = PdeState::initial(sc);
        let mut sim = Self {
            stepper,
            energy_params,
            trace: Vec::new(),
            trace_every: trace_every.max(1),
            dissipation_cum: 0.0,
            linf_s0: sc.s0.linf_norm(),
            linf_i0: sc.i0.linf_norm(),
            invariants: InvariantReport {
                eta_empirical: state.s.min_value(),
                harnack_k: 1.0,
                ..Default::default()
            },
            state,
            last_mean_s_rate: None,
        };
        sim.record()?;
        Ok(sim)
    }

    pub fn state(&self) -> &PdeState {
        &self.state
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn invariants(&self) -> &InvariantReport {
        &self.invariants
    }

    pub fn dt(&self) -> f64 {
        self.stepper.dt()
    }

    /// `|Δ mean S| / dt` over the last step.
    pub fn mean_s_rate(&self) -> Option<f64> {
        self.last_mean_s_rate
    }

    fn row(&self) -> Result<TraceRow> {
        let st = &self.state;
        Ok(TraceRow {
            t: st.t,
            mean_s: st.s.mean(),
            mean_i: st.i.mean(),
            max_i: st.i.max_value(),
            min_s: st.s.min_value(),
            flatness: st.s.flatness(),
            energy: self.energy_params.map(|p| energy_functional(st, p)).transpose()?,
            dissipation_cum: self.dissipation_cum,
            grad_energy_s: gradient_energy(&st.s),
            grad_energy_i: gradient_energy(&st.i),
        })
    }

    fn record(&mut self) -> Result<()> {
        let row = self.row()?;
        if self.trace.last().map(|r| r.t) != Some(row.t) {
            self.trace.push(row);
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        let next = self.stepper.step(&self.state)?;
        let dt = self.dt();
        self.dissipation_cum += dt * dissipation_rate(self.stepper.stencil_s(), &next.s);

        let inv = &mut self.invariants;
        let (m0, m1) = (self.state.mass(), next.mass());
        if m1 > m0 {
            inv.max_mass_increase = inv.max_mass_increase.max(m1 - m0);
            if m1 - m0 > ROUNDING_SLACK * m0 {
                inv.mass_violations += 1;
            }
        }
        let (s0, s1) = (self.state.s.mean(), next.s.mean());
        if s1 - s0 > ROUNDING_SLACK * s0 {
            inv.mean_s_violations += 1;
        }
        if next.s.linf_norm() > self.linf_s0 * (1.0 + ROUNDING_SLACK) {
            inv.max_principle_violations += 1;
        }
        inv.eta_empirical = inv.eta_empirical.min(next.s.min_value());
        if self.linf_i0 > 0.0 {
            inv.harnack_k = inv.harnack_k.max(next.i.linf_norm() / self.linf_i0);
        }
        inv.steps += 1;
        self.last_mean_s_rate = Some((s1 - s0).abs() / dt);
        self.state = next;
        if inv.steps % self.trace_every == 0 {
            self.record()?;
        }
        Ok(())
    }

    /// Steps until `t ≥ t_end` (to within a hundredth of a step).
    pub fn run_until(&mut self, t_end: f64) -> Result<()> {
        while self.state.t < t_end - 1e-2 * self.dt() {
            self.step()?;
        }
        self.record()
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        self.record()
    }

    /// Whether `‖I‖∞ < tol_i · max(1, ‖I₀‖∞)` and the last step moved
    /// `mean S` slower than `tol_s`, or than rounding alone can account for.
    pub fn converged(&self, tol_i: f64, tol_s: f64) -> bool {
        let floor = self.stepper.rounding_rate(self.linf_s0);
        self.state.i.linf_norm() < tol_i * self.linf_i0.max(1.0)
            && self.last_mean_s_rate.map_or(true, |r| r < tol_s.max(floor))
    }

    pub fn finish(mut self, reason: Termination) -> Result<ExtinctionResult> {
        self.record()?;
        Ok(ExtinctionResult {
            s_infinity: self.state.s.mean(),
            terminal_flatness: self.state.s.flatness(),
            t_final: self.state.t,
            reason,
            trace: self.trace,
            invariants: self.invariants,
            s_final: self.state.s,
            i_final: self.state.i,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    TMax,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::TMax => "t_max",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtinctionResult {
    /// `mean S` at termination.
    pub s_infinity: f64,
    pub terminal_flatness: f64,
    pub t_final: f64,
    pub reason: Termination,
    pub trace: Vec<TraceRow>,
    pub invariants: InvariantReport,
    pub s_final: ScalarField,
    pub i_final: ScalarField,
}

impl ExtinctionResult {
    pub fn converged(&self) -> bool {
        self.reason == Termination::Converged
    }
}

/// Integrates until the infection is extinct and `S` has stopped moving,
/// or until `t_max`.
pub fn run_to_extinction(sc: &Scenario, opts: RunOptions) -> Result<ExtinctionResult> {
    if !(opts.t_max > 0.0 && opts.tol_i > 0.0 && opts.tol_s > 0.0) {
        return Err(Error::invalid("t_max and tolerances must be positive"));
    }
    let mut sim = Simulation::new(sc, opts.dt, opts.trace_every)?;
    loop {
        if sim.converged(opts.tol_i, opts.tol_s) {
            return sim.finish(Termination::Converged);
        }
        if sim.state().t >= opts.t_max - 1e-2 * opts.dt {
            return sim.finish(Termination::TMax);
        }
        sim.step()?;
    }
}

/// `−` least-squares slope of `ln(m_S + m_I)` against `t` over the last
/// `window` trace rows.
pub fn estimate_decay_rate(trace: &[TraceRow], window: usize) -> Result<f64> {
    if window < 2 || trace.len() < window {
        return Err(Error::InsufficientData(format!(
            "decay rate needs a window of at least 2 rows, have {} of {window}",
            trace.len()
        )));
    }
    let rows = &trace[trace.len() - window..];
    let mut pts = Vec::with_capacity(window);
    for r in rows {
        let m = r.grad_energy_s + r.grad_energy_i;
        if !(m > 0.0) {
            return Err(Error::InsufficientData(format!(
                "gradient energy vanishes at t = {}",
                r.t
            )));
        }
        pts.push((r.t, m.ln()));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("trace window spans no time".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientSpec;
    use crate::ode::final_size;
    use crate::scenario::ScenarioSpec;
    use crate::spectral::neumann_gap;
    use std::f64::consts::PI;

    fn scenario(spec: ScenarioSpec) -> Scenario {
        Scenario::new(spec).unwrap()
    }

    fn cosine_i0(cells: usize, d: f64) -> Scenario {
        let mut spec = ScenarioSpec::homogeneous(cells, 2.0, 1.0, 1.0, 0.0, d, d);
        spec.initial.i0 = CoefficientSpec::cosine(1e-2, 1e-2, 1.0);
        scenario(spec)
    }

    #[test]
    fn zero_infection_conserves_mass() {
        let mut spec = ScenarioSpec::homogeneous(40, 2.0, 1.0, 1.0, 0.0, 0.3, 0.3);
        spec.initial.s0 = CoefficientSpec::cosine(1.0, 0.4, 1.0);
        let sc = scenario(spec);
        let st = PdeState::initial(&sc);
        let next = step(&st, &sc, 1e-2).unwrap();
        assert!(next.i.values().iter().all(|&v| v == 0.0));
        assert!((next.s.mean() - st.s.mean()).abs() < 1e-15);
        assert!(next.s.flatness() < st.s.flatness());
    }

    #[test]
    fn constant_state_matches_one_ode_step() {
        for spec in [
            ScenarioSpec::homogeneous(16, 2.0, 1.0, 0.9, 0.05, 0.7, 0.2),
            {
                let mut s = ScenarioSpec::homogeneous(4, 2.0, 1.0, 0.9, 0.05, 0.7, 0.2);
                s.domain = crate::grid::DomainSpec::rectangle([1.0, 2.0], [5, 4]);
                s
            },
        ] {
            let sc = scenario(spec);
            let dt = 0.01;
            let next = step(&PdeState::initial(&sc), &sc, dt).unwrap();
            let s1 = 0.9 / (1.0 + dt * 2.0 * 0.05);
            let i1 = (0.05 + dt * 2.0 * s1 * 0.05) / (1.0 + dt);
            for (s, i) in next.s.values().iter().zip(next.i.values()) {
                assert!((s - s1).abs() < 1e-14 && (i - i1).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mass_balance_is_exact() {
        let sc = cosine_i0(64, 0.5);
        let stepper = Stepper::new(&sc, 1e-2).unwrap();
        let mut st = PdeState::initial(&sc);
        for _ in 0..50 {
            let next = stepper.step(&st).unwrap();
            let loss = 1e-2 * next.i.zip_map(&sc.mu, |i, m| i * m).unwrap().integrate();
            assert!((st.mass() - loss - next.mass()).abs() < 1e-14);
            assert!(next.mass() < st.mass());
            st = next;
        }
    }

    #[test]
    fn energy_of_simple_states() {
        let g = Arc::new(Grid::interval(1.0, 8).unwrap());
        let st = |s: f64, i: f64| PdeState {
            t: 0.0,
            s: ScalarField::constant(g.clone(), s),
            i: ScalarField::constant(g.clone(), i),
        };
        let p = OdeParams::new(1.0, 1.0).unwrap();
        assert!((energy_functional(&st(1.0, 0.0), p).unwrap() - 1.0).abs() < 1e-15);
        let q = OdeParams::new(2.0, 1.0).unwrap();
        let e = energy_functional(&st(0.5, 0.0), q).unwrap();
        assert!((e - (1.0 - 0.5f64.ln())).abs() < 1e-15);
        assert!(energy_functional(&st(0.0, 0.0), q).is_err());
    }

    #[test]
    fn dissipation_is_nonnegative_and_vanishes_on_constants() {
        let sc = cosine_i0(32, 0.5);
        let st = PdeState::initial(&sc);
        assert_eq!(dissipation_increment(&sc.a_s, &st, 0.1), 0.0);
        let mut bumpy = st.clone();
        bumpy.s = ScalarField::from_fn(sc.grid().clone(), |[x, _]| 1.0 + 0.3 * (PI * x).cos());
        assert!(dissipation_increment(&sc.a_s, &bumpy, 0.1) > 0.0);
    }

    #[test]
    fn gradient_energy_of_cosine() {
        let g = Arc::new(Grid::interval(1.0, 1024).unwrap());
        assert_eq!(gradient_energy(&ScalarField::constant(g.clone(), 2.0)), 0.0);
        let f = ScalarField::from_fn(g, |[x, _]| (PI * x).cos());
        let m = gradient_energy(&f);
        assert!((m - PI * PI / 4.0).abs() < 1e-5, "{m}");
    }

    #[test]
    fn no_infection_terminates_immediately() {
        let mut spec = ScenarioSpec::homogeneous(20, 2.0, 1.0, 1.0, 0.0, 1.0, 1.0);
        spec.initial.s0 = CoefficientSpec::cosine(1.0, 0.5, 1.0);
        let sc = scenario(spec);
        let res = run_to_extinction(&sc, RunOptions::from_scenario(&sc)).unwrap();
        assert!(res.converged());
        assert_eq!(res.s_infinity, sc.s0.mean());
        assert_eq!(res.invariants.steps, 0);
    }

    #[test]
    fn constant_data_follow_the_final_size() {
        let sc = scenario(ScenarioSpec::homogeneous(8, 2.0, 1.0, 1.0, 1e-3, 1.0, 1.0));
        let res = run_to_extinction(&sc, RunOptions::with_dt(&sc, 1e-3, 1e4)).unwrap();
        assert!(res.converged());
        let fs = final_size(OdeParams::new(2.0, 1.0).unwrap(), 1.0, 1e-3).unwrap();
        assert!((res.s_infinity - fs).abs() < 1e-4, "{} vs {fs}", res.s_infinity);
        assert!(res.invariants.clean());
    }

    #[test]
    fn trace_invariants_hold() {
        let sc = cosine_i0(64, 0.5);
        let res = run_to_extinction(&sc, RunOptions::with_dt(&sc, 1e-2, 1e4)).unwrap();
        assert!(res.converged());
        assert!(res.invariants.clean(), "{:?}", res.invariants);
        assert!(res.invariants.eta_empirical > 0.0);
        for w in res.trace.windows(2) {
            assert!(w[1].mean_s <= w[0].mean_s);
            assert!(w[1].mean_s + w[1].mean_i <= w[0].mean_s + w[0].mean_i);
            assert!(w[1].dissipation_cum >= w[0].dissipation_cum);
        }
        let (first, last) = (res.trace[0], res.trace.last().unwrap());
        let e0 = first.energy.unwrap();
        let defect = last.energy.unwrap() - e0 + last.dissipation_cum;
        assert!(defect.abs() < 2e-3 * e0, "energy defect {defect}");
    }

    #[test]
    fn decay_rate_of_synthetic_traces() {
        let row = |t: f64, m: f64| TraceRow {
            t,
            mean_s: 1.0,
            mean_i: 0.0,
            max_i: 0.0,
            min_s: 1.0,
            flatness: 0.0,
            energy: None,
            dissipation_cum: 0.0,
            grad_energy_s: m,
            grad_energy_i: 0.0,
        };
        let exp: Vec<_> = (0..20).map(|k| row(0.1 * k as f64, (-3.0 * 0.1 * k as f64).exp())).collect();
        assert!((estimate_decay_rate(&exp, 10).unwrap() - 3.0).abs() < 1e-6);
        let flat: Vec<_> = (0..5).map(|k| row(k as f64, 2.0)).collect();
        assert!(estimate_decay_rate(&flat, 5).unwrap().abs() < 1e-12);
        assert!(matches!(estimate_decay_rate(&flat, 6), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pure_diffusion_decays_at_twice_the_gap() {
        let d = 0.2;
        let mut spec = ScenarioSpec::homogeneous(128, 1.0, 1.0, 1.0, 0.0, d, d);
        spec.initial.s0 = CoefficientSpec::cosine(1.0, 0.1, 0.5);
        let sc = scenario(spec);
        let mut sim = Simulation::new(&sc, 1e-4, 100).unwrap();
        sim.run_until(0.5).unwrap();
        let rate = estimate_decay_rate(sim.trace(), 20).unwrap();
        let expect = 2.0 * neumann_gap(sc.grid(), d).scaled;
        assert!((rate - expect).abs() < 1e-2 * expect, "{rate} vs {expect}");
    }
}
