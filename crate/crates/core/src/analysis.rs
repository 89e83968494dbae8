//! Classification, propagation probes, model comparisons and monotonicity
//! sweeps built on the spectral and time-stepping modules.

use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::EllipticOperator;
use crate::error::{Error, Result};
use crate::ode::{averaged_params, final_size, OdeParams};
use crate::pde::{run_to_extinction, RunOptions};
use crate::scenario::Scenario;
use crate::spectral::{
    critical_diffusivity, diffusion_limits, has_critical_diffusivity, lambda1_of_di, principal_eigenpair,
    threshold_eigenpair, DiffusionLimits, EigenOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Propagates,
    FadesOff,
    Critical,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Propagates => "Propagates",
            Classification::FadesOff => "FadesOff",
            Classification::Critical => "Critical",
        }
    }

    /// Sign rule with a critical band `[-tol, tol]`.
    pub fn from_lambda(lambda1: f64, tol: f64) -> Self {
        if lambda1 < -tol {
            Classification::Propagates
        } else if lambda1 > tol {
            Classification::FadesOff
        } else {
            Classification::Critical
        }
    }

    pub fn from_r0(r0: f64) -> Self {
        if r0 > 1.0 {
            Classification::Propagates
        } else if r0 < 1.0 {
            Classification::FadesOff
        } else {
            Classification::Critical
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub lambda1: f64,
    pub classification: Classification,
    pub averaged_r0: f64,
    pub averaged_classification: Classification,
    pub d_star: Option<f64>,
    pub tol: f64,
    pub eigen_residual: f64,
    pub eigen_iterations: usize,
}

/// Default half-width of the critical band, `1e-8 · max(1, ‖V‖∞)`.
pub fn critical_band(sc: &Scenario) -> f64 {
    sc.numerics()
        .critical_tol
        .unwrap_or_else(|| 1e-8 * sc.threshold_potential().linf_norm().max(1.0))
}

/// Classifies the diffusive and averaged models. With `with_d_star`, also
/// computes the critical diffusivity when one exists.
pub fn classify(sc: &Scenario, tol: Option<f64>, with_d_star: bool) -> Result<ThresholdReport> {
    let tol = tol.unwrap_or_else(|| critical_band(sc));
    let eig = threshold_eigenpair(sc)?;
    let avg = averaged_params(sc)?;
    let classification = Classification::from_lambda(eig.lambda1, tol);
    let averaged_classification = Classification::from_r0(avg.r0());
    // The constant test function bounds λ₁ by ⨍μ − ⨍α⨍S₀.
    if averaged_classification == Classification::Propagates && classification == Classification::FadesOff {
        return Err(Error::Consistency(format!(
            "averaged model propagates (R0 = {}) but λ1 = {} > 0",
            avg.r0(),
            eig.lambda1
        )));
    }
    let d_star = if with_d_star && has_critical_diffusivity(sc) {
        let n = sc.numerics();
        Some(critical_diffusivity(sc, n.d_lo, n.d_hi, n.dstar_rel_tol)?.d_star)
    } else {
        None
    };
    Ok(ThresholdReport {
        lambda1: eig.lambda1,
        classification,
        averaged_r0: avg.r0(),
        averaged_classification,
        d_star,
        tol,
        eigen_residual: eig.residual,
        eigen_iterations: eig.iterations,
    })
}

/// Worker pool for fan-out analyses, capped by `EPITHRESHOLD_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("EPITHRESHOLD_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("EPITHRESHOLD_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Error::invalid("EPITHRESHOLD_THREADS must be positive"));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    thread_pool()?.install(|| items.par_iter().map(f).collect())
}

fn check_scales(scales: &[f64]) -> Result<Vec<f64>> {
    if scales.is_empty() {
        return Err(Error::invalid("at least one I0 scale is required"));
    }
    if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("I0 scales must be finite and non-negative"));
    }
    let mut sorted = scales.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    Ok(sorted)
}

/// Time-stepping settings shared by probes and comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub t_max: f64,
}

impl SimOptions {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            dt: sc.default_dt(),
            t_max: sc.numerics().t_max,
        }
    }

    fn run_options(&self, sc: &Scenario, dt: f64) -> RunOptions {
        let mut o = RunOptions::with_dt(sc, dt, self.t_max);
        // Traces are not kept by these analyses; a sparse cadence is enough.
        o.trace_every = usize::MAX;
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub scale: f64,
    pub s_infinity: f64,
    /// `⨍S₀ − S∞`.
    pub loss: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub threshold: ThresholdReport,
    /// Sorted by decreasing scale.
    pub rows: Vec<ProbeRow>,
    /// Smallest loss over the positive scales.
    pub epsilon_empirical: f64,
    /// `|λ₁| / max α`.
    pub floor: f64,
    /// For a propagating scenario, whether every loss is at least
    /// `0.8 · floor`; for others, whether losses shrink with the scale.
    pub passed: bool,
}

/// Fraction of the theoretical floor that the measured losses must reach.
pub const FLOOR_SLACK: f64 = 0.8;

/// Runs the PDE with `I₀` replaced by `s · I₀` for every scale and records
/// the loss of susceptibles.
pub fn propagation_probe(sc: &Scenario, scales: &[f64], opts: SimOptions) -> Result<ProbeReport> {
    let scales = check_scales(scales)?;
    let threshold = classify(sc, None, false)?;
    let s_bar = sc.s0.mean();
    let rows = par_map(&scales, |&scale| {
        let scaled = sc.with_i0_scaled(scale);
        let res = run_to_extinction(&scaled, opts.run_options(&scaled, opts.dt))?;
        Ok(ProbeRow {
            scale,
            s_infinity: res.s_infinity,
            loss: s_bar - res.s_infinity,
            converged: res.converged(),
        })
    })?;
    let epsilon_empirical = rows
        .iter()
        .filter(|r| r.scale > 0.0)
        .map(|r| r.loss)
        .fold(f64::INFINITY, f64::min);
    let floor = threshold.lambda1.abs() / sc.alpha.max_value();
    let passed = match threshold.classification {
        Classification::Propagates => rows
            .iter()
            .filter(|r| r.scale > 0.0)
            .all(|r| r.converged && r.loss >= FLOOR_SLACK * floor),
        _ => rows.iter().all(|r| r.converged) && rows.windows(2).all(|w| w[1].loss <= w[0].loss),
    };
    Ok(ProbeReport {
        threshold,
        rows,
        epsilon_empirical,
        floor,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub scale: f64,
    pub s_infinity_pde: f64,
    pub s_infinity_averaged: f64,
    /// `S∞(PDE) − S∞(averaged)`.
    pub gap: f64,
    /// Step-halving estimate of the PDE error (present with extrapolation).
    pub error_estimate: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// Sorted by decreasing scale.
    pub rows: Vec<ComparisonRow>,
    pub epsilon_empirical: f64,
    /// Whether α, μ, S₀ are constant, the setting where `gap ≥ 0` holds.
    pub homogeneous: bool,
    /// Whether I₀ is non-constant, so the inequality is strict.
    pub strict_expected: bool,
    /// Rows violating `gap ≥ −error_estimate` in the homogeneous setting.
    pub violations: usize,
}

impl ComparisonReport {
    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gap).collect()
    }
}

/// Richardson table for an error expansion in integer powers of `dt`.
/// `values[k]` was computed with step `dt / 2^k`; returns the extrapolated
/// value and, with two or more levels, the difference from the next lower
/// order as an error estimate.
pub fn richardson(values: &[f64]) -> (f64, Option<f64>) {
    let mut row = values.to_vec();
    let mut prev_top = None;
    for j in 1..values.len() {
        prev_top = row.last().copied();
        let f = (1u64 << j) as f64;
        row = row.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
    }
    let top = *row.last().expect("at least one level");
    (top, prev_top.map(|p| (top - p).abs()))
}

/// Compares the PDE final state against the averaged final size at each
/// `I₀` scale. With `levels > 1`, every PDE run is repeated with steps
/// `dt, dt/2, …, dt/2^(levels−1)` and Richardson-extrapolated, cancelling
/// the time error of the first-order scheme order by order.
pub fn compare_models(sc: &Scenario, scales: &[f64], opts: SimOptions, levels: usize) -> Result<ComparisonReport> {
    let scales = check_scales(scales)?;
    if levels == 0 || levels > 6 {
        return Err(Error::invalid(format!("extrapolation levels must be in 1..=6, got {levels}")));
    }
    let avg = averaged_params(sc)?;
    let s_bar = sc.s0.mean();
    let runs: Vec<(f64, f64)> = scales
        .iter()
        .flat_map(|&s| (0..levels).map(move |k| (s, opts.dt / (1u64 << k) as f64)))
        .collect();
    let results = par_map(&runs, |&(scale, dt)| {
        let scaled = sc.with_i0_scaled(scale);
        let res = run_to_extinction(&scaled, opts.run_options(&scaled, dt))?;
        Ok((res.s_infinity, res.converged()))
    })?;
    let rows: Vec<ComparisonRow> = scales
        .iter()
        .zip(results.chunks(levels))
        .map(|(&scale, chunk)| {
            let averaged = final_size(avg.params, avg.s0, scale * avg.i0)?;
            let values: Vec<f64> = chunk.iter().map(|c| c.0).collect();
            let (pde, error_estimate) = richardson(&values);
            Ok(ComparisonRow {
                scale,
                s_infinity_pde: pde,
                s_infinity_averaged: averaged,
                gap: pde - averaged,
                error_estimate,
                converged: chunk.iter().all(|c| c.1),
            })
        })
        .collect::<Result<_>>()?;
    let homogeneous = sc.is_homogeneous();
    let violations = if homogeneous {
        rows.iter()
            .filter(|r| r.gap < -r.error_estimate.unwrap_or(0.0))
            .count()
    } else {
        0
    };
    let epsilon_empirical = rows
        .iter()
        .filter(|r| r.scale > 0.0)
        .map(|r| s_bar - r.s_infinity_pde)
        .fold(f64::INFINITY, f64::min);
    Ok(ComparisonReport {
        rows,
        epsilon_empirical,
        homogeneous,
        strict_expected: homogeneous && sc.i0.flatness() > 0.0,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DI,
    MuShift,
    AlphaScale,
    S0Scale,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "d_i" | "d_I" | "di" => Ok(SweepAxis::DI),
            "mu_shift" => Ok(SweepAxis::MuShift),
            "alpha_scale" => Ok(SweepAxis::AlphaScale),
            "s0_scale" => Ok(SweepAxis::S0Scale),
            _ => Err(Error::invalid(format!(
                "unknown sweep axis `{s}` (expected d_i, mu_shift, alpha_scale or s0_scale)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::DI => "d_i",
            SweepAxis::MuShift => "mu_shift",
            SweepAxis::AlphaScale => "alpha_scale",
            SweepAxis::S0Scale => "s0_scale",
        }
    }

    /// `+1` if `λ₁` should grow with the parameter, `−1` if it should fall.
    pub fn expected_direction(self) -> f64 {
        match self {
            SweepAxis::DI | SweepAxis::MuShift => 1.0,
            SweepAxis::AlphaScale | SweepAxis::S0Scale => -1.0,
        }
    }

    /// Default parameter range.
    pub fn default_range(self, sc: &Scenario) -> (f64, f64) {
        match self {
            SweepAxis::DI => (sc.numerics().d_lo, sc.numerics().d_hi),
            SweepAxis::MuShift => (0.0, 1.0),
            SweepAxis::AlphaScale | SweepAxis::S0Scale => (0.5, 2.0),
        }
    }

    fn log_spaced(self) -> bool {
        matches!(self, SweepAxis::DI)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub lambda1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    /// Adjacent pairs moving against the expected direction by more than
    /// the solver tolerance.
    pub violations: usize,
    /// Analytic small/large diffusion limits (d_I axis only).
    pub limits: Option<DiffusionLimits>,
}

/// `n` points from `lo` to `hi`, geometric or arithmetic.
pub fn sample_points(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let u = k as f64 / (n - 1) as f64;
            if log {
                (lo.ln() + u * (hi.ln() - lo.ln())).exp()
            } else {
                lo + u * (hi - lo)
            }
        })
        .collect()
}

fn lambda1_at(sc: &Scenario, axis: SweepAxis, value: f64) -> Result<f64> {
    if axis == SweepAxis::DI {
        return lambda1_of_di(sc, value);
    }
    let (a, m, s) = match axis {
        SweepAxis::MuShift => (1.0, value, 1.0),
        SweepAxis::AlphaScale => (value, 0.0, 1.0),
        _ => (1.0, 0.0, value),
    };
    if !(a > 0.0 && s > 0.0) {
        return Err(Error::invalid(format!("{} must stay positive, got {value}", axis.as_str())));
    }
    let s_bar = s * sc.s0.mean();
    let v = sc.alpha.zip_map(&sc.mu, |al, mu| a * al * s_bar - (mu + m))?;
    let op = EllipticOperator::assemble(&sc.a_i, &v)?;
    Ok(principal_eigenpair(&op, EigenOptions::from_scenario(sc))?.lambda1)
}

/// `λ₁` along one parameter axis, checked against the expected
/// monotonicity.
pub fn monotonicity_sweep(sc: &Scenario, axis: SweepAxis, samples: usize, range: Option<(f64, f64)>) -> Result<SweepReport> {
    if samples < 3 {
        return Err(Error::invalid(format!("a sweep needs at least 3 samples, got {samples}")));
    }
    let (lo, hi) = range.unwrap_or_else(|| axis.default_range(sc));
    if !(lo < hi && lo.is_finite() && hi.is_finite()) || (axis.log_spaced() && lo <= 0.0) {
        return Err(Error::invalid(format!("invalid sweep range [{lo}, {hi}]")));
    }
    let values = sample_points(lo, hi, samples, axis.log_spaced());
    let lambdas = par_map(&values, |&v| lambda1_at(sc, axis, v))?;
    let rows: Vec<SweepRow> = values
        .iter()
        .zip(&lambdas)
        .map(|(&value, &lambda1)| SweepRow { value, lambda1 })
        .collect();
    let eig_tol = sc.numerics().eigen_tol;
    let violations = rows
        .windows(2)
        .filter(|w| {
            let slack = 10.0 * eig_tol * (1.0 + w[0].lambda1.abs().max(w[1].lambda1.abs()));
            axis.expected_direction() * (w[1].lambda1 - w[0].lambda1) < -slack
        })
        .count();
    Ok(SweepReport {
        axis,
        rows,
        violations,
        limits: (axis == SweepAxis::DI).then(|| diffusion_limits(sc)),
    })
}

/// Averaged-model `R̃₀` and final size for a scenario.
pub fn averaged_summary(sc: &Scenario) -> Result<(OdeParams, f64, f64)> {
    let avg = averaged_params(sc)?;
    Ok((avg.params, avg.r0(), avg.final_size()?))
}
