//! The spatially constant SIR system, its conserved quantity, the final-size
//! relation and the averaged model built from a heterogeneous scenario.

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Transmission rate `alpha` and recovery rate `mu`, both positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeParams {
    pub alpha: f64,
    pub mu: f64,
}

impl OdeParams {
    pub fn new(alpha: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Negativity {
                key: "alpha".into(),
                value: alpha,
            });
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Negativity {
                key: "mu".into(),
                value: mu,
            });
        }
        Ok(Self { alpha, mu })
    }

    pub fn ratio(&self) -> f64 {
        self.alpha / self.mu
    }

    /// `f(x) = (α/μ) x − ln x`, strictly convex with its minimum at `μ/α`.
    pub fn f(&self, x: f64) -> f64 {
        self.ratio() * x - x.ln()
    }

    /// `ℰ = (α/μ) S − ln S + (α/μ) I`, conserved along the flow.
    pub fn invariant(&self, s: f64, i: f64) -> f64 {
        self.f(s) + self.ratio() * i
    }
}

/// `R₀ = α S₀ / μ`.
pub fn basic_reproduction_number(params: OdeParams, s0: f64) -> f64 {
    params.alpha * s0 / params.mu
}

fn check_initial(s0: f64, i0: f64) -> Result<()> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::Negativity {
            key: "s0".into(),
            value: s0,
        });
    }
    if !(i0 >= 0.0 && i0.is_finite()) {
        return Err(Error::Negativity {
            key: "i0".into(),
            value: i0,
        });
    }
    Ok(())
}

/// The root `S∞ ≤ min(S₀, μ/α)` of `f(S∞) = f(S₀) + (α/μ) I₀`.
///
/// `f` is strictly decreasing on `(0, μ/α]` and blows up at zero, so the
/// root is bracketed by `hi = min(S₀, μ/α)` and some `lo = hi / 2^k`.
pub fn final_size(params: OdeParams, s0: f64, i0: f64) -> Result<f64> {
    check_initial(s0, i0)?;
    let target = params.f(s0) + params.ratio() * i0;
    let hi0 = s0.min(params.mu / params.alpha);
    if params.f(hi0) >= target {
        return Ok(hi0);
    }
    let mut lo = hi0;
    while params.f(lo) <= target {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::Domain("final-size bracket underflowed".into()));
        }
    }
    let mut hi = hi0;
    // Tiny roots also need relative resolution.
    let tol = 1e-14 * s0.max(1.0);
    while hi - lo > tol.min(4.0 * f64::EPSILON * hi) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if params.f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A sampled trajectory of the ODE.
#[derive(Debug, Clone)]
pub struct OdeRun {
    /// `(t, S, I)` rows.
    pub samples: Vec<(f64, f64, f64)>,
    pub s_infinity: f64,
    /// `max_t |ℰ(t) − ℰ(0)| / |ℰ(0)|`.
    pub invariant_drift: f64,
    /// Whether the run stopped on `I < 1e-14` rather than `t_max`.
    pub extinct: bool,
}

pub const EXTINCTION_LEVEL: f64 = 1e-14;

fn rhs(p: OdeParams, s: f64, i: f64) -> (f64, f64) {
    let inf = p.alpha * s * i;
    (-inf, inf - p.mu * i)
}

/// Classical RK4 with fixed step `dt`, stopping when `I < 1e-14` or at
/// `t_max`. Keeps roughly `max_samples` evenly spaced rows.
pub fn simulate_sir(params: OdeParams, s0: f64, i0: f64, dt: f64, t_max: f64) -> Result<OdeRun> {
    simulate_sir_sampled(params, s0, i0, dt, t_max, 2000)
}

pub fn simulate_sir_sampled(
    params: OdeParams,
    s0: f64,
    i0: f64,
    dt: f64,
    t_max: f64,
    max_samples: usize,
) -> Result<OdeRun> {
    check_initial(s0, i0)?;
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::invalid("dt and t_max must be positive"));
    }
    let every = ((t_max / dt) as usize / max_samples.max(1)).max(1);
    let e0 = params.invariant(s0, i0);
    let (mut s, mut i, mut t) = (s0, i0, 0.0);
    let mut samples = vec![(t, s, i)];
    let mut drift = 0.0f64;
    let mut step = 0usize;
    while i >= EXTINCTION_LEVEL && t < t_max {
        let h = dt.min(t_max - t);
        let (k1s, k1i) = rhs(params, s, i);
        let (k2s, k2i) = rhs(params, s + 0.5 * h * k1s, i + 0.5 * h * k1i);
        let (k3s, k3i) = rhs(params, s + 0.5 * h * k2s, i + 0.5 * h * k2i);
        let (k4s, k4i) = rhs(params, s + h * k3s, i + h * k3i);
        s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
        i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
        t += h;
        step += 1;
        if !(s > 0.0 && i.is_finite()) {
            return Err(Error::Domain(format!("ODE state left the domain at t = {t}")));
        }
        drift = drift.max((params.invariant(s, i) - e0).abs() / e0.abs());
        if step % every == 0 {
            samples.push((t, s, i));
        }
    }
    if samples.last().map(|r| r.0) != Some(t) {
        samples.push((t, s, i));
    }
    Ok(OdeRun {
        samples,
        s_infinity: s,
        invariant_drift: drift,
        extinct: i < EXTINCTION_LEVEL,
    })
}

/// The averaged model of a scenario: `(⨍α, ⨍μ)` with data `(⨍S₀, ⨍I₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedModel {
    pub params: OdeParams,
    pub s0: f64,
    pub i0: f64,
}

impl AveragedModel {
    /// `R̃₀ = ⨍α ⨍S₀ / ⨍μ`.
    pub fn r0(&self) -> f64 {
        basic_reproduction_number(self.params, self.s0)
    }

    pub fn final_size(&self) -> Result<f64> {
        final_size(self.params, self.s0, self.i0)
    }
}

pub fn averaged_params(sc: &Scenario) -> Result<AveragedModel> {
    Ok(AveragedModel {
        params: OdeParams::new(sc.alpha.mean(), sc.mu.mean())?,
        s0: sc.s0.mean(),
        i0: sc.i0.mean(),
    })
}
