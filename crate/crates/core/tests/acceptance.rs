//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances are pinned below.

use std::process::ExitCode;
use std::time::Instant;

use epithreshold::analysis::{
    compare_models, monotonicity_sweep, propagation_probe, Classification, SimOptions, SweepAxis,
};
use epithreshold::coefficient::CoefficientSpec;
use epithreshold::elliptic::EllipticOperator;
use epithreshold::grid::DomainSpec;
use epithreshold::ode::{final_size, simulate_sir, OdeParams};
use epithreshold::pde::{run_to_extinction, RunOptions, Simulation};
use epithreshold::scenario::{DiffusionSpec, Scenario, ScenarioSpec};
use epithreshold::spectral::{
    critical_diffusivity, diffusion_limits, lambda1_of_di, principal_eigenpair, threshold_eigenpair,
    EigenOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const CONSTANT_EIGENVALUE_LAMBDA_TOL: f64 = 1e-10;
const CONSTANT_EIGENVALUE_SECONDS: f64 = 1.0;
const FINAL_SIZE_ORACLE_TOL: f64 = 1e-10;
const FINAL_SIZE_ODE_TOL: f64 = 1e-6;
const ENERGY_IDENTITY_REL_DEFECT: f64 = 5e-3;
const ENERGY_IDENTITY_SHRINK: f64 = 2.0;
const ENERGY_IDENTITY_SECONDS: f64 = 60.0;
const THRESHOLD_DICHOTOMY_FLOOR_SLACK: f64 = 0.8;
const THRESHOLD_DICHOTOMY_FADE_LOSS: f64 = 1e-4;
const FINAL_STATE_COMPARISON_FLAT_GAP: f64 = 1e-6;
const CRITICAL_DIFFUSIVITY_LAMBDA_TOL: f64 = 1e-8;
const CRITICAL_DIFFUSIVITY_FADE_LOSS: f64 = 1e-4;
const LAMBDA1_LIMITS_LARGE_REL: f64 = 1e-3;
const LAMBDA1_LIMITS_SMALL_ABS: f64 = 2e-2;
const SMALL_I0_AGREEMENT_NOISE_FLOOR: f64 = 1e-10;
const SMALL_I0_AGREEMENT_FINAL: f64 = 1e-3;
const STRUCTURAL_INVARIANTS_SHIFT_TOL: f64 = 1e-10;
const STRUCTURAL_INVARIANTS_SECONDS: f64 = 600.0;

struct Suite {
    failed: Vec<String>,
}

impl Suite {
    fn record(&mut self, id: &str, pass: bool, detail: String) {
        println!("{} [{id}] {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }

    fn run(&mut self, id: &str, f: impl FnOnce() -> Result<(bool, String), String>) {
        match f() {
            Ok((pass, detail)) => self.record(id, pass, detail),
            Err(e) => self.record(id, false, format!("error: {e}")),
        }
    }
}

fn info(msg: String) {
    println!("INFO {msg}");
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bump_scenario(cells: usize, d_i: f64) -> Scenario {
    let mut spec = ScenarioSpec::homogeneous(cells, 1.0, 1.0, 1.0, 1.0, 1.0, d_i);
    spec.coefficients.alpha = CoefficientSpec::gauss_bump(0.5, 1.2, 0.5, 0.1);
    spec.initial.i0 = CoefficientSpec::cosine(1.0, 1.0, 1.0);
    spec.numerics.dt = Some(1e-3);
    Scenario::new(spec).expect("bump scenario")
}

fn with_di(sc: &Scenario, d: f64) -> Result<Scenario, String> {
    sc.respec(|s| s.coefficients.d_i = DiffusionSpec::constant(d)).map_err(err)
}

fn constant_eigenvalue() -> Result<(bool, String), String> {
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for d in [1e-3, 1e-2, 1.0, 1e2, 1e4] {
        let sc = Scenario::new(ScenarioSpec::homogeneous(256, 2.0, 1.0, 1.0, 1e-3, 1.0, d)).map_err(err)?;
        let t = Instant::now();
        let eig = threshold_eigenpair(&sc).map_err(err)?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        worst = worst.max((eig.lambda1 + 1.0).abs());
    }
    Ok((
        worst <= CONSTANT_EIGENVALUE_LAMBDA_TOL && slowest < CONSTANT_EIGENVALUE_SECONDS,
        format!(
            "constant eigenvalue: max |lambda1 + 1| = {worst:.3e} (tol {CONSTANT_EIGENVALUE_LAMBDA_TOL:e}), slowest solve {slowest:.3}s (limit {CONSTANT_EIGENVALUE_SECONDS}s)"
        ),
    ))
}

/// Plain bisection of `(α/μ)x − ln x = target` on `(0, μ/α)`.
fn bisection_oracle(ratio: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (1e-300f64, 1.0 / ratio);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if ratio * mid - mid.ln() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn final_size_check() -> Result<(bool, String), String> {
    let p = OdeParams::new(2.0, 1.0).map_err(err)?;
    let s = final_size(p, 1.0, 1e-6).map_err(err)?;
    let oracle = bisection_oracle(2.0, 2.0 + 2.0 * 1e-6);
    let ode = simulate_sir(p, 1.0, 1e-6, 1e-3, 1e4).map_err(err)?;
    let (d_oracle, d_ode) = ((s - oracle).abs(), (ode.s_infinity - s).abs());
    let prefix = format!("{s:.4}") == "0.2032";
    Ok((
        prefix && d_oracle <= FINAL_SIZE_ORACLE_TOL && d_ode <= FINAL_SIZE_ODE_TOL && ode.extinct,
        format!(
            "final size S_inf = {s:.12}, |oracle gap| = {d_oracle:.2e} (tol {FINAL_SIZE_ORACLE_TOL:e}), |RK4 gap| = {d_ode:.2e} (tol {FINAL_SIZE_ODE_TOL:e})"
        ),
    ))
}

/// Returns `(E(T) − E(0.1) + D, E(T) − E(0.1) − D, E(0.1))` with `D` the
/// dissipation accumulated on `[0.1, T]`.
fn energy_defect(cells: usize, dt: f64) -> Result<(f64, f64, f64), String> {
    let mut spec = ScenarioSpec::homogeneous(cells, 2.0, 1.0, 1.0, 1.0, 0.5, 0.5);
    spec.initial.i0 = CoefficientSpec::cosine(1e-2, 1e-2, 1.0);
    let sc = Scenario::new(spec).map_err(err)?;
    let mut opts = RunOptions::with_dt(&sc, dt, 1e3);
    opts.trace_every = ((0.01 / dt).round() as usize).max(1);
    let res = run_to_extinction(&sc, opts).map_err(err)?;
    let start = res
        .trace
        .iter()
        .find(|r| (r.t - 0.1).abs() < 0.5 * dt)
        .ok_or("no trace row at t = 0.1")?;
    let end = res.trace.last().ok_or("empty trace")?;
    let (e1, e2) = (start.energy.ok_or("no energy")?, end.energy.ok_or("no energy")?);
    let d = end.dissipation_cum - start.dissipation_cum;
    Ok((e2 - e1 + d, e2 - e1 - d, e1))
}

fn energy_identity() -> Result<(bool, String), String> {
    let t = Instant::now();
    let (coarse, coarse_literal, e1) = energy_defect(256, 1e-3)?;
    let (fine, _, _) = energy_defect(512, 5e-4)?;
    let secs = t.elapsed().as_secs_f64();
    let rel = coarse.abs() / e1.abs();
    let shrink = coarse.abs() / fine.abs();
    info(format!(
        "energy: with the opposite sign of D the defect would be {:.3e} relative",
        coarse_literal.abs() / e1.abs()
    ));
    Ok((
        rel <= ENERGY_IDENTITY_REL_DEFECT && shrink >= ENERGY_IDENTITY_SHRINK && secs < ENERGY_IDENTITY_SECONDS,
        format!(
            "energy identity: |E(T) - E(0.1) + D| / |E(0.1)| = {rel:.3e} (tol {ENERGY_IDENTITY_REL_DEFECT:e}), refinement shrink {shrink:.3} (need >= {ENERGY_IDENTITY_SHRINK}), {secs:.1}s (limit {ENERGY_IDENTITY_SECONDS}s)"
        ),
    ))
}

fn threshold_dichotomy() -> Result<(bool, String), String> {
    let scales = [1e-2, 1e-3, 1e-4, 1e-5];
    let prop = bump_scenario(256, 1e-3);
    let opts = SimOptions::from_scenario(&prop);
    let up = propagation_probe(&prop, &scales, opts).map_err(err)?;
    let min_loss = up.rows.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    let up_ok = up.threshold.lambda1 < 0.0
        && up.rows.iter().all(|r| r.converged && r.loss >= THRESHOLD_DICHOTOMY_FLOOR_SLACK * up.floor);

    let fade = bump_scenario(256, 1.0);
    let down = propagation_probe(&fade, &scales, SimOptions::from_scenario(&fade)).map_err(err)?;
    let losses: Vec<f64> = down.rows.iter().map(|r| r.loss).collect();
    let last = *losses.last().ok_or("no rows")?;
    let down_ok = down.threshold.lambda1 > 0.0
        && down.rows.iter().all(|r| r.converged)
        && losses.windows(2).all(|w| w[1] < w[0])
        && last < THRESHOLD_DICHOTOMY_FADE_LOSS;
    Ok((
        up_ok && down_ok,
        format!(
            "dichotomy: lambda1 = {:.4} min loss {min_loss:.4} vs {THRESHOLD_DICHOTOMY_FLOOR_SLACK} x floor {:.4}; lambda1 = {:.4} losses [{}] (last < {THRESHOLD_DICHOTOMY_FADE_LOSS:e})",
            up.threshold.lambda1, up.floor, down.threshold.lambda1, sci(&losses)
        ),
    ))
}

fn final_state_comparison() -> Result<(bool, String), String> {
    let mut spec = ScenarioSpec::homogeneous(64, 2.0, 1.0, 1.0, 1.0, 0.5, 0.5);
    spec.initial.i0 = CoefficientSpec::cosine(1e-2, 1e-2, 1.0);
    spec.numerics.dt = Some(1e-3);
    let sc = Scenario::new(spec).map_err(err)?;
    let cmp = compare_models(&sc, &[1.0, 0.5, 0.25, 0.1], SimOptions::from_scenario(&sc), 3).map_err(err)?;
    let gaps = cmp.gaps();
    let strict_ok = cmp.rows.iter().all(|r| r.converged && r.gap > 0.0);

    let mut flat = ScenarioSpec::homogeneous(4, 2.0, 1.0, 1.0, 1e-3, 0.5, 0.5);
    flat.numerics.dt = Some(1e-3);
    let flat = Scenario::new(flat).map_err(err)?;
    let fc = compare_models(&flat, &[1.0, 0.1, 0.01, 0.001], SimOptions::from_scenario(&flat), 3).map_err(err)?;
    let flat_max = fc.gaps().iter().map(|g| g.abs()).fold(0.0, f64::max);
    let flat_ok = fc.rows.iter().all(|r| r.converged) && flat_max <= FINAL_STATE_COMPARISON_FLAT_GAP;
    Ok((
        strict_ok && flat_ok,
        format!("final-state comparison: gaps [{}] all > 0; constant I0 max |gap| {flat_max:.2e} (tol {FINAL_STATE_COMPARISON_FLAT_GAP:e})", sci(&gaps)),
    ))
}

fn critical_diffusivity_check() -> Result<(bool, String), String> {
    let sc = bump_scenario(256, 1e-3);
    let n = sc.numerics();
    let cd = critical_diffusivity(&sc, n.d_lo, n.d_hi, n.dstar_rel_tol).map_err(err)?;
    let d = cd.d_star;
    let (below, above) = (lambda1_of_di(&sc, d / 4.0).map_err(err)?, lambda1_of_di(&sc, 4.0 * d).map_err(err)?);
    let signs_ok = cd.lambda_at.abs() <= CRITICAL_DIFFUSIVITY_LAMBDA_TOL && below < 0.0 && 0.0 < above;

    let low = with_di(&sc, d / 4.0)?;
    let up = propagation_probe(&low, &[1e-3], SimOptions::from_scenario(&low)).map_err(err)?;
    let loss = up.rows[0].loss;
    let prop_ok = up.threshold.classification == Classification::Propagates && up.rows[0].converged && loss >= up.floor;

    let high = with_di(&sc, 4.0 * d)?;
    let down = propagation_probe(&high, &[1e-3, 1e-4, 1e-5], SimOptions::from_scenario(&high)).map_err(err)?;
    let losses: Vec<f64> = down.rows.iter().map(|r| r.loss).collect();
    let fade_ok = down.rows.iter().all(|r| r.converged)
        && losses.windows(2).all(|w| w[1] < w[0])
        && losses.last().is_some_and(|l| *l < CRITICAL_DIFFUSIVITY_FADE_LOSS);
    Ok((
        signs_ok && prop_ok && fade_ok,
        format!(
            "critical diffusivity d* = {d:.6e}: |lambda1(d*)| = {:.2e} (tol {CRITICAL_DIFFUSIVITY_LAMBDA_TOL:e}), lambda1(d*/4) = {below:.4}, lambda1(4d*) = {above:.4}; loss at d*/4 {loss:.4} vs floor {:.4}; losses at 4d* [{}]",
            cd.lambda_at.abs(),
            up.floor,
            sci(&losses)
        ),
    ))
}

fn lambda1_limits() -> Result<(bool, String), String> {
    let sc = bump_scenario(256, 1e-3);
    let limits = diffusion_limits(&sc);
    let v = sc.threshold_potential();
    let spread = v.max_value() - v.min_value();
    let large = lambda1_of_di(&sc, 1e3).map_err(err)?;
    let large_gap = (large - limits.large).abs();

    let fine = sc
        .respec(|s| s.domain = DomainSpec::interval(1.0, 4096))
        .map_err(err)?;
    let small_limit = diffusion_limits(&fine).small;
    let small = lambda1_of_di(&fine, 1e-4).map_err(err)?;
    let small_gap = (small - small_limit).abs();
    // Harmonic approximation at the top of the bump: V ≈ V_max − k x² with
    // k = amp / (2 width²), so λ₁ ≈ min(μ − α⨍S₀) + √(d k).
    let k = 1.2 / (2.0 * 0.1f64.powi(2));
    info(format!(
        "lambda1 limits: d = 1e-4 offset {small_gap:.4e}, harmonic prediction sqrt(d k) = {:.4e}",
        (1e-4 * k).sqrt()
    ));
    let tiny = lambda1_of_di(&fine, 1e-6).map_err(err)? - small_limit;
    info(format!(
        "lambda1 limits: d = 1e-6 offset {tiny:.4e}, harmonic prediction {:.4e}",
        (1e-6 * k).sqrt()
    ));

    let sweep = monotonicity_sweep(&sc, SweepAxis::DI, 13, None).map_err(err)?;
    Ok((
        large_gap <= LAMBDA1_LIMITS_LARGE_REL * spread && small_gap <= LAMBDA1_LIMITS_SMALL_ABS && sweep.violations == 0 && sweep.rows.len() == 13,
        format!(
            "lambda1 limits: |lambda1(1e3) - large limit| = {large_gap:.3e} (tol {:.3e}); |lambda1(1e-4) - small limit| = {small_gap:.4e} at 4096 cells (tol {LAMBDA1_LIMITS_SMALL_ABS:e}); 13-point sweep violations {}",
            LAMBDA1_LIMITS_LARGE_REL * spread,
            sweep.violations
        ),
    ))
}

fn small_i0_agreement() -> Result<(bool, String), String> {
    let mut spec = ScenarioSpec::homogeneous(64, 2.0, 1.0, 1.0, 1.0, 10.0, 10.0);
    spec.initial.i0 = CoefficientSpec::cosine(1.0, 1.0, 1.0);
    spec.numerics.dt = Some(1e-3);
    let sc = Scenario::new(spec).map_err(err)?;
    let cmp = compare_models(&sc, &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6], SimOptions::from_scenario(&sc), 3).map_err(err)?;
    let gaps: Vec<f64> = cmp.gaps().iter().map(|g| g.abs()).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] <= w[0] + SMALL_I0_AGREEMENT_NOISE_FLOOR);
    let last = *gaps.last().ok_or("no rows")?;
    Ok((
        cmp.rows.iter().all(|r| r.converged) && decreasing && last <= SMALL_I0_AGREEMENT_FINAL,
        format!(
            "small-I0 agreement: |gap| [{}] nonincreasing up to {SMALL_I0_AGREEMENT_NOISE_FLOOR:e}, final {last:.2e} (tol {SMALL_I0_AGREEMENT_FINAL:e})",
            sci(&gaps)
        ),
    ))
}

/// Random analytic coefficient around `10^e` with `e` drawn from `log_range`.
fn random_coefficient(rng: &mut ChaCha8Rng, log_range: std::ops::Range<f64>) -> CoefficientSpec {
    let base = 10f64.powf(rng.random_range(log_range));
    match rng.random_range(0..3) {
        0 => CoefficientSpec::constant(base),
        1 => CoefficientSpec::cosine(base, base * rng.random_range(0.0..0.9), rng.random_range(1..4) as f64),
        _ => CoefficientSpec::gauss_bump(
            base * 0.5,
            base * rng.random_range(0.2..2.0),
            rng.random_range(0.2..0.8),
            rng.random_range(0.05..0.3),
        ),
    }
}

fn random_scenario(rng: &mut ChaCha8Rng) -> Result<Scenario, String> {
    let two_d = rng.random_bool(0.2);
    let mut spec = ScenarioSpec::homogeneous(8, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    spec.domain = if two_d {
        DomainSpec::rectangle([1.0, rng.random_range(0.5..2.0)], [rng.random_range(6..14), rng.random_range(6..14)])
    } else {
        DomainSpec::interval(rng.random_range(0.5..3.0), rng.random_range(16..128))
    };
    spec.coefficients.alpha = random_coefficient(rng, -0.301..0.602);
    spec.coefficients.mu = random_coefficient(rng, -0.523..0.301);
    spec.coefficients.d_s = DiffusionSpec::Isotropic(random_coefficient(rng, -3.0..1.0));
    spec.coefficients.d_i = DiffusionSpec::Isotropic(random_coefficient(rng, -3.0..1.0));
    spec.initial.s0 = random_coefficient(rng, -0.301..0.301);
    spec.initial.i0 = random_coefficient(rng, -4.0..-1.0);
    Scenario::new(spec).map_err(err)
}

fn check_random(sc: &Scenario, rng: &mut ChaCha8Rng) -> Result<Vec<String>, String> {
    let mut bad = Vec::new();
    let mut sim = Simulation::new(sc, sc.default_dt(), usize::MAX).map_err(err)?;
    let linf_s0 = sc.s0.linf_norm();
    let mut mass = sim.state().mass();
    let steps = (2.0 / sc.default_dt()).ceil() as usize;
    for _ in 0..steps {
        if let Err(e) = sim.step() {
            bad.push(format!("step: {e}"));
            break;
        }
        let st = sim.state();
        if !(st.s.min_value() > 0.0 && st.i.min_value() >= 0.0) {
            bad.push(format!("positivity at t = {}", st.t));
        }
        let m = st.mass();
        if m > mass * (1.0 + 1e-11) {
            bad.push(format!("mass increased at t = {}", st.t));
        }
        mass = m;
        if st.s.linf_norm() > linf_s0 * (1.0 + 1e-11) {
            bad.push(format!("linf(S) above linf(S0) at t = {}", st.t));
        }
    }

    let op = EllipticOperator::assemble(&sc.a_i, &sc.threshold_potential()).map_err(err)?;
    let dense = op.matrix().to_dense();
    let scale = op.matrix().norm_inf();
    for (i, row) in dense.iter().enumerate() {
        if row.iter().enumerate().any(|(j, v)| (v - dense[j][i]).abs() > 1e-14 * scale) {
            bad.push(format!("asymmetric row {i}"));
            break;
        }
    }
    let diffusion = EllipticOperator::diffusion(&sc.a_i);
    let dscale = diffusion.matrix().norm_inf();
    if diffusion
        .matrix()
        .to_dense()
        .iter()
        .any(|row| row.iter().sum::<f64>().abs() > 1e-12 * dscale)
    {
        bad.push("nonzero row sum".into());
    }

    let eig = principal_eigenpair(&op, EigenOptions::default()).map_err(err)?;
    if eig.phi.min_value() <= 0.0 {
        bad.push("eigenfunction not positive".into());
    }
    let c = rng.random_range(-3.0..3.0);
    let shifted = principal_eigenpair(&op.with_potential_shift(c), EigenOptions::default()).map_err(err)?;
    let shift_err = (shifted.lambda1 - (eig.lambda1 - c)).abs();
    if shift_err > STRUCTURAL_INVARIANTS_SHIFT_TOL {
        bad.push(format!("shift equivariance off by {shift_err:e}"));
    }
    Ok(bad)
}

fn structural_invariants() -> Result<(bool, String), String> {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut failures = Vec::new();
    for k in 0..50 {
        let sc = random_scenario(&mut rng)?;
        for b in check_random(&sc, &mut rng)? {
            failures.push(format!("scenario {k}: {b}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    for f in failures.iter().take(10) {
        info(f.clone());
    }
    Ok((
        failures.is_empty() && secs < STRUCTURAL_INVARIANTS_SECONDS,
        format!("structural invariants on 50 random scenarios: {} failures, {secs:.1}s (limit {STRUCTURAL_INVARIANTS_SECONDS}s)", failures.len()),
    ))
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: Vec::new() };
    suite.run("constant_eigenvalue", constant_eigenvalue);
    suite.run("final_size", final_size_check);
    suite.run("energy_identity", energy_identity);
    suite.run("threshold_dichotomy", threshold_dichotomy);
    suite.run("final_state_comparison", final_state_comparison);
    suite.run("critical_diffusivity", critical_diffusivity_check);
    suite.run("lambda1_limits", lambda1_limits);
    suite.run("small_i0_agreement", small_i0_agreement);
    suite.run("structural_invariants", structural_invariants);
    if suite.failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {}", suite.failed.join(", "));
        ExitCode::FAILURE
    }
}
