//! Principal eigenpairs of the threshold operator and derived quantities.

use std::sync::Arc;

use crate::elliptic::EllipticOperator;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::linalg::{SymMatrix, TridiagonalLu};
use crate::scenario::{DiffusionField, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

impl EigenOptions {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            tol: sc.numerics().eigen_tol,
            max_iter: sc.numerics().eigen_max_iter,
        }
    }
}

/// Principal eigenpair `L φ = λ₁ φ`, `φ > 0`, `∫φ² = |Ω|`.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda1: f64,
    pub phi: ScalarField,
    /// `‖Lφ − λ₁φ‖∞` at exit.
    pub residual: f64,
    pub iterations: usize,
}

/// Inverse power iteration on `L + σ Id` with `σ = max V + 1`.
///
/// The shifted matrix has spectrum in `[1, ∞)` because `λ₁ ≥ −max V`, so
/// every inner solve is symmetric positive definite and, being an M-matrix,
/// maps positive vectors to positive vectors. Iteration stops once
/// `‖Lφ − λφ‖∞ ≤ max(tol (1 + |λ|), 8 ε ‖L‖∞ ‖φ‖∞)`; the second term is
/// the floating-point floor of evaluating `Lφ`, which dominates when the
/// diffusion is very large compared with the grid spacing.
pub fn principal_eigenpair(op: &EllipticOperator, opts: EigenOptions) -> Result<EigenResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("eigen tolerance must be positive"));
    }
    let grid = op.grid().clone();
    let n = grid.len();
    let sigma = op.potential().max_value() + 1.0;
    let shifted = SymMatrix::new(
        op.stencil().clone(),
        op.matrix().diag().iter().map(|d| d + sigma).collect(),
        1.0,
    );
    let lu = if grid.dim() == 1 {
        Some(TridiagonalLu::factor(&shifted)?)
    } else {
        None
    };
    let op_norm = op.matrix().norm_inf();

    let mut x = vec![1.0; n];
    let mut residual = f64::INFINITY;
    let mut lambda = f64::NAN;
    let mut r = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let mut y = match &lu {
            Some(lu) => lu.solve(&x)?,
            None => {
                let guess: Vec<f64> = x.iter().map(|v| v / (lambda + sigma).max(1.0)).collect();
                shifted.solve(&x, Some(&guess), true)?
            }
        };
        let norm = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::LinearSolve("inverse iteration collapsed".into()));
        }
        for v in &mut y {
            *v /= norm;
        }
        op.matrix().apply_into(&y, &mut r);
        let yy: f64 = y.iter().map(|v| v * v).sum();
        // Face-by-face form: differences are taken before the large
        // transmissibilities multiply them.
        lambda = op.quadratic_form(&y) / (yy * grid.cell_volume());
        residual = r
            .iter()
            .zip(&y)
            .map(|(ly, v)| (ly - lambda * v).abs())
            .fold(0.0, f64::max);
        let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = 8.0 * f64::EPSILON * op_norm * ymax;
        x = y;
        if residual <= (opts.tol * (1.0 + lambda.abs())).max(floor) {
            let min = x.iter().copied().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return Err(Error::PositivityFailure {
                    what: "principal eigenvector",
                    min,
                });
            }
            return Ok(EigenResult {
                lambda1: lambda,
                phi: ScalarField::from_raw(grid, x),
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "inverse power iteration",
        iterations: opts.max_iter,
        residual,
    })
}

/// Discrete Rayleigh quotient `⟨ψ, Lψ⟩ / ⟨ψ, ψ⟩`.
pub fn rayleigh_quotient(op: &EllipticOperator, psi: &ScalarField) -> Result<f64> {
    if **psi.grid() != **op.grid() {
        return Err(Error::GridMismatch("test function on a different grid".into()));
    }
    let denom = psi.dot(psi);
    if denom == 0.0 {
        return Err(Error::Domain("Rayleigh quotient of the zero function".into()));
    }
    Ok(op.quadratic_form(psi.values()) / denom)
}

/// First non-zero Neumann eigenvalue of `−Δ` on the grid's box, and its
/// multiple by a diffusivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannGap {
    pub rho1: f64,
    pub scaled: f64,
}

pub fn neumann_gap(grid: &Grid, diffusion_scale: f64) -> NeumannGap {
    let rho1 = grid.neumann_gap();
    NeumannGap {
        rho1,
        scaled: diffusion_scale * rho1,
    }
}

/// Threshold operator `−∇·(A_I∇·) − (α ⨍S₀ − μ)` with the scenario's own
/// infectious diffusion.
pub fn threshold_operator(sc: &Scenario) -> Result<EllipticOperator> {
    EllipticOperator::assemble(&sc.a_i, &sc.threshold_potential())
}

pub fn threshold_eigenpair(sc: &Scenario) -> Result<EigenResult> {
    principal_eigenpair(&threshold_operator(sc)?, EigenOptions::from_scenario(sc))
}

/// Threshold operator with `A_I = d_I · Id`.
pub fn threshold_operator_di(sc: &Scenario, d_i: f64) -> Result<EllipticOperator> {
    if !(d_i > 0.0 && d_i.is_finite()) {
        return Err(Error::invalid(format!("d_I must be positive, got {d_i}")));
    }
    let a = DiffusionField::isotropic(sc.grid(), d_i, 0.0)?;
    EllipticOperator::assemble(&a, &sc.threshold_potential())
}

pub fn eigenpair_of_di(sc: &Scenario, d_i: f64) -> Result<EigenResult> {
    principal_eigenpair(&threshold_operator_di(sc, d_i)?, EigenOptions::from_scenario(sc))
}

/// `λ_I(d_I · Id, α, μ, S₀)`.
pub fn lambda1_of_di(sc: &Scenario, d_i: f64) -> Result<f64> {
    Ok(eigenpair_of_di(sc, d_i)?.lambda1)
}

/// Limits of `λ₁(d_I)`: `min(μ − α⨍S₀)` as `d_I → 0` and
/// `⨍μ − ⨍α⨍S₀` as `d_I → ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionLimits {
    pub small: f64,
    pub large: f64,
}

pub fn diffusion_limits(sc: &Scenario) -> DiffusionLimits {
    let v = sc.threshold_potential();
    DiffusionLimits {
        small: -v.max_value(),
        large: sc.mu.mean() - sc.alpha.mean() * sc.s0.mean(),
    }
}

/// Whether `⨍α⨍S₀/⨍μ < 1 < max(α⨍S₀/μ)`, the setting with a critical
/// infectious diffusivity.
pub fn has_critical_diffusivity(sc: &Scenario) -> bool {
    let s_bar = sc.s0.mean();
    let averaged = sc.alpha.mean() * s_bar / sc.mu.mean();
    let peak = sc
        .alpha
        .values()
        .iter()
        .zip(sc.mu.values())
        .map(|(a, m)| a * s_bar / m)
        .fold(f64::NEG_INFINITY, f64::max);
    averaged < 1.0 && 1.0 < peak
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalDiffusivity {
    pub d_star: f64,
    /// `λ₁(d*)`.
    pub lambda_at: f64,
    /// Final bracket `[lo, hi]` with `λ₁(lo) < 0 < λ₁(hi)`.
    pub bracket: (f64, f64),
    pub evaluations: usize,
}

const BRACKET_MIN: f64 = 1e-6;
const BRACKET_MAX: f64 = 1e6;

/// Bisection (in `log d`) for the zero of the strictly increasing map
/// `d ↦ λ₁(d)`.
pub fn critical_diffusivity(sc: &Scenario, d_lo: f64, d_hi: f64, rel_tol: f64) -> Result<CriticalDiffusivity> {
    if !(d_lo > 0.0 && d_hi > d_lo && rel_tol > 0.0) {
        return Err(Error::invalid(format!(
            "need 0 < d_lo < d_hi and rel_tol > 0, got [{d_lo}, {d_hi}], {rel_tol}"
        )));
    }
    if !has_critical_diffusivity(sc) {
        return Err(Error::ConditionNotMet(
            "critical diffusivity needs mean(α)·mean(S₀)/mean(μ) < 1 < max(α·mean(S₀)/μ)".into(),
        ));
    }
    let lam_tol = 1e-8 * sc.threshold_potential().linf_norm().max(1.0);
    let mut evals = 0usize;
    let mut lam = |d: f64| {
        evals += 1;
        lambda1_of_di(sc, d)
    };
    let (mut lo, mut hi) = (d_lo, d_hi);
    let mut f_lo = lam(lo)?;
    while f_lo >= 0.0 {
        lo /= 10.0;
        if lo < BRACKET_MIN {
            return Err(Error::ConditionNotMet(format!(
                "no sign change of λ₁ down to d = {BRACKET_MIN:e}"
            )));
        }
        f_lo = lam(lo)?;
    }
    let mut f_hi = lam(hi)?;
    while f_hi <= 0.0 {
        hi *= 10.0;
        if hi > BRACKET_MAX {
            return Err(Error::ConditionNotMet(format!(
                "no sign change of λ₁ up to d = {BRACKET_MAX:e}"
            )));
        }
        f_hi = lam(hi)?;
    }
    let (mut best_d, mut best_f) = if -f_lo < f_hi { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..400 {
        let width_ok = hi / lo - 1.0 <= rel_tol;
        if width_ok && best_f.abs() <= lam_tol {
            break;
        }
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let f = lam(mid)?;
        if f.abs() < best_f.abs() {
            best_d = mid;
            best_f = f;
        }
        if f < 0.0 {
            lo = mid;
        } else if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
            hi = mid;
            break;
        }
    }
    Ok(CriticalDiffusivity {
        d_star: best_d,
        lambda_at: best_f,
        bracket: (lo, hi),
        evaluations: evals,
    })
}

/// Smallest Rayleigh quotient among `tests`, an upper bound for `λ₁`.
pub fn min_rayleigh(op: &EllipticOperator, tests: &[ScalarField]) -> Result<f64> {
    tests
        .iter()
        .map(|t| rayleigh_quotient(op, t))
        .try_fold(f64::INFINITY, |m, q| q.map(|q| m.min(q)))
}

/// Convenience for tests and bindings: eigenpair of `−∇·(d∇·) − V` on a
/// 1D/2D grid with constant `d`.
pub fn eigenpair_constant_diffusion(grid: &Arc<Grid>, d: f64, potential: &ScalarField, opts: EigenOptions) -> Result<EigenResult> {
    let a = DiffusionField::isotropic(grid, d, 0.0)?;
    principal_eigenpair(&EllipticOperator::assemble(&a, potential)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientSpec;
    use crate::scenario::{DiffusionSpec, ScenarioSpec};
    use std::f64::consts::PI;

    fn grid1(n: usize) -> Arc<Grid> {
        Arc::new(Grid::interval(1.0, n).unwrap())
    }

    fn cos_potential(g: &Arc<Grid>) -> ScalarField {
        ScalarField::from_fn(g.clone(), |[x, _]| (2.0 * PI * x).cos())
    }

    #[test]
    fn constant_potential_gives_minus_v() {
        for g in [grid1(64), Arc::new(Grid::rectangle([1.0, 2.0], [8, 12]).unwrap())] {
            let v = ScalarField::constant(g.clone(), 0.37);
            let res = eigenpair_constant_diffusion(&g, 2.5, &v, EigenOptions::default()).unwrap();
            assert!((res.lambda1 + 0.37).abs() < 1e-12);
            assert!(res.phi.flatness() < 1e-10);
            assert!((res.phi.dot(&res.phi) - g.volume()).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_moves_lambda_and_keeps_phi() {
        let g = grid1(128);
        let a = DiffusionField::isotropic(&g, 0.05, 0.0).unwrap();
        let op = EllipticOperator::assemble(&a, &cos_potential(&g)).unwrap();
        let base = principal_eigenpair(&op, EigenOptions::default()).unwrap();
        let moved = principal_eigenpair(&op.with_potential_shift(0.8), EigenOptions::default()).unwrap();
        assert!((moved.lambda1 - (base.lambda1 - 0.8)).abs() < 1e-10);
        let diff = moved.phi.zip_map(&base.phi, |a, b| a - b).unwrap();
        assert!(diff.linf_norm() < 1e-6);
    }

    #[test]
    fn rayleigh_quotients() {
        let g = grid1(64);
        let v = cos_potential(&g).map(|x| 0.5 * x + 0.2);
        let a = DiffusionField::isotropic(&g, 0.1, 0.0).unwrap();
        let op = EllipticOperator::assemble(&a, &v).unwrap();
        let ones = ScalarField::constant(g.clone(), 1.0);
        let rq = rayleigh_quotient(&op, &ones).unwrap();
        assert!((rq + v.values().iter().sum::<f64>() / 64.0).abs() < 1e-14);
        let res = principal_eigenpair(&op, EigenOptions::default()).unwrap();
        assert!((rayleigh_quotient(&op, &res.phi).unwrap() - res.lambda1).abs() < 1e-10);
        for k in 0..5 {
            let psi = ScalarField::from_fn(g.clone(), |[x, _]| 1.0 + (k as f64 * x).sin());
            assert!(rayleigh_quotient(&op, &psi).unwrap() >= res.lambda1 - 1e-12);
        }
        assert!(matches!(
            rayleigh_quotient(&op, &ScalarField::zeros(g.clone())),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn neumann_gap_values() {
        let g = Grid::interval(1.0, 8).unwrap();
        let gap = neumann_gap(&g, 0.5);
        assert!((gap.rho1 - PI * PI).abs() < 1e-12);
        assert!((gap.scaled - 0.5 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = grid1(256);
        let a = DiffusionField::isotropic(&g, 0.01, 0.0).unwrap();
        let op = EllipticOperator::assemble(&a, &cos_potential(&g)).unwrap();
        let err = principal_eigenpair(&op, EigenOptions { tol: 1e-14, max_iter: 2 }).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    fn bump_scenario(cells: usize) -> Scenario {
        let mut spec = ScenarioSpec::homogeneous(cells, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0);
        spec.coefficients.alpha = CoefficientSpec::gauss_bump(0.5, 1.2, 0.5, 0.1);
        Scenario::new(spec).unwrap()
    }

    #[test]
    fn constant_alpha_has_no_critical_diffusivity() {
        let sc = Scenario::new(ScenarioSpec::homogeneous(32, 0.5, 1.0, 1.0, 0.0, 1.0, 1.0)).unwrap();
        for d in [1e-3, 1.0, 1e3] {
            assert!((lambda1_of_di(&sc, d).unwrap() - 0.5).abs() < 1e-12);
        }
        let err = critical_diffusivity(&sc, 1e-2, 1e2, 1e-10).unwrap_err();
        assert!(matches!(err, Error::ConditionNotMet(_)));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn bump_critical_diffusivity_sign_checks() {
        let sc = bump_scenario(256);
        let cd = critical_diffusivity(&sc, 1e-2, 1e2, 1e-10).unwrap();
        assert!(cd.lambda_at.abs() <= 1e-8, "{cd:?}");
        assert!(lambda1_of_di(&sc, cd.d_star / 2.0).unwrap() < 0.0);
        assert!(lambda1_of_di(&sc, 2.0 * cd.d_star).unwrap() > 0.0);
    }

    #[test]
    fn anisotropic_2d_eigenpair_is_positive() {
        let mut spec = ScenarioSpec::homogeneous(4, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0);
        spec.domain = crate::grid::DomainSpec::rectangle([1.0, 1.0], [16, 12]);
        spec.coefficients.alpha = CoefficientSpec::GaussBump {
            base: 0.5,
            amp: 1.0,
            center: crate::coefficient::OneOrMany::Many(vec![0.3, 0.6]),
            width: 0.15,
        };
        spec.coefficients.d_i = DiffusionSpec::PerAxis(vec![
            CoefficientSpec::constant(0.02),
            CoefficientSpec::cosine(0.05, 0.02, 1.0),
        ]);
        let sc = Scenario::new(spec).unwrap();
        let res = threshold_eigenpair(&sc).unwrap();
        assert!(res.phi.min_value() > 0.0);
        let v = sc.threshold_potential();
        assert!(res.lambda1 >= -v.max_value() - 1e-12);
        assert!(res.lambda1 <= -v.mean() + 1e-12);
    }
}
