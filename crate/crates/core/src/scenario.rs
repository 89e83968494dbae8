//! Model instances: coefficient specifications plus their sampled fields.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficient::{CoefficientSpec, Sign};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{DomainSpec, Grid};

/// Diffusivity specification: one field for isotropic diffusion, or one per
/// axis for an axis-aligned diagonal tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiffusionSpec {
    Isotropic(CoefficientSpec),
    PerAxis(Vec<CoefficientSpec>),
}

impl DiffusionSpec {
    pub fn constant(d: f64) -> Self {
        DiffusionSpec::Isotropic(CoefficientSpec::constant(d))
    }

    /// Constant isotropic diffusivity, if that is what this is.
    pub fn as_constant(&self) -> Option<f64> {
        let single = match self {
            DiffusionSpec::Isotropic(c) => c,
            DiffusionSpec::PerAxis(cs) => {
                let first = cs.first()?;
                if cs.iter().any(|c| c != first) {
                    return None;
                }
                first
            }
        };
        match single {
            CoefficientSpec::Constant { value } => Some(*value),
            _ => None,
        }
    }

    pub fn sample(&self, grid: &Arc<Grid>, key: &str, floor: f64) -> Result<DiffusionField> {
        let specs: Vec<&CoefficientSpec> = match self {
            DiffusionSpec::Isotropic(c) => vec![c; grid.dim()],
            DiffusionSpec::PerAxis(cs) => {
                if cs.len() != grid.dim() {
                    return Err(Error::invalid(format!(
                        "`{key}` lists {} axis diffusivities on a {}D domain",
                        cs.len(),
                        grid.dim()
                    )));
                }
                cs.iter().collect()
            }
        };
        let axes = specs
            .iter()
            .enumerate()
            .map(|(a, spec)| {
                let name = if grid.dim() == 1 {
                    key.to_string()
                } else {
                    format!("{key}[{a}]")
                };
                spec.sample(grid, &name, Sign::Any)
            })
            .collect::<Result<Vec<_>>>()?;
        DiffusionField::new(axes, key, floor)
    }
}

/// Sampled diffusivity, one field per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionField {
    axes: Vec<ScalarField>,
}

impl DiffusionField {
    pub fn new(axes: Vec<ScalarField>, key: &str, floor: f64) -> Result<Self> {
        let first = axes
            .first()
            .ok_or_else(|| Error::invalid(format!("`{key}` has no axes")))?;
        if axes.len() != first.grid().dim() {
            return Err(Error::GridMismatch(format!(
                "`{key}` has {} axes on a {}D grid",
                axes.len(),
                first.grid().dim()
            )));
        }
        for f in &axes {
            first.check_same_grid(f)?;
            let min = f.min_value();
            if !(min >= floor) {
                return Err(Error::Ellipticity {
                    key: key.to_string(),
                    floor,
                    value: min,
                });
            }
        }
        Ok(Self { axes })
    }

    pub fn isotropic(grid: &Arc<Grid>, d: f64, floor: f64) -> Result<Self> {
        let axes = vec![ScalarField::constant(grid.clone(), d); grid.dim()];
        Self::new(axes, "diffusivity", floor)
    }

    pub fn axis(&self, a: usize) -> &ScalarField {
        &self.axes[a]
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.axes[0].grid()
    }

    /// Whether this dominates `other` pointwise on every axis.
    pub fn dominates(&self, other: &DiffusionField) -> bool {
        self.axes.iter().zip(&other.axes).all(|(a, b)| {
            a.values()
                .iter()
                .zip(b.values())
                .all(|(x, y)| x >= y)
        })
    }
}

fn default_t_max() -> f64 {
    1e4
}
fn default_tol_i() -> f64 {
    1e-10
}
fn default_tol_s() -> f64 {
    1e-12
}
fn default_eigen_tol() -> f64 {
    1e-10
}
fn default_eigen_max_iter() -> usize {
    10_000
}
fn default_floor() -> f64 {
    1e-12
}
fn default_d_lo() -> f64 {
    1e-2
}
fn default_d_hi() -> f64 {
    1e2
}
fn default_dstar_rel_tol() -> f64 {
    1e-10
}
fn default_scales() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
}

/// Numerical settings. Every key is optional in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Time step; defaults to `1e-3 / reaction_scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_tol_i")]
    pub tol_i: f64,
    #[serde(default = "default_tol_s")]
    pub tol_s: f64,
    #[serde(default = "default_eigen_tol")]
    pub eigen_tol: f64,
    #[serde(default = "default_eigen_max_iter")]
    pub eigen_max_iter: usize,
    #[serde(default = "default_floor")]
    pub ellipticity_floor: f64,
    /// Half-width of the critical band; defaults to `1e-8 · max(1, |V|∞)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_tol: Option<f64>,
    /// Record a trace row every this many steps; defaults to one row per
    /// `0.01` time units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<usize>,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_d_lo")]
    pub d_lo: f64,
    #[serde(default = "default_d_hi")]
    pub d_hi: f64,
    #[serde(default = "default_dstar_rel_tol")]
    pub dstar_rel_tol: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            dt: None,
            t_max: default_t_max(),
            tol_i: default_tol_i(),
            tol_s: default_tol_s(),
            eigen_tol: default_eigen_tol(),
            eigen_max_iter: default_eigen_max_iter(),
            ellipticity_floor: default_floor(),
            critical_tol: None,
            trace_every: None,
            scales: default_scales(),
            d_lo: default_d_lo(),
            d_hi: default_d_hi(),
            dstar_rel_tol: default_dstar_rel_tol(),
        }
    }
}

impl Numerics {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("t_max", self.t_max),
            ("tol_i", self.tol_i),
            ("tol_s", self.tol_s),
            ("eigen_tol", self.eigen_tol),
            ("ellipticity_floor", self.ellipticity_floor),
            ("d_lo", self.d_lo),
            ("d_hi", self.d_hi),
            ("dstar_rel_tol", self.dstar_rel_tol),
        ];
        for (key, v) in positive
            .into_iter()
            .chain(self.dt.map(|v| ("dt", v)))
            .chain(self.critical_tol.map(|v| ("critical_tol", v)))
        {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("`{key}` must be positive, got {v}")));
            }
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("`scales` must be non-negative"));
        }
        if self.eigen_max_iter == 0 || self.trace_every == Some(0) {
            return Err(Error::invalid("iteration counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub alpha: CoefficientSpec,
    pub mu: CoefficientSpec,
    pub d_s: DiffusionSpec,
    pub d_i: DiffusionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub s0: CoefficientSpec,
    pub i0: CoefficientSpec,
}

/// Unsampled model description; this is what scenario files contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub domain: DomainSpec,
    pub coefficients: Coefficients,
    pub initial: Initial,
    #[serde(default)]
    pub numerics: Numerics,
}

impl ScenarioSpec {
    /// Spatially constant model on `(0, 1)`.
    pub fn homogeneous(cells: usize, alpha: f64, mu: f64, s0: f64, i0: f64, d_s: f64, d_i: f64) -> Self {
        Self {
            domain: DomainSpec::interval(1.0, cells),
            coefficients: Coefficients {
                alpha: CoefficientSpec::constant(alpha),
                mu: CoefficientSpec::constant(mu),
                d_s: DiffusionSpec::constant(d_s),
                d_i: DiffusionSpec::constant(d_i),
            },
            initial: Initial {
                s0: CoefficientSpec::constant(s0),
                i0: CoefficientSpec::constant(i0),
            },
            numerics: Numerics::default(),
        }
    }

    pub fn load_tables(&mut self, base_dir: &Path) -> Result<()> {
        self.coefficients.alpha.load_tables(base_dir, "alpha")?;
        self.coefficients.mu.load_tables(base_dir, "mu")?;
        for (key, d) in [("d_s", &mut self.coefficients.d_s), ("d_i", &mut self.coefficients.d_i)] {
            match d {
                DiffusionSpec::Isotropic(c) => c.load_tables(base_dir, key)?,
                DiffusionSpec::PerAxis(cs) => {
                    for c in cs {
                        c.load_tables(base_dir, key)?;
                    }
                }
            }
        }
        self.initial.s0.load_tables(base_dir, "s0")?;
        self.initial.i0.load_tables(base_dir, "i0")?;
        Ok(())
    }

    /// Whether α, μ and S₀ are all spatially constant.
    pub fn is_homogeneous(&self) -> bool {
        self.coefficients.alpha.is_constant()
            && self.coefficients.mu.is_constant()
            && self.initial.s0.is_constant()
    }
}

/// A validated model with every coefficient sampled on the grid.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    grid: Arc<Grid>,
    pub alpha: ScalarField,
    pub mu: ScalarField,
    pub s0: ScalarField,
    pub i0: ScalarField,
    pub a_s: DiffusionField,
    pub a_i: DiffusionField,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.numerics.validate()?;
        let grid = Arc::new(Grid::new(&spec.domain)?);
        let floor = spec.numerics.ellipticity_floor;
        let c = &spec.coefficients;
        let alpha = c.alpha.sample(&grid, "alpha", Sign::Positive)?;
        let mu = c.mu.sample(&grid, "mu", Sign::Positive)?;
        let a_s = c.d_s.sample(&grid, "d_s", floor)?;
        let a_i = c.d_i.sample(&grid, "d_i", floor)?;
        let s0 = spec.initial.s0.sample(&grid, "s0", Sign::Positive)?;
        let i0 = spec.initial.i0.sample(&grid, "i0", Sign::NonNegative)?;
        Ok(Self {
            spec,
            grid,
            alpha,
            mu,
            s0,
            i0,
            a_s,
            a_i,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn numerics(&self) -> &Numerics {
        &self.spec.numerics
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `V = α · mean(S₀) − μ`, the potential of the threshold operator.
    pub fn threshold_potential(&self) -> ScalarField {
        let s_bar = self.s0.mean();
        self.alpha
            .zip_map(&self.mu, |a, m| a * s_bar - m)
            .expect("scenario fields share one grid")
    }

    /// Characteristic reaction rate `max(max α · max S₀, max μ)`.
    pub fn reaction_scale(&self) -> f64 {
        (self.alpha.max_value() * self.s0.max_value()).max(self.mu.max_value())
    }

    /// Configured time step, or `1e-3 / reaction_scale`.
    pub fn default_dt(&self) -> f64 {
        self.spec
            .numerics
            .dt
            .unwrap_or_else(|| 1e-3 / self.reaction_scale())
    }

    pub fn is_homogeneous(&self) -> bool {
        let flat = |f: &ScalarField| f.flatness() == 0.0;
        flat(&self.alpha) && flat(&self.mu) && flat(&self.s0)
    }

    /// Same scenario with `I₀` replaced by `c · I₀`.
    pub fn with_i0_scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.spec.initial.i0 = self.spec.initial.i0.scaled(c);
        out.i0 = self.i0.scaled(c);
        out
    }

    /// Same scenario with a replacement numerics section.
    pub fn with_numerics(&self, numerics: Numerics) -> Result<Self> {
        numerics.validate()?;
        let mut out = self.clone();
        out.spec.numerics = numerics;
        Ok(out)
    }

    /// Resamples with a different spec (used by parameter sweeps).
    pub fn respec(&self, f: impl FnOnce(&mut ScenarioSpec)) -> Result<Self> {
        let mut spec = self.spec.clone();
        f(&mut spec);
        Scenario::new(spec)
    }
}
