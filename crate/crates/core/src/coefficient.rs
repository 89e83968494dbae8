//! Coefficient specifications and their sampling onto grids.
//!
//! Analytic families are evaluated at cell centers. Tables are read from CSV
//! (`x,value` in 1D, `x,y,value` in 2D, rows ordered by `y` then `x`) and
//! sampled piecewise-constant: each grid cell takes the value of the nearest
//! table node along every axis.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;

/// A scalar or a per-axis list, e.g. a bump center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn get(&self, axis: usize) -> f64 {
        match self {
            OneOrMany::One(v) => *v,
            OneOrMany::Many(vs) => vs.get(axis).or(vs.last()).copied().unwrap_or(0.0),
        }
    }
}

/// Tabulated values on a uniform (tensor) set of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub xs: Vec<f64>,
    /// Empty for 1D tables.
    pub ys: Vec<f64>,
    /// Row-major by `y` then `x`.
    pub values: Vec<f64>,
}

impl TableData {
    pub fn dim(&self) -> usize {
        if self.ys.is_empty() {
            1
        } else {
            2
        }
    }

    /// Reads a table CSV. `key` only feeds error messages.
    pub fn read_csv(path: &Path, key: &str) -> Result<Self> {
        let shape = |reason: String| Error::TableShape {
            key: key.to_string(),
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| shape(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let dim = match headers.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["x", "value"] => 1,
            ["x", "y", "value"] => 2,
            _ => {
                return Err(shape(format!(
                    "header must be `x,value` or `x,y,value`, got `{}`",
                    headers.join(",")
                )))
            }
        };
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let nums = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| shape(format!("cannot parse `{s}` as a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if nums.len() != dim + 1 {
                return Err(shape(format!("row has {} columns", nums.len())));
            }
            rows.push(nums);
        }
        Self::from_rows(dim, &rows, key)
    }

    fn from_rows(dim: usize, rows: &[Vec<f64>], key: &str) -> Result<Self> {
        let shape = |reason: String| Error::TableShape {
            key: key.to_string(),
            reason,
        };
        if rows.is_empty() {
            return Err(shape("table is empty".into()));
        }
        if dim == 1 {
            let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            if xs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(shape("x must be strictly increasing".into()));
            }
            return Ok(Self {
                xs,
                ys: Vec::new(),
                values: rows.iter().map(|r| r[1]).collect(),
            });
        }
        let nx = rows.iter().take_while(|r| r[1] == rows[0][1]).count();
        if nx == 0 || rows.len() % nx != 0 {
            return Err(shape(format!(
                "{} rows do not form a tensor grid with {nx} x-nodes",
                rows.len()
            )));
        }
        let ny = rows.len() / nx;
        let xs: Vec<f64> = rows[..nx].iter().map(|r| r[0]).collect();
        let ys: Vec<f64> = (0..ny).map(|j| rows[j * nx][1]).collect();
        for (k, r) in rows.iter().enumerate() {
            let (i, j) = (k % nx, k / nx);
            if r[0] != xs[i] || r[1] != ys[j] {
                return Err(shape(format!(
                    "row {k} is ({}, {}), expected ({}, {}); rows must be ordered by y then x",
                    r[0], r[1], xs[i], ys[j]
                )));
            }
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(shape("node coordinates must be strictly increasing".into()));
        }
        Ok(Self {
            xs,
            ys,
            values: rows.iter().map(|r| r[2]).collect(),
        })
    }

    /// Table whose nodes are exactly the cell centers of `field`'s grid.
    pub fn from_field(field: &ScalarField) -> Self {
        let g = field.grid();
        Self {
            xs: g.axis_centers(0),
            ys: if g.dim() == 2 { g.axis_centers(1) } else { Vec::new() },
            values: field.values().to_vec(),
        }
    }
}

fn nearest(nodes: &[f64], x: f64) -> usize {
    match nodes.binary_search_by(|n| n.total_cmp(&x)) {
        Ok(k) => k,
        Err(0) => 0,
        Err(k) if k == nodes.len() => nodes.len() - 1,
        Err(k) => {
            if x - nodes[k - 1] <= nodes[k] - x {
                k - 1
            } else {
                k
            }
        }
    }
}

/// Reference to a table file; the data is loaded when the scenario is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub path: PathBuf,
    #[serde(skip)]
    pub data: Option<Arc<TableData>>,
}

/// How a coefficient or initial datum is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    /// `base + amp · Π_axis cos(2π freq x_axis / L_axis)`.
    Cosine {
        base: f64,
        amp: f64,
        freq: f64,
    },
    /// `base + amp · exp(-|x - center|² / (2 width²))`.
    GaussBump {
        base: f64,
        amp: f64,
        center: OneOrMany,
        width: f64,
    },
    Table(TableSpec),
}

/// Sign constraint checked after sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    NonNegative,
    Any,
}

impl CoefficientSpec {
    pub fn constant(value: f64) -> Self {
        CoefficientSpec::Constant { value }
    }

    pub fn cosine(base: f64, amp: f64, freq: f64) -> Self {
        CoefficientSpec::Cosine { base, amp, freq }
    }

    pub fn gauss_bump(base: f64, amp: f64, center: f64, width: f64) -> Self {
        CoefficientSpec::GaussBump {
            base,
            amp,
            center: OneOrMany::One(center),
            width,
        }
    }

    pub fn table(data: TableData) -> Self {
        CoefficientSpec::Table(TableSpec {
            path: PathBuf::new(),
            data: Some(Arc::new(data)),
        })
    }

    pub fn is_constant(&self) -> bool {
        match self {
            CoefficientSpec::Constant { .. } => true,
            CoefficientSpec::Cosine { amp, .. } | CoefficientSpec::GaussBump { amp, .. } => {
                *amp == 0.0
            }
            CoefficientSpec::Table(_) => false,
        }
    }

    /// Returns a copy scaled by `c` (analytic families stay analytic).
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            CoefficientSpec::Constant { value } => CoefficientSpec::Constant { value: c * value },
            CoefficientSpec::Cosine { base, amp, freq } => CoefficientSpec::Cosine {
                base: c * base,
                amp: c * amp,
                freq: *freq,
            },
            CoefficientSpec::GaussBump {
                base,
                amp,
                center,
                width,
            } => CoefficientSpec::GaussBump {
                base: c * base,
                amp: c * amp,
                center: center.clone(),
                width: *width,
            },
            CoefficientSpec::Table(t) => CoefficientSpec::Table(TableSpec {
                path: t.path.clone(),
                data: t.data.as_ref().map(|d| {
                    Arc::new(TableData {
                        xs: d.xs.clone(),
                        ys: d.ys.clone(),
                        values: d.values.iter().map(|v| c * v).collect(),
                    })
                }),
            }),
        }
    }

    /// Loads table data, resolving relative paths against `base_dir`.
    pub fn load_tables(&mut self, base_dir: &Path, key: &str) -> Result<()> {
        if let CoefficientSpec::Table(t) = self {
            if t.data.is_none() {
                let path = if t.path.is_absolute() {
                    t.path.clone()
                } else {
                    base_dir.join(&t.path)
                };
                if !path.exists() {
                    return Err(Error::invalid(format!(
                        "`{key}`: table file {} not found",
                        path.display()
                    )));
                }
                t.data = Some(Arc::new(TableData::read_csv(&path, key)?));
            }
        }
        Ok(())
    }

    /// Samples the coefficient at the cell centers of `grid`.
    pub fn sample(&self, grid: &Arc<Grid>, key: &str, sign: Sign) -> Result<ScalarField> {
        let lengths = grid.lengths().to_vec();
        let field = match self {
            CoefficientSpec::Constant { value } => ScalarField::constant(grid.clone(), *value),
            CoefficientSpec::Cosine { base, amp, freq } => {
                ScalarField::from_fn(grid.clone(), |p| {
                    let prod: f64 = lengths
                        .iter()
                        .enumerate()
                        .map(|(a, l)| (2.0 * PI * freq * p[a] / l).cos())
                        .product();
                    base + amp * prod
                })
            }
            CoefficientSpec::GaussBump {
                base,
                amp,
                center,
                width,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::invalid(format!(
                        "`{key}`: gauss_bump width must be positive"
                    )));
                }
                ScalarField::from_fn(grid.clone(), |p| {
                    let r2: f64 = (0..lengths.len())
                        .map(|a| (p[a] - center.get(a)).powi(2))
                        .sum();
                    base + amp * (-r2 / (2.0 * width * width)).exp()
                })
            }
            CoefficientSpec::Table(t) => {
                let data = t.data.as_ref().ok_or_else(|| Error::TableShape {
                    key: key.to_string(),
                    reason: format!("table {} was not loaded", t.path.display()),
                })?;
                if data.dim() != grid.dim() {
                    return Err(Error::TableShape {
                        key: key.to_string(),
                        reason: format!(
                            "{}D table on a {}D grid",
                            data.dim(),
                            grid.dim()
                        ),
                    });
                }
                let nx = data.xs.len();
                let values = (0..grid.len())
                    .map(|k| {
                        let p = grid.center(k);
                        let i = nearest(&data.xs, p[0]);
                        let j = if data.dim() == 2 { nearest(&data.ys, p[1]) } else { 0 };
                        data.values[j * nx + i]
                    })
                    .collect();
                ScalarField::new(grid.clone(), values)?
            }
        };
        if field.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("`{key}` samples to non-finite values")));
        }
        let min = field.min_value();
        match sign {
            Sign::Positive if min <= 0.0 => Err(Error::Negativity {
                key: key.to_string(),
                value: min,
            }),
            Sign::NonNegative if min < 0.0 => Err(Error::Negativity {
                key: key.to_string(),
                value: min,
            }),
            _ => Ok(field),
        }
    }
}
