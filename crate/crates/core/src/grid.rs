//! Uniform cell-centered grids on intervals and rectangles.
//!
//! Cells are indexed row-major by `y` then `x`: cell `(i, j)` has flat index
//! `j * nx + i`. Every interior face joins two neighbouring cells; boundary
//! faces are never materialized, which is how the zero-flux condition is
//! encoded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain description as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    /// Side lengths, one per axis (1 or 2 entries).
    pub lengths: Vec<f64>,
    /// Cell counts, one per axis.
    pub cells: Vec<usize>,
}

impl DomainSpec {
    pub fn interval(length: f64, cells: usize) -> Self {
        Self {
            lengths: vec![length],
            cells: vec![cells],
        }
    }

    pub fn rectangle(lengths: [f64; 2], cells: [usize; 2]) -> Self {
        Self {
            lengths: lengths.to_vec(),
            cells: cells.to_vec(),
        }
    }
}

/// An interior face between cells `lo < hi` along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub lo: usize,
    pub hi: usize,
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lengths: Vec<f64>,
    cells: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(spec: &DomainSpec) -> Result<Self> {
        let dim = spec.lengths.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(format!(
                "domain dimension must be 1 or 2, got {dim}"
            )));
        }
        if spec.cells.len() != dim {
            return Err(Error::invalid(format!(
                "domain has {dim} lengths but {} cell counts",
                spec.cells.len()
            )));
        }
        for (axis, (&l, &n)) in spec.lengths.iter().zip(&spec.cells).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!(
                    "domain length on axis {axis} must be positive, got {l}"
                )));
            }
            if n < 2 {
                return Err(Error::invalid(format!(
                    "domain needs at least 2 cells on axis {axis}, got {n}"
                )));
            }
        }
        let spacing = spec
            .lengths
            .iter()
            .zip(&spec.cells)
            .map(|(&l, &n)| l / n as f64)
            .collect();
        Ok(Self {
            lengths: spec.lengths.clone(),
            cells: spec.cells.clone(),
            spacing,
        })
    }

    pub fn interval(length: f64, cells: usize) -> Result<Self> {
        Self::new(&DomainSpec::interval(length, cells))
    }

    pub fn rectangle(lengths: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        Self::new(&DomainSpec::rectangle(lengths, cells))
    }

    pub fn spec(&self) -> DomainSpec {
        DomainSpec {
            lengths: self.lengths.clone(),
            cells: self.cells.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measure of the domain.
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    pub fn ny(&self) -> usize {
        self.cells.get(1).copied().unwrap_or(1)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    /// Axis coordinates of cell centers, `(k + 1/2) h`.
    pub fn axis_centers(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing[axis];
        (0..self.cells[axis]).map(|k| (k as f64 + 0.5) * h).collect()
    }

    /// Center of the cell with flat index `idx`; the second coordinate is
    /// zero on 1D grids.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let nx = self.nx();
        let (i, j) = (idx % nx, idx / nx);
        let x = (i as f64 + 0.5) * self.spacing[0];
        let y = if self.dim() == 2 {
            (j as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|idx| self.center(idx)).collect()
    }

    /// Interior faces, all x-faces first, then y-faces.
    pub fn faces(&self) -> Vec<Face> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut faces = Vec::with_capacity((nx - 1) * ny + nx * ny.saturating_sub(1));
        for j in 0..ny {
            for i in 0..nx - 1 {
                faces.push(Face {
                    lo: self.index(i, j),
                    hi: self.index(i + 1, j),
                    axis: 0,
                });
            }
        }
        if self.dim() == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    faces.push(Face {
                        lo: self.index(i, j),
                        hi: self.index(i, j + 1),
                        axis: 1,
                    });
                }
            }
        }
        faces
    }

    /// First non-zero Neumann eigenvalue of `-Δ` on the box:
    /// `min_axis (π / L_axis)²`.
    pub fn neumann_gap(&self) -> f64 {
        self.lengths
            .iter()
            .map(|l| (std::f64::consts::PI / l).powi(2))
            .fold(f64::INFINITY, f64::min)
    }
}
