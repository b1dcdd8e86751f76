use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A uniform box grid in N spatial dimensions.
///
/// Quantities live on nodes: an axis with `cells` intervals carries
/// `cells + 1` nodes. Node storage is row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    origin: Vec<f64>,
    extent: Vec<f64>,
    cells: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    origin: Vec<f64>,
    extent: Vec<f64>,
    cells: Vec<usize>,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = crate::Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.origin, raw.extent, raw.cells)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid {
            origin: g.origin,
            extent: g.extent,
            cells: g.cells,
        }
    }
}

impl GridSpec {
    /// Grids are used for spatial fields (up to 3 axes) and for phase-space
    /// binning (up to 6 axes).
    pub fn new(origin: Vec<f64>, extent: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = origin.len();
        if d == 0 || d > 6 {
            return invalid(format!("grid must have 1 to 6 axes, got {d}"));
        }
        if extent.len() != d || cells.len() != d {
            return invalid("grid origin, extent and cells must have equal length");
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return invalid("grid origin must be finite");
        }
        if extent.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return invalid("grid extent must be positive and finite");
        }
        if cells.contains(&0) {
            return invalid("grid needs at least one cell per axis");
        }
        Ok(Self { origin, extent, cells })
    }

    /// Cube `[-half_width, half_width]^dim` with `cells` intervals per axis.
    pub fn cube(dim: usize, half_width: f64, cells: usize) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![2.0 * half_width; dim], vec![cells; dim])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.spacing(a)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c + 1).collect()
    }

    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    /// Linear index of a node multi-index.
    pub fn node_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.cells).fold(0, |acc, (&i, &c)| acc * (c + 1) + i)
    }

    pub fn node_multi_index(&self, mut linear: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            let n = self.cells[a] + 1;
            out[a] = linear % n;
            linear /= n;
        }
    }

    pub fn node_position(&self, linear: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.node_multi_index(linear, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + i as f64 * self.spacing(a))
            .collect()
    }

    /// All node positions, flattened with stride `dim`.
    pub fn node_positions(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.node_count() * self.dim());
        for k in 0..self.node_count() {
            out.extend(self.node_position(k));
        }
        out
    }

    /// Control volume of a node: the cell volume, halved once for every axis on
    /// which the node sits on the boundary. These are trapezoidal weights, so
    /// they sum to the box volume.
    pub fn node_volume(&self, linear: usize) -> f64 {
        let mut idx = vec![0; self.dim()];
        self.node_multi_index(linear, &mut idx);
        idx.iter().zip(&self.cells).fold(
            self.cell_volume(),
            |v, (&i, &c)| {
                if i == 0 || i == c {
                    0.5 * v
                } else {
                    v
                }
            },
        )
    }

    pub fn node_volumes(&self) -> Vec<f64> {
        (0..self.node_count()).map(|k| self.node_volume(k)).collect()
    }

    /// True if the node lies on the outer boundary of the box.
    pub fn is_boundary_node(&self, linear: usize) -> bool {
        let mut idx = vec![0; self.dim()];
        self.node_multi_index(linear, &mut idx);
        idx.iter().zip(&self.cells).any(|(&i, &c)| i == 0 || i == c)
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(a, &xa)| xa >= self.origin[a] && xa <= self.origin[a] + self.extent[a])
    }

    /// Index of the closed cell containing `x`, or `None` outside the box.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut lin = 0usize;
        for a in 0..self.dim() {
            let u = (x[a] - self.origin[a]) / self.spacing(a);
            if !(u >= 0.0 && u <= self.cells[a] as f64) {
                return None;
            }
            let i = (u.floor() as usize).min(self.cells[a] - 1);
            lin = lin * self.cells[a] + i;
        }
        Some(lin)
    }
}
