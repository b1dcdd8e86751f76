use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{invalid, Error, Result};
use crate::phase_state::GridSpec;
use crate::sum::CompensatedSum;

/// What is stored per node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rank {
    Scalar,
    Vector,
    /// Row-major N×N, entry (i, j) at `i * N + j`.
    Matrix,
}

impl Rank {
    pub fn components(self, dim: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => dim,
            Rank::Matrix => dim * dim,
        }
    }

    fn code(self) -> u32 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::Matrix => 2,
        }
    }
}

/// Scalar, vector or matrix samples on the nodes of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: GridSpec,
    rank: Rank,
    values: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"VLGF";
const VERSION: u32 = 1;

impl GridField {
    pub fn zeros(grid: GridSpec, rank: Rank) -> Self {
        let n = grid.node_count() * rank.components(grid.dim());
        Self {
            grid,
            rank,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(grid: GridSpec, rank: Rank, values: Vec<f64>) -> Result<Self> {
        let n = grid.node_count() * rank.components(grid.dim());
        if values.len() != n {
            return invalid(format!(
                "grid field needs {n} values for {:?} rank, got {}",
                rank,
                values.len()
            ));
        }
        Ok(Self { grid, rank, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: GridSpec, rank: Rank, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let c = rank.components(grid.dim());
        let mut values = vec![0.0; grid.node_count() * c];
        for (k, out) in values.chunks_exact_mut(c).enumerate() {
            f(&grid.node_position(k), out);
        }
        Self { grid, rank, values }
    }

    pub fn scalar_from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, Rank::Scalar, |x, out| out[0] = f(x))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn components(&self) -> usize {
        self.rank.components(self.grid.dim())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, k: usize) -> &[f64] {
        let c = self.components();
        &self.values[k * c..(k + 1) * c]
    }

    /// Pointwise magnitude: absolute value, Euclidean or Frobenius norm.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.components())
            .map(|c| c.iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect()
    }

    /// Node quadrature Σ value · node volume, per component.
    ///
    /// Node volumes are the trapezoidal control volumes of
    /// [`GridSpec::node_volume`], so constants integrate exactly.
    pub fn integral(&self) -> Vec<f64> {
        let c = self.components();
        let vols = self.grid.node_volumes();
        (0..c)
            .map(|j| {
                let mut acc = CompensatedSum::new();
                for (node, v) in self.values.chunks_exact(c).zip(&vols) {
                    acc.add(node[j] * v);
                }
                acc.value()
            })
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for (m, v) in self.magnitudes().iter().zip(self.grid.node_volumes()) {
            acc.add(m * v);
        }
        acc.value()
    }

    /// Σ |u|² · node volume.
    pub fn l2_norm_squared(&self) -> f64 {
        let c = self.components();
        let mut acc = CompensatedSum::new();
        for (node, v) in self.values.chunks_exact(c).zip(self.grid.node_volumes()) {
            acc.add(node.iter().map(|a| a * a).sum::<f64>() * v);
        }
        acc.value()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            rank: self.rank,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self - other` on a common grid.
    pub fn difference(&self, other: &GridField) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            rank: self.rank,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub(crate) fn check_compatible(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("grid fields live on different grids".into()));
        }
        if self.rank != other.rank {
            return Err(Error::Mismatch(format!(
                "grid field ranks differ: {:?} vs {:?}",
                self.rank, other.rank
            )));
        }
        Ok(())
    }

    /// Trace of a matrix field.
    pub fn trace(&self) -> Result<GridField> {
        if self.rank != Rank::Matrix {
            return invalid("trace needs a matrix field");
        }
        let d = self.dim();
        let values = self
            .values
            .chunks_exact(d * d)
            .map(|m| (0..d).map(|i| m[i * d + i]).sum())
            .collect();
        Ok(GridField {
            grid: self.grid.clone(),
            rank: Rank::Scalar,
            values,
        })
    }

    /// Writes the binary `VLGF` file.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(&mut w, VERSION)?;
        binio::write_u32(&mut w, self.dim() as u32)?;
        binio::write_u32(&mut w, self.rank.code())?;
        for &c in self.grid.cells() {
            binio::write_u64(&mut w, c as u64)?;
        }
        binio::write_f64s(&mut w, self.grid.origin())?;
        binio::write_f64s(&mut w, self.grid.extent())?;
        binio::write_f64s(&mut w, &self.values)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        binio::read_magic(&mut r, MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported VLGF version {version}")));
        }
        let dim = binio::read_u32(&mut r)? as usize;
        if !(1..=6).contains(&dim) {
            return Err(Error::Format(format!("VLGF dimension {dim} out of range")));
        }
        let rank = match binio::read_u32(&mut r)? {
            0 => Rank::Scalar,
            1 => Rank::Vector,
            2 => Rank::Matrix,
            other => return Err(Error::Format(format!("unknown VLGF rank code {other}"))),
        };
        let mut cells = Vec::with_capacity(dim);
        for _ in 0..dim {
            cells.push(binio::checked_len(binio::read_u64(&mut r)?, 1)?);
        }
        let origin = binio::read_f64s(&mut r, dim)?;
        let extent = binio::read_f64s(&mut r, dim)?;
        let grid =
            GridSpec::new(origin, extent, cells).map_err(|e| Error::Format(format!("VLGF grid rejected: {e}")))?;
        let n = binio::checked_len(grid.node_count() as u64, rank.components(dim))?;
        let values = binio::read_f64s(&mut r, n)?;
        Self::from_values(grid, rank, values)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
