use std::io::{Read, Write};

use crate::binio;
use crate::error::{invalid, Error, Result};
use crate::sum::{compensated_sum, CompensatedSum};

/// Weighted point cloud in phase space.
///
/// Positions and velocities are stored flat with stride `dim`. Weights are
/// fixed at construction: no method hands out mutable access to them, so any
/// flow applied to an ensemble carries the same masses.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"VLEN";
const VERSION: u32 = 1;

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, velocities: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return invalid(format!("spatial dimension must be 1, 2 or 3, got {dim}"));
        }
        let n = weights.len();
        if n == 0 {
            return Err(Error::Empty("ensemble needs at least one particle".into()));
        }
        if positions.len() != n * dim || velocities.len() != n * dim {
            return invalid(format!(
                "{n} weights but {} position and {} velocity components for dim {dim}",
                positions.len(),
                velocities.len()
            ));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid(format!("weight {i} is negative or non-finite"));
        }
        if positions.iter().chain(&velocities).any(|x| !x.is_finite()) {
            return invalid("particle states must be finite");
        }
        let mass = compensated_sum(weights.iter().copied());
        if !(mass > 0.0 && mass.is_finite()) {
            return invalid("total mass must be strictly positive and finite");
        }
        Ok(Self {
            dim,
            positions,
            velocities,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// Always false: an ensemble holds at least one particle.
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    /// Euclidean norm of the phase point `(x, v)` in ℝ^{2N}.
    pub fn phase_norm(&self, i: usize) -> f64 {
        let x = self.position(i);
        let v = self.velocity(i);
        x.iter().chain(v).map(|a| a * a).sum::<f64>().sqrt()
    }

    pub(crate) fn kinematics_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.positions, &mut self.velocities)
    }

    /// Same weights, new phase-space states.
    pub(crate) fn with_states(&self, positions: Vec<f64>, velocities: Vec<f64>) -> Self {
        debug_assert_eq!(positions.len(), self.positions.len());
        debug_assert_eq!(velocities.len(), self.velocities.len());
        Self {
            dim: self.dim,
            positions,
            velocities,
            weights: self.weights.clone(),
        }
    }

    /// Appends particles and returns the index of the first new one.
    ///
    /// Zero-weight particles are allowed here; they act as passive tracers.
    pub fn extended(&self, positions: &[f64], velocities: &[f64], weights: &[f64]) -> Result<(Self, usize)> {
        let mut p = self.positions.clone();
        let mut v = self.velocities.clone();
        let mut w = self.weights.clone();
        p.extend_from_slice(positions);
        v.extend_from_slice(velocities);
        w.extend_from_slice(weights);
        let first = self.len();
        Ok((Self::new(self.dim, p, v, w)?, first))
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    pub fn kinetic_energy(&self) -> f64 {
        let d = self.dim;
        let mut acc = CompensatedSum::new();
        for (i, w) in self.weights.iter().enumerate() {
            let v = &self.velocities[i * d..(i + 1) * d];
            acc.add(0.5 * w * v.iter().map(|a| a * a).sum::<f64>());
        }
        acc.value()
    }

    /// Total momentum Σ w·v.
    pub fn momentum(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|a| {
                compensated_sum(
                    self.weights
                        .iter()
                        .enumerate()
                        .map(|(i, w)| w * self.velocities[i * self.dim + a]),
                )
            })
            .collect()
    }

    /// Mass-weighted second moment Σ w (|x|² + |v|²).
    pub fn second_moment(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for i in 0..self.len() {
            let n = self.phase_norm(i);
            acc.add(self.weights[i] * n * n);
        }
        acc.value()
    }

    /// Writes the binary `VLEN` snapshot.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        binio::write_u32(&mut w, VERSION)?;
        binio::write_u32(&mut w, self.dim as u32)?;
        binio::write_u64(&mut w, self.len() as u64)?;
        binio::write_f64s(&mut w, &self.positions)?;
        binio::write_f64s(&mut w, &self.velocities)?;
        binio::write_f64s(&mut w, &self.weights)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        binio::read_magic(&mut r, MAGIC)?;
        let version = binio::read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported VLEN version {version}")));
        }
        let dim = binio::read_u32(&mut r)? as usize;
        if !(1..=3).contains(&dim) {
            return Err(Error::Format(format!("VLEN dimension {dim} out of range")));
        }
        let count = binio::read_u64(&mut r)?;
        let n = binio::checked_len(count, dim)?;
        let positions = binio::read_f64s(&mut r, n)?;
        let velocities = binio::read_f64s(&mut r, n)?;
        let weights = binio::read_f64s(&mut r, n / dim)?;
        Self::new(dim, positions, velocities, weights).map_err(|e| Error::Format(format!("VLEN payload rejected: {e}")))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> ParticleEnsemble {
        ParticleEnsemble::new(1, vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn mass_and_kinetic_energy() {
        let e = three();
        assert_eq!(e.total_mass(), 6.0);
        assert_eq!(e.kinetic_energy(), 0.0);
        let n = 8;
        let unit = ParticleEnsemble::new(2, vec![0.0; 2 * n], [1.0, 0.0].repeat(n), vec![1.0 / n as f64; n]).unwrap();
        assert!((unit.kinetic_energy() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(ParticleEnsemble::new(1, vec![0.0], vec![0.0], vec![-1.0]).is_err());
        assert!(ParticleEnsemble::new(1, vec![0.0], vec![0.0], vec![0.0]).is_err());
        assert!(ParticleEnsemble::new(1, vec![0.0, 1.0], vec![0.0], vec![1.0]).is_err());
        assert!(ParticleEnsemble::new(4, vec![0.0; 4], vec![0.0; 4], vec![1.0]).is_err());
    }

    #[test]
    fn snapshot_layout_is_byte_exact() {
        let e = three();
        let mut buf = Vec::new();
        e.write_to(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"VLEN");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 20 + 9 * 8);
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 1.0);
        let back = ParticleEnsemble::read_from(&buf[..]).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let mut buf = Vec::new();
        three().write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(ParticleEnsemble::read_from(&buf[..]).is_err());
        buf[0] = b'X';
        assert!(matches!(ParticleEnsemble::read_from(&buf[..]), Err(Error::Format(_))));
    }
}
