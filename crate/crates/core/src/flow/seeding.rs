use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::phase_state::ParticleEnsemble;

/// Phase-space region covered by lattice tracers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeedRegion {
    /// Ball of ℝ^{2N} centred at the origin.
    Ball {
        radius: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

/// Lattice points with the phase-space volume each one represents.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSeeds {
    pub dim: usize,
    /// Flat `(x, v)` pairs, stride 2N.
    pub states: Vec<f64>,
    pub cell_volume: f64,
    pub region: SeedRegion,
}

impl LatticeSeeds {
    pub fn len(&self) -> usize {
        self.states.len() / (2 * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Where the tracers of a history live and what volume each carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeding {
    pub first: usize,
    pub count: usize,
    pub cell_volume: f64,
    pub region: SeedRegion,
}

impl Seeding {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.count
    }
}

/// Cell-centred cubic lattice in the phase-space ball of radius `radius`, with
/// `points_per_unit_cell` points per unit of 2N-volume (spacing
/// `points_per_unit_cell^{-1/(2N)}`).
pub fn lattice_in_ball(dim: usize, radius: f64, points_per_unit_cell: f64) -> Result<LatticeSeeds> {
    if !(1..=3).contains(&dim) {
        return invalid(format!("dimension must be 1, 2 or 3, got {dim}"));
    }
    if !(radius > 0.0 && radius.is_finite()) || !(points_per_unit_cell > 0.0) {
        return invalid("seed radius and density must be positive");
    }
    let d2 = 2 * dim;
    let s = points_per_unit_cell.powf(-1.0 / d2 as f64);
    let m = (radius / s).ceil() as i64;
    let per_axis = (2 * m) as usize;
    let total = per_axis.checked_pow(d2 as u32).filter(|&t| t <= 50_000_000);
    let Some(total) = total else {
        return invalid("seeding lattice too fine for the requested ball");
    };
    let mut states = Vec::new();
    let mut z = vec![0.0; d2];
    for lin in 0..total {
        let mut rem = lin;
        let mut r2 = 0.0;
        for c in z.iter_mut() {
            let k = (rem % per_axis) as i64 - m;
            rem /= per_axis;
            *c = (k as f64 + 0.5) * s;
            r2 += *c * *c;
        }
        if r2 <= radius * radius {
            states.extend_from_slice(&z);
        }
    }
    if states.is_empty() {
        return invalid("seeding lattice has no point inside the ball");
    }
    Ok(LatticeSeeds {
        dim,
        states,
        cell_volume: s.powi(d2 as i32),
        region: SeedRegion::Ball { radius },
    })
}

/// Cell-centred lattice filling a 2N-dimensional box; per-axis counts are
/// rounded so that cells tile the box exactly.
pub fn lattice_in_box(lower: &[f64], upper: &[f64], points_per_unit_cell: f64) -> Result<LatticeSeeds> {
    let d2 = lower.len();
    if !d2.is_multiple_of(2) || !(2..=6).contains(&d2) || upper.len() != d2 {
        return invalid("seed box needs 2N lower and upper bounds");
    }
    if lower.iter().zip(upper).any(|(l, u)| !(u > l)) || !(points_per_unit_cell > 0.0) {
        return invalid("seed box must have positive extent and density");
    }
    let s = points_per_unit_cell.powf(-1.0 / d2 as f64);
    let counts: Vec<usize> = lower
        .iter()
        .zip(upper)
        .map(|(l, u)| (((u - l) / s).round() as usize).max(1))
        .collect();
    let steps: Vec<f64> = (0..d2).map(|a| (upper[a] - lower[a]) / counts[a] as f64).collect();
    let total: usize = counts.iter().product();
    if total > 50_000_000 {
        return invalid("seeding lattice too fine for the requested box");
    }
    let mut states = Vec::with_capacity(total * d2);
    for lin in 0..total {
        let mut rem = lin;
        for a in 0..d2 {
            let k = rem % counts[a];
            rem /= counts[a];
            states.push(lower[a] + (k as f64 + 0.5) * steps[a]);
        }
    }
    Ok(LatticeSeeds {
        dim: d2 / 2,
        states,
        cell_volume: steps.iter().product(),
        region: SeedRegion::Box {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        },
    })
}

/// Appends the seeds to the ensemble as zero-weight tracers.
pub fn attach_tracers(ens: &ParticleEnsemble, seeds: &LatticeSeeds) -> Result<(ParticleEnsemble, Seeding)> {
    let d = ens.dim();
    if seeds.dim != d {
        return Err(crate::Error::DimensionMismatch {
            expected: d,
            found: seeds.dim,
        });
    }
    let n = seeds.len();
    let mut xs = Vec::with_capacity(n * d);
    let mut vs = Vec::with_capacity(n * d);
    for z in seeds.states.chunks_exact(2 * d) {
        xs.extend_from_slice(&z[..d]);
        vs.extend_from_slice(&z[d..]);
    }
    let (out, first) = ens.extended(&xs, &vs, &vec![0.0; n])?;
    Ok((
        out,
        Seeding {
            first,
            count: n,
            cell_volume: seeds.cell_volume,
            region: seeds.region.clone(),
        },
    ))
}
