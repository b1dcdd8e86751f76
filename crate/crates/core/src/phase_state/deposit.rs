use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridSpec, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::field::{GridField, Rank};
use crate::sum::CompensatedSum;

/// Particle-to-node assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepositScheme {
    /// Multilinear weights over the 2^N corners of the containing cell.
    #[default]
    CloudInCell,
    NearestGridPoint,
}

/// A deposited moment together with what fell outside the grid.
#[derive(Clone, Debug)]
pub struct Deposit {
    pub field: GridField,
    /// Per component: the part of Σ w·q carried by particles outside the box.
    pub outside: Vec<f64>,
}

impl Deposit {
    pub fn outside_mass(&self) -> f64 {
        self.outside[0]
    }
}

/// Particles per accumulation partition. Fixed so the merge order, and hence
/// every rounding, is independent of the thread count.
const CHUNK: usize = 4096;

/// Fills `out` with `(node, weight)` pairs; returns how many, or `None` outside.
pub(crate) fn stencil(grid: &GridSpec, scheme: DepositScheme, x: &[f64], out: &mut [(usize, f64); 8]) -> Option<usize> {
    let d = grid.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..d {
        let u = (x[a] - grid.origin()[a]) / grid.spacing(a);
        let c = grid.cells()[a];
        if !(u >= 0.0 && u <= c as f64) {
            return None;
        }
        let mut i = u.floor() as usize;
        let mut f = u - i as f64;
        if i >= c {
            i = c - 1;
            f = 1.0;
        }
        base[a] = i;
        frac[a] = f;
    }
    let nodes = grid.nodes_per_axis();
    match scheme {
        DepositScheme::NearestGridPoint => {
            let mut lin = 0;
            for a in 0..d {
                let i = base[a] + usize::from(frac[a] >= 0.5);
                lin = lin * nodes[a] + i;
            }
            out[0] = (lin, 1.0);
            Some(1)
        }
        DepositScheme::CloudInCell => {
            let corners = 1 << d;
            for (k, slot) in out.iter_mut().enumerate().take(corners) {
                let mut lin = 0;
                let mut w = 1.0;
                for a in 0..d {
                    let up = (k >> (d - 1 - a)) & 1 == 1;
                    lin = lin * nodes[a] + base[a] + usize::from(up);
                    w *= if up { frac[a] } else { 1.0 - frac[a] };
                }
                *slot = (lin, w);
            }
            Some(corners)
        }
    }
}

/// Scatters `comps` per-particle quantities onto node sums.
fn scatter(
    ens: &ParticleEnsemble,
    grid: &GridSpec,
    scheme: DepositScheme,
    comps: usize,
    quantity: impl Fn(usize, &mut [f64]) + Sync,
) -> (Vec<f64>, Vec<f64>) {
    let n_nodes = grid.node_count();
    let d = ens.dim();
    let index: Vec<usize> = (0..ens.len()).collect();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = index
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut nodes = vec![0.0; n_nodes * comps];
            let mut outside = vec![0.0; comps];
            let mut st = [(0usize, 0.0f64); 8];
            let mut q = vec![0.0; comps];
            for &i in chunk {
                quantity(i, &mut q);
                let x = &ens.positions()[i * d..(i + 1) * d];
                match stencil(grid, scheme, x, &mut st) {
                    Some(m) => {
                        for &(node, w) in &st[..m] {
                            for c in 0..comps {
                                nodes[node * comps + c] += w * q[c];
                            }
                        }
                    }
                    None => {
                        for c in 0..comps {
                            outside[c] += q[c];
                        }
                    }
                }
            }
            (nodes, outside)
        })
        .collect();
    let mut nodes = vec![CompensatedSum::new(); n_nodes * comps];
    let mut outside = vec![CompensatedSum::new(); comps];
    for (pn, po) in &partials {
        for (acc, v) in nodes.iter_mut().zip(pn) {
            acc.add(*v);
        }
        for (acc, v) in outside.iter_mut().zip(po) {
            acc.add(*v);
        }
    }
    (
        nodes.iter().map(|a| a.value()).collect(),
        outside.iter().map(|a| a.value()).collect(),
    )
}

fn check_dim(ens: &ParticleEnsemble, grid: &GridSpec) -> Result<()> {
    if ens.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: ens.dim(),
            found: grid.dim(),
        });
    }
    Ok(())
}

fn to_density(grid: &GridSpec, comps: usize, mut sums: Vec<f64>) -> Vec<f64> {
    for (k, node) in sums.chunks_exact_mut(comps).enumerate() {
        let v = grid.node_volume(k);
        node.iter_mut().for_each(|x| *x /= v);
    }
    sums
}

/// Number density ρ by cloud-in-cell.
///
/// Node values are deposited mass divided by the node control volume, so
/// `field.integral()[0] + outside_mass()` equals the total mass.
pub fn deposit_density(ens: &ParticleEnsemble, grid: &GridSpec) -> Result<Deposit> {
    deposit_density_with(ens, grid, DepositScheme::CloudInCell)
}

pub fn deposit_density_with(ens: &ParticleEnsemble, grid: &GridSpec, scheme: DepositScheme) -> Result<Deposit> {
    check_dim(ens, grid)?;
    let w = ens.weights();
    let (sums, outside) = scatter(ens, grid, scheme, 1, |i, q| q[0] = w[i]);
    let field = GridField::from_values(grid.clone(), Rank::Scalar, to_density(grid, 1, sums))?;
    Ok(Deposit { field, outside })
}

/// Current J = Σ w v δ(x − X) by cloud-in-cell; `outside` holds the momentum lost.
pub fn deposit_current(ens: &ParticleEnsemble, grid: &GridSpec) -> Result<Deposit> {
    deposit_current_with(ens, grid, DepositScheme::CloudInCell)
}

pub fn deposit_current_with(ens: &ParticleEnsemble, grid: &GridSpec, scheme: DepositScheme) -> Result<Deposit> {
    check_dim(ens, grid)?;
    let d = ens.dim();
    let w = ens.weights();
    let v = ens.velocities();
    let (sums, outside) = scatter(ens, grid, scheme, d, |i, q| {
        for a in 0..d {
            q[a] = w[i] * v[i * d + a];
        }
    });
    let field = GridField::from_values(grid.clone(), Rank::Vector, to_density(grid, d, sums))?;
    Ok(Deposit { field, outside })
}
