use serde::{Deserialize, Serialize};

use super::kernel::sphere_area;
use crate::error::{invalid, Error, Result};
use crate::phase_state::{deposit_density, GridSpec, ParticleEnsemble};
use crate::sum::compensated_sum;

/// The fixed background density ρ_b subtracted from ρ in the field equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackgroundSpec {
    Zero,
    /// ρ_b equal to the instantaneous particle density, so the field vanishes
    /// identically and particles stream freely.
    Neutral,
    /// Isotropic Gaussian of total `mass`, applied through a node quadrature on
    /// `[-6σ, 6σ]^N` with `quadrature_cells` intervals per axis.
    Gaussian {
        mass: f64,
        sigma: f64,
        #[serde(default = "default_quadrature_cells")]
        quadrature_cells: usize,
    },
    /// ρ_b = c |x|^(-exponent) on the ball of radius `radius`, c fixed by `mass`.
    /// In three dimensions the exponent must stay below 2 so that ρ_b lies in
    /// some L^p with p > 3/2.
    Power {
        mass: f64,
        exponent: f64,
        radius: f64,
        #[serde(default = "default_shells")]
        shells: usize,
    },
    /// Density values at the nodes of `grid`, multilinear in between.
    Table {
        grid: GridSpec,
        values: Vec<f64>,
    },
}

fn default_quadrature_cells() -> usize {
    24
}

fn default_shells() -> usize {
    64
}

/// Quadrature points of the background with their (positive) masses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCharges {
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
}

impl BackgroundSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                invalid(format!("background {name} must be positive, got {x}"))
            }
        };
        match self {
            BackgroundSpec::Zero | BackgroundSpec::Neutral => Ok(()),
            BackgroundSpec::Gaussian {
                mass,
                sigma,
                quadrature_cells,
            } => {
                positive("mass", *mass)?;
                positive("sigma", *sigma)?;
                if *quadrature_cells < 2 {
                    return invalid("background quadrature needs at least 2 cells");
                }
                Ok(())
            }
            BackgroundSpec::Power {
                mass,
                exponent,
                radius,
                shells,
            } => {
                positive("mass", *mass)?;
                positive("radius", *radius)?;
                if *shells == 0 {
                    return invalid("power background needs at least one shell");
                }
                if !(*exponent >= 0.0 && *exponent < dim as f64) {
                    return Err(Error::Config(format!(
                        "background exponent {exponent} is not integrable in dimension {dim}"
                    )));
                }
                if dim == 3 && *exponent >= 2.0 {
                    return Err(Error::Config(format!(
                        "in three dimensions the background must lie in L^p for some p > 3/2; \
                         |x|^-{exponent} does not (exponent must be < 2)"
                    )));
                }
                Ok(())
            }
            BackgroundSpec::Table { grid, values } => {
                if grid.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: grid.dim(),
                    });
                }
                if values.len() != grid.node_count() {
                    return invalid(format!(
                        "background table needs {} node values, got {}",
                        grid.node_count(),
                        values.len()
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return invalid("background density must be nonnegative and finite");
                }
                Ok(())
            }
        }
    }

    pub fn is_neutral(&self) -> bool {
        matches!(self, BackgroundSpec::Neutral)
    }

    /// Total background mass; `None` for the neutral background, whose mass
    /// follows the particles.
    pub fn mass(&self) -> Option<f64> {
        match self {
            BackgroundSpec::Zero => Some(0.0),
            BackgroundSpec::Neutral => None,
            BackgroundSpec::Gaussian { mass, .. } | BackgroundSpec::Power { mass, .. } => Some(*mass),
            BackgroundSpec::Table { grid, values } => {
                let vols = grid.node_volumes();
                Some(compensated_sum(values.iter().zip(&vols).map(|(v, w)| v * w)))
            }
        }
    }

    /// Pointwise density. Infinite at the origin for a singular power law.
    pub fn density(&self, x: &[f64]) -> f64 {
        let dim = x.len();
        let r2: f64 = x.iter().map(|a| a * a).sum();
        match self {
            BackgroundSpec::Zero | BackgroundSpec::Neutral => 0.0,
            BackgroundSpec::Gaussian { mass, sigma, .. } => {
                mass * (2.0 * std::f64::consts::PI * sigma * sigma).powf(-(dim as f64) / 2.0)
                    * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            BackgroundSpec::Power {
                mass, exponent, radius, ..
            } => {
                let r = r2.sqrt();
                if r > *radius {
                    return 0.0;
                }
                let n = dim as f64;
                mass * (n - exponent) / (sphere_area(dim) * radius.powf(n - exponent)) * r.powf(-exponent)
            }
            BackgroundSpec::Table { grid, values } => interpolate(grid, values, x),
        }
    }

    /// Point quadrature of ρ_b used by the direct-sum and grid-convolution
    /// solvers.
    pub fn charges(&self, dim: usize) -> PointCharges {
        match self {
            BackgroundSpec::Zero | BackgroundSpec::Neutral => PointCharges::default(),
            BackgroundSpec::Gaussian {
                mass,
                sigma,
                quadrature_cells,
            } => {
                let grid = GridSpec::cube(dim, 6.0 * sigma, *quadrature_cells).expect("valid background grid");
                let vols = grid.node_volumes();
                let mut masses: Vec<f64> = (0..grid.node_count())
                    .map(|k| self.density(&grid.node_position(k)) * vols[k])
                    .collect();
                // Restore the exact mass lost to truncation and quadrature.
                let total = compensated_sum(masses.iter().copied());
                masses.iter_mut().for_each(|m| *m *= mass / total);
                PointCharges {
                    points: grid.node_positions(),
                    masses,
                }
            }
            BackgroundSpec::Power {
                mass,
                exponent,
                radius,
                shells,
            } => {
                let dirs = directions(dim);
                let n = dim as f64;
                let per = mass / (*shells * dirs.len() / dim) as f64;
                let mut points = Vec::new();
                let mut masses = Vec::new();
                for k in 0..*shells {
                    let r = radius * ((k as f64 + 0.5) / *shells as f64).powf(1.0 / (n - exponent));
                    for d in dirs.chunks_exact(dim) {
                        points.extend(d.iter().map(|c| c * r));
                        masses.push(per);
                    }
                }
                PointCharges { points, masses }
            }
            BackgroundSpec::Table { grid, values } => {
                let vols = grid.node_volumes();
                PointCharges {
                    points: grid.node_positions(),
                    masses: values.iter().zip(&vols).map(|(v, w)| v * w).collect(),
                }
            }
        }
    }

    /// Node densities of ρ_b on `grid`: sampled for smooth kinds, deposited by
    /// cloud-in-cell for the singular power law.
    pub fn on_grid(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        match self {
            BackgroundSpec::Power { .. } => {
                let q = self.charges(grid.dim());
                let n = q.masses.len();
                let ens = ParticleEnsemble::new(grid.dim(), q.points, vec![0.0; n * grid.dim()], q.masses)?;
                Ok(deposit_density(&ens, grid)?.field.into_values())
            }
            _ => Ok((0..grid.node_count())
                .map(|k| self.density(&grid.node_position(k)))
                .collect()),
        }
    }
}

/// Quasi-uniform unit directions, flat with stride `dim`.
fn directions(dim: usize) -> Vec<f64> {
    match dim {
        1 => vec![1.0, -1.0],
        2 => (0..32)
            .flat_map(|k| {
                let t = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 32.0;
                [t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let m = 64;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .flat_map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / m as f64;
                    let s = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    [s * t.cos(), s * t.sin(), z]
                })
                .collect()
        }
    }
}

/// Multilinear interpolation of node values; zero outside the grid.
pub(crate) fn interpolate(grid: &GridSpec, values: &[f64], x: &[f64]) -> f64 {
    let mut st = [(0usize, 0.0f64); 8];
    match crate::phase_state::deposit::stencil(grid, crate::phase_state::DepositScheme::CloudInCell, x, &mut st) {
        Some(m) => st[..m].iter().map(|&(k, w)| w * values[k]).sum(),
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_class_guard() {
        let p = |e: f64| BackgroundSpec::Power {
            mass: 1.0,
            exponent: e,
            radius: 1.0,
            shells: 8,
        };
        assert!(p(1.5).validate(3).is_ok());
        assert!(matches!(p(2.0).validate(3), Err(Error::Config(_))));
        assert!(p(1.5).validate(2).is_ok());
        assert!(p(2.0).validate(2).is_err());
    }

    #[test]
    fn quadratures_carry_the_mass() {
        for dim in 1..=3 {
            let g = BackgroundSpec::Gaussian {
                mass: 2.5,
                sigma: 0.7,
                quadrature_cells: 12,
            };
            let q = g.charges(dim);
            assert!((compensated_sum(q.masses) - 2.5).abs() < 1e-12);
            let p = BackgroundSpec::Power {
                mass: 1.5,
                exponent: 0.5,
                radius: 2.0,
                shells: 10,
            };
            let q = p.charges(dim);
            assert!((compensated_sum(q.masses.iter().copied()) - 1.5).abs() < 1e-12);
            assert_eq!(q.points.len(), q.masses.len() * dim);
        }
    }

    #[test]
    fn table_interpolates_between_nodes() {
        let grid = GridSpec::new(vec![0.0], vec![2.0], vec![2]).unwrap();
        let b = BackgroundSpec::Table {
            grid,
            values: vec![0.0, 2.0, 4.0],
        };
        assert!((b.density(&[0.5]) - 1.0).abs() < 1e-15);
        assert_eq!(b.density(&[3.0]), 0.0);
        assert!((b.mass().unwrap() - 4.0).abs() < 1e-15);
    }
}
