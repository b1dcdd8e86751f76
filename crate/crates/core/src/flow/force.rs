use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{BackgroundSpec, FieldSolver, KernelMethod, Sources};
use crate::phase_state::ParticleEnsemble;
use crate::sum::CompensatedSum;

/// Accelerations (and optionally the interaction energy) of a state.
#[derive(Clone, Debug)]
pub struct ForceEvaluation {
    pub accelerations: Vec<f64>,
    pub energy: Option<f64>,
}

/// Anything that can drive the characteristics `dX/ds = V`, `dV/ds = E(s, X)`.
pub trait ForceField: Send + Sync {
    fn dim(&self) -> usize;

    /// Field generated by `state` at its own particle positions.
    fn evaluate(&self, state: &ParticleEnsemble, with_energy: bool) -> Result<ForceEvaluation>;

    /// Field generated by `sources` at arbitrary `points`. Used to freeze the
    /// field of a stored step and transport off-particle points through it.
    fn field_at(&self, sources: &ParticleEnsemble, points: &[f64]) -> Result<Vec<f64>>;

    fn description(&self) -> ForceDescription;

    /// Box outside which `field_at` is not a faithful field, if any.
    fn field_support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

/// Provenance of a force model, recorded in history manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceDescription {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub softening: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<BackgroundSpec>,
}

impl ForceField for FieldSolver {
    fn dim(&self) -> usize {
        FieldSolver::dim(self)
    }

    fn evaluate(&self, state: &ParticleEnsemble, with_energy: bool) -> Result<ForceEvaluation> {
        if with_energy {
            let (a, e) = self.accelerations_and_energy(state)?;
            Ok(ForceEvaluation {
                accelerations: a,
                energy: Some(e),
            })
        } else {
            Ok(ForceEvaluation {
                accelerations: self.accelerations(state)?,
                energy: None,
            })
        }
    }

    fn field_at(&self, sources: &ParticleEnsemble, points: &[f64]) -> Result<Vec<f64>> {
        FieldSolver::field_at(self, Sources::Particles(sources), points)
    }

    fn description(&self) -> ForceDescription {
        ForceDescription {
            model: "self-consistent".into(),
            softening: Some(self.config().softening),
            omega: Some(self.omega()),
            method: Some(match &self.config().method {
                KernelMethod::DirectSum => "direct-sum".into(),
                KernelMethod::GridConvolution { grid } => format!(
                    "grid-convolution cells={:?} origin={:?} extent={:?}",
                    grid.cells(),
                    grid.origin(),
                    grid.extent()
                ),
            }),
            background: Some(self.background().clone()),
        }
    }

    fn field_support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.config().method {
            KernelMethod::DirectSum => None,
            KernelMethod::GridConvolution { grid } => {
                let lo = grid.origin().to_vec();
                let hi = lo.iter().zip(grid.extent()).map(|(o, e)| o + e).collect();
                Some((lo, hi))
            }
        }
    }
}

/// E ≡ 0: free streaming.
#[derive(Clone, Copy, Debug)]
pub struct ZeroField {
    pub dim: usize,
}

impl ForceField for ZeroField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, state: &ParticleEnsemble, with_energy: bool) -> Result<ForceEvaluation> {
        check(self.dim, state)?;
        Ok(ForceEvaluation {
            accelerations: vec![0.0; state.positions().len()],
            energy: with_energy.then_some(0.0),
        })
    }

    fn field_at(&self, _sources: &ParticleEnsemble, points: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; points.len()])
    }

    fn description(&self) -> ForceDescription {
        ForceDescription {
            model: "zero".into(),
            softening: None,
            omega: None,
            method: None,
            background: None,
        }
    }
}

/// A uniform external field E₀ with potential energy `−Σ w E₀·x`.
#[derive(Clone, Debug)]
pub struct ConstantField {
    field: Vec<f64>,
}

impl ConstantField {
    pub fn new(field: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&field.len()) || field.iter().any(|x| !x.is_finite()) {
            return invalid("constant field needs 1 to 3 finite components");
        }
        Ok(Self { field })
    }
}

impl ForceField for ConstantField {
    fn dim(&self) -> usize {
        self.field.len()
    }

    fn evaluate(&self, state: &ParticleEnsemble, with_energy: bool) -> Result<ForceEvaluation> {
        check(self.dim(), state)?;
        let energy = with_energy.then(|| {
            let mut acc = CompensatedSum::new();
            for i in 0..state.len() {
                let dot: f64 = state.position(i).iter().zip(&self.field).map(|(x, e)| x * e).sum();
                acc.add(-state.weights()[i] * dot);
            }
            acc.value()
        });
        Ok(ForceEvaluation {
            accelerations: self.field.repeat(state.len()),
            energy,
        })
    }

    fn field_at(&self, _sources: &ParticleEnsemble, points: &[f64]) -> Result<Vec<f64>> {
        Ok(self.field.repeat(points.len() / self.dim()))
    }

    fn description(&self) -> ForceDescription {
        ForceDescription {
            model: format!("constant {:?}", self.field),
            softening: None,
            omega: None,
            method: None,
            background: None,
        }
    }
}

fn check(dim: usize, state: &ParticleEnsemble) -> Result<()> {
    if state.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: state.dim(),
        });
    }
    Ok(())
}
