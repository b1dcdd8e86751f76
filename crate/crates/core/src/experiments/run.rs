use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::{FieldSolver, GridField, Sources};
use crate::flow::{advance_partial, attach_tracers, AdvanceOptions, FlowHistory, ForceField};
use crate::phase_state::{GridSpec, ParticleEnsemble};

/// Post-run checks of the Lagrangian-solution structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianChecks {
    /// All weights nonnegative.
    pub nonnegative: bool,
    /// Weights bit-identical at every sample (push-forward structure).
    pub weights_unchanged: bool,
    /// Total mass bit-identical at every energy sample.
    pub mass_conserved: bool,
    /// Largest `Σ w (|x|² + |v|²)` over samples.
    pub max_second_moment: f64,
    /// Relative gap between the force used by the integrator and the field
    /// recomputed by convolution at the final particle positions.
    pub field_consistency: f64,
    /// Relative residual of `d/dt Σ w x = Σ w v` (the current as the flux of
    /// mass) by trapezoidal rule over stored samples.
    pub current_consistency: f64,
    pub energy_drift: f64,
}

impl LagrangianChecks {
    pub fn passed(&self) -> bool {
        self.nonnegative
            && self.weights_unchanged
            && self.mass_conserved
            && self.max_second_moment.is_finite()
            && self.energy_drift.is_finite()
    }
}

/// Everything a single simulation produces.
pub struct RunArtifacts {
    pub history: FlowHistory,
    pub solver: FieldSolver,
    pub checks: Option<LagrangianChecks>,
    pub field_snapshots: Vec<GridField>,
    /// Set when the integrator aborted; the history is partial.
    pub failure: Option<Error>,
}

pub fn build_solver(cfg: &ExperimentConfig) -> Result<FieldSolver> {
    FieldSolver::new(cfg.kernel(), cfg.background.clone(), cfg.field.omega)
}

pub(crate) fn options(cfg: &ExperimentConfig) -> AdvanceOptions {
    AdvanceOptions::new(cfg.run.dt, cfg.run.horizon)
        .store_every(cfg.run.store_every)
        .diagnostics_every(cfg.run.diagnostics_every)
}

/// Adds the configured lattice tracers and advances.
pub(crate) fn run_ensemble(
    cfg: &ExperimentConfig,
    ens: &ParticleEnsemble,
    force: &dyn ForceField,
    seed: u64,
) -> Result<(FlowHistory, Option<Error>)> {
    let (ens, seeding) = match &cfg.seeding {
        Some(s) => {
            let (e, s) = attach_tracers(ens, &s.build(cfg.dim())?)?;
            (e, Some(s))
        }
        None => (ens.clone(), None),
    };
    let (mut h, err) = advance_partial(&ens, force, &options(cfg))?;
    if let Some(s) = seeding {
        h = h.with_seeding(s)?;
    }
    Ok((h.with_seed(seed), err))
}

/// Samples the datum, integrates, checks and (with `out`) writes the artifacts:
/// `history/`, `run.toml` and, with `output.field_grid`, `fields/*.vlgf`.
pub fn run_simulation(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunArtifacts> {
    cfg.validate()?;
    let solver = build_solver(cfg)?;
    let ens = cfg.datum.sample(cfg.run.particles, cfg.run.seed)?;
    let (history, failure) = run_ensemble(cfg, &ens, &solver, cfg.run.seed)?;
    let checks = if failure.is_none() {
        Some(lagrangian_checks(&history, &solver)?)
    } else {
        None
    };
    let mut field_snapshots = Vec::new();
    if let Some(grid) = &cfg.output.field_grid {
        for k in 0..history.sample_count() {
            field_snapshots.push(solver.field_on_grid(Sources::Particles(&history.sample(k)), grid)?);
        }
    }
    let art = RunArtifacts {
        history,
        solver,
        checks,
        field_snapshots,
        failure,
    };
    if let Some(dir) = out {
        write_run(cfg, &art, dir)?;
    }
    Ok(art)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    format_version: u32,
    status: String,
    seed: u64,
    steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<&'a LagrangianChecks>,
    config: &'a ExperimentConfig,
}

fn write_run(cfg: &ExperimentConfig, art: &RunArtifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    art.history.save(dir.join("history"))?;
    if !art.field_snapshots.is_empty() {
        let fdir = dir.join("fields");
        std::fs::create_dir_all(&fdir)?;
        for (k, f) in art.field_snapshots.iter().enumerate() {
            f.save(fdir.join(format!("field_{k:05}.vlgf")))?;
        }
    }
    let manifest = RunManifest {
        format_version: 1,
        status: match &art.failure {
            None => "complete".into(),
            Some(e) => format!("partial: {e}"),
        },
        seed: cfg.run.seed,
        steps: art.history.steps(),
        checks: art.checks.as_ref(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let mut f = std::fs::File::create(dir.join("run.toml"))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn lagrangian_checks(history: &FlowHistory, force: &dyn ForceField) -> Result<LagrangianChecks> {
    let w = history.weights();
    let d = history.dim();
    let m0 = history.initial().total_mass();
    let mut max_m2 = 0.0_f64;
    let mut weights_unchanged = true;
    let mut first = Vec::new();
    let mut flux = Vec::new();
    for k in 0..history.sample_count() {
        let s = history.sample(k);
        weights_unchanged &= s.weights() == w;
        max_m2 = max_m2.max(s.second_moment());
        first.push(
            (0..d)
                .map(|a| (0..s.len()).map(|i| w[i] * s.position(i)[a]).sum::<f64>())
                .collect::<Vec<_>>(),
        );
        flux.push(s.momentum());
    }
    let t = history.times();
    let mut num = 0.0_f64;
    let mut scale = 0.0_f64;
    for k in 1..t.len() {
        let h = t[k] - t[k - 1];
        for a in 0..d {
            let lhs = (first[k][a] - first[k - 1][a]) / h;
            let rhs = 0.5 * (flux[k][a] + flux[k - 1][a]);
            num = num.max((lhs - rhs).abs());
        }
    }
    for k in 0..t.len() {
        scale = scale.max((2.0 * m0 * history.sample(k).kinetic_energy()).sqrt());
    }
    let last = history.last();
    let used = force.evaluate(&last, false)?.accelerations;
    let again = force.field_at(&last, last.positions())?;
    let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let gap: Vec<f64> = used.iter().zip(&again).map(|(a, b)| a - b).collect();
    let field_consistency = norm(&gap) / norm(&used).max(f64::MIN_POSITIVE);
    Ok(LagrangianChecks {
        nonnegative: w.iter().all(|&x| x >= 0.0),
        weights_unchanged,
        mass_conserved: history.energy().iter().all(|e| e.mass.to_bits() == m0.to_bits()),
        max_second_moment: max_m2,
        field_consistency,
        current_consistency: if scale > 0.0 { num / scale } else { num },
        energy_drift: history.relative_energy_drift().unwrap_or(f64::NAN),
    })
}

/// Discrete L¹ distance of two particle measures. With equal support points
/// this is the exact total variation `Σ |w_a − w_b|`; otherwise both are
/// binned on the cells of a 2N-dimensional box and mass outside it is
/// compared as one extra bin.
pub fn data_l1(a: &ParticleEnsemble, b: &ParticleEnsemble, half_width: f64, cells: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.positions() == b.positions() && a.velocities() == b.velocities() {
        return Ok(a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y).abs()).sum());
    }
    let grid = GridSpec::cube(2 * a.dim(), half_width, cells)?;
    let bin = |e: &ParticleEnsemble| {
        let mut h = vec![0.0; grid.cell_count()];
        let mut outside = 0.0;
        let mut z = Vec::with_capacity(2 * e.dim());
        for i in 0..e.len() {
            z.clear();
            z.extend_from_slice(e.position(i));
            z.extend_from_slice(e.velocity(i));
            match grid.cell_of(&z) {
                Some(c) => h[c] += e.weights()[i],
                None => outside += e.weights()[i],
            }
        }
        (h, outside)
    };
    let (ha, oa) = bin(a);
    let (hb, ob) = bin(b);
    Ok(ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>() + (oa - ob).abs())
}
