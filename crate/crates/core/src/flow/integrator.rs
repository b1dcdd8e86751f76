use rayon::prelude::*;

use super::force::ForceField;
use super::history::{EnergySample, FlowHistory};
use crate::error::{invalid, Error, Result};
use crate::phase_state::ParticleEnsemble;

const CHUNK: usize = 4096;

/// Time-stepping parameters of [`advance`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdvanceOptions {
    pub dt: f64,
    pub horizon: f64,
    /// Store a snapshot every this many steps (the last step is always stored).
    pub store_every: usize,
    /// Record energy every this many steps (the last step is always recorded).
    pub diagnostics_every: usize,
    pub base_time: f64,
}

impl AdvanceOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            store_every: 1,
            diagnostics_every: 1,
            base_time: 0.0,
        }
    }

    pub fn store_every(mut self, k: usize) -> Self {
        self.store_every = k;
        self
    }

    pub fn diagnostics_every(mut self, k: usize) -> Self {
        self.diagnostics_every = k;
        self
    }

    pub fn base_time(mut self, t: f64) -> Self {
        self.base_time = t;
        self
    }

    /// Number of steps; the horizon must be a whole number of steps.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return invalid(format!("horizon {} must be at least dt {}", self.horizon, self.dt));
        }
        if self.store_every == 0 || self.diagnostics_every == 0 {
            return invalid("store_every and diagnostics_every must be at least 1");
        }
        if !self.base_time.is_finite() {
            return invalid("base time must be finite");
        }
        let n = (self.horizon / self.dt).round();
        if ((n * self.dt - self.horizon) / self.horizon).abs() > 1e-9 {
            return invalid(format!("horizon {} is not a multiple of dt {}", self.horizon, self.dt));
        }
        Ok(n as usize)
    }
}

/// Kick-drift-kick velocity Verlet. Accepts either sign of `dt`, so a
/// forward run can be undone step by step.
pub struct VerletStepper<'a> {
    force: &'a dyn ForceField,
    acc: Vec<f64>,
    energy: Option<f64>,
    steps: usize,
}

impl<'a> VerletStepper<'a> {
    pub fn new(force: &'a dyn ForceField, state: &ParticleEnsemble) -> Result<Self> {
        if force.dim() != state.dim() {
            return Err(Error::DimensionMismatch {
                expected: force.dim(),
                found: state.dim(),
            });
        }
        let ev = force.evaluate(state, true)?;
        check_finite(&ev.accelerations, "field", 0, state.dim())?;
        Ok(Self {
            force,
            acc: ev.accelerations,
            energy: ev.energy,
            steps: 0,
        })
    }

    /// Field at the particles of the current state.
    pub fn accelerations(&self) -> &[f64] {
        &self.acc
    }

    /// Interaction energy of the current state, when it was requested.
    pub fn energy(&self) -> Option<f64> {
        self.energy
    }

    pub fn step(&mut self, state: &mut ParticleEnsemble, dt: f64, with_energy: bool) -> Result<()> {
        let d = state.dim();
        let stride = CHUNK * d;
        let half = 0.5 * dt;
        {
            let (x, v) = state.kinematics_mut();
            x.par_chunks_mut(stride)
                .zip(v.par_chunks_mut(stride))
                .zip(self.acc.par_chunks(stride))
                .for_each(|((x, v), a)| {
                    for ((xi, vi), ai) in x.iter_mut().zip(v.iter_mut()).zip(a) {
                        *vi += half * ai;
                        *xi += dt * *vi;
                    }
                });
        }
        self.steps += 1;
        check_finite(state.positions(), "position", self.steps, d)?;
        let ev = self.force.evaluate(state, with_energy)?;
        check_finite(&ev.accelerations, "field", self.steps, d)?;
        self.acc = ev.accelerations;
        self.energy = ev.energy;
        let (_, v) = state.kinematics_mut();
        v.par_chunks_mut(stride)
            .zip(self.acc.par_chunks(stride))
            .for_each(|(v, a)| {
                for (vi, ai) in v.iter_mut().zip(a) {
                    *vi += half * ai;
                }
            });
        check_finite(state.velocities(), "velocity", self.steps, d)
    }
}

fn check_finite(values: &[f64], quantity: &'static str, step: usize, dim: usize) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(k) => Err(Error::NonFinite {
            quantity,
            step,
            particle: k / dim,
        }),
    }
}

/// Integrates the characteristics of `ens` in `force` and stores the flow.
pub fn advance(ens: &ParticleEnsemble, force: &dyn ForceField, opts: &AdvanceOptions) -> Result<FlowHistory> {
    let (history, err) = advance_partial(ens, force, opts)?;
    match err {
        None => Ok(history),
        Some(e) => Err(e),
    }
}

/// Like [`advance`], but on a non-finite abort also returns everything
/// recorded before the failing step. The history is marked partial.
pub fn advance_partial(
    ens: &ParticleEnsemble,
    force: &dyn ForceField,
    opts: &AdvanceOptions,
) -> Result<(FlowHistory, Option<Error>)> {
    let steps = opts.steps()?;
    let mut stepper = VerletStepper::new(force, ens)?;
    let n = ens.len();
    let d = ens.dim();
    let mut state = ens.clone();
    let mut history = FlowHistory {
        initial: ens.clone(),
        base_time: opts.base_time,
        dt: opts.dt,
        store_every: opts.store_every,
        steps: 0,
        times: vec![opts.base_time],
        sample_steps: vec![0],
        positions: vec![ens.positions().to_vec()],
        velocities: vec![ens.velocities().to_vec()],
        max_norm: (0..n).map(|i| ens.phase_norm(i)).collect(),
        max_speed: (0..n).map(|i| norm(ens.velocity(i))).collect(),
        energy: vec![energy_sample(&state, 0, opts.base_time, stepper.energy())],
        force: force.description(),
        seeding: None,
        seed: None,
        aborted: None,
    };
    check_energy(&history.energy[0], stepper.energy().is_some())?;
    for k in 1..=steps {
        let last = k == steps;
        let diag = last || k % opts.diagnostics_every == 0;
        if let Err(e) = stepper.step(&mut state, opts.dt, diag) {
            history.aborted = Some(e.to_string());
            return Ok((history, Some(e)));
        }
        let t = opts.base_time + k as f64 * opts.dt;
        history.steps = k;
        let (x, v) = (state.positions(), state.velocities());
        history
            .max_norm
            .par_iter_mut()
            .zip(history.max_speed.par_iter_mut())
            .enumerate()
            .for_each(|(i, (mz, mv))| {
                let (xi, vi) = (&x[i * d..(i + 1) * d], &v[i * d..(i + 1) * d]);
                let s2: f64 = vi.iter().map(|a| a * a).sum();
                let z2 = s2 + xi.iter().map(|a| a * a).sum::<f64>();
                *mz = mz.max(z2.sqrt());
                *mv = mv.max(s2.sqrt());
            });
        if diag {
            let e = energy_sample(&state, k, t, stepper.energy());
            if let Err(err) = check_energy(&e, stepper.energy().is_some()) {
                history.aborted = Some(err.to_string());
                return Ok((history, Some(err)));
            }
            history.energy.push(e);
        }
        if last || k % opts.store_every == 0 {
            history.times.push(t);
            history.sample_steps.push(k);
            history.positions.push(x.to_vec());
            history.velocities.push(v.to_vec());
        }
    }
    Ok((history, None))
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Overflowing energies abort like non-finite states; an absent potential is
/// recorded as NaN and not checked.
fn check_energy(e: &EnergySample, has_potential: bool) -> Result<()> {
    let bad = if !e.kinetic.is_finite() {
        Some("kinetic energy")
    } else if has_potential && !e.potential.is_finite() {
        Some("potential energy")
    } else {
        None
    };
    match bad {
        None => Ok(()),
        Some(quantity) => Err(Error::NonFinite {
            quantity,
            step: e.step,
            particle: 0,
        }),
    }
}

fn energy_sample(state: &ParticleEnsemble, step: usize, time: f64, potential: Option<f64>) -> EnergySample {
    let kinetic = state.kinetic_energy();
    let potential = potential.unwrap_or(f64::NAN);
    EnergySample {
        step,
        time,
        mass: state.total_mass(),
        kinetic,
        potential,
        total: kinetic + potential,
    }
}
