use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::force::ForceDescription;
use super::seeding::Seeding;
use crate::binio;
use crate::error::{Error, Result};
use crate::phase_state::ParticleEnsemble;

/// Conserved quantities at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

/// Stored trajectories `Z(s) = (X(s), V(s))` of every particle.
///
/// Samples are taken every `store_every` steps and at the last step. Running
/// maxima of |Z| and |V| are tracked at every step, not only at samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowHistory {
    pub(crate) initial: ParticleEnsemble,
    pub(crate) base_time: f64,
    pub(crate) dt: f64,
    pub(crate) store_every: usize,
    pub(crate) steps: usize,
    pub(crate) times: Vec<f64>,
    pub(crate) sample_steps: Vec<usize>,
    pub(crate) positions: Vec<Vec<f64>>,
    pub(crate) velocities: Vec<Vec<f64>>,
    pub(crate) max_norm: Vec<f64>,
    pub(crate) max_speed: Vec<f64>,
    pub(crate) energy: Vec<EnergySample>,
    pub(crate) force: ForceDescription,
    pub(crate) seeding: Option<Seeding>,
    pub(crate) seed: Option<u64>,
    pub(crate) aborted: Option<String>,
}

impl FlowHistory {
    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn particle_count(&self) -> usize {
        self.initial.len()
    }

    pub fn base_time(&self) -> f64 {
        self.base_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn store_every(&self) -> usize {
        self.store_every
    }

    /// Completed integration steps.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sample_steps(&self) -> &[usize] {
        &self.sample_steps
    }

    pub fn sample_count(&self) -> usize {
        self.times.len()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn weights(&self) -> &[f64] {
        self.initial.weights()
    }

    pub fn positions(&self, sample: usize) -> &[f64] {
        &self.positions[sample]
    }

    pub fn velocities(&self, sample: usize) -> &[f64] {
        &self.velocities[sample]
    }

    /// Phase point of particle `i` at sample `k`.
    pub fn phase_point(&self, sample: usize, i: usize, out: &mut [f64]) {
        let d = self.dim();
        out[..d].copy_from_slice(&self.positions[sample][i * d..(i + 1) * d]);
        out[d..2 * d].copy_from_slice(&self.velocities[sample][i * d..(i + 1) * d]);
    }

    pub fn sample(&self, k: usize) -> ParticleEnsemble {
        self.initial
            .with_states(self.positions[k].clone(), self.velocities[k].clone())
    }

    pub fn initial(&self) -> &ParticleEnsemble {
        &self.initial
    }

    pub fn last(&self) -> ParticleEnsemble {
        self.sample(self.sample_count() - 1)
    }

    /// Index of the sample at time `t`, if `t` is a sample time.
    pub fn sample_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.dt.abs().max(1e-300);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        let (a, b) = (self.base_time, self.end_time());
        let tol = 1e-9 * self.dt;
        if !(t >= a - tol && t <= b + tol) {
            return Err(Error::OutOfHorizon {
                time: t,
                start: a,
                end: b,
            });
        }
        Ok(())
    }

    /// States at time `s`, linear in time between samples.
    pub fn state_at(&self, s: f64) -> Result<ParticleEnsemble> {
        self.check_time(s)?;
        if let Some(k) = self.sample_index(s) {
            return Ok(self.sample(k));
        }
        let k = self
            .times
            .partition_point(|&t| t <= s)
            .clamp(1, self.sample_count() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let th = (s - t0) / (t1 - t0);
        let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + th * (y - x)).collect() };
        Ok(self.initial.with_states(
            lerp(&self.positions[k - 1], &self.positions[k]),
            lerp(&self.velocities[k - 1], &self.velocities[k]),
        ))
    }

    /// Running maximum over all steps of `|Z(s)|` per particle.
    pub fn max_norm(&self) -> &[f64] {
        &self.max_norm
    }

    /// Running maximum over all steps of `|V(s)|` per particle.
    pub fn max_speed(&self) -> &[f64] {
        &self.max_speed
    }

    pub fn energy(&self) -> &[EnergySample] {
        &self.energy
    }

    pub fn force(&self) -> &ForceDescription {
        &self.force
    }

    pub fn seeding(&self) -> Option<&Seeding> {
        self.seeding.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Why the run stopped early, if it did.
    pub fn aborted(&self) -> Option<&str> {
        self.aborted.as_deref()
    }

    pub fn with_seeding(mut self, seeding: Seeding) -> Result<Self> {
        if seeding.first + seeding.count > self.particle_count() || seeding.count == 0 {
            return Err(Error::InvalidSpec("seeding range outside the ensemble".into()));
        }
        self.seeding = Some(seeding);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Rigidly displaces every stored phase point after the base time by `c`
    /// (stride 2N), keeping the initial state. Running maxima are recomputed
    /// from the stored samples. Test hook for comparing flows.
    pub fn displaced(&self, c: &[f64]) -> Result<Self> {
        let d = self.dim();
        if c.len() != 2 * d {
            return Err(Error::DimensionMismatch {
                expected: 2 * d,
                found: c.len(),
            });
        }
        let mut out = self.clone();
        for k in 1..out.sample_count() {
            for (i, x) in out.positions[k].iter_mut().enumerate() {
                *x += c[i % d];
            }
            for (i, v) in out.velocities[k].iter_mut().enumerate() {
                *v += c[d + i % d];
            }
        }
        let mut z = vec![0.0; 2 * d];
        for i in 0..out.particle_count() {
            let (mut mz, mut mv) = (0.0_f64, 0.0_f64);
            for k in 0..out.sample_count() {
                out.phase_point(k, i, &mut z);
                mz = mz.max(z.iter().map(|a| a * a).sum::<f64>().sqrt());
                mv = mv.max(z[d..].iter().map(|a| a * a).sum::<f64>().sqrt());
            }
            out.max_norm[i] = mz;
            out.max_speed[i] = mv;
        }
        Ok(out)
    }

    /// Largest relative deviation of the total energy from its initial value.
    pub fn relative_energy_drift(&self) -> Option<f64> {
        let e0 = self.energy.first()?.total;
        Some(self.energy.iter().map(|s| (s.total - e0).abs()).fold(0.0, f64::max) / e0.abs())
    }

    /// Writes the history to a directory: `manifest.toml`, one VLEN snapshot
    /// per sample, `extremes.bin` and `energy.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.sample_count());
        for k in 0..self.sample_count() {
            let name = format!("sample_{k:05}.vlen");
            self.sample(k).save(dir.join(&name))?;
            files.push(name);
        }
        let mut ex = std::io::BufWriter::new(std::fs::File::create(dir.join("extremes.bin"))?);
        ex.write_all(EXTREMES_MAGIC)?;
        binio::write_u32(&mut ex, 1)?;
        binio::write_u64(&mut ex, self.particle_count() as u64)?;
        binio::write_f64s(&mut ex, &self.max_norm)?;
        binio::write_f64s(&mut ex, &self.max_speed)?;
        ex.flush()?;
        let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("energy.csv"))?);
        writeln!(
            csv,
            "# step [1], time [time], mass [mass], kinetic [energy], potential [energy], total [energy]"
        )?;
        writeln!(csv, "step,time,mass,kinetic,potential,total")?;
        for s in &self.energy {
            writeln!(
                csv,
                "{},{:e},{:e},{:e},{:e},{:e}",
                s.step, s.time, s.mass, s.kinetic, s.potential, s.total
            )?;
        }
        csv.flush()?;
        let manifest = HistoryManifest {
            format_version: 1,
            status: match &self.aborted {
                None => "complete".into(),
                Some(why) => format!("partial: {why}"),
            },
            dim: self.dim(),
            particles: self.particle_count(),
            base_time: self.base_time,
            dt: self.dt,
            store_every: self.store_every,
            steps: self.steps,
            times: self.times.clone(),
            sample_steps: self.sample_steps.clone(),
            samples: files,
            force: self.force.clone(),
            seed: self.seed,
            seeding: self.seeding.clone(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = std::fs::read_to_string(dir.join("manifest.toml"))?;
        let m: HistoryManifest = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if m.format_version != 1 {
            return Err(Error::Format(format!(
                "unsupported history version {}",
                m.format_version
            )));
        }
        if m.samples.is_empty() || m.samples.len() != m.times.len() || m.sample_steps.len() != m.times.len() {
            return Err(Error::Format("manifest sample lists disagree".into()));
        }
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        let mut initial = None;
        for name in &m.samples {
            let e = ParticleEnsemble::load(dir.join(name))?;
            if e.dim() != m.dim || e.len() != m.particles {
                return Err(Error::Format(format!("snapshot {name} does not match the manifest")));
            }
            positions.push(e.positions().to_vec());
            velocities.push(e.velocities().to_vec());
            if initial.is_none() {
                initial = Some(e);
            }
        }
        let mut r = std::io::BufReader::new(std::fs::File::open(dir.join("extremes.bin"))?);
        binio::read_magic(&mut r, EXTREMES_MAGIC)?;
        let _version = binio::read_u32(&mut r)?;
        let n = binio::checked_len(binio::read_u64(&mut r)?, 1)?;
        if n != m.particles {
            return Err(Error::Format("extremes count does not match the manifest".into()));
        }
        let max_norm = binio::read_f64s(&mut r, n)?;
        let max_speed = binio::read_f64s(&mut r, n)?;
        let mut energy = Vec::new();
        let csv = std::io::BufReader::new(std::fs::File::open(dir.join("energy.csv"))?);
        for line in csv.lines().skip(2) {
            let line = line?;
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad energy row: {line}")))
            };
            energy.push(EnergySample {
                step: num(0)? as usize,
                time: num(1)?,
                mass: num(2)?,
                kinetic: num(3)?,
                potential: num(4)?,
                total: num(5)?,
            });
        }
        let aborted = m.status.strip_prefix("partial: ").map(str::to_string);
        Ok(Self {
            initial: initial.unwrap(),
            base_time: m.base_time,
            dt: m.dt,
            store_every: m.store_every,
            steps: m.steps,
            times: m.times,
            sample_steps: m.sample_steps,
            positions,
            velocities,
            max_norm,
            max_speed,
            energy,
            force: m.force,
            seeding: m.seeding,
            seed: m.seed,
            aborted,
        })
    }
}

const EXTREMES_MAGIC: &[u8; 4] = b"VLMX";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryManifest {
    format_version: u32,
    status: String,
    dim: usize,
    particles: usize,
    base_time: f64,
    dt: f64,
    store_every: usize,
    steps: usize,
    times: Vec<f64>,
    sample_steps: Vec<usize>,
    samples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seeding: Option<Seeding>,
    force: ForceDescription,
}
