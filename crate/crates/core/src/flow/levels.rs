use serde::{Deserialize, Serialize};

use super::history::FlowHistory;
use crate::error::{invalid, Error, Result};

/// `true` where the trajectory stays in the closed ball of radius `lambda`
/// over the whole run (the sublevel of the flow).
pub fn sublevel_mask(history: &FlowHistory, lambda: f64) -> Vec<bool> {
    history.max_norm().iter().map(|&m| m <= lambda).collect()
}

/// How a phase-space set is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    /// Lebesgue measure from lattice tracers: each seed carries its cell volume.
    #[default]
    Lattice,
    /// f-weighted measure: each particle carries its weight.
    MassWeighted,
}

/// Particle indices starting in the closed ball `|z| ≤ r`, with their measure.
pub fn seeds_in_ball(history: &FlowHistory, r: f64, kind: MeasureKind) -> Result<Vec<(usize, f64)>> {
    if !(r > 0.0) {
        return invalid(format!("ball radius must be positive, got {r}"));
    }
    let init = history.initial();
    let picked: Vec<(usize, f64)> = match kind {
        MeasureKind::Lattice => {
            let s = history
                .seeding()
                .ok_or_else(|| Error::InvalidSpec("history carries no lattice seeding".into()))?;
            s.range()
                .filter(|&i| init.phase_norm(i) <= r)
                .map(|i| (i, s.cell_volume))
                .collect()
        }
        MeasureKind::MassWeighted => (0..init.len())
            .filter(|&i| init.weights()[i] > 0.0 && init.phase_norm(i) <= r)
            .map(|i| (i, init.weights()[i]))
            .collect(),
    };
    if picked.is_empty() {
        return Err(Error::Empty(format!("no particles seeded in the ball of radius {r}")));
    }
    Ok(picked)
}

/// Measure of `B_r ∖ G_λ`: seeds starting in `B_r` whose trajectory leaves
/// the ball of radius `λ`.
pub fn superlevel_measure(history: &FlowHistory, r: f64, lambda: f64, kind: MeasureKind) -> Result<f64> {
    Ok(superlevel_curve(history, r, &[lambda], kind)?[0])
}

/// [`superlevel_measure`] over a grid of thresholds.
pub fn superlevel_curve(history: &FlowHistory, r: f64, lambdas: &[f64], kind: MeasureKind) -> Result<Vec<f64>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return invalid(format!("thresholds must be positive, got {l}"));
    }
    let seeds = seeds_in_ball(history, r, kind)?;
    let m = history.max_norm();
    Ok(lambdas
        .iter()
        .map(|&l| seeds.iter().filter(|(i, _)| m[*i] > l).map(|(_, w)| w).sum())
        .collect())
}

/// Axis-aligned box in phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PhaseBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(u > l)) {
            return invalid("phase box bounds must have equal length and positive extent");
        }
        Ok(Self { lower, upper })
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(c, (l, u))| c >= l && c < u)
    }
}

/// Result of [`compressibility_estimate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Compressibility {
    /// Largest preimage-to-box volume ratio: the estimate of L.
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `ratios[box][sample]`.
    pub ratios: Vec<Vec<f64>>,
    /// Boxes holding no seed at the base time.
    pub unseeded: Vec<usize>,
}

/// For each box `A` and stored sample `s`, the seeded volume mapped into `A`
/// by `Z(s, ·)` divided by `|A|`.
pub fn compressibility_estimate(history: &FlowHistory, probes: &[PhaseBox]) -> Result<Compressibility> {
    let d2 = 2 * history.dim();
    let seeding = history
        .seeding()
        .ok_or_else(|| Error::InvalidSpec("history carries no lattice seeding".into()))?;
    if probes.is_empty() {
        return invalid("no probe boxes");
    }
    if let Some(b) = probes.iter().find(|b| b.lower.len() != d2) {
        return Err(Error::DimensionMismatch {
            expected: d2,
            found: b.lower.len(),
        });
    }
    let mut ratios = vec![vec![0.0; history.sample_count()]; probes.len()];
    let mut z = vec![0.0; d2];
    for k in 0..history.sample_count() {
        let mut counts = vec![0usize; probes.len()];
        for i in seeding.range() {
            history.phase_point(k, i, &mut z);
            for (c, b) in counts.iter_mut().zip(probes) {
                if b.contains(&z) {
                    *c += 1;
                }
            }
        }
        for b in 0..probes.len() {
            ratios[b][k] = counts[b] as f64 * seeding.cell_volume / probes[b].volume();
        }
    }
    let unseeded: Vec<usize> = (0..probes.len()).filter(|&b| ratios[b][0] == 0.0).collect();
    let flat = ratios
        .iter()
        .enumerate()
        .filter(|(b, _)| !unseeded.contains(b))
        .flat_map(|(_, r)| r.iter().copied());
    let (min_ratio, max_ratio) = flat.fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok(Compressibility {
        max_ratio,
        min_ratio,
        ratios,
        unseeded,
    })
}
