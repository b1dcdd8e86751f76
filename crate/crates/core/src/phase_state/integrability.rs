use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{GridSpec, ParticleEnsemble};
use crate::error::{invalid, Error, Result};
use crate::sum::compensated_sum;

/// Largest mass that fits in a phase-space set of prescribed measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityProfile {
    pub fractions: Vec<f64>,
    pub captured: Vec<f64>,
    /// Mass of particles outside the reference box.
    pub outside_mass: f64,
}

/// Bins the ensemble on the 2N-dimensional `phase_box` and, for every fraction
/// φ, fills a volume φ·|box| with the heaviest cells first (the last cell
/// partially). This is the supremum over super-level sets of the binned
/// density, which is where the supremum over all measurable sets is attained.
pub fn equi_integrability_profile(
    ens: &ParticleEnsemble,
    phase_box: &GridSpec,
    fractions: &[f64],
) -> Result<IntegrabilityProfile> {
    let d = ens.dim();
    if phase_box.dim() != 2 * d {
        return Err(Error::DimensionMismatch {
            expected: 2 * d,
            found: phase_box.dim(),
        });
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return invalid(format!("set-measure fractions must lie in (0, 1], got {f}"));
    }
    let mut cells: HashMap<usize, f64> = HashMap::new();
    let mut outside = Vec::new();
    let mut z = vec![0.0; 2 * d];
    for i in 0..ens.len() {
        z[..d].copy_from_slice(ens.position(i));
        z[d..].copy_from_slice(ens.velocity(i));
        match phase_box.cell_of(&z) {
            Some(c) => *cells.entry(c).or_insert(0.0) += ens.weights()[i],
            None => outside.push(ens.weights()[i]),
        }
    }
    let mut masses: Vec<f64> = cells.into_values().filter(|m| *m > 0.0).collect();
    if masses.is_empty() {
        return Err(Error::Empty("no mass inside the reference phase box".into()));
    }
    masses.sort_by(|a, b| b.total_cmp(a));
    let total_cells = phase_box.cell_count() as f64;
    let captured = fractions
        .iter()
        .map(|&phi| {
            let fill = phi * total_cells;
            let full = (fill.floor() as usize).min(masses.len());
            let mut m = compensated_sum(masses[..full].iter().copied());
            if full < masses.len() {
                m += (fill - full as f64) * masses[full];
            }
            m
        })
        .collect();
    Ok(IntegrabilityProfile {
        fractions: fractions.to_vec(),
        captured,
        outside_mass: compensated_sum(outside),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concentrated_mass_is_captured() {
        let n = 100;
        let mut w = vec![0.01 / (n - 1) as f64; n];
        w[0] = 0.99;
        let xs: Vec<f64> = (0..n).map(|i| -0.9 + 1.8 * i as f64 / n as f64).collect();
        let e = ParticleEnsemble::new(1, xs.clone(), xs, w).unwrap();
        let b = GridSpec::cube(2, 1.0, 20).unwrap();
        let p = equi_integrability_profile(&e, &b, &[0.01, 0.5, 1.0]).unwrap();
        assert!(p.captured[0] >= 0.99);
        assert!((p.captured[2] - 1.0).abs() < 1e-12);
        assert!(p.captured.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_bad_fractions_and_empty_boxes() {
        let e = ParticleEnsemble::new(1, vec![5.0], vec![5.0], vec![1.0]).unwrap();
        let b = GridSpec::cube(2, 1.0, 4).unwrap();
        assert!(equi_integrability_profile(&e, &b, &[0.0]).is_err());
        assert!(equi_integrability_profile(&e, &b, &[1.5]).is_err());
        assert!(matches!(
            equi_integrability_profile(&e, &b, &[0.5]),
            Err(Error::Empty(_))
        ));
    }
}
