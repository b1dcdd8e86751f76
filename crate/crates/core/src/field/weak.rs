use super::grid_field::GridField;
use crate::error::{invalid, Result};

/// Discrete Marcinkiewicz quasinorm `sup_γ γ |{|u| ≥ γ}|^{1/p}`.
///
/// Levels range over the realised node magnitudes and measures are sums of
/// node control volumes. The level set is taken closed (`≥`), the left limit
/// of the strict one, so that the supremum over γ is attained on the grid.
pub fn weak_quasinorm(field: &GridField, p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return invalid(format!("weak exponent must exceed 1, got {p}"));
    }
    let vols = field.grid().node_volumes();
    let mut levels: Vec<(f64, f64)> = field
        .magnitudes()
        .into_iter()
        .zip(vols)
        .filter(|(m, _)| *m > 0.0)
        .collect();
    levels.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best: f64 = 0.0;
    let mut measure = 0.0;
    let mut i = 0;
    while i < levels.len() {
        let level = levels[i].0;
        while i < levels.len() && levels[i].0 == level {
            measure += levels[i].1;
            i += 1;
        }
        best = best.max(level * measure.powf(1.0 / p));
    }
    Ok(best)
}
