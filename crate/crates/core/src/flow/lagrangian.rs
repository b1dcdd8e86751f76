use super::force::ForceField;
use super::history::FlowHistory;
use crate::error::{invalid, Error, Result};
use crate::phase_state::ParticleEnsemble;

/// States `Z(s, t, ·)` of the stored particles. Every particle lies on a single
/// stored trajectory, so this is the stored state at `s` for any `t` in the
/// horizon, which makes the composition property exact on sample times.
pub fn backward_eval(history: &FlowHistory, s: f64, t: f64) -> Result<ParticleEnsemble> {
    history.check_time(t)?;
    history.state_at(s)
}

/// Values of the transported density at arbitrary phase points.
#[derive(Clone, Debug, PartialEq)]
pub struct PushForward {
    pub values: Vec<f64>,
    /// Foot points `Z(base, t, z)`, stride 2N.
    pub feet: Vec<f64>,
    /// The backward characteristic left the region where the frozen field
    /// is faithful at some step.
    pub extrapolated: Vec<bool>,
}

/// `f(t, z) = f⁰(Z(base, t, z))` for each query point `z` (stride 2N).
///
/// The characteristic through `z` is integrated backward in the field frozen
/// at each stored step, undoing the forward kick-drift-kick exactly. Needs a
/// history stored at every step up to `t`.
pub fn push_forward_eval(
    history: &FlowHistory,
    force: &dyn ForceField,
    f0: &dyn Fn(&[f64], &[f64]) -> f64,
    t: f64,
    queries: &[f64],
) -> Result<PushForward> {
    let d = history.dim();
    if force.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: force.dim(),
        });
    }
    if !queries.len().is_multiple_of(2 * d) {
        return invalid("query points need stride 2N");
    }
    if queries.iter().any(|q| !q.is_finite()) {
        return invalid("query points must be finite");
    }
    history.check_time(t)?;
    let k = history
        .sample_index(t)
        .ok_or_else(|| Error::InvalidSpec(format!("time {t} is not a stored sample")))?;
    if history.sample_steps()[..=k].iter().enumerate().any(|(j, &s)| s != j) {
        return Err(Error::Unsupported(
            "off-particle transport needs a history stored at every step".into(),
        ));
    }
    let m = queries.len() / (2 * d);
    let mut x = Vec::with_capacity(m * d);
    let mut v = Vec::with_capacity(m * d);
    for z in queries.chunks_exact(2 * d) {
        x.extend_from_slice(&z[..d]);
        v.extend_from_slice(&z[d..]);
    }
    let support = force.field_support();
    let mut extrapolated = vec![false; m];
    let flag = |x: &[f64], out: &mut [bool]| {
        if let Some((lo, hi)) = &support {
            for (i, xi) in x.chunks_exact(d).enumerate() {
                if xi.iter().zip(lo.iter().zip(hi)).any(|(c, (l, h))| c < l || c > h) {
                    out[i] = true;
                }
            }
        }
    };
    let dt = history.dt();
    let half = 0.5 * dt;
    if k > 0 {
        flag(&x, &mut extrapolated);
        let mut e = force.field_at(&history.sample(k), &x)?;
        for j in (1..=k).rev() {
            for ((xi, vi), ei) in x.iter_mut().zip(v.iter_mut()).zip(&e) {
                *vi -= half * ei;
                *xi -= dt * *vi;
            }
            flag(&x, &mut extrapolated);
            e = force.field_at(&history.sample(j - 1), &x)?;
            for (vi, ei) in v.iter_mut().zip(&e) {
                *vi -= half * ei;
            }
        }
    }
    let mut feet = Vec::with_capacity(m * 2 * d);
    let mut values = Vec::with_capacity(m);
    for i in 0..m {
        let (xi, vi) = (&x[i * d..(i + 1) * d], &v[i * d..(i + 1) * d]);
        if xi.iter().chain(vi).any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                quantity: "backward characteristic",
                step: k,
                particle: i,
            });
        }
        feet.extend_from_slice(xi);
        feet.extend_from_slice(vi);
        values.push(f0(xi, vi));
    }
    Ok(PushForward {
        values,
        feet,
        extrapolated,
    })
}
