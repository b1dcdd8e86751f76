use serde::{Deserialize, Serialize};

use super::grid_field::{GridField, Rank};
use crate::error::{invalid, Result};
use crate::sum::CompensatedSum;

/// ½ Σ_nodes |E|² · node volume.
pub fn potential_energy(e: &GridField) -> f64 {
    0.5 * e.l2_norm_squared()
}

/// Relative defect of `∫E·∂ₜE = −ω∫E·J` on a common grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzResidual {
    /// |∫E·∂ₜE + ω∫E·J| / (∫|E||J| + ∫|E||∂ₜE|); 0 when degenerate.
    pub value: f64,
    /// The normalisation vanished (for instance E ≡ 0).
    pub degenerate: bool,
    pub e_dot_dte: f64,
    pub e_dot_j: f64,
}

pub fn helmholtz_identity_residual(
    e: &GridField,
    dt_e: &GridField,
    j: &GridField,
    omega: f64,
) -> Result<HelmholtzResidual> {
    e.check_compatible(dt_e)?;
    e.check_compatible(j)?;
    if e.rank() != Rank::Vector {
        return invalid("the identity is stated for vector fields");
    }
    let d = e.dim();
    let vols = e.grid().node_volumes();
    let (mut ed, mut ej, mut norm) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for (n, v) in vols.iter().enumerate() {
        let a = &e.values()[n * d..(n + 1) * d];
        let b = &dt_e.values()[n * d..(n + 1) * d];
        let c = &j.values()[n * d..(n + 1) * d];
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let mag = |x: &[f64]| dot(x, x).sqrt();
        ed.add(dot(a, b) * v);
        ej.add(dot(a, c) * v);
        norm.add(mag(a) * (mag(b) + mag(c)) * v);
    }
    let (ed, ej, norm) = (ed.value(), ej.value(), norm.value());
    if norm == 0.0 {
        return Ok(HelmholtzResidual {
            value: 0.0,
            degenerate: true,
            e_dot_dte: ed,
            e_dot_j: ej,
        });
    }
    Ok(HelmholtzResidual {
        value: (ed + omega * ej).abs() / norm,
        degenerate: false,
        e_dot_dte: ed,
        e_dot_j: ej,
    })
}

/// Relative discrete L² norm of `ΔU + ω s` over nodes at least one cell away
/// from the boundary, using the standard (2N+1)-point Laplacian. `s` is the
/// source density ρ − ρ_b on the same grid.
pub fn poisson_residual(u: &GridField, source: &GridField, omega: f64) -> Result<f64> {
    u.check_compatible(source)?;
    if u.rank() != Rank::Scalar {
        return invalid("poisson residual needs scalar fields");
    }
    let g = u.grid();
    let d = g.dim();
    let nodes = g.nodes_per_axis();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * nodes[a + 1];
    }
    let mut idx = vec![0usize; d];
    let (mut num, mut den) = (CompensatedSum::new(), CompensatedSum::new());
    for k in 0..g.node_count() {
        g.node_multi_index(k, &mut idx);
        if idx.iter().zip(&nodes).any(|(&i, &n)| i == 0 || i + 1 == n) {
            continue;
        }
        let mut lap = 0.0;
        for a in 0..d {
            let h = g.spacing(a);
            let uv = u.values();
            lap += (uv[k + strides[a]] - 2.0 * uv[k] + uv[k - strides[a]]) / (h * h);
        }
        let s = omega * source.values()[k];
        num.add((lap + s) * (lap + s));
        den.add(s * s);
    }
    let den = den.value();
    if den == 0.0 {
        return Ok(num.value().sqrt());
    }
    Ok((num.value() / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_state::GridSpec;

    #[test]
    fn energy_of_constant_field() {
        let g = GridSpec::cube(3, 0.5, 3).unwrap();
        let e = GridField::from_fn(g.clone(), Rank::Vector, |_, o| o.copy_from_slice(&[1.0, 0.0, 0.0]));
        assert!((potential_energy(&e) - 0.5).abs() < 1e-14);
        assert_eq!(potential_energy(&GridField::zeros(g, Rank::Vector)), 0.0);
    }

    #[test]
    fn zero_field_is_degenerate() {
        let g = GridSpec::cube(2, 1.0, 4).unwrap();
        let z = GridField::zeros(g.clone(), Rank::Vector);
        let j = GridField::from_fn(g, Rank::Vector, |x, o| o.copy_from_slice(x));
        let r = helmholtz_identity_residual(&z, &z, &j, 1.0).unwrap();
        assert!(r.degenerate && r.value == 0.0);
    }

    #[test]
    fn laplacian_of_quadratic() {
        let g = GridSpec::cube(2, 1.0, 8).unwrap();
        let u = GridField::scalar_from_fn(g.clone(), |x| -(x[0] * x[0] + x[1] * x[1]) / 4.0);
        let s = GridField::scalar_from_fn(g, |_| 1.0);
        assert!(poisson_residual(&u, &s, 1.0).unwrap() < 1e-12);
    }
}
