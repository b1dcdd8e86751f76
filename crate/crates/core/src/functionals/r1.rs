use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{GridField, Rank};
use crate::sum::CompensatedSum;

/// Norms of the split `E/(1+|x|+|v|) = Ẽ₁ + Ẽ₂` along `{|v| ≤ |E(x)|}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R1Norms {
    /// `‖Ẽ₁‖_{L¹(x,v)}`.
    pub l1: f64,
    /// `‖Ẽ₂‖_{L∞(x,v)}`, at most 1.
    pub linf: f64,
    /// `c_N ‖E‖²_{L²}` with `c_1 = 2`, `c_2 = 2π`: the bound on `l1` from
    /// `∫_{|v|≤|E|} |E|/|v| dv = c_N |E|²`.
    pub bound: f64,
    /// Whether the velocity box reaches `max |E|`, so no part of `Ẽ₁` is cut off.
    pub covers: bool,
    pub velocity_cells: usize,
}

/// R1 decomposition norms for a vector field on an x-grid, with a tensor
/// midpoint rule on the velocity box `[−v_max, v_max]^N` (`velocity_cells`
/// per axis). Only `N ≤ 2`: the decomposition fails in three dimensions.
pub fn r1_decomposition_norms(e: &GridField, v_max: f64, velocity_cells: usize) -> Result<R1Norms> {
    let d = e.dim();
    if d == 3 {
        return Err(Error::Unsupported(
            "the R1 decomposition does not hold for N = 3".into(),
        ));
    }
    if e.rank() != Rank::Vector {
        return invalid("R1 norms need a vector field");
    }
    if !(v_max > 0.0) || velocity_cells == 0 {
        return invalid("velocity box needs positive extent and cells");
    }
    let grid = e.grid();
    let mags = e.magnitudes();
    let hv = 2.0 * v_max / velocity_cells as f64;
    let dv = hv.powi(d as i32);
    let nv = velocity_cells.pow(d as u32);
    let vpts: Vec<f64> = (0..nv)
        .map(|k| {
            let mut rem = k;
            let mut r2 = 0.0;
            for _ in 0..d {
                let c = -v_max + ((rem % velocity_cells) as f64 + 0.5) * hv;
                rem /= velocity_cells;
                r2 += c * c;
            }
            r2.sqrt()
        })
        .collect();
    let mut l1 = CompensatedSum::new();
    let mut l2 = CompensatedSum::new();
    let mut linf = 0.0_f64;
    let mut max_e = 0.0_f64;
    for (k, &m) in mags.iter().enumerate() {
        let vol = grid.node_volume(k);
        let x = grid.node_position(k);
        let rx = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        max_e = max_e.max(m);
        l2.add(vol * m * m);
        if m == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for &rv in &vpts {
            let val = m / (1.0 + rx + rv);
            if rv <= m {
                inner += val;
            } else {
                linf = linf.max(val);
            }
        }
        l1.add(vol * dv * inner);
    }
    let c = if d == 1 { 2.0 } else { 2.0 * std::f64::consts::PI };
    Ok(R1Norms {
        l1: l1.value(),
        linf,
        bound: c * l2.value(),
        covers: v_max >= max_e,
        velocity_cells,
    })
}
