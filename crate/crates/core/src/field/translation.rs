//! L^p translation estimates for the kernel g(x) = x/|x|^N.

use super::grid_field::{GridField, Rank};
use crate::error::{invalid, Result};
use crate::quadrature::GaussLegendre;
use crate::sum::CompensatedSum;

/// The rate α = 1 − N + N/p of `‖τ_h g − g‖_{L^p} ≲ |h|^α`.
pub fn translation_exponent(dim: usize, p: f64) -> f64 {
    1.0 - dim as f64 + dim as f64 / p
}

/// `‖g(· + h) − g‖_{L^p(ℝ^N)}` for `g(x) = x/|x|^N`, by quadrature.
///
/// Admissible exponents are `1 < p < N/(N−1)`. Away from the two singular
/// points `0` and `−h` (for `|x| > 2|h|`) a log-radial rule is used, with the
/// far tail taken from the linearisation `g(x+h) − g(x) ≈ Dg(x) h`. The ball
/// `|x| ≤ 2|h|` is split by the bisecting plane into one polar system around
/// each singular point; a power substitution in the radius absorbs the
/// integrable `ρ^{(N−1)(1−p)}` behaviour so every panel sees a smooth integrand.
pub fn kernel_translation_error(h: &[f64], p: f64, dim: usize) -> Result<f64> {
    if !(1..=3).contains(&dim) {
        return invalid(format!("dimension must be 1, 2 or 3, got {dim}"));
    }
    if h.len() != dim {
        return Err(crate::Error::DimensionMismatch {
            expected: dim,
            found: h.len(),
        });
    }
    let upper = if dim == 1 {
        f64::INFINITY
    } else {
        dim as f64 / (dim as f64 - 1.0)
    };
    if !(p > 1.0 && p < upper) {
        return invalid(format!(
            "translation estimate needs 1 < p < N/(N-1) = {upper}, got p = {p}"
        ));
    }
    let a: f64 = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    if a == 0.0 {
        return Ok(0.0);
    }
    if !a.is_finite() {
        return invalid("offset must be finite");
    }
    let integral = match dim {
        1 => 2f64.powf(p) * a,
        _ => translation_integral(dim, a, p),
    };
    Ok(integral.powf(1.0 / p))
}

/// ∫ |g(x + a e₁) − g(x)|^p dx for N ∈ {2, 3}.
fn translation_integral(dim: usize, a: f64, p: f64) -> f64 {
    let n = dim as f64;
    let gl = GaussLegendre::new(16);
    let f = |x: [f64; 2]| -> f64 {
        // Axisymmetric about e₁: the integrand only sees (x₁, |x⊥|).
        let r2 = x[0] * x[0] + x[1] * x[1];
        let y = [x[0] + a, x[1]];
        let s2 = y[0] * y[0] + y[1] * y[1];
        let gx = r2.powf(-n / 2.0);
        let gy = s2.powf(-n / 2.0);
        let d0 = y[0] * gy - x[0] * gx;
        let d1 = y[1] * gy - x[1] * gx;
        (d0 * d0 + d1 * d1).powf(p / 2.0)
    };
    // Angular variable: μ = cos θ in 3D with weight 2π, θ ∈ [0, π] in 2D with weight 2.
    let angular = |lo: f64, hi: f64, g: &dyn Fn(f64, f64) -> f64| -> f64 {
        if dim == 3 {
            2.0 * std::f64::consts::PI * gl.integrate(lo, hi, 8, |mu| g(mu, (1.0 - mu * mu).max(0.0).sqrt()))
        } else {
            let (tl, th) = (hi.acos(), lo.acos());
            2.0 * gl.integrate(tl, th, 8, |t| g(t.cos(), t.sin()))
        }
    };
    let jac = |rho: f64| if dim == 3 { rho * rho } else { rho };

    // Outer region |x| > 2a, r = 2a e^s.
    let r0 = 2.0 * a;
    let decay = n * (p - 1.0);
    let smax = (30.0 / decay).min(600.0);
    let panels = (smax / 1.5).ceil() as usize;
    let outer = angular(-1.0, 1.0, &|mu, sn| {
        gl.integrate(0.0, smax, panels, |s| {
            let r = r0 * s.exp();
            f([r * mu, r * sn]) * jac(r) * r
        })
    });
    let rmax = r0 * smax.exp();
    let ang = if dim == 3 {
        2.0 * std::f64::consts::PI * gl.integrate(-1.0, 1.0, 8, |mu| (1.0 + 3.0 * mu * mu).powf(p / 2.0))
    } else {
        2.0 * std::f64::consts::PI
    };
    let tail = a.powf(p) * rmax.powf(n - n * p) / (n * p - n) * ang;

    // Inner region, split by the plane x₁ = −a/2.
    let e0 = (n - 1.0) * (1.0 - p);
    let beta = 1.0 / (e0 + 1.0);
    let radial = |rho_max: f64, centre: f64, mu: f64, sn: f64| -> f64 {
        gl.integrate(0.0, 1.0, 6, |t| {
            let rho = rho_max * t.powf(beta);
            let drho = rho_max * beta * t.powf(beta - 1.0);
            f([centre + rho * mu, rho * sn]) * jac(rho) * drho
        })
    };
    // Around 0: ρ ≤ 2a and ρμ > −a/2.
    let near0 = |mu: f64, sn: f64| {
        let rmax = if mu < -0.25 { -0.5 * a / mu } else { 2.0 * a };
        radial(rmax, 0.0, mu, sn)
    };
    // Around −h: ρμ < a/2 and |−h + ρω| ≤ 2a.
    let near1 = |mu: f64, sn: f64| {
        let ball = a * (mu + (mu * mu + 3.0).sqrt());
        let rmax = if mu > 0.25 { 0.5 * a / mu } else { ball };
        radial(rmax, -a, mu, sn)
    };
    let inner0 = angular(-1.0, -0.25, &near0) + angular(-0.25, 1.0, &near0);
    let inner1 = angular(-1.0, 0.25, &near1) + angular(0.25, 1.0, &near1);
    outer + tail + inner0 + inner1
}

/// Least-squares slope of log(values) against log(|h|).
pub fn loglog_slope(h: &[f64], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h.iter().zip(values).map(|(x, y)| (x.ln(), y.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// One row of a translation-rate sweep.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TranslationSweep {
    pub dim: usize,
    pub p: f64,
    pub offsets: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub expected: f64,
}

/// Evaluates the translation error at `|h| = 2^{-k}`, k = 0..levels, along e₁.
pub fn translation_sweep(dim: usize, p: f64, levels: usize) -> Result<TranslationSweep> {
    let offsets: Vec<f64> = (0..levels).map(|k| 0.5f64.powi(k as i32)).collect();
    let mut errors = Vec::with_capacity(levels);
    for &o in &offsets {
        let mut h = vec![0.0; dim];
        h[0] = o;
        errors.push(kernel_translation_error(&h, p, dim)?);
    }
    Ok(TranslationSweep {
        dim,
        p,
        slope: loglog_slope(&offsets, &errors),
        expected: translation_exponent(dim, p),
        offsets,
        errors,
    })
}

/// `‖u(· + k h e_axis) − u‖_{L^p}` over the nodes where both samples exist.
pub fn grid_translation_modulus(field: &GridField, axis: usize, shift: usize, p: f64) -> Result<f64> {
    if field.rank() == Rank::Matrix {
        return invalid("translation modulus is defined for scalar or vector fields");
    }
    if axis >= field.dim() {
        return invalid(format!("axis {axis} out of range"));
    }
    let g = field.grid();
    let nodes = g.nodes_per_axis();
    let stride: usize = nodes[axis + 1..].iter().product();
    let mut idx = vec![0; g.dim()];
    let mut acc = CompensatedSum::new();
    for k in 0..g.node_count() {
        g.node_multi_index(k, &mut idx);
        if idx[axis] + shift >= nodes[axis] {
            continue;
        }
        let a = field.node(k);
        let b = field.node(k + shift * stride);
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        acc.add(d2.powf(p / 2.0) * g.node_volume(k));
    }
    Ok(acc.value().powf(1.0 / p))
}
