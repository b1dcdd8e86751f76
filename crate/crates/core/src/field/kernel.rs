//! Regularised Coulomb/Newton kernels in one, two and three dimensions.
//!
//! The point charge is replaced by the compact mollifier
//! `φ_ε(x) = c (1 - |x|²/ε²)³` for `|x| < ε`. Outside the ball of radius ε the
//! field, potential and field gradient are exactly the singular ones, so
//! far-field oracles hold without a softening bias.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::phase_state::GridSpec;

/// Surface measure `|S^{d-1}|` of the unit sphere in ℝ^d.
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / half_gamma(dim)
}

/// Volume of the unit ball in ℝ^d.
pub fn unit_ball_volume(dim: usize) -> f64 {
    sphere_area(dim) / dim as f64
}

/// Γ(d/2) for positive integers d.
fn half_gamma(d: usize) -> f64 {
    let mut g = if d.is_multiple_of(2) {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut x = if d.is_multiple_of(2) { 1.0 } else { 0.5 };
    while x < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

/// How sources are summed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelMethod {
    /// Pairwise sums over all sources, O(targets × sources).
    DirectSum,
    /// Cubic B-spline charge assignment to `grid`, free-space FFT convolution
    /// with the sampled kernel, and spline interpolation back. Particles whose
    /// spline stencil misses the grid are not coupled to the field.
    GridConvolution { grid: GridSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub dim: usize,
    pub softening: f64,
    pub method: KernelMethod,
}

impl KernelConfig {
    pub fn direct(dim: usize, softening: f64) -> Self {
        Self {
            dim,
            softening,
            method: KernelMethod::DirectSum,
        }
    }

    pub fn mesh(grid: GridSpec, softening: f64) -> Self {
        Self {
            dim: grid.dim(),
            softening,
            method: KernelMethod::GridConvolution { grid },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return invalid(format!("kernel dimension must be 1, 2 or 3, got {}", self.dim));
        }
        if !(self.softening > 0.0 && self.softening.is_finite()) {
            return invalid(format!(
                "softening must be positive for particle kernels, got {}",
                self.softening
            ));
        }
        if let KernelMethod::GridConvolution { grid } = &self.method {
            if grid.dim() != self.dim {
                return Err(crate::Error::DimensionMismatch {
                    expected: self.dim,
                    found: grid.dim(),
                });
            }
            if grid.cells().iter().any(|&c| c < 4) {
                return invalid("grid-convolution needs at least 4 cells per axis");
            }
        }
        Ok(())
    }
}

/// The unit-charge kernels `G_ε`, `E_ε = -∇G_ε` and `∇E_ε` for a fixed ε.
///
/// Every quantity here is for ω = 1 and a unit source at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifiedKernel {
    dim: usize,
    eps: f64,
    area: f64,
    /// 1 / (|S| ε^N P(1)), the mollifier's peak normalisation.
    inner: f64,
}

impl MollifiedKernel {
    /// `softening = 0` gives the singular kernels.
    pub fn new(dim: usize, softening: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return invalid(format!("kernel dimension must be 1, 2 or 3, got {dim}"));
        }
        if !(softening >= 0.0 && softening.is_finite()) {
            return invalid(format!("softening must be nonnegative, got {softening}"));
        }
        let area = sphere_area(dim);
        let inner = if softening > 0.0 {
            1.0 / (area * softening.powi(dim as i32) * q(dim, 1.0))
        } else {
            f64::INFINITY
        };
        Ok(Self {
            dim,
            eps: softening,
            area,
            inner,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn softening(&self) -> f64 {
        self.eps
    }

    /// `h(r)` with `E(x) = h(|x|) x`.
    #[inline]
    pub fn field_factor(&self, r2: f64) -> f64 {
        let e2 = self.eps * self.eps;
        if r2 < e2 {
            return self.inner * q(self.dim, r2 / e2);
        }
        match self.dim {
            1 => 1.0 / (self.area * r2.sqrt()),
            2 => 1.0 / (self.area * r2),
            _ => 1.0 / (self.area * r2 * r2.sqrt()),
        }
    }

    /// `(h, h'/r)`, enough to assemble `∂_j E_i = δ_ij h + x_i x_j h'/r`.
    #[inline]
    pub fn gradient_factors(&self, r2: f64) -> (f64, f64) {
        let e2 = self.eps * self.eps;
        if r2 < e2 {
            let s = r2 / e2;
            return (self.inner * q(self.dim, s), 2.0 * self.inner * dq(self.dim, s) / e2);
        }
        let n = self.dim as f64;
        let rn = match self.dim {
            1 => r2.sqrt(),
            2 => r2,
            _ => r2 * r2.sqrt(),
        };
        let h = 1.0 / (self.area * rn);
        (h, -n * h / r2)
    }

    pub fn field(&self, x: &[f64], out: &mut [f64]) {
        let r2: f64 = x.iter().map(|a| a * a).sum();
        let h = if r2 == 0.0 && self.eps > 0.0 {
            0.0
        } else {
            self.field_factor(r2)
        };
        for (o, xa) in out.iter_mut().zip(x) {
            *o = h * xa;
        }
    }

    /// Row-major `∂_j E_i`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let r2: f64 = x.iter().map(|a| a * a).sum();
        let (h, hp) = self.gradient_factors(r2);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = if i == j { h } else { 0.0 } + x[i] * x[j] * hp;
            }
        }
    }

    /// `G_ε`, normalised so that outside the core it is 1/(4π r), −log(r)/(2π) or −r/2.
    #[inline]
    pub fn potential(&self, r2: f64) -> f64 {
        let e2 = self.eps * self.eps;
        if r2 < e2 {
            let s = r2 / e2;
            let n = self.dim as f64;
            let scale = self.eps.powf(2.0 - n) / (2.0 * self.area * q(self.dim, 1.0));
            return singular_potential(self.dim, self.eps) + scale * (rpoly(self.dim, 1.0) - rpoly(self.dim, s));
        }
        singular_potential(self.dim, r2.sqrt())
    }

    /// The mollifier φ_ε itself; it integrates to one and equals the trace of
    /// the field gradient.
    pub fn mollifier(&self, r2: f64) -> f64 {
        let e2 = self.eps * self.eps;
        if r2 < e2 {
            self.inner * (1.0 - r2 / e2).powi(3)
        } else {
            0.0
        }
    }
}

fn singular_potential(dim: usize, r: f64) -> f64 {
    match dim {
        1 => -0.5 * r,
        2 => -r.ln() / (2.0 * std::f64::consts::PI),
        _ => 1.0 / (4.0 * std::f64::consts::PI * r),
    }
}

/// Q(s) = 1/N − 3s/(N+2) + 3s²/(N+4) − s³/(N+6): the enclosed-charge profile
/// divided by r^N, as a function of s = r²/ε².
#[inline]
fn q(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    1.0 / n - 3.0 * s / (n + 2.0) + 3.0 * s * s / (n + 4.0) - s * s * s / (n + 6.0)
}

#[inline]
fn dq(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    -3.0 / (n + 2.0) + 6.0 * s / (n + 4.0) - 3.0 * s * s / (n + 6.0)
}

/// Antiderivative of Q vanishing at 0; gives the potential inside the core.
#[inline]
fn rpoly(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    s / n - 1.5 * s * s / (n + 2.0) + s * s * s / (n + 4.0) - 0.25 * s.powi(4) / (n + 6.0)
}

/// The singular field-gradient kernel
/// `K_ij(x) = (N x_i x_j / |x|^{N+2} − δ_ij / |x|^N) / |S^{N−1}|`, so that
/// away from the origin `D_x E = −ω K * (ρ − ρ_b)`.
pub fn singular_gradient_kernel(x: &[f64], out: &mut [f64]) {
    let d = x.len();
    let n = d as f64;
    let r2: f64 = x.iter().map(|a| a * a).sum();
    let rn = r2.powf(n / 2.0);
    let area = sphere_area(d);
    for i in 0..d {
        for j in 0..d {
            let delta = if i == j { 1.0 } else { 0.0 };
            out[i * d + j] = (n * x[i] * x[j] / (rn * r2) - delta / rn) / area;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_constants() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-15);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-13);
        assert!((unit_ball_volume(6) - PI.powi(3) / 6.0).abs() < 1e-13);
    }

    #[test]
    fn bracket_polynomials() {
        assert!((q(1, 1.0) - 16.0 / 35.0).abs() < 1e-15);
        assert!((q(2, 1.0) - 1.0 / 8.0).abs() < 1e-15);
        assert!((q(3, 1.0) - 16.0 / 315.0).abs() < 1e-15);
    }

    #[test]
    fn kij_values_on_axis() {
        let mut k = [0.0; 9];
        singular_gradient_kernel(&[1.0, 0.0, 0.0], &mut k);
        assert!((k[0] - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((k[4] + 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((k[0] + k[4] + k[8]).abs() < 1e-15);
    }

    #[test]
    fn continuity_across_the_core_boundary() {
        for dim in 1..=3 {
            let k = MollifiedKernel::new(dim, 0.7).unwrap();
            let a = 0.49 * (1.0 - 1e-12);
            let b = 0.49 * (1.0 + 1e-12);
            assert!((k.field_factor(a) - k.field_factor(b)).abs() < 1e-9);
            assert!((k.potential(a) - k.potential(b)).abs() < 1e-9);
            let (ha, pa) = k.gradient_factors(a);
            let (hb, pb) = k.gradient_factors(b);
            assert!((ha - hb).abs() < 1e-9 && (pa - pb).abs() < 1e-8, "dim {dim}");
        }
    }

    #[test]
    fn field_is_minus_potential_gradient() {
        for dim in 1..=3 {
            let k = MollifiedKernel::new(dim, 1.0).unwrap();
            for r in [0.2, 0.6, 0.95, 1.5, 3.0] {
                let h = 1e-5;
                let d = -(k.potential((r + h) * (r + h)) - k.potential((r - h) * (r - h))) / (2.0 * h);
                let e = k.field_factor(r * r) * r;
                assert!((d - e).abs() < 1e-7 * (1.0 + e.abs()), "dim {dim} r {r}: {d} vs {e}");
            }
        }
    }

    #[test]
    fn gradient_trace_is_the_mollifier() {
        for dim in 1..=3 {
            let k = MollifiedKernel::new(dim, 0.8).unwrap();
            let mut g = vec![0.0; dim * dim];
            for r in [0.1, 0.5, 0.79, 1.2] {
                let mut x = vec![0.0; dim];
                x[0] = r * 0.6;
                if dim > 1 {
                    x[1] = r * 0.8;
                } else {
                    x[0] = r;
                }
                k.gradient(&x, &mut g);
                let tr: f64 = (0..dim).map(|i| g[i * dim + i]).sum();
                let phi = k.mollifier(r * r);
                assert!((tr - phi).abs() < 1e-12 * (1.0 + phi), "dim {dim} r {r}");
            }
        }
    }

    #[test]
    fn mollifier_has_unit_mass() {
        for dim in 1..=3 {
            let k = MollifiedKernel::new(dim, 0.5).unwrap();
            let n = 100_000;
            let mut acc = 0.0;
            for i in 0..n {
                let r = (i as f64 + 0.5) * 0.5 / n as f64;
                acc += k.mollifier(r * r) * sphere_area(dim) * r.powi(dim as i32 - 1) * 0.5 / n as f64;
            }
            assert!((acc - 1.0).abs() < 1e-8, "dim {dim}: {acc}");
        }
    }

    #[test]
    fn exact_outside_the_core() {
        let k = MollifiedKernel::new(3, 0.2).unwrap();
        let mut e = [0.0; 3];
        k.field(&[1.0, 0.0, 0.0], &mut e);
        assert!((e[0] - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((k.potential(4.0) - 1.0 / (8.0 * PI)).abs() < 1e-15);
        let k1 = MollifiedKernel::new(1, 0.1).unwrap();
        let mut e1 = [0.0];
        k1.field(&[-3.0], &mut e1);
        assert_eq!(e1[0], -0.5);
    }
}
