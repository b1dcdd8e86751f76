//! Self-consistent field, its gradient and time derivative, and the weak-norm
//! and kernel diagnostics.

pub mod background;
pub mod diagnostics;
mod fft;
pub mod grid_field;
pub mod kernel;
mod solver;
pub mod translation;
pub mod weak;

pub use background::{BackgroundSpec, PointCharges};
pub use diagnostics::{helmholtz_identity_residual, poisson_residual, potential_energy, HelmholtzResidual};
pub use grid_field::{GridField, Rank};
pub use kernel::{
    singular_gradient_kernel, sphere_area, unit_ball_volume, KernelConfig, KernelMethod, MollifiedKernel,
};
pub use solver::{FieldSolver, Sources};
pub use translation::{
    grid_translation_modulus, kernel_translation_error, translation_exponent, translation_sweep, TranslationSweep,
};
pub use weak::weak_quasinorm;

use crate::error::Result;
use crate::phase_state::GridSpec;

/// E on the nodes of `grid`.
pub fn solve_field(
    src: Sources,
    background: &BackgroundSpec,
    omega: f64,
    cfg: &KernelConfig,
    grid: &GridSpec,
) -> Result<GridField> {
    FieldSolver::new(cfg.clone(), background.clone(), omega)?.field_on_grid(src, grid)
}

/// E at arbitrary points, flattened with stride N.
pub fn solve_field_at(
    src: Sources,
    background: &BackgroundSpec,
    omega: f64,
    cfg: &KernelConfig,
    points: &[f64],
) -> Result<Vec<f64>> {
    FieldSolver::new(cfg.clone(), background.clone(), omega)?.field_at(src, points)
}

/// U on the nodes of `grid`; for N ≤ 2 its boundary mean is zero.
pub fn potential(
    src: Sources,
    background: &BackgroundSpec,
    omega: f64,
    cfg: &KernelConfig,
    grid: &GridSpec,
) -> Result<GridField> {
    FieldSolver::new(cfg.clone(), background.clone(), omega)?.potential_on_grid(src, grid)
}

/// D_x E on the nodes of `grid`.
pub fn field_gradient(
    src: Sources,
    background: &BackgroundSpec,
    omega: f64,
    cfg: &KernelConfig,
    grid: &GridSpec,
) -> Result<GridField> {
    FieldSolver::new(cfg.clone(), background.clone(), omega)?.gradient_on_grid(src, grid)
}

/// ∂ₜE = ω ∇(−Δ)⁻¹ div J on the grid of `current`.
pub fn dt_field(current: &GridField, omega: f64, cfg: &KernelConfig) -> Result<GridField> {
    FieldSolver::new(cfg.clone(), BackgroundSpec::Zero, omega)?.dt_field_on_grid(current)
}
