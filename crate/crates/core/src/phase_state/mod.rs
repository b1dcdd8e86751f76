//! Weighted particle representation of the distribution function.

pub mod datum;
pub mod deposit;
mod ensemble;
mod grid;
pub mod integrability;

pub use datum::{mollify, DatumShape, InitialDatumSpec, Marginal};
pub use deposit::{
    deposit_current, deposit_current_with, deposit_density, deposit_density_with, Deposit, DepositScheme,
};
pub use ensemble::ParticleEnsemble;
pub use grid::GridSpec;
pub use integrability::{equi_integrability_profile, IntegrabilityProfile};

/// Draws `count` particles from `spec` with the given seed.
pub fn sample_ensemble(spec: &InitialDatumSpec, count: usize, seed: u64) -> crate::Result<ParticleEnsemble> {
    spec.sample(count, seed)
}

pub fn total_mass(ens: &ParticleEnsemble) -> f64 {
    ens.total_mass()
}

pub fn kinetic_energy(ens: &ParticleEnsemble) -> f64 {
    ens.kinetic_energy()
}
