//! Stability functionals over pairs of flows, the β superlevel functional
//! and the R1 decomposition norms.

mod beta;
mod r1;
mod stability;

pub use beta::{
    beta, beta_prime, beta_second, beta_superlevel_functional, fit_superlevel_constant, superlevel_chebyshev_bound,
};
pub use r1::{r1_decomposition_norms, R1Norms};
pub use stability::{deviation_measure, field_difference_l1, phi_delta, FunctionalParams, StabilityReport};
