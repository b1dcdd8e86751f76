//! Characteristics of the self-consistent field and the flow-level
//! diagnostics built on stored trajectories.

mod force;
mod history;
mod integrator;
mod lagrangian;
mod levels;
pub mod seeding;

pub use force::{ConstantField, ForceDescription, ForceEvaluation, ForceField, ZeroField};
pub use history::{EnergySample, FlowHistory};
pub use integrator::{advance, advance_partial, AdvanceOptions, VerletStepper};
pub use lagrangian::{backward_eval, push_forward_eval, PushForward};
pub use levels::{
    compressibility_estimate, seeds_in_ball, sublevel_mask, superlevel_curve, superlevel_measure, Compressibility,
    MeasureKind, PhaseBox,
};
pub use seeding::{attach_tracers, lattice_in_ball, lattice_in_box, LatticeSeeds, SeedRegion, Seeding};
