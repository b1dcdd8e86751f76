//! Reproducible experiment suites: single runs, strong and weak stability
//! sequences, existence by mollification and the superlevel study.

mod config;
mod report;
mod run;
mod suites;

pub use config::{
    ExperimentConfig, FieldConfig, OutputConfig, RunConfig, SeedingConfig, SequenceConfig, SequenceKind,
    SuperlevelConfig,
};
pub use report::{ExperimentReport, MemberReport, Verdict};
pub use run::{build_solver, data_l1, lagrangian_checks, run_simulation, LagrangianChecks, RunArtifacts};
pub use suites::{mollified_existence_suite, strong_stability_suite, superlevel_study, weak_stability_suite};
