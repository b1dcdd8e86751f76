use vlasov_lagrange::experiments::*;
use vlasov_lagrange::flow::FlowHistory;
use vlasov_lagrange::Error;

const BASE: &str = r#"
[datum]
dim = 1
mass = 1.0
shape = { kind = "gaussian", x_sigma = 1.0, v_sigma = 1.0 }

[field]
omega = 1.0
softening = 0.1

[run]
dt = 0.01
horizon = 0.5
particles = 200
seed = 3
store_every = 10
diagnostics_every = 10
replicates = 1

[seeding]
shape = "ball"
radius = 1.0
points_per_unit_cell = 100.0

[functional]
r = 1.0
lambda = 4.0
gamma = 0.002
delta = 0.0001
alpha = 0.3
"#;

fn cfg(extra: &str, overrides: &[&str]) -> ExperimentConfig {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_toml_with(&format!("{BASE}{extra}"), &ov).unwrap()
}

fn cfg_err(extra: &str, overrides: &[&str]) -> Error {
    let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    match ExperimentConfig::from_toml_with(&format!("{BASE}{extra}"), &ov).and_then(|c| c.validate().map(|_| c)) {
        Ok(_) => panic!("configuration was accepted"),
        Err(e) => e,
    }
}

const MOLLIFY: &str = r#"
[sequence]
kind = "mollification"
values = [0.4, 0.1, 0.025]
"#;

const OSCILLATE: &str = r#"
[sequence]
kind = "oscillation"
values = [0.0, 1.0, 8.0]
"#;

#[test]
fn overrides_reach_nested_keys() {
    let c = cfg("", &["run.dt=0.005", "functional.gamma = 0.1", "field.omega=-1"]);
    assert_eq!(c.run.dt, 0.005);
    assert_eq!(c.functional.unwrap().gamma, 0.1);
    assert_eq!(c.field.omega, -1.0);
}

#[test]
fn integer_override_for_a_float_key() {
    let c = cfg("", &["run.horizon=1"]);
    assert_eq!(c.run.horizon, 1.0);
}

#[test]
fn unknown_keys_are_configuration_errors() {
    assert!(cfg_err("", &["run.step=0.1"]).is_configuration());
    assert!(cfg_err("\n[bogus]\nx = 1\n", &[]).is_configuration());
    assert!(cfg_err("", &["nonsense"]).is_configuration());
}

#[test]
fn invalid_values_are_configuration_errors() {
    assert!(cfg_err("", &["field.omega=0.5"]).is_configuration());
    assert!(cfg_err("", &["run.horizon=0.505"]).is_configuration());
    assert!(cfg_err("", &["run.particles=0"]).is_configuration());
    assert!(cfg_err("", &["functional.alpha=0.5"]).is_configuration());
    // sequences must be strictly monotone in the direction of convergence
    assert!(cfg_err(MOLLIFY, &["sequence.values=[0.1, 0.4]"]).is_configuration());
    assert!(cfg_err(MOLLIFY, &["sequence.values=[0.1, 0.1]"]).is_configuration());
    assert!(cfg_err(OSCILLATE, &["sequence.values=[4.0, 2.0]"]).is_configuration());
}

#[test]
fn config_round_trips_through_toml() {
    let c = cfg(MOLLIFY, &[]);
    let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(c, again);
}

#[test]
fn attractive_existence_request_is_refused() {
    let c = cfg(MOLLIFY, &["field.omega=-1"]);
    let err = mollified_existence_suite(&c).unwrap_err();
    assert!(err.is_configuration());
    assert!(err.to_string().contains("repulsive"), "{err}");
    let err = superlevel_study(&cfg("\n[superlevel]\nlambdas = [2.0]\n", &["field.omega=-1"])).unwrap_err();
    assert!(err.to_string().contains("repulsive"), "{err}");
}

#[test]
fn low_dimensional_existence_needs_a_neutralising_background() {
    let err = mollified_existence_suite(&cfg(MOLLIFY, &[])).unwrap_err();
    assert!(err.is_configuration());
    let c = cfg(MOLLIFY, &[r#"background={kind="gaussian", mass=0.5, sigma=1.0}"#]);
    assert!(mollified_existence_suite(&c).unwrap_err().is_configuration());
}

#[test]
fn suites_need_their_sections() {
    assert!(strong_stability_suite(&cfg("", &[])).unwrap_err().is_configuration());
    assert!(weak_stability_suite(&cfg(MOLLIFY, &[])).unwrap_err().is_configuration());
    assert!(strong_stability_suite(&cfg(OSCILLATE, &[]))
        .unwrap_err()
        .is_configuration());
}

#[test]
fn free_streaming_simulation_keeps_energy_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(
        "",
        &[
            r#"background={kind="neutral"}"#,
            r#"output.field_grid={origin=[-4.0], extent=[8.0], cells=[16]}"#,
        ],
    );
    let art = run_simulation(&c, Some(dir.path())).unwrap();
    assert!(art.failure.is_none());
    let e = art.history.energy();
    assert!(e.iter().all(|s| s.total.to_bits() == e[0].total.to_bits()));
    let checks = art.checks.unwrap();
    assert!(checks.passed(), "{checks:?}");
    assert!(dir.path().join("run.toml").exists());
    assert!(dir.path().join("fields/field_00000.vlgf").exists());
    let manifest = std::fs::read_to_string(dir.path().join("run.toml")).unwrap();
    assert!(manifest.contains("status = \"complete\""));
    let back = FlowHistory::load(dir.path().join("history")).unwrap();
    assert_eq!(back.last(), art.history.last());
}

#[test]
fn deterministic_runs_are_bitwise_reproducible() {
    let c = cfg("", &[]);
    let a = run_simulation(&c, None).unwrap().history;
    let b = run_simulation(&c, None).unwrap().history;
    for k in 0..a.sample_count() {
        assert_eq!(a.sample(k), b.sample(k));
    }
}

#[test]
fn lagrangian_checks_hold_on_a_self_consistent_run() {
    let art = run_simulation(&cfg("", &[]), None).unwrap();
    let c = art.checks.unwrap();
    assert!(c.mass_conserved && c.weights_unchanged && c.nonnegative);
    assert!(c.current_consistency < 1e-2, "{c:?}");
    assert!(c.energy_drift < 1e-3, "{c:?}");
    assert!(c.field_consistency < 1e-12, "{c:?}");
}

#[test]
fn data_l1_of_identical_supports_is_total_variation() {
    let c = cfg("", &[]);
    let a = c.datum.sample(50, 1).unwrap();
    let mut modulated = c.datum.clone();
    modulated.oscillation = Some(3.0);
    let b = modulated.sample(50, 1).unwrap();
    let tv: f64 = a.weights().iter().zip(b.weights()).map(|(x, y)| (x - y).abs()).sum();
    assert_eq!(data_l1(&a, &b, 4.0, 8).unwrap(), tv);
    assert_eq!(data_l1(&a, &a, 4.0, 8).unwrap(), 0.0);
    let far = c.datum.sample(50, 2).unwrap();
    let d = data_l1(&a, &far, 4.0, 8).unwrap();
    assert!(d > 0.0 && d <= 2.0);
}

#[test]
fn strong_suite_structure() {
    let r = strong_stability_suite(&cfg(MOLLIFY, &[])).unwrap();
    assert_eq!(r.members.len(), 3);
    let verdict = |needle: &str| {
        r.verdicts
            .iter()
            .find(|v| v.rule.contains(needle) || v.metric.contains(needle))
            .unwrap()
            .clone()
    };
    assert!(verdict("against itself").pass);
    assert!(verdict("bridge").pass);
    // the finest member is its own reference
    assert_eq!(r.members[2].deviation, Some(0.0));
    assert_eq!(r.stability.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    r.save(dir.path()).unwrap();
    assert!(dir.path().join("report.toml").exists());
    assert!(dir.path().join("metrics.csv").exists());
}

#[test]
fn weak_suite_structure() {
    let c = cfg(OSCILLATE, &["functional.gamma=0.05", "functional.delta=0.001"]);
    let r = weak_stability_suite(&c).unwrap();
    let unmodulated = r.members.iter().find(|m| m.parameter == 0.0).unwrap();
    assert_eq!(unmodulated.deviation, Some(0.0));
    assert_eq!(unmodulated.data_l1, Some(0.0));
    let oscillating = r.members.iter().find(|m| m.parameter == 8.0).unwrap();
    assert!(oscillating.data_l1.unwrap() > 0.3);
    assert!(
        r.verdicts
            .iter()
            .find(|v| v.rule.contains("integration-by-parts"))
            .unwrap()
            .pass
    );
}

#[test]
fn existence_suite_respects_the_energy_inequality() {
    let c = cfg(MOLLIFY, &[r#"background={kind="gaussian", mass=1.0, sigma=1.0}"#]);
    let r = mollified_existence_suite(&c).unwrap();
    let v = r.verdicts.iter().find(|v| v.rule.contains("energy(t) <=")).unwrap();
    assert!(v.pass, "{v:?}");
    assert!(r.members.iter().all(|m| m.energy_excess <= 1e-3));
}
