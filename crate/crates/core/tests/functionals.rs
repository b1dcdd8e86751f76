use proptest::prelude::*;
use vlasov_lagrange::field::{BackgroundSpec, FieldSolver, GridField, KernelConfig, Rank, Sources};
use vlasov_lagrange::flow::*;
use vlasov_lagrange::functionals::*;
use vlasov_lagrange::phase_state::{GridSpec, InitialDatumSpec, ParticleEnsemble};
use vlasov_lagrange::Error;

fn gaussian(dim: usize) -> InitialDatumSpec {
    toml::from_str(&format!(
        "dim = {dim}\nmass = 1.0\n[shape]\nkind = \"gaussian\"\nx_sigma = 1.0\nv_sigma = 0.5\n"
    ))
    .unwrap()
}

fn params() -> FunctionalParams {
    FunctionalParams {
        r: 1.0,
        lambda: 10.0,
        gamma: 0.05,
        delta: 0.01,
        alpha: 0.3,
    }
}

fn seeded_run(eps: f64, seed: u64) -> (FlowHistory, FieldSolver) {
    let ens = gaussian(1).sample(200, seed).unwrap();
    let seeds = lattice_in_ball(1, 1.5, 100.0).unwrap();
    let (e, s) = attach_tracers(&ens, &seeds).unwrap();
    let solver = FieldSolver::new(KernelConfig::direct(1, eps), BackgroundSpec::Zero, 1.0).unwrap();
    let h = advance(&e, &solver, &AdvanceOptions::new(0.05, 1.0).store_every(4))
        .unwrap()
        .with_seeding(s)
        .unwrap();
    (h, solver)
}

#[test]
fn identical_flows_have_no_deviation() {
    let (h, _) = seeded_run(0.2, 1);
    assert!(phi_delta(&h, &h, &params()).unwrap().iter().all(|&x| x == 0.0));
    assert_eq!(deviation_measure(&h, &h, 0.01, 1.0, 1.0).unwrap(), 0.0);
}

#[test]
fn rigid_offset_gives_closed_forms() {
    let (h, _) = seeded_run(0.2, 2);
    let c = [0.03, 0.04];
    let b = h.displaced(&c).unwrap();
    let p = params();
    let phi = phi_delta(&h, &b, &p).unwrap();
    assert_eq!(phi[0], 0.0);
    let rep = StabilityReport::compute(&h, &b, &p, &[0.01, 0.1]).unwrap();
    let covered = rep.ball_measure - rep.excluded_measure;
    for &f in &phi[1..] {
        assert!((f - covered * (1.0f64 + 0.05 / 0.01).ln()).abs() < 1e-12 * f);
    }
    assert_eq!(deviation_measure(&h, &b, 0.01, 1.0, 1.0).unwrap(), rep.ball_measure);
    assert_eq!(deviation_measure(&h, &b, 0.1, 1.0, 1.0).unwrap(), 0.0);
    assert!(rep.bridge_holds);
}

#[test]
fn softening_pairs_satisfy_the_bridge_and_symmetry() {
    let (a, _) = seeded_run(0.2, 3);
    let (b, _) = seeded_run(0.1, 3);
    let p = params();
    let ab = phi_delta(&a, &b, &p).unwrap();
    let ba = phi_delta(&b, &a, &p).unwrap();
    assert_eq!(ab, ba);
    assert!(ab.iter().all(|&x| x >= 0.0));
    assert!(ab.last().unwrap() > &0.0);
    let finer = phi_delta(
        &a,
        &b,
        &FunctionalParams {
            delta: 0.005,
            ..p.clone()
        },
    )
    .unwrap();
    assert!(finer.iter().zip(&ab).all(|(f, c)| f >= c));
    let gammas: Vec<f64> = (1..10).map(|k| 0.002 * k as f64).collect();
    let rep = StabilityReport::compute(&a, &b, &p, &gammas).unwrap();
    assert!(rep.bridge_holds);
    for s in 0..rep.times.len() {
        assert!(rep.deviation.windows(2).all(|w| w[1][s] <= w[0][s]));
        for g in &rep.deviation {
            assert!(g[s] >= 0.0 && g[s] <= rep.ball_measure);
        }
    }
    let small = deviation_measure(&a, &b, 0.002, 0.5, 1.0).unwrap();
    let big = deviation_measure(&a, &b, 0.002, 1.0, 1.0).unwrap();
    assert!(small <= big);
}

#[test]
fn closer_softenings_deviate_less() {
    let (a, _) = seeded_run(0.2, 4);
    let (near, _) = seeded_run(0.19, 4);
    let (far, _) = seeded_run(0.1, 4);
    let p = params();
    let pn = phi_delta(&a, &near, &p).unwrap();
    let pf = phi_delta(&a, &far, &p).unwrap();
    assert!(pn.last() < pf.last());
}

#[test]
fn mismatched_seeding_is_rejected() {
    let (a, _) = seeded_run(0.2, 5);
    let ens = gaussian(1).sample(200, 5).unwrap();
    let seeds = lattice_in_ball(1, 1.5, 64.0).unwrap();
    let (e, s) = attach_tracers(&ens, &seeds).unwrap();
    let b = advance(
        &e,
        &ZeroField { dim: 1 },
        &AdvanceOptions::new(0.05, 1.0).store_every(4),
    )
    .unwrap()
    .with_seeding(s)
    .unwrap();
    assert!(matches!(phi_delta(&a, &b, &params()), Err(Error::Mismatch(_))));
    assert!(matches!(
        deviation_measure(&a, &b, 0.1, 1.0, 1.0),
        Err(Error::Mismatch(_))
    ));
}

#[test]
fn report_serialises() {
    let (a, _) = seeded_run(0.2, 6);
    let (b, _) = seeded_run(0.1, 6);
    let rep = StabilityReport::compute(&a, &b, &params(), &[0.01])
        .unwrap()
        .with_field_difference(0.5);
    assert_eq!(StabilityReport::from_toml(&rep.to_toml().unwrap()).unwrap(), rep);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# s [time]"));
    assert!(lines.next().unwrap() == ("s,phi_delta,deviation_0.01,deviation_0.05,bridge_0.01,bridge_0.05"));
    assert_eq!(text.lines().count(), rep.times.len() + 2);
}

#[test]
fn field_difference_vanishes_for_identical_runs() {
    let (a, fa) = seeded_run(0.2, 7);
    let (b, fb) = seeded_run(0.1, 7);
    assert_eq!(field_difference_l1(&a, &fa, &a, &fa, 2.0, 32).unwrap(), 0.0);
    let l1 = field_difference_l1(&a, &fa, &b, &fb, 2.0, 32).unwrap();
    assert!(l1 > 0.0);
}

#[test]
fn beta_functional_of_resting_seeds_is_the_ball_measure() {
    let pos = vec![-0.5, 0.0, 0.5, 2.0];
    let n = pos.len();
    let ens = ParticleEnsemble::new(1, pos, vec![0.0; n], vec![0.0, 0.0, 0.0, 1.0]).unwrap();
    let seeding = Seeding {
        first: 0,
        count: 3,
        cell_volume: 0.25,
        region: SeedRegion::Ball { radius: 1.0 },
    };
    let h = advance(&ens, &ZeroField { dim: 1 }, &AdvanceOptions::new(0.1, 1.0))
        .unwrap()
        .with_seeding(seeding)
        .unwrap();
    assert!((beta_superlevel_functional(&h, 1.0, 0.25).unwrap() - 0.75).abs() < 1e-15);
    assert!(beta_superlevel_functional(&h, 1.5, 0.25).is_err());
}

#[test]
fn beta_functional_grows_with_speed() {
    let seeds = lattice_in_ball(1, 1.0, 400.0).unwrap();
    let slow_state = seeds.clone();
    let mut fast_state = seeds.clone();
    for z in fast_state.states.chunks_exact_mut(2) {
        z[1] *= 2.0;
    }
    let value = |seeds: &LatticeSeeds| {
        let carrier = ParticleEnsemble::new(1, vec![0.0], vec![0.0], vec![1.0]).unwrap();
        let (e, mut s) = attach_tracers(&carrier, seeds).unwrap();
        s.region = SeedRegion::Ball { radius: 3.0 };
        let h = advance(&e, &ZeroField { dim: 1 }, &AdvanceOptions::new(0.1, 1.0))
            .unwrap()
            .with_seeding(s)
            .unwrap();
        beta_superlevel_functional(&h, 2.5, 0.3).unwrap()
    };
    assert!(value(&fast_state) >= value(&slow_state));
}

#[test]
fn chebyshev_bound_dominates_the_superlevel_curve() {
    let (h, _) = seeded_run(0.2, 8);
    let b = beta_superlevel_functional(&h, 1.0, 0.3).unwrap();
    for k in 1..20 {
        let lambda = 1.0 + 0.1 * k as f64;
        let g = superlevel_measure(&h, 1.0, lambda, MeasureKind::Lattice).unwrap();
        let bound = superlevel_chebyshev_bound(b, 1.0, lambda, 1.0, 0.3).unwrap().unwrap();
        assert!(g <= bound, "{lambda}: {g} > {bound}");
    }
    assert_eq!(superlevel_chebyshev_bound(b, 1.0, 0.5, 1.0, 0.3).unwrap(), None);
}

#[test]
fn r1_norms_of_zero_field_vanish() {
    let grid = GridSpec::cube(2, 2.0, 8).unwrap();
    let n = r1_decomposition_norms(&GridField::zeros(grid, Rank::Vector), 1.0, 8).unwrap();
    assert_eq!((n.l1, n.linf), (0.0, 0.0));
}

#[test]
fn r1_norms_respect_their_bounds() {
    for dim in [1, 2] {
        let ens = gaussian(dim).sample(2000, 9).unwrap();
        let solver = FieldSolver::new(KernelConfig::direct(dim, 0.2), BackgroundSpec::Zero, 1.0).unwrap();
        let grid = GridSpec::cube(dim, 4.0, 24).unwrap();
        let e = solver.field_on_grid(Sources::Particles(&ens), &grid).unwrap();
        let vmax = e.max_abs() * 1.01;
        let n = r1_decomposition_norms(&e, vmax, 48).unwrap();
        assert!(n.covers);
        assert!(n.linf <= 1.0);
        assert!(n.l1 > 0.0 && n.l1 <= n.bound, "{dim}: {n:?}");
    }
    let grid = GridSpec::cube(3, 1.0, 2).unwrap();
    let r = r1_decomposition_norms(&GridField::zeros(grid, Rank::Vector), 1.0, 4);
    assert!(matches!(r, Err(Error::Unsupported(_))));
}

proptest! {
    #[test]
    fn beta_second_derivative_bounds(y in 0.0f64..1e6, alpha in 0.01f64..0.333) {
        let l = 1.0 + y.ln_1p();
        let b2 = beta_second(y, alpha).unwrap();
        prop_assert!(b2 < 0.0);
        prop_assert!(-b2 <= l.powf(alpha - 1.0) / ((1.0 + y) * (1.0 + y)) * (1.0 + 1e-12));
        prop_assert!(beta(y, alpha).unwrap() >= 1.0);
        prop_assert!(beta_prime(y, alpha).unwrap() > 0.0);
    }

    #[test]
    fn params_validate(alpha in 0.34f64..2.0) {
        let p = FunctionalParams { alpha, ..params() };
        prop_assert!(p.validate().is_err());
    }
}
