use proptest::prelude::*;
use vlasov_lagrange::phase_state::*;
use vlasov_lagrange::Error;

fn gaussian(dim: usize, x_sigma: f64, v_sigma: f64) -> InitialDatumSpec {
    InitialDatumSpec {
        dim,
        mass: 1.0,
        shape: DatumShape::Gaussian { x_sigma, v_sigma },
        oscillation: None,
    }
}

#[test]
fn maxwellian_kinetic_energy_matches_its_closed_form() {
    // ½ M N σ² for a Maxwellian; 20000 samples give about 0.6% standard error in 3D
    let spec = gaussian(3, 1.0, 0.7);
    let exact = spec.kinetic_energy().unwrap();
    assert!((exact - 0.5 * 3.0 * 0.49).abs() < 1e-15);
    let ens = spec.sample(20_000, 5).unwrap();
    assert!((ens.kinetic_energy() - exact).abs() < 0.03 * exact, "{}", ens.kinetic_energy());
}

#[test]
fn uniform_ball_samples_stay_inside_both_balls() {
    let spec = InitialDatumSpec {
        dim: 2,
        mass: 3.0,
        shape: DatumShape::UniformBall {
            x_radius: 0.5,
            v_radius: 2.0,
        },
        oscillation: None,
    };
    let ens = spec.sample(2000, 1).unwrap();
    for i in 0..ens.len() {
        assert!(ens.position(i).iter().map(|x| x * x).sum::<f64>() <= 0.25);
        assert!(ens.velocity(i).iter().map(|v| v * v).sum::<f64>() <= 4.0);
    }
    assert!((ens.total_mass() - 3.0).abs() < 1e-12);
}

#[test]
fn singular_marginal_rejects_nonintegrable_exponents() {
    let spec = InitialDatumSpec {
        dim: 3,
        mass: 1.0,
        shape: DatumShape::Product {
            x: Marginal::Singular {
                exponent: 3.0,
                cutoff: 1.0,
            },
            v: Marginal::Gaussian { sigma: 1.0 },
        },
        oscillation: None,
    };
    assert!(spec.validate().unwrap_err().is_configuration());
}

#[test]
fn cloud_in_cell_deposit_conserves_mass() {
    let ens = gaussian(2, 1.0, 1.0).sample(3000, 2).unwrap();
    let grid = GridSpec::cube(2, 2.0, 16).unwrap();
    let d = deposit_density(&ens, &grid).unwrap();
    assert!(d.outside_mass() > 0.0);
    let total = d.field.integral()[0] + d.outside_mass();
    assert!((total - ens.total_mass()).abs() < 1e-12, "{total}");
}

#[test]
fn current_of_a_uniform_drift_is_density_times_velocity() {
    let n = 500;
    let pos: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
    let ens = ParticleEnsemble::new(1, pos, vec![0.75; n], vec![1.0 / n as f64; n]).unwrap();
    let grid = GridSpec::cube(1, 2.0, 8).unwrap();
    let rho = deposit_density(&ens, &grid).unwrap().field;
    let j = deposit_current(&ens, &grid).unwrap().field;
    for (r, c) in rho.values().iter().zip(j.values()) {
        assert!((c - 0.75 * r).abs() < 1e-14);
    }
}

#[test]
fn equi_integrability_of_a_point_mass_is_all_or_nothing() {
    let ens = ParticleEnsemble::new(1, vec![0.1], vec![0.1], vec![2.0]).unwrap();
    let phase_box = GridSpec::cube(2, 1.0, 4).unwrap();
    let p = equi_integrability_profile(&ens, &phase_box, &[1.0 / 16.0, 0.5, 1.0]).unwrap();
    // the heaviest cell is one of 16, so any fraction ≥ 1/16 captures everything
    assert_eq!(p.captured, vec![2.0, 2.0, 2.0]);
    assert_eq!(p.outside_mass, 0.0);
    let half = equi_integrability_profile(&ens, &phase_box, &[1.0 / 32.0]).unwrap();
    assert!((half.captured[0] - 1.0).abs() < 1e-12);
}

#[test]
fn ensembles_reject_inconsistent_arrays() {
    assert!(ParticleEnsemble::new(2, vec![0.0; 3], vec![0.0; 2], vec![1.0]).is_err());
    assert!(ParticleEnsemble::new(1, vec![0.0], vec![0.0], vec![-1.0]).is_err());
    assert!(ParticleEnsemble::new(1, vec![f64::NAN], vec![0.0], vec![1.0]).is_err());
    assert!(ParticleEnsemble::new(4, vec![0.0; 4], vec![0.0; 4], vec![1.0]).is_err());
}

#[test]
fn corrupt_snapshots_are_format_errors() {
    let ens = gaussian(1, 1.0, 1.0).sample(4, 1).unwrap();
    let mut bytes = Vec::new();
    ens.write_to(&mut bytes).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(ParticleEnsemble::read_from(bad.as_slice()), Err(Error::Format(_))));
    assert!(ParticleEnsemble::read_from(&bytes[..bytes.len() - 3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snapshots_round_trip(dim in 1usize..=3, n in 1usize..50, seed in any::<u64>()) {
        let ens = gaussian(dim, 1.3, 0.4).sample(n, seed).unwrap();
        let mut bytes = Vec::new();
        ens.write_to(&mut bytes).unwrap();
        prop_assert_eq!(ParticleEnsemble::read_from(bytes.as_slice()).unwrap(), ens);
    }

    #[test]
    fn oscillation_keeps_points_and_mass(n in 1usize..200, k in 0.0f64..40.0, seed in any::<u64>()) {
        let base = gaussian(1, 1.0, 1.0);
        let mut wavy = base.clone();
        wavy.oscillation = Some(k);
        let a = base.sample(n, seed).unwrap();
        let b = wavy.sample(n, seed).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
        prop_assert_eq!(a.velocities(), b.velocities());
        prop_assert!(b.weights().iter().all(|w| *w >= 0.0));
        prop_assert!((b.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mollification_moves_no_particle_beyond_its_width(width in 0.0f64..1.0, seed in any::<u64>()) {
        let ens = gaussian(2, 1.0, 1.0).sample(64, 9).unwrap();
        let m = mollify(&ens, width, seed).unwrap();
        prop_assert_eq!(m.weights(), ens.weights());
        for i in 0..ens.len() {
            let mut s = 0.0;
            for a in 0..2 {
                s += (m.position(i)[a] - ens.position(i)[a]).powi(2);
                s += (m.velocity(i)[a] - ens.velocity(i)[a]).powi(2);
            }
            prop_assert!(s.sqrt() <= width * (1.0 + 1e-12));
        }
    }

    #[test]
    fn deposit_mass_is_conserved_for_any_box(half in 0.1f64..3.0, cells in 1usize..12, seed in any::<u64>()) {
        let ens = gaussian(3, 1.0, 1.0).sample(300, seed).unwrap();
        let grid = GridSpec::cube(3, half, cells).unwrap();
        for scheme in [DepositScheme::CloudInCell, DepositScheme::NearestGridPoint] {
            let d = deposit_density_with(&ens, &grid, scheme).unwrap();
            prop_assert!((d.field.integral()[0] + d.outside_mass() - 1.0).abs() < 1e-12);
        }
    }
}
