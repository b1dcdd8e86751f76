//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any FAIL.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlasov_lagrange::experiments::{
    mollified_existence_suite, strong_stability_suite, superlevel_study, weak_stability_suite, ExperimentConfig,
    ExperimentReport,
};
use vlasov_lagrange::field::*;
use vlasov_lagrange::flow::*;
use vlasov_lagrange::phase_state::{deposit_current, GridSpec, InitialDatumSpec, ParticleEnsemble};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(dim: usize, v_sigma: f64) -> InitialDatumSpec {
    toml::from_str(&format!(
        "dim = {dim}\nmass = 1.0\nshape = {{ kind = \"gaussian\", x_sigma = 1.0, v_sigma = {v_sigma} }}\n"
    ))
    .unwrap()
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn verdict_line(r: &ExperimentReport) -> String {
    r.verdicts
        .iter()
        .map(|v| {
            format!(
                "[{}] {} = {:.3e} (thr {:e})",
                if v.pass { "ok" } else { "x" },
                v.metric,
                v.value,
                v.threshold
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

// 1 and 2 share the runs.
struct EnergyRuns {
    drift: [f64; 2],
    seconds: f64,
    histories: Vec<FlowHistory>,
}

fn energy_runs() -> EnergyRuns {
    let ens = gaussian(3, 0.5).sample(10_000, 5).unwrap();
    let grid = GridSpec::cube(3, 6.0, 16).unwrap();
    let solver = FieldSolver::new(KernelConfig::mesh(grid, 1.0), BackgroundSpec::Zero, 1.0).unwrap();
    let t = Instant::now();
    let mut drift = [0.0; 2];
    let mut histories = Vec::new();
    for (k, dt) in [1e-3, 5e-4].into_iter().enumerate() {
        let steps = (1.0 / dt) as usize;
        let opts = AdvanceOptions::new(dt, 1.0)
            .store_every(steps / 4)
            .diagnostics_every(10);
        let h = advance(&ens, &solver, &opts).unwrap();
        drift[k] = h.relative_energy_drift().unwrap();
        histories.push(h);
    }
    EnergyRuns {
        drift,
        seconds: t.elapsed().as_secs_f64(),
        histories,
    }
}

fn criterion_1(runs: &EnergyRuns) -> Outcome {
    let ratio = runs.drift[0] / runs.drift[1];
    outcome(
        runs.drift[0] < 1e-3 && (3.0..=5.0).contains(&ratio) && runs.seconds < 60.0,
        format!(
            "drift(dt=1e-3) = {:.3e} < 1e-3, drift ratio on halving = {ratio:.3} in [3,5], runtime {:.1}s < 60s",
            runs.drift[0], runs.seconds
        ),
    )
}

fn criterion_2(runs: &EnergyRuns) -> Outcome {
    let mut worst_ulps = 0u64;
    let mut weights_fixed = true;
    for h in &runs.histories {
        let m0 = h.initial().total_mass();
        for e in h.energy() {
            worst_ulps = worst_ulps.max(e.mass.to_bits().abs_diff(m0.to_bits()));
        }
        for k in 0..h.sample_count() {
            let s = h.sample(k);
            worst_ulps = worst_ulps.max(s.total_mass().to_bits().abs_diff(m0.to_bits()));
            weights_fixed &= s.weights() == h.initial().weights();
        }
    }
    outcome(
        worst_ulps == 0 && weights_fixed,
        format!("max mass deviation {worst_ulps} ulps, weights unchanged = {weights_fixed}"),
    )
}

fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    det
}

fn criterion_3() -> Outcome {
    // One-step map of a tracer in the field of a fixed N = 3 cloud.
    let cloud = gaussian(3, 0.5).sample(30, 7).unwrap();
    let solver = FieldSolver::new(KernelConfig::direct(3, 0.5), BackgroundSpec::Zero, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-3;
    let mut worst_det = 0.0_f64;
    for _ in 0..100 {
        let z: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let jac: Vec<Vec<f64>> = (0..6)
            .map(|c| {
                let image = |sign: f64| {
                    let mut p = z.clone();
                    p[c] += sign * h;
                    let (mut e, k) = cloud.extended(&p[..3], &p[3..], &[0.0]).unwrap();
                    VerletStepper::new(&solver, &e)
                        .unwrap()
                        .step(&mut e, 0.05, false)
                        .unwrap();
                    [e.position(k), e.velocity(k)].concat()
                };
                let (p1, m1, p2, m2) = (image(1.0), image(-1.0), image(2.0), image(-2.0));
                (0..6)
                    .map(|r| (8.0 * (p1[r] - m1[r]) - (p2[r] - m2[r])) / (12.0 * h))
                    .collect()
            })
            .collect();
        worst_det = worst_det.max((determinant(jac) - 1.0).abs());
    }

    // Compressibility on a self-consistent N = 1 run under seeding refinement.
    let ens = gaussian(1, 0.5).sample(300, 9).unwrap();
    let field = FieldSolver::new(KernelConfig::direct(1, 0.2), BackgroundSpec::Zero, 1.0).unwrap();
    let probes: Vec<PhaseBox> = [(-1.0, -1.0), (0.0, -1.0), (-1.0, 0.0), (0.0, 0.0), (-0.5, -0.5)]
        .iter()
        .map(|&(x, v)| PhaseBox::new(vec![x, v], vec![x + 1.0, v + 1.0]).unwrap())
        .collect();
    let mut spreads = Vec::new();
    let mut in_band = true;
    for ppc in [64.0, 256.0, 1024.0] {
        let seeds = lattice_in_box(&[-2.5, -2.5], &[2.5, 2.5], ppc).unwrap();
        let (e, s) = attach_tracers(&ens, &seeds).unwrap();
        let hist = advance(&e, &field, &AdvanceOptions::new(0.01, 0.5).store_every(10))
            .unwrap()
            .with_seeding(s)
            .unwrap();
        let c = compressibility_estimate(&hist, &probes).unwrap();
        in_band &= c.unseeded.is_empty() && c.min_ratio >= 0.9 && c.max_ratio <= 1.1;
        spreads.push((c.max_ratio - 1.0).abs().max((1.0 - c.min_ratio).abs()));
    }
    let tightening = spreads.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst_det < 1e-10 && in_band && tightening,
        format!(
            "max |det J - 1| = {worst_det:.2e} < 1e-10 over 100 states; compressibility within [0.9,1.1] = {in_band}, \
             max |ratio - 1| over ppc 64/256/1024 = {}",
            sci(&spreads)
        ),
    )
}

fn criterion_4() -> Outcome {
    let eps = 0.25;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pts = Vec::new();
    while pts.len() < 600 {
        let d: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = d.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 0.1 && n < 1.0 {
            let r = rng.gen_range(5.0 * eps..3.5);
            pts.extend(d.iter().map(|a| a * r / n));
        }
    }
    let src = ParticleEnsemble::new(3, vec![0.0; 3], vec![0.0; 3], vec![1.0]).unwrap();
    let grid = GridSpec::cube(3, 4.0, 64).unwrap();
    let mut worst = [0.0_f64; 2];
    for (k, cfg) in [KernelConfig::direct(3, eps), KernelConfig::mesh(grid, eps)]
        .into_iter()
        .enumerate()
    {
        let solver = FieldSolver::new(cfg, BackgroundSpec::Zero, 1.0).unwrap();
        let e = solver.field_at(Sources::Particles(&src), &pts).unwrap();
        for (x, ex) in pts.chunks(3).zip(e.chunks(3)) {
            let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            let err: f64 = (0..3)
                .map(|a| (ex[a] - x[a] / (4.0 * PI * r.powi(3))).powi(2))
                .sum::<f64>()
                .sqrt();
            worst[k] = worst[k].max(err * 4.0 * PI * r * r);
        }
    }
    let mut trace = 0.0_f64;
    for x in pts.chunks(3) {
        let mut m = [0.0; 9];
        singular_gradient_kernel(x, &mut m);
        trace = trace.max((m[0] + m[4] + m[8]).abs());
    }
    let mut residuals = Vec::new();
    for cells in [16usize, 32, 64] {
        let g = GridSpec::cube(3, 5.0, cells).unwrap();
        let h = g.spacing(0);
        let rho = GridField::scalar_from_fn(g.clone(), |x| {
            (-x.iter().map(|a| a * a).sum::<f64>() / 2.0).exp() / (2.0 * PI).powf(1.5)
        });
        let solver = FieldSolver::new(KernelConfig::mesh(g.clone(), 2.0 * h), BackgroundSpec::Zero, 1.0).unwrap();
        let u = solver.potential_on_grid(Sources::Density(&rho), &g).unwrap();
        residuals.push(poisson_residual(&u, &rho, 1.0).unwrap());
    }
    let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst[0] < 0.01 && worst[1] < 0.01 && trace <= 1e-12 && monotone,
        format!(
            "point-source rel. error direct {:.2e}, mesh {:.2e} (< 1e-2 for |x| >= 5 eps); max |tr K| = {trace:.1e}; \
             Poisson residual at eps = 2h, h = 10/16, 10/32, 10/64: {}",
            worst[0],
            worst[1],
            sci(&residuals)
        ),
    )
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, p) in [(3usize, 1.25), (2, 1.5)] {
        let s = translation_sweep(n, p, 5).unwrap();
        let rel = ((s.slope - s.expected) / s.expected).abs();
        ok &= rel <= 0.1;
        parts.push(format!("N={n} p={p}: slope {:.4} vs {:.4}", s.slope, s.expected));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        ok && secs < 10.0,
        format!("{}; runtime {secs:.2}s < 10s", parts.join(", ")),
    )
}

fn criterion_6() -> Outcome {
    let grid = GridSpec::cube(3, 4.0, 32).unwrap();
    let solver = FieldSolver::new(KernelConfig::mesh(grid.clone(), 0.25), BackgroundSpec::Zero, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ratios = Vec::new();
    for _ in 0..20 {
        let k = rng.gen_range(1..=4);
        let blobs: Vec<([f64; 3], f64, f64)> = (0..k)
            .map(|_| {
                let c = [
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                ];
                (c, rng.gen_range(0.3..0.8), rng.gen_range(0.2..2.0))
            })
            .collect();
        let rho = GridField::scalar_from_fn(grid.clone(), |x| {
            blobs
                .iter()
                .map(|(c, s, m)| {
                    let r2: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
                    m * (-r2 / (2.0 * s * s)).exp() / ((2.0 * PI).powf(1.5) * s.powi(3))
                })
                .sum()
        });
        let e = solver.field_on_grid(Sources::Density(&rho), &grid).unwrap();
        ratios.push(weak_quasinorm(&e, 1.5).unwrap() / rho.l1_norm());
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[9] + sorted[10]);
    let (min, max) = (sorted[0], sorted[19]);
    outcome(
        max <= 2.0 * median,
        format!(
            "20 densities: M^(3/2) / L1 in [{min:.4}, {max:.4}], max/min = {:.4}, median {median:.4}",
            max / min
        ),
    )
}

fn criterion_7() -> Outcome {
    let r = superlevel_study(&config(include_str!("../../../configs/superlevel.toml"))).unwrap();
    outcome(r.passed(), verdict_line(&r))
}

fn timed_suite(
    f: fn(&ExperimentConfig) -> vlasov_lagrange::Result<ExperimentReport>,
    text: &str,
) -> (ExperimentReport, f64) {
    let t = Instant::now();
    let r = f(&config(text)).unwrap();
    (r, t.elapsed().as_secs_f64())
}

fn criterion_8(strong: &ExperimentReport) -> Outcome {
    outcome(strong.passed(), verdict_line(strong))
}

fn criterion_9(weak: &(ExperimentReport, f64), strong: &(ExperimentReport, f64)) -> Outcome {
    let pick = |r: &ExperimentReport, needle: &str| r.verdicts.iter().find(|v| v.rule.contains(needle)).map(|v| v.pass);
    let weak_floor = pick(&weak.0, "stays above half").unwrap_or(false);
    let weak_dev = pick(&weak.0, "below 20%").unwrap_or(false);
    let strong_l1 = pick(&strong.0, "initial-data L1").unwrap_or(false);
    let strong_dev = pick(&strong.0, "against the finest member").unwrap_or(false);
    let pass = weak_floor && weak_dev && strong_l1 && strong_dev && weak.1 < 300.0 && strong.1 < 300.0;
    outcome(
        pass,
        format!(
            "weak: data floor {weak_floor}, deviation < 20% {weak_dev}, medians l1 {:.3?} dev {:.3?} ({:.1}s); \
             strong: data l1 falls {strong_l1}, deviation falls {strong_dev} ({:.1}s)",
            weak.0.medians["data_l1"], weak.0.medians["deviation"], weak.1, strong.1
        ),
    )
}

fn criterion_10() -> Outcome {
    let text = include_str!("../../../configs/existence.toml");
    let r = mollified_existence_suite(&config(text)).unwrap();
    let energy = r.verdicts.iter().find(|v| v.rule.contains("energy(t) <=")).unwrap();
    let mut attractive = config(text);
    attractive.field.omega = -1.0;
    let refused = matches!(mollified_existence_suite(&attractive), Err(e) if e.is_configuration());
    outcome(
        energy.pass && refused,
        format!(
            "max energy excess {:.2e} <= 1e-3 over {} members; attractive request refused = {refused}",
            energy.value,
            r.members.len()
        ),
    )
}

fn criterion_11() -> Outcome {
    let spec = gaussian(3, 0.5);
    let mut residuals = Vec::new();
    for (cells, n) in [(16usize, 2000usize), (32, 16000), (64, 128000)] {
        let base = spec.sample(n, 1).unwrap();
        let mut v = base.velocities().to_vec();
        for i in 0..n {
            // solid rotation plus expansion: J has both a curl and a gradient part
            let x = base.position(i);
            v[3 * i] += 0.3 * x[0] - 0.5 * x[1];
            v[3 * i + 1] += 0.5 * x[0] + 0.3 * x[1];
            v[3 * i + 2] += 0.3 * x[2];
        }
        let ens = ParticleEnsemble::new(3, base.positions().to_vec(), v, base.weights().to_vec()).unwrap();
        let grid = GridSpec::cube(3, 6.0, cells).unwrap();
        let solver = FieldSolver::new(
            KernelConfig::mesh(grid.clone(), 2.0 * grid.spacing(0)),
            BackgroundSpec::Zero,
            1.0,
        )
        .unwrap();
        let e = solver.field_on_grid(Sources::Particles(&ens), &grid).unwrap();
        let j = deposit_current(&ens, &grid).unwrap().field;
        let dte = solver.dt_field_on_grid(&j).unwrap();
        residuals.push(helmholtz_identity_residual(&e, &dte, &j, 1.0).unwrap().value);
    }
    let pass = residuals[0] < 5e-2 && residuals.windows(2).all(|w| w[1] < w[0]);
    outcome(
        pass,
        format!("normalised residual on 16^3/32^3/64^3 grids: {}", sci(&residuals)),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("{} {n:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    let runs = energy_runs();
    report(1, "energy conservation", criterion_1(&runs));
    report(2, "exact mass conservation", criterion_2(&runs));
    drop(runs);
    report(3, "volume preservation", criterion_3());
    report(4, "field oracles", criterion_4());
    report(5, "kernel translation estimate", criterion_5());
    report(6, "HLS weak bound", criterion_6());
    report(7, "superlevel decay", criterion_7());
    let strong = timed_suite(
        strong_stability_suite,
        include_str!("../../../configs/strong_stability.toml"),
    );
    report(8, "stability structure", criterion_8(&strong.0));
    let weak = timed_suite(
        weak_stability_suite,
        include_str!("../../../configs/weak_stability.toml"),
    );
    report(9, "weak-vs-strong separation", criterion_9(&weak, &strong));
    report(10, "existence by mollification", criterion_10());
    report(11, "Helmholtz identity", criterion_11());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
