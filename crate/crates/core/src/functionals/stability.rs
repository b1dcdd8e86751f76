use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::unit_ball_volume;
use crate::flow::{FlowHistory, ForceField, Seeding};
use crate::phase_state::GridSpec;
use crate::sum::CompensatedSum;

/// Thresholds shared by the stability functionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalParams {
    /// Radius of the phase-space ball `B_r` of initial points.
    pub r: f64,
    /// Sublevel threshold.
    pub lambda: f64,
    /// Deviation threshold.
    pub gamma: f64,
    /// Log regularisation.
    pub delta: f64,
    /// Exponent of β, in (0, 1/3).
    pub alpha: f64,
}

impl FunctionalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r", self.r),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.alpha >= 1.0 / 3.0 {
            return invalid(format!("alpha must be below 1/3, got {}", self.alpha));
        }
        Ok(())
    }
}

/// Seeds of two histories paired by their position in the shared lattice.
struct Pairing<'a> {
    a: &'a FlowHistory,
    b: &'a FlowHistory,
    sa: &'a Seeding,
    sb: &'a Seeding,
}

impl<'a> Pairing<'a> {
    fn new(a: &'a FlowHistory, b: &'a FlowHistory) -> Result<Self> {
        let (Some(sa), Some(sb)) = (a.seeding(), b.seeding()) else {
            return Err(Error::Mismatch("both histories need lattice seeding".into()));
        };
        if a.dim() != b.dim() || sa.count != sb.count || sa.cell_volume != sb.cell_volume || sa.region != sb.region {
            return Err(Error::Mismatch("histories do not share their seeding".into()));
        }
        let (ia, ib) = (a.initial(), b.initial());
        for k in 0..sa.count {
            let (i, j) = (sa.first + k, sb.first + k);
            if ia.position(i) != ib.position(j) || ia.velocity(i) != ib.velocity(j) {
                return Err(Error::Mismatch(format!("seed {k} starts at different points")));
            }
        }
        if a.times().len() != b.times().len()
            || a.times()
                .iter()
                .zip(b.times())
                .any(|(s, t)| (s - t).abs() > 1e-9 * a.dt().max(b.dt()))
        {
            return Err(Error::Mismatch("histories have different sample times".into()));
        }
        Ok(Self { a, b, sa, sb })
    }

    /// Seeds (by lattice index) starting in `B_r`.
    fn in_ball(&self, r: f64) -> Result<Vec<usize>> {
        if !(r > 0.0) {
            return invalid("ball radius must be positive");
        }
        let init = self.a.initial();
        let k: Vec<usize> = (0..self.sa.count)
            .filter(|&k| init.phase_norm(self.sa.first + k) <= r)
            .collect();
        if k.is_empty() {
            return Err(Error::Empty(format!("no seeds in the ball of radius {r}")));
        }
        Ok(k)
    }

    fn both_in_sublevel(&self, k: usize, lambda: f64) -> bool {
        self.a.max_norm()[self.sa.first + k] <= lambda && self.b.max_norm()[self.sb.first + k] <= lambda
    }

    fn distance(&self, sample: usize, k: usize, za: &mut [f64], zb: &mut [f64]) -> f64 {
        self.a.phase_point(sample, self.sa.first + k, za);
        self.b.phase_point(sample, self.sb.first + k, zb);
        za.iter()
            .zip(zb.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// `Φ_δ(s) = Σ cellvol · log(1 + |Z_A(s) − Z_B(s)| / δ)` over seeds in
/// `B_r` whose two trajectories both stay in the λ-sublevel.
pub fn phi_delta(a: &FlowHistory, b: &FlowHistory, params: &FunctionalParams) -> Result<Vec<f64>> {
    params.validate()?;
    let p = Pairing::new(a, b)?;
    let seeds: Vec<usize> = p
        .in_ball(params.r)?
        .into_iter()
        .filter(|&k| p.both_in_sublevel(k, params.lambda))
        .collect();
    let d2 = 2 * a.dim();
    let (mut za, mut zb) = (vec![0.0; d2], vec![0.0; d2]);
    Ok((0..a.sample_count())
        .map(|s| {
            let mut acc = CompensatedSum::new();
            for &k in &seeds {
                acc.add((p.distance(s, k, &mut za, &mut zb) / params.delta).ln_1p());
            }
            acc.value() * p.sa.cell_volume
        })
        .collect())
}

/// Lattice measure of seeds in `B_r` with `|Z_A(s) − Z_B(s)| > γ` at the
/// sample time `s`.
pub fn deviation_measure(a: &FlowHistory, b: &FlowHistory, gamma: f64, r: f64, s: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return invalid("gamma must be positive");
    }
    let p = Pairing::new(a, b)?;
    let k = a
        .sample_index(s)
        .ok_or_else(|| Error::InvalidSpec(format!("time {s} is not a stored sample")))?;
    let d2 = 2 * a.dim();
    let (mut za, mut zb) = (vec![0.0; d2], vec![0.0; d2]);
    let count = p
        .in_ball(r)?
        .into_iter()
        .filter(|&j| p.distance(k, j, &mut za, &mut zb) > gamma)
        .count();
    Ok(count as f64 * p.sa.cell_volume)
}

/// Everything the stability comparison of two flows produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub params: FunctionalParams,
    pub gammas: Vec<f64>,
    pub times: Vec<f64>,
    pub phi_delta: Vec<f64>,
    /// `deviation[g][s]` for `gammas[g]` at `times[s]`.
    pub deviation: Vec<Vec<f64>>,
    /// `Φ_δ(s)/log(1+γ/δ) + excluded_measure`, same layout as `deviation`.
    pub bridge_bound: Vec<Vec<f64>>,
    pub bridge_holds: bool,
    /// Lattice measure of the seeds starting in `B_r`.
    pub ball_measure: f64,
    /// Measure of `B_r` seeds left out of `Φ_δ` because a trajectory leaves
    /// the λ-sublevel.
    pub excluded_measure: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_difference_l1: Option<f64>,
}

impl StabilityReport {
    /// Compares two commonly seeded histories for every threshold in `gammas`
    /// (the threshold in `params` is always included).
    pub fn compute(a: &FlowHistory, b: &FlowHistory, params: &FunctionalParams, gammas: &[f64]) -> Result<Self> {
        params.validate()?;
        let mut gammas = gammas.to_vec();
        if !gammas.contains(&params.gamma) {
            gammas.push(params.gamma);
        }
        gammas.sort_by(f64::total_cmp);
        if gammas.iter().any(|g| !(*g > 0.0)) {
            return invalid("deviation thresholds must be positive");
        }
        let p = Pairing::new(a, b)?;
        let ball = p.in_ball(params.r)?;
        let vol = p.sa.cell_volume;
        let excluded = ball.iter().filter(|&&k| !p.both_in_sublevel(k, params.lambda)).count() as f64 * vol;
        let phi = phi_delta(a, b, params)?;
        let d2 = 2 * a.dim();
        let (mut za, mut zb) = (vec![0.0; d2], vec![0.0; d2]);
        let dist: Vec<Vec<f64>> = (0..a.sample_count())
            .map(|s| ball.iter().map(|&k| p.distance(s, k, &mut za, &mut zb)).collect())
            .collect();
        let deviation: Vec<Vec<f64>> = gammas
            .iter()
            .map(|&g| {
                dist.iter()
                    .map(|ds| ds.iter().filter(|&&x| x > g).count() as f64 * vol)
                    .collect()
            })
            .collect();
        let bridge: Vec<Vec<f64>> = gammas
            .iter()
            .map(|&g| {
                let denom = (g / params.delta).ln_1p();
                phi.iter().map(|f| f / denom + excluded).collect()
            })
            .collect();
        let holds = deviation
            .iter()
            .zip(&bridge)
            .all(|(d, b)| d.iter().zip(b).all(|(x, y)| *x <= *y * (1.0 + 1e-12)));
        Ok(Self {
            params: params.clone(),
            gammas,
            times: a.times().to_vec(),
            phi_delta: phi,
            deviation,
            bridge_bound: bridge,
            bridge_holds: holds,
            ball_measure: ball.len() as f64 * vol,
            excluded_measure: excluded,
            field_difference_l1: None,
        })
    }

    pub fn with_field_difference(mut self, l1: f64) -> Self {
        self.field_difference_l1 = Some(l1);
        self
    }

    /// Deviation at the threshold of `params`, per sample.
    pub fn primary_deviation(&self) -> &[f64] {
        let g = self.gammas.iter().position(|g| *g == self.params.gamma).unwrap();
        &self.deviation[g]
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// Time series: `s, phi_delta, deviation_<γ>..., bridge_<γ>...`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "# s [time], phi_delta [phase volume], deviation [phase volume], bridge [phase volume]"
        )?;
        write!(w, "s,phi_delta")?;
        for g in &self.gammas {
            write!(w, ",deviation_{g}")?;
        }
        for g in &self.gammas {
            write!(w, ",bridge_{g}")?;
        }
        writeln!(w)?;
        for (s, t) in self.times.iter().enumerate() {
            write!(w, "{t:e},{:e}", self.phi_delta[s])?;
            for d in &self.deviation {
                write!(w, ",{:e}", d[s])?;
            }
            for b in &self.bridge_bound {
                write!(w, ",{:e}", b[s])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes `<stem>.toml` and `<stem>.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.toml")), self.to_toml()?)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.csv")))?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// `‖b − b̄‖_{L¹((0,T)×B_λ)}` for `b = (v, E)`: the velocity components
/// cancel, so this is `∫₀ᵀ ∫_{|x|≤λ} |E_A − E_B|(s,x) · |B^N| (λ² − |x|²)^{N/2} dx ds`,
/// by trapezoidal rules in time (over samples) and space (`cells` per axis).
pub fn field_difference_l1(
    a: &FlowHistory,
    fa: &dyn ForceField,
    b: &FlowHistory,
    fb: &dyn ForceField,
    lambda: f64,
    cells: usize,
) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d || fa.dim() != d || fb.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b.dim(),
        });
    }
    if a.times() != b.times() {
        return Err(Error::Mismatch("histories have different sample times".into()));
    }
    let grid = GridSpec::cube(d, lambda, cells)?;
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    let vb = unit_ball_volume(d);
    for k in 0..grid.node_count() {
        let x = grid.node_position(k);
        let r2: f64 = x.iter().map(|c| c * c).sum();
        if r2 < lambda * lambda {
            pts.extend_from_slice(&x);
            wts.push(grid.node_volume(k) * vb * (lambda * lambda - r2).powf(0.5 * d as f64));
        }
    }
    let per_sample: Vec<f64> = (0..a.sample_count())
        .map(|s| -> Result<f64> {
            let ea = fa.field_at(&a.sample(s), &pts)?;
            let eb = fb.field_at(&b.sample(s), &pts)?;
            let mut acc = CompensatedSum::new();
            for (i, w) in wts.iter().enumerate() {
                let diff: f64 = (0..d).map(|c| (ea[i * d + c] - eb[i * d + c]).powi(2)).sum();
                acc.add(w * diff.sqrt());
            }
            Ok(acc.value())
        })
        .collect::<Result<_>>()?;
    let t = a.times();
    Ok((1..t.len())
        .map(|k| 0.5 * (t[k] - t[k - 1]) * (per_sample[k] + per_sample[k - 1]))
        .sum())
}
