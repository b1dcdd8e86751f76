use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GridSpec, ParticleEnsemble};
use crate::error::{invalid, Error, Result};
use crate::field::kernel::{sphere_area, unit_ball_volume};
use crate::sum::compensated_sum;

/// Description of an initial phase-space density f⁰.
///
/// The density integrates to `mass`. With `oscillation = Some(n)` it is
/// multiplied by `1 + sin(n x₁)` and renormalised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDatumSpec {
    pub dim: usize,
    pub mass: f64,
    pub shape: DatumShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatumShape {
    /// Isotropic Maxwellian in v times an isotropic Gaussian in x.
    Gaussian { x_sigma: f64, v_sigma: f64 },
    /// Uniform on the product of two balls.
    UniformBall { x_radius: f64, v_radius: f64 },
    /// Gaussian in x, two counter-propagating Maxwellian beams along the first axis.
    TwoStream { x_sigma: f64, drift: f64, v_sigma: f64 },
    /// Independent spatial and velocity marginals.
    Product { x: Marginal, v: Marginal },
    /// Piecewise-constant density on the cells of a 2N-dimensional phase grid.
    Table { grid: GridSpec, values: Vec<f64> },
}

/// A radially symmetric probability density on ℝ^N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Marginal {
    Gaussian {
        sigma: f64,
    },
    UniformBall {
        radius: f64,
    },
    /// Density ∝ |y|^(-exponent) on the ball of radius `cutoff`, with
    /// `0 <= exponent < N`. Integrable but unbounded for positive exponents.
    Singular {
        exponent: f64,
        cutoff: f64,
    },
}

impl Marginal {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            Marginal::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                invalid(format!("gaussian sigma must be positive, got {sigma}"))
            }
            Marginal::UniformBall { radius } if !(radius > 0.0 && radius.is_finite()) => {
                invalid(format!("ball radius must be positive, got {radius}"))
            }
            Marginal::Singular { exponent, cutoff } => {
                if !(cutoff > 0.0 && cutoff.is_finite()) {
                    return invalid(format!("singular cutoff must be positive, got {cutoff}"));
                }
                if !(exponent >= 0.0 && exponent < dim as f64) {
                    return invalid(format!(
                        "singular exponent must lie in [0, {dim}) to be integrable, got {exponent}"
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, dim: usize, rng: &mut impl Rng, out: &mut [f64]) {
        match *self {
            Marginal::Gaussian { sigma } => {
                for o in out.iter_mut() {
                    *o = sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Marginal::UniformBall { radius } => {
                let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
                random_direction(rng, out);
                out.iter_mut().for_each(|o| *o *= r);
            }
            Marginal::Singular { exponent, cutoff } => {
                let r = cutoff * rng.gen::<f64>().powf(1.0 / (dim as f64 - exponent));
                random_direction(rng, out);
                out.iter_mut().for_each(|o| *o *= r);
            }
        }
    }

    /// Probability density at `y`.
    pub fn density(&self, y: &[f64]) -> f64 {
        let d = y.len();
        let r2: f64 = y.iter().map(|a| a * a).sum();
        match *self {
            Marginal::Gaussian { sigma } => {
                (2.0 * std::f64::consts::PI * sigma * sigma).powf(-(d as f64) / 2.0)
                    * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            Marginal::UniformBall { radius } => {
                if r2 <= radius * radius {
                    1.0 / (unit_ball_volume(d) * radius.powi(d as i32))
                } else {
                    0.0
                }
            }
            Marginal::Singular { exponent, cutoff } => {
                let r = r2.sqrt();
                if r > cutoff {
                    return 0.0;
                }
                let dn = d as f64;
                let c = (dn - exponent) / (sphere_area(d) * cutoff.powf(dn - exponent));
                c * r.powf(-exponent)
            }
        }
    }

    /// E|y|² under this marginal.
    pub fn second_moment(&self, dim: usize) -> f64 {
        let d = dim as f64;
        match *self {
            Marginal::Gaussian { sigma } => d * sigma * sigma,
            Marginal::UniformBall { radius } => d * radius * radius / (d + 2.0),
            Marginal::Singular { exponent, cutoff } => cutoff * cutoff * (d - exponent) / (d - exponent + 2.0),
        }
    }
}

fn random_direction(rng: &mut impl Rng, out: &mut [f64]) {
    loop {
        let mut n2 = 0.0;
        for o in out.iter_mut() {
            *o = rng.sample::<f64, _>(StandardNormal);
            n2 += *o * *o;
        }
        if n2 > 1e-300 {
            let n = n2.sqrt();
            out.iter_mut().for_each(|o| *o /= n);
            return;
        }
    }
}

impl InitialDatumSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if !(1..=3).contains(&d) {
            return invalid(format!("datum dimension must be 1, 2 or 3, got {d}"));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return invalid(format!("datum mass must be positive, got {}", self.mass));
        }
        if let Some(n) = self.oscillation {
            if !(n >= 0.0 && n.is_finite()) {
                return invalid(format!("oscillation wavenumber must be nonnegative, got {n}"));
            }
        }
        let pos = |name: &str, x: f64| -> Result<()> {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                invalid(format!("{name} must be positive, got {x}"))
            }
        };
        match &self.shape {
            DatumShape::Gaussian { x_sigma, v_sigma } => {
                pos("x_sigma", *x_sigma)?;
                pos("v_sigma", *v_sigma)
            }
            DatumShape::UniformBall { x_radius, v_radius } => {
                pos("x_radius", *x_radius)?;
                pos("v_radius", *v_radius)
            }
            DatumShape::TwoStream {
                x_sigma,
                drift,
                v_sigma,
            } => {
                pos("x_sigma", *x_sigma)?;
                pos("v_sigma", *v_sigma)?;
                if drift.is_finite() {
                    Ok(())
                } else {
                    invalid("drift must be finite")
                }
            }
            DatumShape::Product { x, v } => {
                x.validate(d)?;
                v.validate(d)
            }
            DatumShape::Table { grid, values } => {
                if grid.dim() != 2 * d {
                    return invalid(format!(
                        "table grid must span 2N = {} phase axes, got {}",
                        2 * d,
                        grid.dim()
                    ));
                }
                if values.len() != grid.cell_count() {
                    return invalid(format!(
                        "table needs one value per cell ({}), got {}",
                        grid.cell_count(),
                        values.len()
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return invalid("table values must be nonnegative and finite");
                }
                if !values.iter().any(|v| *v > 0.0) {
                    return invalid("table has no mass");
                }
                Ok(())
            }
        }
    }

    /// Same datum without the oscillatory modulation.
    pub fn unmodulated(&self) -> Self {
        Self {
            oscillation: None,
            ..self.clone()
        }
    }

    /// Draws `count` particles. Equal weights `mass/count`, or modulated weights
    /// proportional to `1 + sin(n x₁)` when an oscillation is set; particle
    /// positions do not depend on the oscillation for a fixed seed.
    pub fn sample(&self, count: usize, seed: u64) -> Result<ParticleEnsemble> {
        self.validate()?;
        if count == 0 {
            return invalid("sample count must be at least 1");
        }
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = vec![0.0; count * d];
        let mut vs = vec![0.0; count * d];
        let table = match &self.shape {
            DatumShape::Table { grid, values } => Some(TableSampler::new(grid, values)),
            _ => None,
        };
        for i in 0..count {
            let x = &mut xs[i * d..(i + 1) * d];
            let v = &mut vs[i * d..(i + 1) * d];
            match &self.shape {
                DatumShape::Gaussian { x_sigma, v_sigma } => {
                    Marginal::Gaussian { sigma: *x_sigma }.sample(d, &mut rng, x);
                    Marginal::Gaussian { sigma: *v_sigma }.sample(d, &mut rng, v);
                }
                DatumShape::UniformBall { x_radius, v_radius } => {
                    Marginal::UniformBall { radius: *x_radius }.sample(d, &mut rng, x);
                    Marginal::UniformBall { radius: *v_radius }.sample(d, &mut rng, v);
                }
                DatumShape::TwoStream {
                    x_sigma,
                    drift,
                    v_sigma,
                } => {
                    Marginal::Gaussian { sigma: *x_sigma }.sample(d, &mut rng, x);
                    Marginal::Gaussian { sigma: *v_sigma }.sample(d, &mut rng, v);
                    v[0] += if rng.gen::<bool>() { *drift } else { -*drift };
                }
                DatumShape::Product { x: mx, v: mv } => {
                    mx.sample(d, &mut rng, x);
                    mv.sample(d, &mut rng, v);
                }
                DatumShape::Table { .. } => {
                    table.as_ref().unwrap().sample(d, &mut rng, x, v);
                }
            }
        }
        let weights = match self.oscillation {
            Some(n) if n != 0.0 => {
                let raw: Vec<f64> = (0..count).map(|i| 1.0 + (n * xs[i * d]).sin()).collect();
                let z = compensated_sum(raw.iter().copied());
                if !(z > 0.0) {
                    return Err(Error::Empty("modulation removed all sampled mass".into()));
                }
                raw.iter().map(|r| self.mass * r / z).collect()
            }
            _ => vec![self.mass / count as f64; count],
        };
        ParticleEnsemble::new(d, xs, vs, weights)
    }

    /// Phase-space density f⁰(x, v), including the mass factor and modulation.
    pub fn density(&self, x: &[f64], v: &[f64]) -> f64 {
        let base = match &self.shape {
            DatumShape::Gaussian { x_sigma, v_sigma } => {
                Marginal::Gaussian { sigma: *x_sigma }.density(x) * Marginal::Gaussian { sigma: *v_sigma }.density(v)
            }
            DatumShape::UniformBall { x_radius, v_radius } => {
                Marginal::UniformBall { radius: *x_radius }.density(x)
                    * Marginal::UniformBall { radius: *v_radius }.density(v)
            }
            DatumShape::TwoStream {
                x_sigma,
                drift,
                v_sigma,
            } => {
                let g = Marginal::Gaussian { sigma: *v_sigma };
                let mut a = v.to_vec();
                let mut b = v.to_vec();
                a[0] -= drift;
                b[0] += drift;
                Marginal::Gaussian { sigma: *x_sigma }.density(x) * 0.5 * (g.density(&a) + g.density(&b))
            }
            DatumShape::Product { x: mx, v: mv } => mx.density(x) * mv.density(v),
            DatumShape::Table { grid, values } => {
                let z: Vec<f64> = x.iter().chain(v).copied().collect();
                let total = compensated_sum(values.iter().copied()) * grid.cell_volume();
                grid.cell_of(&z).map_or(0.0, |c| values[c] / total)
            }
        };
        let modulation = match self.oscillation {
            Some(n) if n != 0.0 => (1.0 + (n * x[0]).sin()) / self.modulation_mean(n),
            _ => 1.0,
        };
        self.mass * base * modulation
    }

    /// Mean of `1 + sin(n x₁)` under the unmodulated probability density.
    fn modulation_mean(&self, n: f64) -> f64 {
        match &self.shape {
            DatumShape::Table { grid, values } => {
                let h = grid.spacing(0);
                let o = grid.origin()[0];
                let per_axis0 = grid.cell_count() / grid.cells()[0];
                let total = compensated_sum(values.iter().copied());
                let mut acc = 0.0;
                for (c, val) in values.iter().enumerate() {
                    let i0 = c / per_axis0;
                    let a = o + i0 as f64 * h;
                    let mean_sin = ((n * a).cos() - (n * (a + h)).cos()) / (n * h);
                    acc += val * mean_sin;
                }
                1.0 + acc / total
            }
            // Every analytic kind is even in x₁.
            _ => 1.0,
        }
    }

    /// Mass-weighted ∫∫ |v|² f⁰, ignoring any modulation (which leaves it unchanged
    /// for the analytic kinds).
    pub fn velocity_second_moment(&self) -> Result<f64> {
        let d = self.dim;
        let per_mass = match &self.shape {
            DatumShape::Gaussian { v_sigma, .. } => Marginal::Gaussian { sigma: *v_sigma }.second_moment(d),
            DatumShape::UniformBall { v_radius, .. } => Marginal::UniformBall { radius: *v_radius }.second_moment(d),
            DatumShape::TwoStream { drift, v_sigma, .. } => d as f64 * v_sigma * v_sigma + drift * drift,
            DatumShape::Product { v, .. } => v.second_moment(d),
            DatumShape::Table { .. } => return Err(Error::Unsupported("analytic moments of tabulated data".into())),
        };
        Ok(self.mass * per_mass)
    }

    pub fn kinetic_energy(&self) -> Result<f64> {
        Ok(0.5 * self.velocity_second_moment()?)
    }
}

struct TableSampler<'a> {
    grid: &'a GridSpec,
    cumulative: Vec<f64>,
}

impl<'a> TableSampler<'a> {
    fn new(grid: &'a GridSpec, values: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = values
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self { grid, cumulative }
    }

    fn sample(&self, d: usize, rng: &mut impl Rng, x: &mut [f64], v: &mut [f64]) {
        let total = *self.cumulative.last().unwrap();
        let u = rng.gen::<f64>() * total;
        let mut cell = self.cumulative.partition_point(|&c| c <= u);
        cell = cell.min(self.cumulative.len() - 1);
        let cells = self.grid.cells();
        let mut rem = cell;
        let mut idx = vec![0; 2 * d];
        for a in (0..2 * d).rev() {
            idx[a] = rem % cells[a];
            rem /= cells[a];
        }
        for a in 0..2 * d {
            let z = self.grid.origin()[a] + (idx[a] as f64 + rng.gen::<f64>()) * self.grid.spacing(a);
            if a < d {
                x[a] = z;
            } else {
                v[a - d] = z;
            }
        }
    }
}

/// Convolves the empirical measure with a compactly supported phase-space
/// mollifier of radius `width`: each particle moves by `width·ξ`, where ξ has
/// density ∝ (1 − |ξ|²)³ on the unit ball of ℝ^{2N}.
///
/// The ξ sequence depends only on `seed`, so members of a mollified family built
/// with the same seed share their random displacements.
pub fn mollify(ens: &ParticleEnsemble, width: f64, seed: u64) -> Result<ParticleEnsemble> {
    if !(width >= 0.0 && width.is_finite()) {
        return invalid(format!("mollification width must be nonnegative, got {width}"));
    }
    let d = ens.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = ens.positions().to_vec();
    let mut vs = ens.velocities().to_vec();
    let mut xi = vec![0.0; 2 * d];
    let ball = Marginal::UniformBall { radius: 1.0 };
    for i in 0..ens.len() {
        loop {
            ball.sample(2 * d, &mut rng, &mut xi);
            let s: f64 = xi.iter().map(|a| a * a).sum();
            if rng.gen::<f64>() < (1.0 - s).powi(3) {
                break;
            }
        }
        for a in 0..d {
            xs[i * d + a] += width * xi[a];
            vs[i * d + a] += width * xi[d + a];
        }
    }
    Ok(ens.with_states(xs, vs))
}
