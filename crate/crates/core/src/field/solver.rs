use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rayon::prelude::*;

use super::background::{BackgroundSpec, PointCharges};
use super::fft::{Convolver, SpectrumPair};
use super::grid_field::{GridField, Rank};
use super::kernel::{KernelConfig, KernelMethod, MollifiedKernel};
use crate::error::{invalid, Error, Result};
use crate::phase_state::{GridSpec, ParticleEnsemble};
use crate::sum::{compensated_sum, CompensatedSum};

/// What generates the field.
#[derive(Clone, Copy, Debug)]
pub enum Sources<'a> {
    /// Point masses at the particle positions.
    Particles(&'a ParticleEnsemble),
    /// A node density; each node carries `ρ · node volume`.
    Density(&'a GridField),
}

/// Target chunk for parallel direct sums. Fixed for reproducibility.
const TARGETS_PER_TASK: usize = 64;
const PARTICLES_PER_TASK: usize = 4096;

/// Self-consistent field evaluation for a fixed kernel, background and sign ω.
pub struct FieldSolver {
    config: KernelConfig,
    omega: f64,
    kernel: MollifiedKernel,
    background: BackgroundSpec,
    bg: PointCharges,
    bg_self_energy: OnceLock<f64>,
    mesh: Option<Mesh>,
    grid_cache: Mutex<Vec<Arc<GridKernels>>>,
}

impl std::fmt::Debug for FieldSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSolver")
            .field("config", &self.config)
            .field("omega", &self.omega)
            .field("background", &self.background)
            .finish()
    }
}

/// Kernel spectra on one node grid, built on first use.
struct GridKernels {
    grid: GridSpec,
    conv: Convolver,
    potential: OnceLock<Vec<Complex<f64>>>,
    field: OnceLock<Vec<Vec<Complex<f64>>>>,
    gradient: OnceLock<Vec<Vec<Complex<f64>>>>,
}

impl GridKernels {
    fn new(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            conv: Convolver::new(grid),
            potential: OnceLock::new(),
            field: OnceLock::new(),
            gradient: OnceLock::new(),
        }
    }

    fn potential_hat(&self, k: &MollifiedKernel) -> &[Complex<f64>] {
        self.potential.get_or_init(|| {
            self.conv
                .kernel_spectrum(|x| k.potential(x.iter().map(|a| a * a).sum()))
        })
    }

    fn field_hat(&self, k: &MollifiedKernel) -> &[Vec<Complex<f64>>] {
        self.field.get_or_init(|| {
            (0..k.dim())
                .map(|i| {
                    self.conv.kernel_spectrum(|x| {
                        let r2: f64 = x.iter().map(|a| a * a).sum();
                        if r2 == 0.0 {
                            0.0
                        } else {
                            k.field_factor(r2) * x[i]
                        }
                    })
                })
                .collect()
        })
    }

    /// Entry `i * N + j` is the spectrum of ∂_j E_i.
    fn gradient_hat(&self, k: &MollifiedKernel) -> &[Vec<Complex<f64>>] {
        self.gradient.get_or_init(|| {
            let d = k.dim();
            let mut out = vec![Vec::new(); d * d];
            for i in 0..d {
                for j in i..d {
                    let s = self.conv.kernel_spectrum(|x| {
                        let (h, hp) = k.gradient_factors(x.iter().map(|a| a * a).sum());
                        (if i == j { h } else { 0.0 }) + x[i] * x[j] * hp
                    });
                    out[j * d + i] = s.clone();
                    out[i * d + j] = s;
                }
            }
            out
        })
    }
}

/// Spline particle-mesh state.
struct Mesh {
    kernels: Arc<GridKernels>,
    bg_charge: Vec<f64>,
}

/// Cubic B-spline weights, first and second derivatives (per unit of `u`) for
/// the four nodes `base..base+4` around `u`.
#[inline]
fn spline(u: f64) -> (isize, [f64; 4], [f64; 4], [f64; 4]) {
    let i = u.floor();
    let t = u - i;
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    let w = [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ];
    let dw = [-0.5 * s * s, 1.5 * t2 - 2.0 * t, -1.5 * t2 + t + 0.5, 0.5 * t2];
    let ddw = [s, 3.0 * t - 2.0, 1.0 - 3.0 * t, t];
    (i as isize - 1, w, dw, ddw)
}

/// Per-axis spline data for one point. Axes beyond the dimension carry a
/// single slot of weight one, so every loop is a fixed 3-level tensor loop.
struct Stencil {
    count: [usize; 3],
    off: [[usize; 4]; 3],
    keep: [[bool; 4]; 3],
    w: [[f64; 4]; 3],
    dw: [[f64; 4]; 3],
    ddw: [[f64; 4]; 3],
}

impl Stencil {
    fn new(grid: &GridSpec, x: &[f64]) -> Option<Self> {
        let d = grid.dim();
        let cells = grid.cells();
        let mut st = Stencil {
            count: [1; 3],
            off: [[0; 4]; 3],
            keep: [[true; 4]; 3],
            w: [[1.0; 4]; 3],
            dw: [[0.0; 4]; 3],
            ddw: [[0.0; 4]; 3],
        };
        let mut stride = 1usize;
        for a in (0..d).rev() {
            let h = grid.spacing(a);
            let u = (x[a] - grid.origin()[a]) / h;
            let c = cells[a] as f64;
            if !(u > -2.0 && u < c + 2.0) {
                return None;
            }
            let (b, w, dw, ddw) = spline(u);
            st.count[a] = 4;
            for m in 0..4 {
                let node = b + m as isize;
                let keep = node >= 0 && node <= cells[a] as isize;
                let z = if keep { 1.0 } else { 0.0 };
                st.keep[a][m] = keep;
                st.off[a][m] = if keep { node as usize * stride } else { 0 };
                st.w[a][m] = w[m] * z;
                st.dw[a][m] = dw[m] * z / h;
                st.ddw[a][m] = ddw[m] * z / (h * h);
            }
            stride *= cells[a] + 1;
        }
        Some(st)
    }

    /// Visits every in-grid stencil node with its per-axis slot indices.
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, &[usize; 3])) {
        for i in 0..self.count[0] {
            if !self.keep[0][i] {
                continue;
            }
            for j in 0..self.count[1] {
                if !self.keep[1][j] {
                    continue;
                }
                let oij = self.off[0][i] + self.off[1][j];
                for k in 0..self.count[2] {
                    if self.keep[2][k] {
                        f(oij + self.off[2][k], &[i, j, k]);
                    }
                }
            }
        }
    }

    #[inline]
    fn weight(&self, m: &[usize; 3]) -> f64 {
        self.w[0][m[0]] * self.w[1][m[1]] * self.w[2][m[2]]
    }

    #[inline]
    fn grad(&self, m: &[usize; 3], out: &mut [f64; 3]) {
        let (w0, w1, w2) = (self.w[0][m[0]], self.w[1][m[1]], self.w[2][m[2]]);
        out[0] = self.dw[0][m[0]] * w1 * w2;
        out[1] = w0 * self.dw[1][m[1]] * w2;
        out[2] = w0 * w1 * self.dw[2][m[2]];
    }

    fn hessian(&self, d: usize, m: &[usize; 3], out: &mut [f64]) {
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..3)
                    .map(|a| match (a == i, a == j) {
                        (true, true) => self.ddw[a][m[a]],
                        (true, false) | (false, true) => self.dw[a][m[a]],
                        _ => self.w[a][m[a]],
                    })
                    .product();
            }
        }
    }
}

impl FieldSolver {
    pub fn new(config: KernelConfig, background: BackgroundSpec, omega: f64) -> Result<Self> {
        config.validate()?;
        if omega != 1.0 && omega != -1.0 {
            return invalid(format!("omega must be +1 or -1, got {omega}"));
        }
        background.validate(config.dim)?;
        let kernel = MollifiedKernel::new(config.dim, config.softening)?;
        let bg = background.charges(config.dim);
        let mesh = match &config.method {
            KernelMethod::DirectSum => None,
            KernelMethod::GridConvolution { grid } => {
                let kernels = Arc::new(GridKernels::new(grid));
                let bg_charge = spline_deposit(grid, &bg.points, &bg.masses);
                Some(Mesh { kernels, bg_charge })
            }
        };
        Ok(Self {
            config,
            omega,
            kernel,
            background,
            bg,
            bg_self_energy: OnceLock::new(),
            mesh,
            grid_cache: Mutex::new(Vec::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn background(&self) -> &BackgroundSpec {
        &self.background
    }

    pub fn kernel(&self) -> &MollifiedKernel {
        &self.kernel
    }

    fn check_points(&self, points: &[f64]) -> Result<()> {
        if !points.len().is_multiple_of(self.dim()) {
            return invalid("point array length is not a multiple of the dimension");
        }
        Ok(())
    }

    fn check_sources(&self, src: Sources) -> Result<()> {
        let d = match src {
            Sources::Particles(e) => e.dim(),
            Sources::Density(f) => {
                if f.rank() != Rank::Scalar {
                    return invalid("density sources must be a scalar grid field");
                }
                f.dim()
            }
        };
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: d,
            });
        }
        Ok(())
    }

    fn grid_kernels(&self, grid: &GridSpec) -> Arc<GridKernels> {
        if let Some(m) = &self.mesh {
            if &m.kernels.grid == grid {
                return m.kernels.clone();
            }
        }
        let mut cache = self.grid_cache.lock().expect("kernel cache poisoned");
        if let Some(k) = cache.iter().find(|k| &k.grid == grid) {
            return k.clone();
        }
        let k = Arc::new(GridKernels::new(grid));
        cache.push(k.clone());
        if cache.len() > 4 {
            cache.remove(0);
        }
        k
    }

    /// Signed node charges `(ρ − ρ_b) · node volume` of a density source.
    fn density_charges(&self, rho: &GridField) -> Result<Vec<f64>> {
        if self.background.is_neutral() {
            return Ok(vec![0.0; rho.values().len()]);
        }
        let grid = rho.grid();
        let bg = self.background.on_grid(grid)?;
        let vols = grid.node_volumes();
        Ok(rho
            .values()
            .iter()
            .zip(&bg)
            .zip(&vols)
            .map(|((r, b), v)| (r - b) * v)
            .collect())
    }

    /// Signed point charges: particles, then the background quadrature negated.
    fn point_charges(&self, src: Sources) -> Result<(Vec<f64>, Vec<f64>)> {
        match src {
            Sources::Particles(e) => {
                if self.background.is_neutral() {
                    return Ok((Vec::new(), Vec::new()));
                }
                let d = self.dim();
                let mut pts = Vec::with_capacity(e.positions().len() + self.bg.points.len());
                let mut q = Vec::with_capacity(e.len() + self.bg.masses.len());
                for i in 0..e.len() {
                    if e.weights()[i] != 0.0 {
                        pts.extend_from_slice(&e.positions()[i * d..(i + 1) * d]);
                        q.push(e.weights()[i]);
                    }
                }
                pts.extend_from_slice(&self.bg.points);
                q.extend(self.bg.masses.iter().map(|m| -m));
                Ok((pts, q))
            }
            Sources::Density(rho) => Ok((rho.grid().node_positions(), self.density_charges(rho)?)),
        }
    }

    /// Spline-deposited signed charges on the mesh.
    fn mesh_charges(&self, mesh: &Mesh, ens: &ParticleEnsemble) -> Vec<f64> {
        let mut q = spline_deposit(&mesh.kernels.grid, ens.positions(), ens.weights());
        for (a, b) in q.iter_mut().zip(&mesh.bg_charge) {
            *a -= b;
        }
        q
    }

    /// Field at the particle positions generated by the particles themselves,
    /// together with the interaction energy.
    pub fn accelerations_and_energy(&self, ens: &ParticleEnsemble) -> Result<(Vec<f64>, f64)> {
        self.check_sources(Sources::Particles(ens))?;
        if self.background.is_neutral() {
            return Ok((vec![0.0; ens.positions().len()], 0.0));
        }
        match &self.mesh {
            Some(mesh) => {
                let q = self.mesh_charges(mesh, ens);
                let phi = mesh.kernels.conv.convolve(mesh.kernels.potential_hat(&self.kernel), &q);
                let acc = mesh_gather_field(&mesh.kernels.grid, &phi, ens.positions(), self.omega);
                let energy = 0.5 * self.omega * compensated_sum(q.iter().zip(&phi).map(|(a, b)| a * b));
                Ok((acc, energy))
            }
            None => Ok((
                self.field_at(Sources::Particles(ens), ens.positions())?,
                self.interaction_energy(ens)?,
            )),
        }
    }

    pub fn accelerations(&self, ens: &ParticleEnsemble) -> Result<Vec<f64>> {
        match &self.mesh {
            Some(_) => Ok(self.accelerations_and_energy(ens)?.0),
            None => {
                self.check_sources(Sources::Particles(ens))?;
                self.field_at(Sources::Particles(ens), ens.positions())
            }
        }
    }

    /// Interaction energy. For the direct sum this is
    /// `(ω/2) Σ_{a≠b} q_a q_b G_ε(y_a − y_b)` over particles and the negated
    /// background quadrature; for the mesh it is `(ω/2) Σ_g q_g (G_ε * q)_g`.
    pub fn interaction_energy(&self, ens: &ParticleEnsemble) -> Result<f64> {
        self.check_sources(Sources::Particles(ens))?;
        if self.background.is_neutral() {
            return Ok(0.0);
        }
        if self.mesh.is_some() {
            return Ok(self.accelerations_and_energy(ens)?.1);
        }
        let d = self.dim();
        let (mut pts, mut q) = (Vec::new(), Vec::new());
        for i in 0..ens.len() {
            if ens.weights()[i] != 0.0 {
                pts.extend_from_slice(ens.position(i));
                q.push(ens.weights()[i]);
            }
        }
        let pp = pair_energy(&self.kernel, d, &pts, &q);
        let pb = if self.bg.masses.is_empty() {
            0.0
        } else {
            let pot = direct_potential(&self.kernel, d, &self.bg.points, &self.bg.masses, &pts);
            compensated_sum(pot.iter().zip(&q).map(|(u, w)| u * w))
        };
        let bb = *self
            .bg_self_energy
            .get_or_init(|| pair_energy(&self.kernel, d, &self.bg.points, &self.bg.masses));
        Ok(self.omega * (pp - pb + bb))
    }

    /// E at arbitrary points.
    pub fn field_at(&self, src: Sources, points: &[f64]) -> Result<Vec<f64>> {
        self.check_sources(src)?;
        self.check_points(points)?;
        if let (Some(mesh), Sources::Particles(e)) = (&self.mesh, src) {
            if self.background.is_neutral() {
                return Ok(vec![0.0; points.len()]);
            }
            let q = self.mesh_charges(mesh, e);
            let phi = mesh.kernels.conv.convolve(mesh.kernels.potential_hat(&self.kernel), &q);
            return Ok(mesh_gather_field(&mesh.kernels.grid, &phi, points, self.omega));
        }
        let (pts, q) = self.point_charges(src)?;
        let mut e = direct_field(&self.kernel, self.dim(), &pts, &q, points);
        e.iter_mut().for_each(|x| *x *= self.omega);
        Ok(e)
    }

    /// U at arbitrary points (no gauge shift).
    pub fn potential_at(&self, src: Sources, points: &[f64]) -> Result<Vec<f64>> {
        self.check_sources(src)?;
        self.check_points(points)?;
        if let (Some(mesh), Sources::Particles(e)) = (&self.mesh, src) {
            if self.background.is_neutral() {
                return Ok(vec![0.0; points.len() / self.dim()]);
            }
            let q = self.mesh_charges(mesh, e);
            let phi = mesh.kernels.conv.convolve(mesh.kernels.potential_hat(&self.kernel), &q);
            return Ok(mesh_gather(&mesh.kernels.grid, &phi, points, self.omega, Gather::Value));
        }
        let (pts, q) = self.point_charges(src)?;
        let mut u = direct_potential(&self.kernel, self.dim(), &pts, &q, points);
        u.iter_mut().for_each(|x| *x *= self.omega);
        Ok(u)
    }

    /// D_x E at arbitrary points, row-major `∂_j E_i`.
    pub fn gradient_at(&self, src: Sources, points: &[f64]) -> Result<Vec<f64>> {
        self.check_sources(src)?;
        self.check_points(points)?;
        let d = self.dim();
        if let (Some(mesh), Sources::Particles(e)) = (&self.mesh, src) {
            if self.background.is_neutral() {
                return Ok(vec![0.0; points.len() * d]);
            }
            let q = self.mesh_charges(mesh, e);
            let phi = mesh.kernels.conv.convolve(mesh.kernels.potential_hat(&self.kernel), &q);
            return Ok(mesh_gather(
                &mesh.kernels.grid,
                &phi,
                points,
                -self.omega,
                Gather::Hessian,
            ));
        }
        let (pts, q) = self.point_charges(src)?;
        let mut g = direct_gradient(&self.kernel, d, &pts, &q, points);
        g.iter_mut().for_each(|x| *x *= self.omega);
        Ok(g)
    }

    /// Charges to convolve on `grid`, when the sources already live there.
    fn charges_on(&self, src: Sources, grid: &GridSpec) -> Result<Option<Vec<f64>>> {
        match src {
            Sources::Density(rho) if rho.grid() == grid => Ok(Some(self.density_charges(rho)?)),
            Sources::Particles(e) => match &self.mesh {
                Some(mesh) if &mesh.kernels.grid == grid => {
                    if self.background.is_neutral() {
                        Ok(Some(vec![0.0; grid.node_count()]))
                    } else {
                        Ok(Some(self.mesh_charges(mesh, e)))
                    }
                }
                _ => Ok(None),
            },
            _ => Ok(None),
        }
    }

    /// E on the nodes of `grid`. Sources that live on the same grid are
    /// convolved by FFT, which equals the node sum up to rounding.
    pub fn field_on_grid(&self, src: Sources, grid: &GridSpec) -> Result<GridField> {
        self.check_sources(src)?;
        self.check_grid(grid)?;
        let d = self.dim();
        if let Some(q) = self.charges_on(src, grid)? {
            let k = self.grid_kernels(grid);
            let q_hat = k.conv.forward(&q);
            let comps: Vec<Vec<f64>> = k
                .field_hat(&self.kernel)
                .iter()
                .map(|s| k.conv.apply(&q_hat, s))
                .collect();
            let mut values = vec![0.0; grid.node_count() * d];
            for (a, c) in comps.iter().enumerate() {
                for (n, v) in c.iter().enumerate() {
                    values[n * d + a] = self.omega * v;
                }
            }
            return GridField::from_values(grid.clone(), Rank::Vector, values);
        }
        GridField::from_values(grid.clone(), Rank::Vector, self.field_at(src, &grid.node_positions())?)
    }

    /// U on the nodes of `grid`. For N ≤ 2 the additive constant is fixed by
    /// making the mean over boundary nodes vanish.
    pub fn potential_on_grid(&self, src: Sources, grid: &GridSpec) -> Result<GridField> {
        self.check_sources(src)?;
        self.check_grid(grid)?;
        let mut u = match self.charges_on(src, grid)? {
            Some(q) => {
                let k = self.grid_kernels(grid);
                let mut u = k.conv.convolve(k.potential_hat(&self.kernel), &q);
                u.iter_mut().for_each(|x| *x *= self.omega);
                u
            }
            None => self.potential_at(src, &grid.node_positions())?,
        };
        if self.dim() <= 2 {
            let boundary: Vec<f64> = (0..grid.node_count())
                .filter(|&k| grid.is_boundary_node(k))
                .map(|k| u[k])
                .collect();
            let mean = compensated_sum(boundary.iter().copied()) / boundary.len() as f64;
            u.iter_mut().for_each(|x| *x -= mean);
        }
        GridField::from_values(grid.clone(), Rank::Scalar, u)
    }

    /// D_x E on the nodes of `grid` as a matrix field.
    pub fn gradient_on_grid(&self, src: Sources, grid: &GridSpec) -> Result<GridField> {
        self.check_sources(src)?;
        self.check_grid(grid)?;
        let d = self.dim();
        if let Some(q) = self.charges_on(src, grid)? {
            let k = self.grid_kernels(grid);
            let q_hat = k.conv.forward(&q);
            let spectra = k.gradient_hat(&self.kernel);
            let mut values = vec![0.0; grid.node_count() * d * d];
            for i in 0..d {
                for j in i..d {
                    let c = k.conv.apply(&q_hat, &spectra[i * d + j]);
                    for (n, v) in c.iter().enumerate() {
                        values[n * d * d + i * d + j] = self.omega * v;
                        values[n * d * d + j * d + i] = self.omega * v;
                    }
                }
            }
            return GridField::from_values(grid.clone(), Rank::Matrix, values);
        }
        GridField::from_values(
            grid.clone(),
            Rank::Matrix,
            self.gradient_at(src, &grid.node_positions())?,
        )
    }

    /// ∂ₜE from a current on a grid: `∂ₜE_i = −ω Σ_k (∂_k E_i) * J_k`, the
    /// gradient part of −ωJ seen through the regularised kernel.
    pub fn dt_field_on_grid(&self, current: &GridField) -> Result<GridField> {
        let d = self.dim();
        if current.rank() != Rank::Vector || current.dim() != d {
            return invalid("dt_field needs a vector current of the solver's dimension");
        }
        let grid = current.grid();
        let k = self.grid_kernels(grid);
        let vols = grid.node_volumes();
        let j_hat: Vec<Vec<Complex<f64>>> = (0..d)
            .map(|c| {
                let data: Vec<f64> = (0..grid.node_count())
                    .map(|n| current.values()[n * d + c] * vols[n])
                    .collect();
                k.conv.forward(&data)
            })
            .collect();
        let spectra = k.gradient_hat(&self.kernel);
        let mut values = vec![0.0; grid.node_count() * d];
        for i in 0..d {
            let pairs: Vec<SpectrumPair> = (0..d)
                .map(|c| (j_hat[c].as_slice(), spectra[i * d + c].as_slice()))
                .collect();
            let comp = k.conv.apply_sum(&pairs);
            for (n, v) in comp.iter().enumerate() {
                values[n * d + i] = -self.omega * v;
            }
        }
        GridField::from_values(grid.clone(), Rank::Vector, values)
    }

    /// Exact time derivative of the direct-sum field at fixed points under the
    /// particle motion: `−ω Σ_p w_p (∇E_ε)(x − x_p) v_p`.
    pub fn dt_field_from_particles(&self, ens: &ParticleEnsemble, points: &[f64]) -> Result<Vec<f64>> {
        self.check_sources(Sources::Particles(ens))?;
        self.check_points(points)?;
        let d = self.dim();
        if self.background.is_neutral() {
            return Ok(vec![0.0; points.len()]);
        }
        let mut jv = Vec::with_capacity(ens.positions().len());
        for i in 0..ens.len() {
            jv.extend(ens.velocity(i).iter().map(|v| v * ens.weights()[i]));
        }
        let kernel = self.kernel;
        let src = ens.positions();
        let omega = self.omega;
        Ok(points
            .par_chunks(TARGETS_PER_TASK * d)
            .flat_map_iter(|chunk| {
                let mut out = vec![0.0; chunk.len()];
                let mut g = [0.0; 9];
                let mut diff = [0.0; 3];
                for (t, x) in chunk.chunks_exact(d).enumerate() {
                    for (p, y) in src.chunks_exact(d).enumerate() {
                        for a in 0..d {
                            diff[a] = x[a] - y[a];
                        }
                        kernel.gradient(&diff[..d], &mut g[..d * d]);
                        for i in 0..d {
                            let mut s = 0.0;
                            for k in 0..d {
                                s += g[i * d + k] * jv[p * d + k];
                            }
                            out[t * d + i] -= omega * s;
                        }
                    }
                }
                out
            })
            .collect())
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: grid.dim(),
            });
        }
        Ok(())
    }
}

/// Cubic-spline assignment of signed masses to node sums.
fn spline_deposit(grid: &GridSpec, points: &[f64], masses: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let n = grid.node_count();
    let idx: Vec<usize> = (0..masses.len()).collect();
    let partials: Vec<Vec<f64>> = idx
        .par_chunks(PARTICLES_PER_TASK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            for &p in chunk {
                let w = masses[p];
                if w == 0.0 {
                    continue;
                }
                if let Some(st) = Stencil::new(grid, &points[p * d..(p + 1) * d]) {
                    st.for_each(|lin, m| acc[lin] += w * st.weight(m));
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; n];
    for part in &partials {
        for (o, v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Gather {
    Value,
    Hessian,
}

/// `−ω Σ_g ∇S(x − x_g) φ_g` at each point.
fn mesh_gather_field(grid: &GridSpec, phi: &[f64], points: &[f64], omega: f64) -> Vec<f64> {
    let d = grid.dim();
    points
        .par_chunks(PARTICLES_PER_TASK * d)
        .flat_map_iter(|chunk| {
            let mut out = vec![0.0; chunk.len()];
            let mut g = [0.0; 3];
            for (t, x) in chunk.chunks_exact(d).enumerate() {
                if let Some(st) = Stencil::new(grid, x) {
                    st.for_each(|lin, m| {
                        st.grad(m, &mut g);
                        for a in 0..d {
                            out[t * d + a] -= omega * g[a] * phi[lin];
                        }
                    });
                }
            }
            out
        })
        .collect()
}

fn mesh_gather(grid: &GridSpec, phi: &[f64], points: &[f64], scale: f64, what: Gather) -> Vec<f64> {
    let d = grid.dim();
    let comps = match what {
        Gather::Value => 1,
        Gather::Hessian => d * d,
    };
    points
        .par_chunks(PARTICLES_PER_TASK * d)
        .flat_map_iter(|chunk| {
            let mut out = vec![0.0; chunk.len() / d * comps];
            let mut hbuf = [0.0; 9];
            for (t, x) in chunk.chunks_exact(d).enumerate() {
                if let Some(st) = Stencil::new(grid, x) {
                    st.for_each(|lin, m| match what {
                        Gather::Value => out[t] += scale * st.weight(m) * phi[lin],
                        Gather::Hessian => {
                            st.hessian(d, m, &mut hbuf);
                            for c in 0..comps {
                                out[t * comps + c] += scale * hbuf[c] * phi[lin];
                            }
                        }
                    });
                }
            }
            out
        })
        .collect()
}

macro_rules! by_dim {
    ($d:expr, $f:ident, $($arg:expr),*) => {
        match $d {
            1 => $f::<1>($($arg),*),
            2 => $f::<2>($($arg),*),
            _ => $f::<3>($($arg),*),
        }
    };
}

fn direct_field(k: &MollifiedKernel, d: usize, pts: &[f64], q: &[f64], targets: &[f64]) -> Vec<f64> {
    by_dim!(d, field_sum, k, pts, q, targets)
}

fn direct_potential(k: &MollifiedKernel, d: usize, pts: &[f64], q: &[f64], targets: &[f64]) -> Vec<f64> {
    by_dim!(d, potential_sum, k, pts, q, targets)
}

fn direct_gradient(k: &MollifiedKernel, d: usize, pts: &[f64], q: &[f64], targets: &[f64]) -> Vec<f64> {
    by_dim!(d, gradient_sum, k, pts, q, targets)
}

fn pair_energy(k: &MollifiedKernel, d: usize, pts: &[f64], q: &[f64]) -> f64 {
    by_dim!(d, pair_energy_sum, k, pts, q)
}

fn field_sum<const D: usize>(k: &MollifiedKernel, pts: &[f64], q: &[f64], targets: &[f64]) -> Vec<f64> {
    targets
        .par_chunks(TARGETS_PER_TASK * D)
        .flat_map_iter(|chunk| {
            let mut out = vec![0.0; chunk.len()];
            for (t, x) in chunk.chunks_exact(D).enumerate() {
                let mut acc = [0.0; D];
                for (y, &w) in pts.chunks_exact(D).zip(q) {
                    let mut diff = [0.0; D];
                    let mut r2 = 0.0;
                    for a in 0..D {
                        diff[a] = x[a] - y[a];
                        r2 += diff[a] * diff[a];
                    }
                    if r2 == 0.0 {
                        continue;
                    }
                    let h = w * k.field_factor(r2);
                    for a in 0..D {
                        acc[a] += h * diff[a];
                    }
                }
                out[t * D..(t + 1) * D].copy_from_slice(&acc);
            }
            out
        })
        .collect()
}

fn potential_sum<const D: usize>(k: &MollifiedKernel, pts: &[f64], q: &[f64], targets: &[f64]) -> Vec<f64> {
    targets
        .par_chunks(TARGETS_PER_TASK * D)
        .flat_map_iter(|chunk| {
            chunk
                .chunks_exact(D)
                .map(|x| {
                    let mut acc = 0.0;
                    for (y, &w) in pts.chunks_exact(D).zip(q) {
                        let mut r2 = 0.0;
                        for a in 0..D {
                            r2 += (x[a] - y[a]) * (x[a] - y[a]);
                        }
                        acc += w * k.potential(r2);
                    }
                    acc
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn gradient_sum<const D: usize>(k: &MollifiedKernel, pts: &[f64], q: &[f64], targets: &[f64]) -> Vec<f64> {
    targets
        .par_chunks(TARGETS_PER_TASK * D)
        .flat_map_iter(|chunk| {
            let mut out = vec![0.0; chunk.len() * D];
            for (t, x) in chunk.chunks_exact(D).enumerate() {
                let o = &mut out[t * D * D..(t + 1) * D * D];
                for (y, &w) in pts.chunks_exact(D).zip(q) {
                    let mut diff = [0.0; D];
                    let mut r2 = 0.0;
                    for a in 0..D {
                        diff[a] = x[a] - y[a];
                        r2 += diff[a] * diff[a];
                    }
                    let (h, hp) = k.gradient_factors(r2);
                    if !h.is_finite() {
                        continue;
                    }
                    for i in 0..D {
                        o[i * D + i] += w * h;
                        for j in 0..D {
                            o[i * D + j] += w * diff[i] * diff[j] * hp;
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Σ_{a<b} q_a q_b G(y_a − y_b).
fn pair_energy_sum<const D: usize>(k: &MollifiedKernel, pts: &[f64], q: &[f64]) -> f64 {
    let n = q.len();
    let rows: Vec<usize> = (0..n).collect();
    let partial: Vec<f64> = rows
        .par_chunks(TARGETS_PER_TASK)
        .map(|chunk| {
            let mut acc = CompensatedSum::new();
            for &a in chunk {
                let x = &pts[a * D..(a + 1) * D];
                let mut row = 0.0;
                for b in a + 1..n {
                    let y = &pts[b * D..(b + 1) * D];
                    let mut r2 = 0.0;
                    for c in 0..D {
                        r2 += (x[c] - y[c]) * (x[c] - y[c]);
                    }
                    row += q[b] * k.potential(r2);
                }
                acc.add(q[a] * row);
            }
            acc.value()
        })
        .collect();
    compensated_sum(partial)
}
