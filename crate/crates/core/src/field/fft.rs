//! Free-space convolution on node grids by zero-padded FFT.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::phase_state::GridSpec;

/// Smallest 2^a 3^b 5^c that is at least `n`.
fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k.is_multiple_of(p) {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Forward and inverse plans for one padded axis.
type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// A data spectrum and the kernel spectrum it is multiplied by.
pub(crate) type SpectrumPair<'a> = (&'a [Complex<f64>], &'a [Complex<f64>]);

/// Computes `out_g = Σ_{g'} K(x_g − x_{g'}) data_{g'}` over all node pairs of a
/// grid, exactly up to rounding, in O(M log M).
pub(crate) struct Convolver {
    nodes: Vec<usize>,
    padded: Vec<usize>,
    spacing: Vec<f64>,
    plans: Vec<PlanPair>,
}

impl Convolver {
    pub fn new(grid: &GridSpec) -> Self {
        let nodes = grid.nodes_per_axis();
        let padded: Vec<usize> = nodes.iter().map(|&n| good_size(2 * n - 1)).collect();
        let mut planner = FftPlanner::new();
        let plans = padded
            .iter()
            .map(|&n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .collect();
        Self {
            nodes,
            padded,
            spacing: grid.spacings(),
            plans,
        }
    }

    fn len(&self) -> usize {
        self.padded.iter().product()
    }

    /// Spectrum of the kernel sampled at every node offset, for reuse.
    pub fn kernel_spectrum(&self, kernel: impl Fn(&[f64]) -> f64) -> Vec<Complex<f64>> {
        let d = self.padded.len();
        let mut buf = vec![Complex::new(0.0, 0.0); self.len()];
        let mut idx = vec![0usize; d];
        let mut off = vec![0.0; d];
        for (lin, slot) in buf.iter_mut().enumerate() {
            let mut rem = lin;
            for a in (0..d).rev() {
                idx[a] = rem % self.padded[a];
                rem /= self.padded[a];
            }
            let mut inside = true;
            for a in 0..d {
                let (k, p, n) = (idx[a], self.padded[a], self.nodes[a]);
                let m = if k < n {
                    k as f64
                } else if k > p - n {
                    k as f64 - p as f64
                } else {
                    inside = false;
                    break;
                };
                off[a] = m * self.spacing[a];
            }
            if inside {
                *slot = Complex::new(kernel(&off), 0.0);
            }
        }
        self.transform(&mut buf, false);
        buf
    }

    /// Embeds node data into the padded box and transforms it.
    pub fn forward(&self, data: &[f64]) -> Vec<Complex<f64>> {
        let d = self.padded.len();
        let mut buf = vec![Complex::new(0.0, 0.0); self.len()];
        let mut idx = vec![0usize; d];
        for (lin, &v) in data.iter().enumerate() {
            let mut rem = lin;
            for a in (0..d).rev() {
                idx[a] = rem % self.nodes[a];
                rem /= self.nodes[a];
            }
            let mut p = 0;
            for a in 0..d {
                p = p * self.padded[a] + idx[a];
            }
            buf[p] = Complex::new(v, 0.0);
        }
        self.transform(&mut buf, false);
        buf
    }

    /// Multiplies by a kernel spectrum, transforms back and extracts the nodes.
    pub fn apply(&self, data_hat: &[Complex<f64>], kernel_hat: &[Complex<f64>]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = data_hat.iter().zip(kernel_hat).map(|(a, b)| a * b).collect();
        self.transform(&mut buf, true);
        self.extract(&buf)
    }

    /// Sum of several kernel-data products, transformed back once.
    pub fn apply_sum(&self, pairs: &[SpectrumPair]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.len()];
        for (data_hat, kernel_hat) in pairs {
            for ((b, a), k) in buf.iter_mut().zip(data_hat.iter()).zip(kernel_hat.iter()) {
                *b += a * k;
            }
        }
        self.transform(&mut buf, true);
        self.extract(&buf)
    }

    pub fn convolve(&self, kernel_hat: &[Complex<f64>], data: &[f64]) -> Vec<f64> {
        self.apply(&self.forward(data), kernel_hat)
    }

    fn extract(&self, buf: &[Complex<f64>]) -> Vec<f64> {
        let d = self.padded.len();
        let scale = 1.0 / self.len() as f64;
        let count: usize = self.nodes.iter().product();
        let mut idx = vec![0usize; d];
        (0..count)
            .map(|lin| {
                let mut rem = lin;
                for a in (0..d).rev() {
                    idx[a] = rem % self.nodes[a];
                    rem /= self.nodes[a];
                }
                let mut p = 0;
                for a in 0..d {
                    p = p * self.padded[a] + idx[a];
                }
                buf[p].re * scale
            })
            .collect()
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        const BLOCK: usize = 16;
        let d = self.padded.len();
        let total = buf.len();
        for a in 0..d {
            let n = self.padded[a];
            let stride: usize = self.padded[a + 1..].iter().product();
            let fft = if inverse { &self.plans[a].1 } else { &self.plans[a].0 };
            if stride == 1 {
                fft.process(buf);
                continue;
            }
            let mut tmp = vec![Complex::new(0.0, 0.0); n * BLOCK];
            let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            let outer = total / (n * stride);
            for o in 0..outer {
                let base = o * n * stride;
                let mut s0 = 0;
                while s0 < stride {
                    let b = BLOCK.min(stride - s0);
                    for k in 0..n {
                        let row = base + k * stride + s0;
                        for j in 0..b {
                            tmp[j * n + k] = buf[row + j];
                        }
                    }
                    fft.process_with_scratch(&mut tmp[..b * n], &mut scratch);
                    for k in 0..n {
                        let row = base + k * stride + s0;
                        for j in 0..b {
                            buf[row + j] = tmp[j * n + k];
                        }
                    }
                    s0 += b;
                }
            }
        }
    }
}
