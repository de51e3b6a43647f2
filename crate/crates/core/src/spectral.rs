//! Thin FFT wrapper over flat torus arrays (d = 1 or 2).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::torus::Torus;

/// Forward/inverse plans for one torus. Forward uses the `e^{-2 pi i j x / M}`
/// convention; inverse divides by the site count.
#[derive(Clone)]
pub struct Spectral {
    torus: Torus,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("torus", &self.torus).finish()
    }
}

impl Spectral {
    pub fn new(torus: Torus) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(torus.side());
        let inverse = planner.plan_fft_inverse(torus.side());
        Spectral {
            torus,
            forward,
            inverse,
        }
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let m = self.torus.side();
        if self.torus.dim() == 1 {
            plan.process(data);
            return;
        }
        // rows, then columns through a scratch buffer
        for row in data.chunks_mut(m) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for c in 0..m {
            for r in 0..m {
                col[r] = data[r * m + c];
            }
            plan.process(&mut col);
            for r in 0..m {
                data[r * m + c] = col[r];
            }
        }
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform, normalized, keeping the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / self.torus.sites() as f64;
        data.into_iter().map(|c| c.re * scale).collect()
    }

    /// Multiply by a real Fourier multiplier indexed like the FFT output.
    pub fn apply_multiplier(&self, values: &[f64], multiplier: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut hat = self.forward_real(values);
        for (k, c) in hat.iter_mut().enumerate() {
            *c *= multiplier(k);
        }
        self.inverse_real(hat)
    }
}
