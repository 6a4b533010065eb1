//! In-place 2D FFT on row-major buffers: row transforms, transpose, row
//! transforms, transpose back. Plans and scratch are reused across calls.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    fwd_w: Arc<dyn Fft<f64>>,
    fwd_h: Arc<dyn Fft<f64>>,
    inv_w: Arc<dyn Fft<f64>>,
    inv_h: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_w = planner.plan_fft_forward(width);
        let fwd_h = planner.plan_fft_forward(height);
        let inv_w = planner.plan_fft_inverse(width);
        let inv_h = planner.plan_fft_inverse(height);
        let scratch_len = fwd_w
            .get_inplace_scratch_len()
            .max(fwd_h.get_inplace_scratch_len())
            .max(inv_w.get_inplace_scratch_len())
            .max(inv_h.get_inplace_scratch_len());
        Self {
            width,
            height,
            fwd_w,
            fwd_h,
            inv_w,
            inv_h,
            scratch: vec![Complex64::default(); scratch_len],
            transposed: vec![Complex64::default(); width * height],
        }
    }

    pub fn square(side: usize) -> Self {
        Self::new(side, side)
    }

    fn run(&mut self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.width * self.height);
        row.process_with_scratch(data, &mut self.scratch);
        for y in 0..self.height {
            for x in 0..self.width {
                self.transposed[x * self.height + y] = data[y * self.width + x];
            }
        }
        col.process_with_scratch(&mut self.transposed, &mut self.scratch);
        for x in 0..self.width {
            for y in 0..self.height {
                data[y * self.width + x] = self.transposed[x * self.height + y];
            }
        }
    }

    /// Unnormalized forward transform: F(kx, ky) = Σ f(x, y) e^{−i(kx·x + ky·y)}.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let (fwd_w, fwd_h) = (self.fwd_w.clone(), self.fwd_h.clone());
        self.run(data, &fwd_w, &fwd_h);
    }

    /// Inverse transform including the 1/(W·H) normalization, so
    /// inverse(forward(f)) == f up to rounding.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let (inv_w, inv_h) = (self.inv_w.clone(), self.inv_h.clone());
        self.run(data, &inv_w, &inv_h);
        let norm = 1.0 / (self.width * self.height) as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }
}
