use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::GridSpec;

/// Unnormalized forward/inverse transforms over a 1D or 2D periodic grid.
pub struct GridFft {
    n: [usize; 2],
    dim: usize,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    scratch: Vec<Complex64>,
    tbuf: Vec<Complex64>,
}

impl GridFft {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = [grid.points(0), if grid.dim() == 2 { grid.points(1) } else { 1 }];
        let fwd = [planner.plan_fft_forward(n[0]), planner.plan_fft_forward(n[1].max(1))];
        let inv = [planner.plan_fft_inverse(n[0]), planner.plan_fft_inverse(n[1].max(1))];
        let scratch_len = fwd
            .iter()
            .chain(inv.iter())
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            n,
            dim: grid.dim(),
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            tbuf: vec![Complex64::new(0.0, 0.0); n[0] * n[1]],
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.run(data, false);
        let s = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    fn run(&mut self, data: &mut [Complex64], forward: bool) {
        let plans = if forward { &self.fwd } else { &self.inv };
        if self.dim == 1 {
            plans[0].process_with_scratch(data, &mut self.scratch);
            return;
        }
        let (n0, n1) = (self.n[0], self.n[1]);
        // rows (axis 1, contiguous)
        plans[1].process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.tbuf, n0, n1);
        plans[0].process_with_scratch(&mut self.tbuf, &mut self.scratch);
        transpose(&self.tbuf, data, n1, n0);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d() {
        let g = GridSpec::plane([1.0, 2.0], [16, 32]).unwrap();
        let orig: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new(i as f64, (i * i % 7) as f64)).collect();
        let mut d = orig.clone();
        let mut f = GridFft::new(&g);
        f.forward(&mut d);
        f.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn single_mode_lands_in_its_bin() {
        let g = GridSpec::plane([1.0, 1.0], [16, 16]).unwrap();
        let mut d: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let [a, b] = g.split(i);
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (3.0 * a as f64 + 5.0 * b as f64) / 16.0)
            })
            .collect();
        GridFft::new(&g).forward(&mut d);
        let peak = d.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).unwrap().0;
        assert_eq!(g.split(peak), [3, 5]);
    }
}
