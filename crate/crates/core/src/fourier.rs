//! Symmetric (unitary) discrete Fourier transforms.
//!
//! Forward: f̃_k = N^{-1/2} Σ_x f_x e^{-ikx}; inverse: f_x = N^{-1/2} Σ_k f̃_k e^{ikx}.
//! In 2D the prefactor is (Nx Ny)^{-1/2}. Output is in FFT ordering; use
//! [`fftshift`] for display.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Array2, ComplexMap, Grid, RealMap};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// In-place unitary 1D transform.
pub fn fft1_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    plan(n, inverse).process(buf);
    let s = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
}

pub fn fft1(input: &[Complex64]) -> Vec<Complex64> {
    let mut buf = input.to_vec();
    fft1_in_place(&mut buf, false);
    buf
}

pub fn ifft1(input: &[Complex64]) -> Vec<Complex64> {
    let mut buf = input.to_vec();
    fft1_in_place(&mut buf, true);
    buf
}

fn fft2_in_place(a: &mut ComplexMap, inverse: bool) {
    let (nx, ny) = (a.nx, a.ny);
    let row_plan = plan(nx, inverse);
    let mut scratch = vec![Complex64::default(); row_plan.get_inplace_scratch_len()];
    for row in a.data.chunks_exact_mut(nx) {
        row_plan.process_with_scratch(row, &mut scratch);
    }
    if ny > 1 {
        let col_plan = plan(ny, inverse);
        let mut col = vec![Complex64::default(); ny];
        let mut scratch = vec![Complex64::default(); col_plan.get_inplace_scratch_len()];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = a.data[j * nx + i];
            }
            col_plan.process_with_scratch(&mut col, &mut scratch);
            for j in 0..ny {
                a.data[j * nx + i] = col[j];
            }
        }
    }
    let s = 1.0 / ((nx * ny) as f64).sqrt();
    a.data.iter_mut().for_each(|v| *v *= s);
}

pub fn fft2(a: &ComplexMap) -> ComplexMap {
    let mut out = a.clone();
    fft2_in_place(&mut out, false);
    out
}

pub fn fft2_real(a: &RealMap) -> ComplexMap {
    let mut out = a.to_complex();
    fft2_in_place(&mut out, false);
    out
}

pub fn ifft2(a: &ComplexMap) -> ComplexMap {
    let mut out = a.clone();
    fft2_in_place(&mut out, true);
    out
}

/// Move the zero-frequency bin to the centre (index n/2).
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (sx, sy) = (a.nx / 2, a.ny / 2);
    Array2::from_fn(a.nx, a.ny, |i, j| {
        a[((i + a.nx - sx) % a.nx, (j + a.ny - sy) % a.ny)].clone()
    })
}

pub fn fftshift1<T: Clone>(v: &[T]) -> Vec<T> {
    let n = v.len();
    let s = n / 2;
    (0..n).map(|i| v[(i + n - s) % n].clone()).collect()
}

/// Fourier-space disk |k| ≤ `k_max` on `grid` (FFT ordering).
pub fn disk_mask(grid: &Grid, k_max: f64) -> Array2<bool> {
    Array2::from_fn(grid.nx, grid.ny, |i, j| {
        let (kx, ky) = (grid.kx(i), grid.ky(j));
        kx * kx + ky * ky <= k_max * k_max
    })
}

/// Apply a 2D Fourier-space mask (1 = pass) to a real map.
pub fn low_pass(a: &RealMap, pass: &Array2<bool>) -> RealMap {
    let mut spec = fft2_real(a);
    for (v, &keep) in spec.data.iter_mut().zip(&pass.data) {
        if !keep {
            *v = Complex64::default();
        }
    }
    ifft2(&spec).re()
}
