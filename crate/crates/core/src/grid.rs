//! Pixel grids and the dense 2D array type shared by every stage.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Object-plane pixel grid. `x` is the long axis of the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Pixel pitch in metres.
    pub pitch: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        if nx < 2 || ny < 1 {
            return Err(invalid("grid must have nx >= 2 and ny >= 1"));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(invalid("pixel pitch must be positive"));
        }
        Ok(Self { nx, ny, pitch })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_area(&self) -> f64 {
        self.pitch * self.pitch
    }

    /// Centred pixel coordinate along x, metres.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.nx as f64 - 1.0)) * self.pitch
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - 0.5 * (self.ny as f64 - 1.0)) * self.pitch
    }

    /// Angular wavenumber of FFT bin `i` along x (FFT ordering).
    pub fn kx(&self, i: usize) -> f64 {
        fft_wavenumber(i, self.nx, self.pitch)
    }

    pub fn ky(&self, j: usize) -> f64 {
        fft_wavenumber(j, self.ny, self.pitch)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        Ok(())
    }
}

/// Signed bin index in FFT ordering.
pub fn fft_index(i: usize, n: usize) -> isize {
    if i < n.div_ceil(2) {
        i as isize
    } else {
        i as isize - n as isize
    }
}

pub fn fft_wavenumber(i: usize, n: usize, pitch: f64) -> f64 {
    2.0 * PI * fft_index(i, n) as f64 / (n as f64 * pitch)
}

/// Dense row-major 2D array with `x` the fast index.
#[derive(Debug, Clone, PartialEq)]
pub struct Array2<T> {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<T>,
}

pub type RealMap = Array2<f64>;
pub type ComplexMap = Array2<Complex64>;

impl<T: Clone + Default> Array2<T> {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self { nx, ny, data: vec![T::default(); nx * ny] }
    }
}

impl<T> Array2<T> {
    pub fn from_vec(nx: usize, ny: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != nx * ny {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} array",
                data.len(),
                nx,
                ny
            )));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                data.push(f(i, j));
            }
        }
        Self { nx, ny, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Array2<U>) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        Ok(())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Array2<U> {
        Array2 { nx: self.nx, ny: self.ny, data: self.data.iter().map(f).collect() }
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.nx..(j + 1) * self.nx]
    }
}

impl<T> Index<(usize, usize)> for Array2<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.nx + i]
    }
}

impl<T> IndexMut<(usize, usize)> for Array2<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.nx + i]
    }
}

impl Array2<f64> {
    pub fn to_complex(&self) -> ComplexMap {
        self.map(|&v| Complex64::new(v, 0.0))
    }

    pub fn sum_sq(&self) -> f64 {
        crate::stats::pairwise_sum_by(&self.data, |v| v * v)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

impl Array2<Complex64> {
    pub fn re(&self) -> RealMap {
        self.map(|c| c.re)
    }
}
