use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform N³ discretization of the torus [0, 2π)³.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::Grid(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Cell volume, so that `sum(f) * cell_volume()` approximates the torus integral.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(3)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    /// Physical coordinates of a flat index.
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unravel(idx);
        let dx = self.dx();
        [i as f64 * dx, j as f64 * dx, k as f64 * dx]
    }

    /// Signed integer wavenumber for FFT index `i`; the Nyquist index maps to +n/2.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    #[inline]
    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// Wavevector of a flat spectral index.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let (i, j, k) = self.unravel(idx);
        [self.wavenumber(i), self.wavenumber(j), self.wavenumber(k)]
    }

    /// FFT index of a signed wavenumber (must satisfy |k| <= n/2).
    #[inline]
    pub fn fft_index(&self, k: i64) -> usize {
        let n = self.n as i64;
        (((k % n) + n) % n) as usize
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}
