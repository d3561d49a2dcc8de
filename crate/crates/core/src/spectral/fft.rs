use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::{Rank, TorusField};
use super::grid::GridSpec;
use crate::error::Result;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, Arc<Plans>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(n: usize) -> Arc<Plans> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry(n)
            .or_insert_with(|| {
                Arc::new(Plans {
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    })
}

// In-place 3D transform over a C-order n³ buffer, one axis at a time.
fn transform3(data: &mut [Complex64], n: usize, fft: &dyn Fft<f64>) {
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // last axis: contiguous rows
    fft.process_with_scratch(data, &mut scratch);
    let mut line = vec![Complex64::default(); n];
    // middle axis
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                line[j] = data[(i * n + j) * n + k];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for j in 0..n {
                data[(i * n + j) * n + k] = line[j];
            }
        }
    }
    // first axis
    let plane = n * n;
    for jk in 0..plane {
        for i in 0..n {
            line[i] = data[i * plane + jk];
        }
        fft.process_with_scratch(&mut line, &mut scratch);
        for i in 0..n {
            data[i * plane + jk] = line[i];
        }
    }
}

/// Forward transform of real data, normalised so that coefficient (0,0,0) is the mean.
pub fn forward(grid: GridSpec, data: &[f64]) -> Vec<Complex64> {
    let n = grid.n();
    let p = plans(n);
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform3(&mut buf, n, &*p.forward);
    let s = 1.0 / grid.len() as f64;
    buf.iter_mut().for_each(|c| *c *= s);
    buf
}

/// Inverse of [`forward`]; the imaginary part is discarded.
pub fn inverse(grid: GridSpec, mut coeffs: Vec<Complex64>) -> Vec<f64> {
    let n = grid.n();
    let p = plans(n);
    transform3(&mut coeffs, n, &*p.inverse);
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Fourier coefficients of every component of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: GridSpec,
    pub rank: Rank,
    pub comps: Vec<Vec<Complex64>>,
}

impl Spectrum {
    pub fn zeros(grid: GridSpec, rank: Rank) -> Self {
        Self {
            grid,
            rank,
            comps: (0..rank.components())
                .map(|_| vec![Complex64::default(); grid.len()])
                .collect(),
        }
    }

    /// Multiply every coefficient by a real multiplier depending on the wavevector.
    pub fn apply_multiplier(&mut self, m: impl Fn([i64; 3]) -> f64) {
        let grid = self.grid;
        for idx in 0..grid.len() {
            let w = m(grid.wavevector(idx));
            for c in self.comps.iter_mut() {
                c[idx] *= w;
            }
        }
    }
}

pub fn to_spectrum(field: &TorusField) -> Spectrum {
    let grid = field.grid();
    Spectrum {
        grid,
        rank: field.rank(),
        comps: field
            .components()
            .iter()
            .map(|c| forward(grid, c))
            .collect(),
    }
}

pub fn from_spectrum(spec: Spectrum) -> Result<TorusField> {
    let grid = spec.grid;
    let comps = spec.comps.into_iter().map(|c| inverse(grid, c)).collect();
    TorusField::from_components(grid, spec.rank, comps)
}
