use num_complex::Complex64;

use super::fft::{forward, inverse};
use super::field::{sym_index, Rank, TorusField};
use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Wavevector used for odd derivatives: Nyquist entries are zeroed so that
/// real fields stay real.
#[inline]
pub fn odd_wavevector(grid: GridSpec, idx: usize) -> [f64; 3] {
    let (a, b, c) = grid.unravel(idx);
    let w = |i: usize| {
        if grid.is_nyquist(i) {
            0.0
        } else {
            grid.wavenumber(i) as f64
        }
    };
    [w(a), w(b), w(c)]
}

/// ∂_axis of a scalar array via the spectrum.
pub fn partial(grid: GridSpec, data: &[f64], axis: usize) -> Vec<f64> {
    let mut s = forward(grid, data);
    apply_partial(grid, &mut s, axis);
    inverse(grid, s)
}

fn apply_partial(grid: GridSpec, s: &mut [Complex64], axis: usize) {
    for (idx, c) in s.iter_mut().enumerate() {
        let k = odd_wavevector(grid, idx)[axis];
        *c *= Complex64::new(0.0, k);
    }
}

/// All three first partials of a scalar array, sharing one forward transform.
pub fn gradient_of(grid: GridSpec, data: &[f64]) -> [Vec<f64>; 3] {
    let s = forward(grid, data);
    std::array::from_fn(|axis| {
        let mut t = s.clone();
        apply_partial(grid, &mut t, axis);
        inverse(grid, t)
    })
}

/// Mixed derivative D^r of a scalar array.
pub fn multi_partial(grid: GridSpec, data: &[f64], r: [u32; 3]) -> Vec<f64> {
    let mut s = forward(grid, data);
    for (idx, c) in s.iter_mut().enumerate() {
        let (a, b, d) = grid.unravel(idx);
        let ks = [a, b, d];
        let mut m = Complex64::new(1.0, 0.0);
        for axis in 0..3 {
            if r[axis] == 0 {
                continue;
            }
            let k = if grid.is_nyquist(ks[axis]) && r[axis] % 2 == 1 {
                0.0
            } else {
                grid.wavenumber(ks[axis]) as f64
            };
            m *= Complex64::new(0.0, k).powu(r[axis]);
        }
        *c *= m;
    }
    inverse(grid, s)
}

/// Gradient of a scalar field.
pub fn grad(f: &TorusField) -> Result<TorusField> {
    f.expect_rank(Rank::Scalar)?;
    let g = gradient_of(f.grid(), f.comp(0));
    TorusField::from_components(f.grid(), Rank::Vector, g.to_vec())
}

/// `m[i][j] = ∂_j v_i` for a vector field.
pub fn gradient_matrix(v: &TorusField) -> Result<[[Vec<f64>; 3]; 3]> {
    v.expect_rank(Rank::Vector)?;
    Ok(std::array::from_fn(|i| gradient_of(v.grid(), v.comp(i))))
}

/// Divergence: vector → scalar, or row-wise symmetric tensor → vector.
pub fn div(f: &TorusField) -> Result<TorusField> {
    let grid = f.grid();
    match f.rank() {
        Rank::Vector => {
            let mut acc = vec![Complex64::default(); grid.len()];
            for axis in 0..3 {
                let s = forward(grid, f.comp(axis));
                for (idx, c) in acc.iter_mut().enumerate() {
                    let k = odd_wavevector(grid, idx)[axis];
                    *c += s[idx] * Complex64::new(0.0, k);
                }
            }
            TorusField::from_components(grid, Rank::Scalar, vec![inverse(grid, acc)])
        }
        Rank::Sym => {
            let specs: Vec<Vec<Complex64>> =
                (0..6).map(|c| forward(grid, f.comp(c))).collect();
            let comps = (0..3)
                .map(|i| {
                    let mut acc = vec![Complex64::default(); grid.len()];
                    for (idx, c) in acc.iter_mut().enumerate() {
                        let k = odd_wavevector(grid, idx);
                        for j in 0..3 {
                            *c += specs[sym_index(i, j)][idx] * Complex64::new(0.0, k[j]);
                        }
                    }
                    inverse(grid, acc)
                })
                .collect();
            TorusField::from_components(grid, Rank::Vector, comps)
        }
        Rank::Scalar => Err(Error::RankMismatch {
            expected: "vector or sym3x3",
            found: "scalar",
        }),
    }
}

pub fn curl(v: &TorusField) -> Result<TorusField> {
    v.expect_rank(Rank::Vector)?;
    let grid = v.grid();
    let specs: Vec<Vec<Complex64>> = (0..3).map(|c| forward(grid, v.comp(c))).collect();
    let comps = (0..3)
        .map(|i| {
            let (a, b) = ((i + 1) % 3, (i + 2) % 3);
            let acc = (0..grid.len())
                .map(|idx| {
                    let k = odd_wavevector(grid, idx);
                    Complex64::new(0.0, 1.0) * (specs[b][idx] * k[a] - specs[a][idx] * k[b])
                })
                .collect();
            inverse(grid, acc)
        })
        .collect();
    TorusField::from_components(grid, Rank::Vector, comps)
}

pub fn laplacian(f: &TorusField) -> TorusField {
    let grid = f.grid();
    let comps = f
        .components()
        .iter()
        .map(|c| {
            let mut s = forward(grid, c);
            for (idx, z) in s.iter_mut().enumerate() {
                let k = grid.wavevector(idx);
                *z *= -((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64);
            }
            inverse(grid, s)
        })
        .collect();
    TorusField::from_components(grid, f.rank(), comps).expect("shape preserved")
}

/// Zero every mode with max |k_i| > n/3.
pub fn truncate_two_thirds(f: &TorusField) -> TorusField {
    let grid = f.grid();
    let cut = grid.n() as i64 / 3;
    let comps = f
        .components()
        .iter()
        .map(|c| {
            let mut s = forward(grid, c);
            for (idx, z) in s.iter_mut().enumerate() {
                if grid.wavevector(idx).iter().any(|k| k.abs() > cut) {
                    *z = Complex64::default();
                }
            }
            inverse(grid, s)
        })
        .collect();
    TorusField::from_components(grid, f.rank(), comps).expect("shape preserved")
}

/// u·∇f for scalar or vector `f`, with the pointwise product taken on
/// 2/3-truncated inputs and the result truncated again.
pub fn advect(u: &TorusField, f: &TorusField) -> Result<TorusField> {
    advect_with(u, f, true)
}

/// u·∇f with a plain pointwise product.
pub fn advect_pointwise(u: &TorusField, f: &TorusField) -> Result<TorusField> {
    advect_with(u, f, false)
}

fn advect_with(u: &TorusField, f: &TorusField, dealias: bool) -> Result<TorusField> {
    u.expect_rank(Rank::Vector)?;
    u.grid().check_same(&f.grid())?;
    if f.rank() == Rank::Sym {
        return Err(Error::RankMismatch {
            expected: "scalar or vector",
            found: "sym3x3",
        });
    }
    let grid = f.grid();
    let (u, f) = if dealias {
        (truncate_two_thirds(u), truncate_two_thirds(f))
    } else {
        (u.clone(), f.clone())
    };
    let comps = f
        .components()
        .iter()
        .map(|c| {
            let g = gradient_of(grid, c);
            (0..grid.len())
                .map(|i| u.comp(0)[i] * g[0][i] + u.comp(1)[i] * g[1][i] + u.comp(2)[i] * g[2][i])
                .collect()
        })
        .collect();
    let out = TorusField::from_components(grid, f.rank(), comps)?;
    Ok(if dealias { truncate_two_thirds(&out) } else { out })
}

/// Pointwise product of two scalar fields with 2/3-rule dealiasing.
pub fn dealiased_product(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    a.expect_rank(Rank::Scalar)?;
    b.expect_rank(Rank::Scalar)?;
    a.grid().check_same(&b.grid())?;
    let (a, b) = (truncate_two_thirds(a), truncate_two_thirds(b));
    let data = a.comp(0).iter().zip(b.comp(0)).map(|(x, y)| x * y).collect();
    Ok(truncate_two_thirds(&TorusField::from_components(
        a.grid(),
        Rank::Scalar,
        vec![data],
    )?))
}
