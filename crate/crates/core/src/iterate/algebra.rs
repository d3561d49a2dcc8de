//! Pointwise tensor algebra on grid fields.

use crate::error::Result;
use crate::par::map_indices;
use crate::spectral::{div, gradient_matrix, sym_index, GridSpec, Rank, TorusField};

/// Field of the given rank from a per-point closure.
pub fn build(grid: GridSpec, rank: Rank, f: impl Fn(usize, &mut [f64]) + Sync) -> TorusField {
    let nc = rank.components();
    let vals = map_indices(grid.len(), |p| {
        let mut out = [0.0; 6];
        f(p, &mut out[..nc]);
        out
    });
    let comps = (0..nc).map(|c| vals.iter().map(|v| v[c]).collect()).collect();
    TorusField::from_components(grid, rank, comps).expect("shape by construction")
}

#[inline]
pub fn sym_get(f: &TorusField, p: usize) -> [[f64; 3]; 3] {
    f.sym_at(p)
}

pub fn dot(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    a.expect_rank(Rank::Vector)?;
    b.expect_rank(Rank::Vector)?;
    a.grid().check_same(&b.grid())?;
    Ok(build(a.grid(), Rank::Scalar, |p, o| {
        o[0] = (0..3).map(|i| a.comp(i)[p] * b.comp(i)[p]).sum()
    }))
}

pub fn norm_sq(a: &TorusField) -> Result<TorusField> {
    dot(a, a)
}

/// a⊗b + b⊗a.
pub fn odot(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    a.expect_rank(Rank::Vector)?;
    b.expect_rank(Rank::Vector)?;
    a.grid().check_same(&b.grid())?;
    Ok(build(a.grid(), Rank::Sym, |p, o| {
        let (x, y) = (a.vec_at(p), b.vec_at(p));
        for i in 0..3 {
            for j in i..3 {
                o[sym_index(i, j)] = x[i] * y[j] + x[j] * y[i];
            }
        }
    }))
}

pub fn outer_self(a: &TorusField) -> Result<TorusField> {
    Ok(odot(a, a)?.scale(0.5))
}

/// M − (Tr M/3) Id.
pub fn traceless(m: &TorusField) -> Result<TorusField> {
    m.expect_rank(Rank::Sym)?;
    Ok(build(m.grid(), Rank::Sym, |p, o| {
        let tr = (m.comp(0)[p] + m.comp(3)[p] + m.comp(5)[p]) / 3.0;
        for c in 0..6 {
            o[c] = m.comp(c)[p];
        }
        o[0] -= tr;
        o[3] -= tr;
        o[5] -= tr;
    }))
}

/// a⊗b + b⊗a − (2/3)(a·b) Id.
pub fn odot_traceless(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    traceless(&odot(a, b)?)
}

/// s·f for a scalar field s and any f.
pub fn times(s: &TorusField, f: &TorusField) -> Result<TorusField> {
    s.expect_rank(Rank::Scalar)?;
    s.grid().check_same(&f.grid())?;
    let nc = f.rank().components();
    Ok(build(f.grid(), f.rank(), |p, o| {
        for c in 0..nc {
            o[c] = s.comp(0)[p] * f.comp(c)[p];
        }
    }))
}

/// M v for a symmetric M.
pub fn mat_vec(m: &TorusField, v: &TorusField) -> Result<TorusField> {
    m.expect_rank(Rank::Sym)?;
    v.expect_rank(Rank::Vector)?;
    m.grid().check_same(&v.grid())?;
    Ok(build(v.grid(), Rank::Vector, |p, o| {
        let (a, x) = (m.sym_at(p), v.vec_at(p));
        for i in 0..3 {
            o[i] = a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2];
        }
    }))
}

/// Σ_ij A_ij ∂_j b_i, i.e. A:∇bᵀ for symmetric A.
pub fn contract_grad(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    a.expect_rank(Rank::Sym)?;
    a.grid().check_same(&b.grid())?;
    let g = gradient_matrix(b)?;
    Ok(build(a.grid(), Rank::Scalar, |p, o| {
        let m = a.sym_at(p);
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += m[i][j] * g[i][j][p];
            }
        }
        o[0] = s;
    }))
}

/// div(a⊗b), i.e. the vector with entries ∂_j(a_i b_j).
pub fn div_outer(a: &TorusField, b: &TorusField) -> Result<TorusField> {
    a.expect_rank(Rank::Vector)?;
    let comps = (0..3)
        .map(|i| Ok(div(&times(&a.component_field(i), b)?)?.into_components().remove(0)))
        .collect::<Result<Vec<_>>>()?;
    TorusField::from_components(a.grid(), Rank::Vector, comps)
}

pub fn identity(grid: GridSpec, c: f64) -> TorusField {
    TorusField::constant(grid, Rank::Sym, &[c, 0.0, 0.0, c, 0.0, c])
}
