use num_complex::Complex64;

use super::calculus::odd_wavevector;
use super::fft::{forward, inverse};
use super::field::{sym_index, Rank, TorusField};
use crate::error::Result;

/// Symmetric traceless 𝓡 with div 𝓡v = v − ⨍v.
///
/// R̂ = (−i/|k|²)[v̂⊗k + k⊗v̂ − ½(k·v̂)(k⊗k/|k|² + Id)]
pub fn antidiv_tensor(v: &TorusField) -> Result<TorusField> {
    v.expect_rank(Rank::Vector)?;
    let grid = v.grid();
    let vh: Vec<Vec<Complex64>> = (0..3).map(|c| forward(grid, v.comp(c))).collect();
    let mut out: Vec<Vec<Complex64>> = (0..6)
        .map(|_| vec![Complex64::default(); grid.len()])
        .collect();
    for idx in 0..grid.len() {
        let k = odd_wavevector(grid, idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            continue;
        }
        let w = [vh[0][idx], vh[1][idx], vh[2][idx]];
        let kv = w[0] * k[0] + w[1] * k[1] + w[2] * k[2];
        let pre = Complex64::new(0.0, -1.0 / k2);
        for i in 0..3 {
            for j in i..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                let t = w[i] * k[j] + w[j] * k[i] - kv * 0.5 * (k[i] * k[j] / k2 + id);
                out[sym_index(i, j)][idx] = pre * t;
            }
        }
    }
    TorusField::from_components(
        grid,
        Rank::Sym,
        out.into_iter().map(|s| inverse(grid, s)).collect(),
    )
}

/// R̄g = −∇(−Δ)⁻¹g, so that div R̄g = g − ⨍g.
pub fn antidiv_scalar(g: &TorusField) -> Result<TorusField> {
    g.expect_rank(Rank::Scalar)?;
    let grid = g.grid();
    let gh = forward(grid, g.comp(0));
    let comps = (0..3)
        .map(|axis| {
            let s = (0..grid.len())
                .map(|idx| {
                    let k = odd_wavevector(grid, idx);
                    let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                    if k2 == 0.0 {
                        Complex64::default()
                    } else {
                        gh[idx] * Complex64::new(0.0, -k[axis] / k2)
                    }
                })
                .collect();
            inverse(grid, s)
        })
        .collect();
    TorusField::from_components(grid, Rank::Vector, comps)
}
