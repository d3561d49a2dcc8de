use super::calculus::multi_partial;
use super::fft::forward;
use super::field::{Rank, TorusField};

/// Multi-indices of order `j` in three variables.
pub fn multi_indices(j: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in (0..=j).rev() {
        for b in (0..=j - a).rev() {
            out.push([a, b, j - a - b]);
        }
    }
    out
}

fn pointwise_magnitude(rank: Rank, comps: &[Vec<f64>], i: usize) -> f64 {
    match rank {
        Rank::Sym => {
            let c = |a: usize| comps[a][i];
            (c(0).powi(2)
                + c(3).powi(2)
                + c(5).powi(2)
                + 2.0 * (c(1).powi(2) + c(2).powi(2) + c(4).powi(2)))
            .sqrt()
        }
        _ => comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt(),
    }
}

fn derivative(field: &TorusField, r: [u32; 3]) -> Vec<Vec<f64>> {
    let grid = field.grid();
    field
        .components()
        .iter()
        .map(|c| {
            if r == [0, 0, 0] {
                c.clone()
            } else {
                multi_partial(grid, c, r)
            }
        })
        .collect()
}

/// [f]_j = max over |r| = j of sup |D^r f|.
pub fn holder_seminorm(field: &TorusField, j: u32) -> f64 {
    let grid = field.grid();
    multi_indices(j)
        .into_iter()
        .map(|r| {
            let d = derivative(field, r);
            (0..grid.len())
                .map(|i| pointwise_magnitude(field.rank(), &d, i))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

// Difference-quotient estimate of [g]_δ over axis offsets of 1, 2, 4, … cells.
fn difference_quotient(field: &TorusField, comps: &[Vec<f64>], frac: f64) -> f64 {
    let grid = field.grid();
    let n = grid.n();
    let mut best = 0.0_f64;
    let mut h = 1;
    while h <= n / 2 {
        let dist = (h as f64 * grid.dx()).powf(frac);
        for axis in 0..3 {
            for idx in 0..grid.len() {
                let (mut a, mut b, mut c) = grid.unravel(idx);
                match axis {
                    0 => a = (a + h) % n,
                    1 => b = (b + h) % n,
                    _ => c = (c + h) % n,
                }
                let jdx = grid.index(a, b, c);
                let mut sq = 0.0;
                for (c, v) in comps.iter().enumerate() {
                    let d = v[idx] - v[jdx];
                    let w = if field.rank() == Rank::Sym && matches!(c, 1 | 2 | 4) { 2.0 } else { 1.0 };
                    sq += w * d * d;
                }
                best = best.max(sq.sqrt() / dist);
            }
        }
        h *= 2;
    }
    best
}

/// Grid estimate of ‖f‖_{N+frac}; zero for N < 0.
pub fn holder_norm(field: &TorusField, n: i32, frac: f64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let n = n as u32;
    let mut norm = (0..=n)
        .map(|j| holder_seminorm(field, j))
        .fold(0.0, f64::max);
    if frac > 0.0 {
        for r in multi_indices(n) {
            let d = derivative(field, r);
            norm = norm.max(difference_quotient(field, &d, frac));
        }
    }
    norm
}

/// Σ_k |f̂_k| max(1, |k|_∞)^N, an upper bound on ‖f‖_N for trigonometric polynomials.
pub fn fourier_majorant_norm(field: &TorusField, n: u32) -> f64 {
    let grid = field.grid();
    let mut total = 0.0;
    let mut weights = vec![0.0; grid.len()];
    for (idx, w) in weights.iter_mut().enumerate() {
        let k = grid.wavevector(idx);
        let kinf = k.iter().map(|x| x.abs()).max().unwrap_or(0).max(1) as f64;
        *w = kinf.powi(n as i32);
    }
    let mut per_point = vec![0.0; grid.len()];
    for c in field.components() {
        let s = forward(grid, c);
        for (idx, z) in s.iter().enumerate() {
            per_point[idx] += z.norm_sqr();
        }
    }
    for (idx, p) in per_point.iter().enumerate() {
        total += p.sqrt() * weights[idx];
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;

    #[test]
    fn constants() {
        let f = TorusField::constant(GridSpec::new(8).unwrap(), Rank::Scalar, &[-2.5]);
        assert!((holder_norm(&f, 0, 0.0) - 2.5).abs() < 1e-15);
        assert!(holder_seminorm(&f, 1) < 1e-14);
        assert_eq!(holder_norm(&f, -1, 0.5), 0.0);
    }

    #[test]
    fn sine_sup() {
        let f = TorusField::scalar_fn(GridSpec::new(32).unwrap(), |x| x[0].sin());
        assert!((holder_norm(&f, 0, 0.0) - 1.0).abs() < 1e-3);
        assert!((holder_norm(&f, 2, 0.0) - 1.0).abs() < 1e-3);
        // Lipschitz quotient of sin is at most 1
        let q = holder_norm(&f, 0, 0.999);
        assert!(q <= 1.01 && q > 0.9);
    }

    #[test]
    fn majorant_dominates() {
        let f = TorusField::scalar_fn(GridSpec::new(16).unwrap(), |x| {
            (3.0 * x[0]).sin() + 0.5 * (x[1] + x[2]).cos()
        });
        for n in 0..3 {
            assert!(fourier_majorant_norm(&f, n) >= holder_norm(&f, n as i32, 0.0) - 1e-12);
        }
        assert!((fourier_majorant_norm(&f, 0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(0).len(), 1);
        assert_eq!(multi_indices(3).len(), 10);
    }
}
