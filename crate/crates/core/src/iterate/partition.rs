use std::f64::consts::PI;

use crate::bump::smooth_step;
use crate::error::{Error, Result};

/// θ₀⁶ on the rescaled time axis: support [−1/8, 9/8], ≡ 1 on [1/8, 7/8],
/// and Σ_m θ₀⁶(τ − m) = 1.
pub fn theta0_pow6(tau: f64) -> f64 {
    smooth_step(4.0 * (tau + 0.125)) * (1.0 - smooth_step(4.0 * (tau - 0.875)))
}

/// One-dimensional χ⁶ in cell units: support (−9/16, 9/16), ≡ 1 on [−7/16, 7/16].
pub fn chi1_pow6(s: f64) -> f64 {
    smooth_step(8.0 * (s + 0.5625)) * (1.0 - smooth_step(8.0 * (s - 0.4375)))
}

/// Time cells of length ε and space cells of side 2π/`cells`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    pub eps: f64,
    /// Cells per axis, a multiple of 3 so that the class n mod 3 is periodic.
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Reduced into 0..cells on every axis.
    pub n: [usize; 3],
    pub chi6: f64,
}

impl Partition {
    pub fn new(eps: f64, mu: f64) -> Result<Self> {
        if !(eps > 0.0 && mu > 0.0) {
            return Err(Error::Parameter(format!("partition needs ε, μ > 0 (got {eps}, {mu})")));
        }
        let cells = 3 * (1.0 / (3.0 * mu)).ceil() as usize;
        Ok(Self { eps, cells })
    }

    /// The spatial scale actually used: 1/cells, so that cells tile the period.
    pub fn mu_eff(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn anchor(&self, m: i64) -> f64 {
        self.eps * (m as f64 - 0.125)
    }

    pub fn theta6(&self, m: i64, t: f64) -> f64 {
        theta0_pow6(t / self.eps - m as f64)
    }

    /// Time cells alive at t with their θ⁶ weights (at most two).
    pub fn active_times(&self, t: f64) -> Vec<(i64, f64)> {
        let tau = t / self.eps;
        let m0 = tau.floor() as i64;
        (m0 - 1..=m0 + 1)
            .filter_map(|m| {
                let w = self.theta6(m, t);
                (w > 0.0).then_some((m, w))
            })
            .collect()
    }

    /// Cells whose χ is nonzero at the (torus) point ξ, with χ⁶ weights.
    pub fn active_cells(&self, xi: &[f64; 3], out: &mut Vec<Cell>) {
        out.clear();
        let nc = self.cells as i64;
        let mut axis: [[(i64, f64); 2]; 3] = [[(0, 0.0); 2]; 3];
        let mut count = [0usize; 3];
        for a in 0..3 {
            let s = xi[a].rem_euclid(2.0 * PI) * self.cells as f64 / (2.0 * PI);
            let r = s.round() as i64;
            for n in r - 1..=r + 1 {
                let w = chi1_pow6(s - n as f64);
                if w > 0.0 && count[a] < 2 {
                    axis[a][count[a]] = (n.rem_euclid(nc), w);
                    count[a] += 1;
                }
            }
        }
        for &(i, wi) in &axis[0][..count[0]] {
            for &(j, wj) in &axis[1][..count[1]] {
                for &(k, wk) in &axis[2][..count[2]] {
                    out.push(Cell {
                        n: [i as usize, j as usize, k as usize],
                        chi6: wi * wj * wk,
                    });
                }
            }
        }
    }

    /// Cyclic |n − n′|_∞ ≤ 1.
    pub fn neighbours(&self, a: &[usize; 3], b: &[usize; 3]) -> bool {
        (0..3).all(|i| {
            let d = a[i].abs_diff(b[i]);
            d.min(self.cells - d) <= 1
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_partition_of_unity() {
        let p = Partition::new(0.01, 0.2).unwrap();
        for i in 0..2000 {
            let t = -0.013 + i as f64 * 1.37e-5;
            let s: f64 = p.active_times(t).iter().map(|x| x.1).sum();
            assert!((s - 1.0).abs() <= 1e-12, "{t}: {s}");
            assert!(p.active_times(t).len() <= 2);
        }
        // θ_m ≡ 1 on [ε(m+1/8), ε(m+7/8)]
        for i in 0..=100 {
            let t = 0.01 * (3.0 + 0.125 + 0.75 * i as f64 / 100.0);
            assert_eq!(p.theta6(3, t), 1.0);
        }
        assert_eq!(p.theta6(3, 0.01 * (3.0 - 0.125)), 0.0);
        assert_eq!(p.theta6(3, 0.01 * (4.0 + 0.125)), 0.0);
    }

    #[test]
    fn space_partition_of_unity() {
        let p = Partition::new(0.01, 0.2236).unwrap();
        assert_eq!(p.cells, 6);
        let mut cells = Vec::new();
        let g = crate::spectral::GridSpec::new(32).unwrap();
        for idx in 0..g.len() {
            let x = g.point(idx);
            for shift in [0.0, 0.013, -7.1] {
                let y = x.map(|c| c + shift);
                p.active_cells(&y, &mut cells);
                let s: f64 = cells.iter().map(|c| c.chi6).sum();
                assert!((s - 1.0).abs() <= 1e-12);
                assert!(cells.len() <= 8);
            }
        }
    }

    #[test]
    fn cyclic_neighbours() {
        let p = Partition { eps: 1.0, cells: 6 };
        assert!(p.neighbours(&[0, 0, 0], &[5, 1, 0]));
        assert!(!p.neighbours(&[0, 0, 0], &[2, 0, 0]));
    }
}
