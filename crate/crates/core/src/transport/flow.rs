use super::band::{BandField, BandHistory};
use crate::error::{Error, Result};
use crate::geometry::Mat3;
use crate::par::map_indices;
use crate::spectral::calculus::gradient_matrix;
use crate::spectral::{GridSpec, Rank, TorusField};

/// |det ∇ξ| below this aborts: the scheme lives near the identity.
pub const DET_GUARD: f64 = 0.1;

/// Velocity bands at every RK4 stage time of a backward sweep from `from`
/// through the (descending) `stops`, `substeps` steps per leg.
pub(crate) struct Sweep {
    pub from: f64,
    pub stops: Vec<f64>,
    pub substeps: usize,
    /// Per leg, per step: bands at s, s + h/2, s + h.
    bands: Vec<Vec<[BandField; 3]>>,
    pub zero: bool,
}

impl Sweep {
    pub fn new(u: &dyn BandHistory, from: f64, stops: &[f64], substeps: usize, dx: f64) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::Transport("need at least one substep".into()));
        }
        let mut bands = Vec::with_capacity(stops.len());
        let mut s0 = from;
        let mut zero = true;
        for &stop in stops {
            if stop > s0 {
                return Err(Error::Transport(format!("sweep times must descend: {stop} after {s0}")));
            }
            let h = (stop - s0) / substeps as f64;
            let mut leg = Vec::with_capacity(substeps);
            for j in 0..substeps {
                let s = s0 + j as f64 * h;
                let b = [u.band_at(s)?, u.band_at(s + 0.5 * h)?, u.band_at(s + h)?];
                let speed = b.iter().map(|x| x.majorant()).fold(0.0, f64::max);
                if h.abs() * speed > 0.5 * dx {
                    let need = ((stop - s0).abs() * speed / (0.5 * dx)).ceil() as usize;
                    return Err(Error::Transport(format!(
                        "characteristic step {:.3e} · speed {speed:.3e} exceeds half a cell ({:.3e}); use at least {need} substeps",
                        h.abs(),
                        0.5 * dx
                    )));
                }
                zero &= b.iter().all(|x| x.is_zero());
                leg.push(b);
            }
            bands.push(leg);
            s0 = stop;
        }
        Ok(Self {
            from,
            stops: stops.to_vec(),
            substeps,
            bands,
            zero,
        })
    }

    /// Positions of the characteristic through (from, x) at every stop.
    pub fn trace(&self, x: [f64; 3], mut visit: impl FnMut(usize, &[f64; 3])) {
        let mut y = x;
        let mut s0 = self.from;
        for (leg, &stop) in self.stops.iter().enumerate() {
            if !self.zero {
                let h = (stop - s0) / self.substeps as f64;
                for b in &self.bands[leg] {
                    let k1 = b[0].eval3(&y);
                    let k2 = b[1].eval3(&std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]));
                    let k3 = b[1].eval3(&std::array::from_fn(|i| y[i] + 0.5 * h * k2[i]));
                    let k4 = b[2].eval3(&std::array::from_fn(|i| y[i] + h * k3[i]));
                    for i in 0..3 {
                        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
            }
            visit(leg, &y);
            s0 = stop;
        }
    }
}

/// ξ(t, ·) for the flow with D_{t,l}ξ = 0 and ξ(anchor, x) = x, stored as the
/// periodic displacement x − ξ.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub anchor: f64,
    pub t: f64,
    pub displacement: TorusField,
    /// ∇ξ with entries ∂_j ξ_i.
    pub grad: Vec<Mat3>,
    pub inv: Vec<Mat3>,
    pub det_range: (f64, f64),
    /// max over points and entries of |∇ξ − Id|.
    pub deviation: f64,
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inverse3(m: &Mat3) -> Option<Mat3> {
    let d = det3(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let c = |i: usize, j: usize| {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        let (p, q) = ((j + 1) % 3, (j + 2) % 3);
        m[a][p] * m[b][q] - m[a][q] * m[b][p]
    };
    // inverse = adj / det, adj_ij = cofactor_ji
    Some(std::array::from_fn(|i| std::array::from_fn(|j| c(j, i) / d)))
}

impl FlowMap {
    pub fn identity(grid: GridSpec, anchor: f64, t: f64) -> Self {
        let id = crate::geometry::decomp::IDENTITY;
        Self {
            anchor,
            t,
            displacement: TorusField::zeros(grid, Rank::Vector),
            grad: vec![id; grid.len()],
            inv: vec![id; grid.len()],
            det_range: (1.0, 1.0),
            deviation: 0.0,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.displacement.grid()
    }

    #[inline]
    pub fn xi(&self, idx: usize) -> [f64; 3] {
        let x = self.grid().point(idx);
        let d = self.displacement.vec_at(idx);
        [x[0] - d[0], x[1] - d[1], x[2] - d[2]]
    }

    fn from_displacement(anchor: f64, t: f64, displacement: TorusField) -> Result<Self> {
        let g = gradient_matrix(&displacement)?;
        let len = displacement.grid().len();
        let grad: Vec<Mat3> = (0..len)
            .map(|p| std::array::from_fn(|i| std::array::from_fn(|j| (i == j) as u8 as f64 - g[i][j][p])))
            .collect();
        let mut inv = Vec::with_capacity(len);
        let (mut lo, mut hi, mut dev) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for (p, m) in grad.iter().enumerate() {
            let d = det3(m);
            lo = lo.min(d);
            hi = hi.max(d);
            if !(d > DET_GUARD) {
                return Err(Error::Transport(format!(
                    "det ∇ξ = {d:.3e} at point {p} (t = {t}, anchor {anchor}); flow left the near-identity regime"
                )));
            }
            for i in 0..3 {
                for j in 0..3 {
                    dev = dev.max((m[i][j] - (i == j) as u8 as f64).abs());
                }
            }
            inv.push(inverse3(m).expect("nonzero determinant"));
        }
        Ok(Self {
            anchor,
            t,
            displacement,
            grad,
            inv,
            det_range: (lo, hi),
            deviation: dev,
        })
    }
}

/// Backward characteristics from (t, x) to the anchor with `substeps` RK4 steps,
/// the velocity evaluated exactly from its band at each stage time.
pub fn solve_flow(grid: GridSpec, u: &dyn BandHistory, anchor: f64, t: f64, substeps: usize) -> Result<FlowMap> {
    if t < anchor {
        return Err(Error::Transport(format!("flow requested at t = {t} before its anchor {anchor}")));
    }
    if t == anchor {
        return Ok(FlowMap::identity(grid, anchor, t));
    }
    let sweep = Sweep::new(u, t, &[anchor], substeps, grid.dx())?;
    if sweep.zero {
        return Ok(FlowMap::identity(grid, anchor, t));
    }
    let ends = map_indices(grid.len(), |p| {
        let x = grid.point(p);
        let mut out = [0.0; 3];
        sweep.trace(x, |_, y| out = [x[0] - y[0], x[1] - y[1], x[2] - y[2]]);
        out
    });
    let comps = (0..3).map(|c| ends.iter().map(|e| e[c]).collect()).collect();
    FlowMap::from_displacement(anchor, t, TorusField::from_components(grid, Rank::Vector, comps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::band::Frozen;
    use num_complex::Complex64;

    fn constant(c: [f64; 3]) -> Frozen {
        Frozen(BandField::from_modes(Rank::Vector, vec![([0, 0, 0], c.iter().map(|&x| Complex64::new(x, 0.0)).collect())]).unwrap())
    }

    #[test]
    fn zero_velocity_is_identity() {
        let g = GridSpec::new(8).unwrap();
        let f = solve_flow(g, &Frozen(BandField::zero(Rank::Vector)), 0.0, 0.3, 4).unwrap();
        assert_eq!(f.displacement.sup_norm(), 0.0);
        for p in 0..g.len() {
            assert_eq!(f.xi(p), g.point(p));
        }
    }

    #[test]
    fn constant_velocity_closed_form() {
        let g = GridSpec::new(8).unwrap();
        let c = [0.3, -0.2, 0.1];
        let (t0, t) = (0.1, 0.45);
        let f = solve_flow(g, &constant(c), t0, t, 8).unwrap();
        for p in 0..g.len() {
            let x = g.point(p);
            let xi = f.xi(p);
            for i in 0..3 {
                assert!((xi[i] - (x[i] - c[i] * (t - t0))).abs() <= 1e-10);
            }
        }
        assert!(f.deviation < 1e-12);
    }

    #[test]
    fn shear_against_fine_oracle() {
        // u = v0 (sin x₂, 0, 0): characteristics keep x₂, so ξ₁ = x₁ − v0 sin(x₂)(t − t0);
        // check against the closed form and a 20× finer integration
        let g = GridSpec::new(16).unwrap();
        let v0 = 0.4;
        let band = BandField::from_modes(
            Rank::Vector,
            vec![([0, 1, 0], vec![Complex64::new(0.0, -0.5 * v0), Complex64::default(), Complex64::default()])],
        )
        .unwrap();
        let u = Frozen(band);
        let (t0, t) = (0.0, 0.5);
        let coarse = solve_flow(g, &u, t0, t, 16).unwrap();
        let fine = solve_flow(g, &u, t0, t, 320).unwrap();
        for p in 0..g.len() {
            let x = g.point(p);
            let want = x[0] - v0 * x[1].sin() * (t - t0);
            assert!((coarse.xi(p)[0] - want).abs() < 1e-6);
            assert!((coarse.xi(p)[0] - fine.xi(p)[0]).abs() < 1e-6);
        }
        // volume preserving
        assert!((coarse.det_range.0 - 1.0).abs() < 1e-4 && (coarse.det_range.1 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn cfl_guard_suggests_substeps() {
        let g = GridSpec::new(8).unwrap();
        let err = solve_flow(g, &constant([50.0, 0.0, 0.0]), 0.0, 1.0, 2).unwrap_err();
        assert!(err.to_string().contains("substeps"), "{err}");
    }

    #[test]
    fn inverse_and_det() {
        let m = [[1.1, 0.2, 0.0], [0.05, 0.9, 0.1], [0.0, -0.3, 1.2]];
        let i = inverse3(&m).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let s: f64 = (0..3).map(|k| m[r][k] * i[k][c]).sum();
                assert!((s - (r == c) as u8 as f64).abs() < 1e-14);
            }
        }
        assert!((det3(&m) - (1.1 * (0.9 * 1.2 + 0.03) - 0.2 * (0.05 * 1.2))).abs() < 1e-14);
    }
}
