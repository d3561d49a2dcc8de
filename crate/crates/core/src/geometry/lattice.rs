use std::f64::consts::PI;

use super::families::{primitive, IVec3};
use crate::error::{Error, Result};

/// Periodic lines of direction f in [0, 2π)³, seen in the plane ⊥ f:
/// their traces form the 2D lattice P⊥(2πZ³).
#[derive(Debug, Clone)]
pub struct TransverseLattice {
    pub direction: IVec3,
    pub unit: [f64; 3],
    /// Orthonormal basis (e₁, e₂) of the plane ⊥ f.
    pub frame: [[f64; 3]; 2],
    /// Reduced lattice basis in (e₁, e₂) coordinates.
    pub basis: [[f64; 2]; 2],
    inverse: [[f64; 2]; 2],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(&a, &a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

impl TransverseLattice {
    pub fn new(direction: IVec3) -> Result<Self> {
        if direction == [0, 0, 0] {
            return Err(Error::Pipe("zero direction".into()));
        }
        let p = primitive(direction);
        let fl = p.map(|x| x as f64);
        let unit = normalize(fl);
        // a reference axis far from f
        let axis = (0..3)
            .min_by(|&i, &j| unit[i].abs().total_cmp(&unit[j].abs()))
            .unwrap();
        let mut r = [0.0; 3];
        r[axis] = 1.0;
        let e1 = normalize(cross(&unit, &r));
        let e2 = cross(&unit, &e1);
        let frame = [e1, e2];
        let project = |g: [f64; 3]| [dot(&g, &e1), dot(&g, &e2)];
        let covolume = (2.0 * PI).powi(2) / dot(&fl, &fl).sqrt();

        let big = p.iter().map(|x| x.abs()).max().unwrap() + 2;
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for a in -big..=big {
            for b in -big..=big {
                for c in -big..=big {
                    let v = project([2.0 * PI * a as f64, 2.0 * PI * b as f64, 2.0 * PI * c as f64]);
                    if v[0].hypot(v[1]) > 1e-9 {
                        pts.push(v);
                    }
                }
            }
        }
        let len = |v: &[f64; 2]| v[0].hypot(v[1]);
        pts.sort_by(|u, v| len(u).total_cmp(&len(v)).then(u[0].total_cmp(&v[0])).then(u[1].total_cmp(&v[1])));
        let v1 = pts[0];
        let v2 = *pts
            .iter()
            .find(|v| (v1[0] * v[1] - v1[1] * v[0]).abs() > 1e-9 * len(&v1) * len(v))
            .ok_or_else(|| Error::Pipe("degenerate transverse lattice".into()))?;
        let det = v1[0] * v2[1] - v1[1] * v2[0];
        if (det.abs() - covolume).abs() > 1e-9 * covolume {
            return Err(Error::Pipe(format!(
                "transverse lattice for {direction:?} has covolume {} instead of {covolume}",
                det.abs()
            )));
        }
        let inverse = [[v2[1] / det, -v2[0] / det], [-v1[1] / det, v1[0] / det]];
        Ok(Self {
            direction: p,
            unit,
            frame,
            basis: [v1, v2],
            inverse,
        })
    }

    /// Covolume (2π)²/|f| of the trace lattice.
    pub fn covolume(&self) -> f64 {
        let [a, b] = self.basis;
        (a[0] * b[1] - a[1] * b[0]).abs()
    }

    /// Length of the closed line, 2π|f|.
    pub fn line_length(&self) -> f64 {
        let f = self.direction.map(|x| x as f64);
        2.0 * PI * dot(&f, &f).sqrt()
    }

    /// Shortest nonzero lattice vector.
    pub fn min_spacing(&self) -> f64 {
        self.basis[0][0].hypot(self.basis[0][1])
    }

    #[inline]
    pub fn project(&self, y: &[f64; 3]) -> [f64; 2] {
        [dot(y, &self.frame[0]), dot(y, &self.frame[1])]
    }

    /// Representative of w modulo the lattice closest to the origin.
    #[inline]
    pub fn reduce(&self, w: [f64; 2]) -> [f64; 2] {
        let inv = &self.inverse;
        let c0 = (inv[0][0] * w[0] + inv[0][1] * w[1]).round();
        let c1 = (inv[1][0] * w[0] + inv[1][1] * w[1]).round();
        let [b0, b1] = self.basis;
        let base = [w[0] - c0 * b0[0] - c1 * b1[0], w[1] - c0 * b0[1] - c1 * b1[1]];
        let mut best = base;
        let mut best_n = base[0] * base[0] + base[1] * base[1];
        for i in -1..=1 {
            for j in -1..=1 {
                if i == 0 && j == 0 {
                    continue;
                }
                let (fi, fj) = (i as f64, j as f64);
                let c = [base[0] + fi * b0[0] + fj * b1[0], base[1] + fi * b0[1] + fj * b1[1]];
                let n = c[0] * c[0] + c[1] * c[1];
                if n < best_n {
                    best = c;
                    best_n = n;
                }
            }
        }
        best
    }

    /// Transverse offset of y from the line through the origin, minimal image.
    #[inline]
    pub fn offset(&self, y: &[f64; 3]) -> [f64; 2] {
        self.reduce(self.project(y))
    }
}

/// Minimal distance between the periodic lines p + ℝf and q + ℝg on the torus.
pub fn line_distance(f: &TransverseLattice, p: &[f64; 3], g: &TransverseLattice, q: &[f64; 3]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
    let fi = f.direction;
    let gi = g.direction;
    let c = [
        fi[1] * gi[2] - fi[2] * gi[1],
        fi[2] * gi[0] - fi[0] * gi[2],
        fi[0] * gi[1] - fi[1] * gi[0],
    ];
    if c == [0, 0, 0] {
        let w = f.offset(&d);
        return w[0].hypot(w[1]);
    }
    let period = {
        let gcd = |mut a: i64, mut b: i64| {
            (a, b) = (a.abs(), b.abs());
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a
        };
        2.0 * PI * gcd(gcd(c[0], c[1]), c[2]) as f64
    };
    let cf = c.map(|x| x as f64);
    let s = dot(&d, &cf);
    let r = s - period * (s / period).round();
    r.abs() / dot(&cf, &cf).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_lattice() {
        let l = TransverseLattice::new([0, 0, 1]).unwrap();
        assert!((l.covolume() - 4.0 * PI * PI).abs() < 1e-9);
        assert!((l.min_spacing() - 2.0 * PI).abs() < 1e-12);
        let w = l.offset(&[2.0 * PI + 0.1, -0.2, 5.0]);
        assert!((w[0].hypot(w[1]) - 0.1f64.hypot(0.2)).abs() < 1e-12);
    }

    #[test]
    fn diagonal_lattice() {
        let l = TransverseLattice::new([1, 1, 1]).unwrap();
        assert!((l.covolume() - 4.0 * PI * PI / 3f64.sqrt()).abs() < 1e-9);
        // translates by 2π e_i are lattice vectors
        for i in 0..3 {
            let mut y = [0.3, -0.1, 0.2];
            let base = l.offset(&y);
            y[i] += 2.0 * PI;
            let w = l.offset(&y);
            assert!((w[0] - base[0]).abs() < 1e-12 && (w[1] - base[1]).abs() < 1e-12);
        }
        // moving along the line leaves the offset unchanged
        let w0 = l.offset(&[0.1, 0.2, 0.3]);
        let w1 = l.offset(&[1.1, 1.2, 1.3]);
        assert!((w0[0] - w1[0]).abs() < 1e-12);
    }

    #[test]
    fn skew_distance_oracle() {
        // x-axis and the line (0, t, 1) are 1 apart
        let fx = TransverseLattice::new([1, 0, 0]).unwrap();
        let fy = TransverseLattice::new([0, 1, 0]).unwrap();
        let d = line_distance(&fx, &[0.0; 3], &fy, &[0.0, 0.0, 1.0]);
        assert!((d - 1.0).abs() < 1e-12);
        // periodic image at z = 1 − 2π is farther
        let d = line_distance(&fx, &[0.0; 3], &fy, &[0.0, 0.0, 2.0 * PI - 0.5]);
        assert!((d - 0.5).abs() < 1e-12);
        // parallel lines
        let d = line_distance(&fx, &[0.0; 3], &fx, &[3.0, 0.3, 0.4]);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn brute_force_distance() {
        let f = TransverseLattice::new([1, 2, 0]).unwrap();
        let g = TransverseLattice::new([0, 1, -1]).unwrap();
        let p = [0.3, 1.0, -0.4];
        let q = [2.0, 0.1, 0.7];
        let fast = line_distance(&f, &p, &g, &q);
        // sample the lines densely over several periods
        let mut best = f64::INFINITY;
        let fd = [1.0, 2.0, 0.0];
        let gd = [0.0, 1.0, -1.0];
        for i in 0..4000 {
            let s = i as f64 * 2.0 * PI / 4000.0;
            let x = [p[0] + s * fd[0], p[1] + s * fd[1], p[2] + s * fd[2]];
            for j in 0..400 {
                let t = j as f64 * 2.0 * PI / 400.0;
                let mut dv = [0.0; 3];
                for c in 0..3 {
                    let r = q[c] + t * gd[c] - x[c];
                    dv[c] = r - 2.0 * PI * (r / (2.0 * PI)).round();
                }
                best = best.min(dot(&dv, &dv).sqrt());
            }
        }
        assert!(fast <= best + 1e-9 && best - fast < 0.02);
    }
}
