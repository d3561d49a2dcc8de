use std::f64::consts::PI;

use super::families::{DirectionFamilies, IVec3, CLASS_COUNT};
use super::lattice::TransverseLattice;
use crate::error::{Error, Result};

/// Directions per class: six stress directions then four flux directions.
pub const SLOTS: usize = 10;
/// Number of candidate shifts tried per line.
const CANDIDATES: usize = 2048;

/// s_I = s_{m,n} + p_{n,f} with s_{m,n} = `cell[m mod 2][class(n)]` and
/// p_{n,f} = `class[class(n)][slot(f)]`; both are periodic in n by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTable {
    pub class: Vec<[[f64; 3]; SLOTS]>,
    pub cell: [Vec<[f64; 3]>; 2],
    /// Smallest axis distance between lines of the same time parity.
    pub same_separation: f64,
    /// Smallest axis distance between lines of opposite time parity.
    pub cross_separation: f64,
    /// Drift allowance the table was optimised for.
    pub margin: f64,
}

impl ShiftTable {
    #[inline]
    pub fn shift(&self, m: i64, class: usize, slot: usize) -> [f64; 3] {
        let s = self.cell[m.rem_euclid(2) as usize][class];
        let p = self.class[class][slot];
        [s[0] + p[0], s[1] + p[1], s[2] + p[2]]
    }

    /// Largest tube radius keeping all concurrently active pipes disjoint when
    /// pipes of neighbouring time slots may drift by `margin` relative to each other.
    pub fn max_tube_radius(&self, margin: f64) -> f64 {
        (0.5 * self.same_separation).min(0.5 * (self.cross_separation - margin))
    }

    /// Fails when tubes of radius η/10 would touch.
    pub fn validate(&self, eta: f64, margin: f64) -> Result<()> {
        let r = eta / 10.0;
        let limit = self.max_tube_radius(margin);
        if r >= limit {
            return Err(Error::Shifts(format!(
                "tube radius {r:.3e} exceeds the admissible {limit:.3e} \
                 (separations {:.3e}/{:.3e}, drift margin {margin:.3e})",
                self.same_separation, self.cross_separation
            )));
        }
        Ok(())
    }
}

struct Line {
    lattice: TransverseLattice,
}

struct PairGeometry {
    normal: [f64; 3],
    inv_norm: f64,
    period: f64,
    parallel: bool,
}

fn pair_geometry(f: IVec3, g: IVec3) -> PairGeometry {
    let c = [
        f[1] * g[2] - f[2] * g[1],
        f[2] * g[0] - f[0] * g[2],
        f[0] * g[1] - f[1] * g[0],
    ];
    if c == [0, 0, 0] {
        return PairGeometry {
            normal: [0.0; 3],
            inv_norm: 0.0,
            period: 0.0,
            parallel: true,
        };
    }
    let gcd = |mut a: i64, mut b: i64| {
        (a, b) = (a.abs(), b.abs());
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let cf = c.map(|x| x as f64);
    PairGeometry {
        normal: cf,
        inv_norm: 1.0 / (cf[0] * cf[0] + cf[1] * cf[1] + cf[2] * cf[2]).sqrt(),
        period: 2.0 * PI * gcd(gcd(c[0], c[1]), c[2]) as f64,
        parallel: false,
    }
}

#[inline]
fn distance(geo: &PairGeometry, line: &Line, d: [f64; 3]) -> f64 {
    if geo.parallel {
        let w = line.lattice.offset(&d);
        return w[0].hypot(w[1]);
    }
    let s = d[0] * geo.normal[0] + d[1] * geo.normal[1] + d[2] * geo.normal[2];
    (s - geo.period * (s / geo.period).round()).abs() * geo.inv_norm
}

// Additive recurrence with the root of x⁴ = x + 1 (the R₃ sequence):
// well spread and incommensurate with the integer line directions.
fn candidates() -> Vec<[f64; 3]> {
    let mut g = 1.3_f64;
    for _ in 0..60 {
        g = (1.0 + g).powf(1.0 / 4.0);
    }
    let alpha = [1.0 / g, 1.0 / (g * g), 1.0 / (g * g * g)];
    (0..CANDIDATES)
        .map(|i| {
            let t = i as f64;
            std::array::from_fn(|c| 2.0 * PI * (t * alpha[c]).fract())
        })
        .collect()
}

fn slot_directions(families: &DirectionFamilies) -> Vec<IVec3> {
    let mut dirs = Vec::with_capacity(CLASS_COUNT * SLOTS);
    for j in 0..CLASS_COUNT {
        dirs.extend_from_slice(&families.stress[j].dirs);
        dirs.extend_from_slice(&families.flux[j].dirs);
    }
    dirs
}

/// Deterministic greedy max-min placement. Each of the 270 lines in turn takes
/// the first candidate (in sequence order) maximising its distance to the lines
/// already placed; then, class by class, the odd-parity cell offset is chosen to
/// maximise min(distance to even lines − margin, distance to odd lines placed so far).
pub fn choose_shifts(families: &DirectionFamilies, margin: f64) -> Result<ShiftTable> {
    let dirs = slot_directions(families);
    let lines: Vec<Line> = dirs
        .iter()
        .map(|&f| TransverseLattice::new(f).map(|lattice| Line { lattice }))
        .collect::<Result<_>>()?;
    let n = dirs.len();
    let geo: Vec<Vec<PairGeometry>> = (0..n)
        .map(|i| (0..n).map(|j| pair_geometry(dirs[i], dirs[j])).collect())
        .collect();
    let cands = candidates();
    let sub = |a: &[f64; 3], b: &[f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let add = |a: &[f64; 3], b: &[f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];

    let mut even: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut same = f64::INFINITY;
    for i in 0..n {
        let mut best = (f64::NEG_INFINITY, [0.0; 3]);
        for c in &cands {
            let mut worst = f64::INFINITY;
            for (j, p) in even.iter().enumerate() {
                worst = worst.min(distance(&geo[j][i], &lines[j], sub(c, p)));
                if worst <= best.0 {
                    break;
                }
            }
            if worst > best.0 {
                best = (worst, *c);
            }
        }
        if i > 0 {
            same = same.min(best.0);
        }
        even.push(best.1);
    }

    let mut odd: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(CLASS_COUNT);
    let mut cross = f64::INFINITY;
    for class in 0..CLASS_COUNT {
        let mut best = (f64::NEG_INFINITY, [0.0; 3], 0.0, 0.0);
        for c in &cands {
            let (mut worst, mut dc, mut ds) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
            'lines: for slot in 0..SLOTS {
                let i = class * SLOTS + slot;
                let moved = add(&even[i], c);
                for j in 0..n {
                    let d = distance(&geo[j][i], &lines[j], sub(&moved, &even[j]));
                    dc = dc.min(d);
                    worst = worst.min(d - margin);
                    if worst <= best.0 {
                        break 'lines;
                    }
                }
                for (j, p) in odd.iter().enumerate() {
                    let d = distance(&geo[j][i], &lines[j], sub(&moved, p));
                    ds = ds.min(d);
                    worst = worst.min(d);
                    if worst <= best.0 {
                        break 'lines;
                    }
                }
            }
            if worst > best.0 {
                best = (worst, *c, dc, ds);
            }
        }
        cross = cross.min(best.2);
        same = same.min(best.3);
        for slot in 0..SLOTS {
            odd.push(add(&even[class * SLOTS + slot], &best.1));
        }
        offsets.push(best.1);
    }
    let table = ShiftTable {
        class: (0..CLASS_COUNT)
            .map(|j| std::array::from_fn(|s| even[j * SLOTS + s]))
            .collect(),
        cell: [vec![[0.0; 3]; CLASS_COUNT], offsets],
        same_separation: same,
        cross_separation: cross,
        margin,
    };
    if !(table.max_tube_radius(margin) > 0.0) {
        return Err(Error::Shifts(format!(
            "no admissible tube radius: separations {same:.3e}/{cross:.3e} against drift margin {margin:.3e}"
        )));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_families, line_distance};

    #[test]
    fn table_properties() {
        let fam = build_families().unwrap();
        let t = choose_shifts(&fam, 0.0).unwrap();
        // first line takes the first candidate
        assert_eq!(t.class[0][0], [0.0; 3]);
        assert!(t.same_separation > 0.0 && t.cross_separation > 0.0);
        eprintln!("separations {} {}", t.same_separation, t.cross_separation);
        // independent recomputation of both separations
        let dirs = slot_directions(&fam);
        let lat: Vec<_> = dirs.iter().map(|&f| TransverseLattice::new(f).unwrap()).collect();
        let pos = |m: i64, i: usize| t.shift(m, i / SLOTS, i % SLOTS);
        let (mut same, mut cross) = (f64::INFINITY, f64::INFINITY);
        for i in 0..dirs.len() {
            for j in 0..dirs.len() {
                if i != j {
                    same = same.min(line_distance(&lat[i], &pos(0, i), &lat[j], &pos(0, j)));
                    same = same.min(line_distance(&lat[i], &pos(1, i), &lat[j], &pos(1, j)));
                }
                cross = cross.min(line_distance(&lat[i], &pos(1, i), &lat[j], &pos(0, j)));
            }
        }
        assert!((same - t.same_separation).abs() < 1e-12);
        assert!((cross - t.cross_separation).abs() < 1e-12);
        // same direction in consecutive time slots: parallel lines at least 2r apart
        let r = t.max_tube_radius(0.0);
        for i in 0..dirs.len() {
            assert!(line_distance(&lat[i], &pos(0, i), &lat[i], &pos(1, i)) >= 2.0 * r - 1e-12);
        }
        // shifts are shared by cells of the same class and both parities
        assert_eq!(t.shift(2, 5, 3), t.shift(0, 5, 3));
        assert!(t.validate(10.0 * r * 0.99, 0.0).is_ok());
        assert!(t.validate(10.0 * r * 1.01, 0.0).is_err());
        // a drift margin is honoured by the search
        let m = 0.5 * t.cross_separation;
        let tm = choose_shifts(&fam, m).unwrap();
        assert!(tm.cross_separation - m > 0.0);
        assert!(tm.validate(10.0 * 0.99 * tm.max_tube_radius(m), m).is_ok());
    }
}
