use std::collections::HashSet;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};

pub type IVec3 = [i64; 3];

pub const CLASS_COUNT: usize = 27;

/// Six directions with Σ k⊗k = C·Id whose rank-one matrices span Sym(3).
#[derive(Debug, Clone, PartialEq)]
pub struct StressFamily {
    pub dirs: [IVec3; 6],
    pub c: i64,
}

/// Orthogonal frame k₁, k₂, k₃ plus k₄ = −(k₁ + k₂ + k₃).
#[derive(Debug, Clone, PartialEq)]
pub struct FluxFrame {
    pub dirs: [IVec3; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionFamilies {
    pub stress: Vec<StressFamily>,
    pub flux: Vec<FluxFrame>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

pub fn primitive(k: IVec3) -> IVec3 {
    let g = gcd(gcd(k[0], k[1]), k[2]);
    [k[0] / g, k[1] / g, k[2] / g]
}

/// Primitive representative with first nonzero entry positive.
pub fn canonical_direction(k: IVec3) -> IVec3 {
    let p = primitive(k);
    let s = p.iter().find(|&&x| x != 0).map_or(1, |x| x.signum());
    [s * p[0], s * p[1], s * p[2]]
}

fn sym_vec(k: IVec3) -> SVector<f64, 6> {
    let k = k.map(|x| x as f64);
    SVector::from([
        k[0] * k[0],
        k[0] * k[1],
        k[0] * k[2],
        k[1] * k[1],
        k[1] * k[2],
        k[2] * k[2],
    ])
}

/// Columns are k_i⊗k_i in (00, 01, 02, 11, 12, 22) order.
pub fn basis_matrix(dirs: &[IVec3; 6]) -> SMatrix<f64, 6, 6> {
    SMatrix::from_fn(|r, c| sym_vec(dirs[c])[r])
}

fn outer_sum(dirs: &[IVec3]) -> [[i64; 3]; 3] {
    let mut m = [[0; 3]; 3];
    for k in dirs {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += k[i] * k[j];
            }
        }
    }
    m
}

fn integer_rank(rows: &[[i64; 6]]) -> usize {
    // fraction-free elimination; entries stay small for these families
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let (nr, nc) = (m.len(), 6);
    let mut rank = 0;
    for col in 0..nc {
        let Some(p) = (rank..nr).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(rank, p);
        for r in 0..nr {
            if r != rank && m[r][col] != 0 {
                let (a, b) = (m[rank][col], m[r][col]);
                for c in 0..nc {
                    m[r][c] = m[r][c] * a - m[rank][c] * b;
                }
                let g = m[r].iter().fold(0i128, |g, &x| {
                    let (mut a, mut b) = (g.abs(), x.abs());
                    while b != 0 {
                        (a, b) = (b, a % b);
                    }
                    a
                });
                if g > 1 {
                    m[r].iter_mut().for_each(|x| *x /= g);
                }
            }
        }
        rank += 1;
    }
    rank
}

impl StressFamily {
    /// Family built from the pattern (a, ±b, 0), (0, a, ±b), (±b, 0, a).
    pub fn from_pair(a: i64, b: i64) -> Self {
        Self {
            dirs: [
                [a, b, 0],
                [a, -b, 0],
                [0, a, b],
                [0, a, -b],
                [b, 0, a],
                [-b, 0, a],
            ],
            c: 2 * (a * a + b * b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = outer_sum(&self.dirs);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { self.c } else { 0 };
                if m[i][j] != want {
                    return Err(Error::Geometry(format!(
                        "Σk⊗k ≠ {}·Id for {:?}",
                        self.c, self.dirs
                    )));
                }
            }
        }
        let rows: Vec<[i64; 6]> = self
            .dirs
            .iter()
            .map(|k| [k[0] * k[0], k[0] * k[1], k[0] * k[2], k[1] * k[1], k[1] * k[2], k[2] * k[2]])
            .collect();
        if integer_rank(&rows) != 6 {
            return Err(Error::Geometry(format!("{:?} does not span Sym(3)", self.dirs)));
        }
        Ok(())
    }
}

impl FluxFrame {
    pub fn from_frame(k1: IVec3, k2: IVec3, k3: IVec3) -> Self {
        let k4 = [
            -(k1[0] + k2[0] + k3[0]),
            -(k1[1] + k2[1] + k3[1]),
            -(k1[2] + k2[2] + k3[2]),
        ];
        Self { dirs: [k1, k2, k3, k4] }
    }

    pub fn validate(&self) -> Result<()> {
        let d = |a: IVec3, b: IVec3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let [k1, k2, k3, k4] = self.dirs;
        if d(k1, k2) != 0 || d(k1, k3) != 0 || d(k2, k3) != 0 {
            return Err(Error::Geometry(format!("{:?} is not orthogonal", self.dirs)));
        }
        if (0..3).any(|i| k1[i] + k2[i] + k3[i] + k4[i] != 0) {
            return Err(Error::Geometry("k₄ ≠ −(k₁+k₂+k₃)".into()));
        }
        if [k1, k2, k3].iter().any(|k| *k == [0, 0, 0]) {
            return Err(Error::Geometry("zero frame vector".into()));
        }
        Ok(())
    }
}

// Integer orthogonal frames from quaternion rotation matrices, each row made primitive.
fn quaternion_frames(bound: i64) -> Vec<[IVec3; 3]> {
    let mut out = Vec::new();
    let r = -bound..=bound;
    for a in r.clone() {
        for b in r.clone() {
            for c in r.clone() {
                for d in r.clone() {
                    if a * a + b * b + c * c + d * d == 0 {
                        continue;
                    }
                    let m = [
                        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
                        [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
                        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
                    ];
                    out.push([primitive(m[0]), primitive(m[1]), primitive(m[2])]);
                }
            }
        }
    }
    out
}

fn frame_size(f: &[IVec3; 3]) -> i64 {
    f.iter().map(|k| k.iter().map(|x| x * x).sum::<i64>()).sum()
}

/// Deterministic choice of 27 stress families and 27 flux frames whose 270
/// directions are pairwise distinct up to sign.
pub fn build_families() -> Result<DirectionFamilies> {
    let mut used: HashSet<IVec3> = HashSet::new();
    let take = |dirs: &[IVec3], used: &mut HashSet<IVec3>| -> bool {
        let canon: Vec<IVec3> = dirs.iter().map(|&k| canonical_direction(k)).collect();
        let distinct: HashSet<IVec3> = canon.iter().copied().collect();
        if distinct.len() != dirs.len() || canon.iter().any(|c| used.contains(c)) {
            return false;
        }
        used.extend(canon);
        true
    };

    let mut pairs = Vec::new();
    for m in 1..=12i64 {
        for a in 1..=m {
            for b in 1..=m {
                if a.max(b) == m && gcd(a, b) == 1 {
                    pairs.push((a, b));
                }
            }
        }
    }
    let mut stress = Vec::new();
    for (a, b) in pairs {
        if stress.len() == CLASS_COUNT {
            break;
        }
        let fam = StressFamily::from_pair(a, b);
        if fam.validate().is_ok() && take(&fam.dirs, &mut used) {
            stress.push(fam);
        }
    }

    let mut frames = quaternion_frames(3);
    frames.sort_by_key(|f| (frame_size(f), *f));
    frames.dedup();
    let mut flux = Vec::new();
    for [k1, k2, k3] in frames {
        if flux.len() == CLASS_COUNT {
            break;
        }
        let fr = FluxFrame::from_frame(k1, k2, k3);
        if fr.validate().is_ok() && take(&fr.dirs, &mut used) {
            flux.push(fr);
        }
    }
    if stress.len() != CLASS_COUNT || flux.len() != CLASS_COUNT {
        return Err(Error::Geometry(format!(
            "found only {} stress families and {} flux frames",
            stress.len(),
            flux.len()
        )));
    }
    Ok(DirectionFamilies { stress, flux })
}

/// Class index in Z³₃ flattened to 0..27.
pub fn class_of(cell: [usize; 3]) -> usize {
    (cell[0] % 3) * 9 + (cell[1] % 3) * 3 + cell[2] % 3
}
