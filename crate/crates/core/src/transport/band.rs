use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{from_spectrum, to_spectrum, GridSpec, Rank, Spectrum, TorusField};

/// A real trigonometric polynomial Σ_k c_k e^{ik·x} stored on one half of
/// its support, so it can be evaluated exactly at arbitrary points.
#[derive(Debug, Clone, PartialEq)]
pub struct BandField {
    pub rank: Rank,
    /// Half-space representatives (plus k = 0).
    pub modes: Vec<[i64; 3]>,
    /// `coeffs[mode * components + c]`, already doubled off k = 0.
    pub coeffs: Vec<Complex64>,
    pub k_max: i64,
}

fn half_space(k: [i64; 3]) -> Option<bool> {
    match k.iter().copied().find(|&x| x != 0) {
        None => Some(true),
        Some(x) if x > 0 => Some(false),
        _ => None,
    }
}

impl BandField {
    pub fn zero(rank: Rank) -> Self {
        Self {
            rank,
            modes: vec![],
            coeffs: vec![],
            k_max: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn components(&self) -> usize {
        self.rank.components()
    }

    /// Spectrum of a grid field after an optional Fourier multiplier. Modes whose
    /// coefficients all fall below `rel_tol` times the largest are dropped;
    /// Nyquist modes are dropped as well.
    pub fn from_field(field: &TorusField, multiplier: Option<&dyn Fn([i64; 3]) -> f64>, rel_tol: f64) -> Self {
        let mut s = to_spectrum(field);
        if let Some(m) = multiplier {
            s.apply_multiplier(m);
        }
        Self::from_spectrum(&s, rel_tol)
    }

    pub fn from_spectrum(s: &Spectrum, rel_tol: f64) -> Self {
        let grid = s.grid;
        let nc = s.rank.components();
        let peak = s
            .comps
            .iter()
            .flat_map(|c| c.iter().map(|z| z.norm()))
            .fold(0.0, f64::max);
        let mut out = Self::zero(s.rank);
        if peak == 0.0 {
            return out;
        }
        for idx in 0..grid.len() {
            let (a, b, c) = grid.unravel(idx);
            if grid.is_nyquist(a) || grid.is_nyquist(b) || grid.is_nyquist(c) {
                continue;
            }
            let k = grid.wavevector(idx);
            let Some(zero) = half_space(k) else { continue };
            let big = (0..nc).any(|comp| s.comps[comp][idx].norm() > rel_tol * peak);
            if !big {
                continue;
            }
            let w = if zero { 1.0 } else { 2.0 };
            out.modes.push(k);
            out.coeffs.extend((0..nc).map(|comp| s.comps[comp][idx] * w));
            out.k_max = out.k_max.max(k.iter().map(|x| x.abs()).max().unwrap());
        }
        out
    }

    /// Build directly from half-space modes with the plain coefficients c_k
    /// (the conjugate partner is implied).
    pub fn from_modes(rank: Rank, modes: Vec<([i64; 3], Vec<Complex64>)>) -> Result<Self> {
        let mut out = Self::zero(rank);
        for (k, c) in modes {
            let zero = half_space(k).ok_or_else(|| Error::Grid(format!("mode {k:?} not in the half space")))?;
            if c.len() != rank.components() {
                return Err(Error::RankMismatch {
                    expected: rank.name(),
                    found: "coefficient list of another length",
                });
            }
            let w = if zero { 1.0 } else { 2.0 };
            out.coeffs.extend(c.iter().map(|z| z * w));
            out.k_max = out.k_max.max(k.iter().map(|x| x.abs()).max().unwrap());
            out.modes.push(k);
        }
        Ok(out)
    }

    /// Sum of coefficient magnitudes: a bound on the sup norm of every component.
    pub fn majorant(&self) -> f64 {
        let nc = self.components();
        self.coeffs
            .chunks(nc.max(1))
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .sum()
    }

    /// Evaluate at a point into `out` (length = components).
    pub fn eval_into(&self, y: &[f64; 3], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.modes.is_empty() {
            return;
        }
        let km = self.k_max as usize;
        let width = 2 * km + 1;
        if width > 64 {
            return self.eval_slow(y, out);
        }
        // e^{i k y_a} for k ∈ [−K, K]
        let mut tabs = [[Complex64::default(); 64]; 3];
        for a in 0..3 {
            let e = Complex64::from_polar(1.0, y[a]);
            tabs[a][km] = Complex64::new(1.0, 0.0);
            for j in 1..=km {
                let p = tabs[a][km + j - 1] * e;
                tabs[a][km + j] = p;
                tabs[a][km - j] = p.conj();
            }
        }
        let nc = self.components();
        for (m, k) in self.modes.iter().enumerate() {
            let e = tabs[0][(k[0] + km as i64) as usize]
                * tabs[1][(k[1] + km as i64) as usize]
                * tabs[2][(k[2] + km as i64) as usize];
            for c in 0..nc {
                let z = self.coeffs[m * nc + c];
                out[c] += z.re * e.re - z.im * e.im;
            }
        }
    }

    fn eval_slow(&self, y: &[f64; 3], out: &mut [f64]) {
        let nc = self.components();
        for (m, k) in self.modes.iter().enumerate() {
            let ph = k[0] as f64 * y[0] + k[1] as f64 * y[1] + k[2] as f64 * y[2];
            let e = Complex64::from_polar(1.0, ph);
            for c in 0..nc {
                let z = self.coeffs[m * nc + c];
                out[c] += z.re * e.re - z.im * e.im;
            }
        }
    }

    pub fn eval3(&self, y: &[f64; 3]) -> [f64; 3] {
        let mut o = [0.0; 3];
        self.eval_into(y, &mut o);
        o
    }

    /// Synthesize on a grid (exact when the band fits below Nyquist).
    pub fn to_field(&self, grid: GridSpec) -> Result<TorusField> {
        if 2 * self.k_max as usize >= grid.n() {
            return Err(Error::Grid(format!(
                "band |k|∞ ≤ {} does not fit an n = {} grid",
                self.k_max,
                grid.n()
            )));
        }
        let nc = self.components();
        let mut s = Spectrum::zeros(grid, self.rank);
        for (m, k) in self.modes.iter().enumerate() {
            let ix = |sgn: i64| {
                let i = k.map(|x| grid.fft_index(sgn * x));
                grid.index(i[0], i[1], i[2])
            };
            let (p, q) = (ix(1), ix(-1));
            for c in 0..nc {
                let z = self.coeffs[m * nc + c];
                if p == q {
                    s.comps[c][p] += z;
                } else {
                    s.comps[c][p] += z * 0.5;
                    s.comps[c][q] += z.conj() * 0.5;
                }
            }
        }
        from_spectrum(s)
    }

    /// self + alpha·other (same rank).
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        if self.rank != other.rank {
            return Err(Error::RankMismatch {
                expected: self.rank.name(),
                found: other.rank.name(),
            });
        }
        let nc = self.components();
        let mut out = self.clone();
        for (m, k) in other.modes.iter().enumerate() {
            let add = &other.coeffs[m * nc..(m + 1) * nc];
            match out.modes.iter().position(|x| x == k) {
                Some(p) => {
                    for c in 0..nc {
                        out.coeffs[p * nc + c] += add[c] * alpha;
                    }
                }
                None => {
                    out.modes.push(*k);
                    out.coeffs.extend(add.iter().map(|z| z * alpha));
                    out.k_max = out.k_max.max(k.iter().map(|x| x.abs()).max().unwrap());
                }
            }
        }
        Ok(out)
    }
}

/// A time-dependent band-limited field.
pub trait BandHistory: Sync {
    fn band_at(&self, t: f64) -> Result<BandField>;
}

/// A history that does not depend on time.
#[derive(Debug, Clone)]
pub struct Frozen(pub BandField);

impl BandHistory for Frozen {
    fn band_at(&self, _t: f64) -> Result<BandField> {
        Ok(self.0.clone())
    }
}

impl<F: Fn(f64) -> Result<BandField> + Sync> BandHistory for F {
    fn band_at(&self, t: f64) -> Result<BandField> {
        self(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_roundtrip_and_offgrid_evaluation() {
        let g = GridSpec::new(16).unwrap();
        let f = TorusField::vector_fn(g, |x| {
            [
                (x[0] + 2.0 * x[2]).sin(),
                (3.0 * x[1]).cos() + 0.5,
                (x[0] - x[1]).sin() * (x[2]).cos(),
            ]
        });
        let b = BandField::from_field(&f, None, 1e-14);
        let back = b.to_field(g).unwrap();
        assert!(back.sub(&f).unwrap().sup_norm() < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let y = [rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)];
            let v = b.eval3(&y);
            let want = [
                (y[0] + 2.0 * y[2]).sin(),
                (3.0 * y[1]).cos() + 0.5,
                (y[0] - y[1]).sin() * y[2].cos(),
            ];
            for c in 0..3 {
                assert!((v[c] - want[c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn multiplier_and_axpy() {
        let g = GridSpec::new(16).unwrap();
        let f = TorusField::scalar_fn(g, |x| x[0].sin() + (5.0 * x[1]).sin());
        let low = BandField::from_field(&f, Some(&|k: [i64; 3]| if k[1].abs() > 2 { 0.0 } else { 1.0 }), 1e-14);
        assert_eq!(low.modes.len(), 1);
        let both = low.axpy(2.0, &low).unwrap();
        let v = both.to_field(g).unwrap();
        let want = TorusField::scalar_fn(g, |x| 3.0 * x[0].sin());
        assert!(v.sub(&want).unwrap().sup_norm() < 1e-13);
        assert!(BandField::from_field(&TorusField::zeros(g, Rank::Scalar), None, 1e-14).is_zero());
    }
}
