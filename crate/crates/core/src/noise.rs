//! Divergence-free Q-Wiener paths on the torus, their causal time
//! mollifications and the stopping time built from them.

use std::fs;
use std::io::Read;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::io::write_atomic;
use crate::spectral::{from_spectrum, GridSpec, Rank, Spectrum, TorusField};
use crate::transport::BandField;

pub const PATH_MAGIC: &[u8; 4] = b"WEN1";

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// σ_k = amplitude · |k|^{−s_q}.
    pub s_q: f64,
    /// Retained modes satisfy 0 < |k|_∞ ≤ k_max.
    pub k_max: u32,
    pub seed: u64,
    pub dt: f64,
    /// Right end of the sampled interval (twice the final time).
    pub horizon: f64,
    pub amplitude: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon > 0.0) {
            return Err(Error::Noise(format!(
                "need dt > 0 and horizon > 0, got {} and {}",
                self.dt, self.horizon
            )));
        }
        if !(self.amplitude >= 0.0 && self.s_q.is_finite()) {
            return Err(Error::Noise("amplitude must be non-negative and s_Q finite".into()));
        }
        Ok(())
    }

    /// Paths must be H^{2+N₁}-smooth.
    pub fn check_regularity(&self, n1: u32) -> Result<()> {
        if self.s_q < n1 as f64 + 4.0 {
            return Err(Error::Noise(format!("s_Q = {} below N₁ + 4 = {}", self.s_q, n1 + 4)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize
    }

    pub fn modes(&self) -> Vec<NoiseMode> {
        let km = self.k_max as i64;
        let mut out = Vec::new();
        for a in -km..=km {
            for b in -km..=km {
                for c in -km..=km {
                    let k = [a, b, c];
                    // one representative per ±k pair
                    let first = k.iter().copied().find(|&x| x != 0);
                    if first.is_some_and(|x| x > 0) {
                        let norm = ((a * a + b * b + c * c) as f64).sqrt();
                        out.push(NoiseMode {
                            k,
                            sigma: self.amplitude * norm.powf(-self.s_q),
                            pol: polarizations(k),
                        });
                    }
                }
            }
        }
        out
    }

    /// Tr Q normalised per unit volume: E ⨍|z(t)|² = t · trace.
    pub fn trace(&self) -> f64 {
        self.modes().iter().map(|m| 2.0 * m.sigma * m.sigma).sum()
    }

    pub fn manifest_block(&self) -> String {
        format!(
            "noise.s_Q = {:e}\nnoise.k_max = {}\nnoise.seed = {}\nnoise.dt = {:e}\nnoise.horizon = {:e}\nnoise.amplitude = {:e}\n",
            self.s_q, self.k_max, self.seed, self.dt, self.horizon, self.amplitude
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMode {
    pub k: [i64; 3],
    pub sigma: f64,
    /// Orthonormal pair spanning k^⊥.
    pub pol: [[f64; 3]; 2],
}

fn polarizations(k: [i64; 3]) -> [[f64; 3]; 2] {
    let kf = k.map(|x| x as f64);
    let kn = kf.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u = kf.map(|x| x / kn);
    // reference axis least aligned with k
    let axis = (0..3)
        .min_by(|&i, &j| u[i].abs().partial_cmp(&u[j].abs()).unwrap())
        .unwrap();
    let mut r = [0.0; 3];
    r[axis] = 1.0;
    let e1 = normalize(cross(u, r));
    let e2 = cross(u, e1);
    [e1, e2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.map(|x| x / n)
}

/// Per-mode Brownian values (W^c₁, W^s₁, W^c₂, W^s₂): cosine and sine
/// parts along the two polarizations.
pub type ModeCoeffs = [f64; 4];

/// z(t) at grid times t_j = j·dt, j = 0..=steps, with z(t) = z(0) = 0 for t < 0
/// and linear interpolation in between.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub spec: NoiseSpec,
    pub modes: Vec<NoiseMode>,
    pub samples: Vec<Vec<ModeCoeffs>>,
}

pub fn sample_path(spec: &NoiseSpec) -> Result<NoisePath> {
    spec.validate()?;
    let modes = spec.modes();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let sd = spec.dt.sqrt();
    let mut samples = Vec::with_capacity(spec.steps() + 1);
    let mut w = vec![[0.0; 4]; modes.len()];
    samples.push(w.clone());
    for _ in 0..spec.steps() {
        for c in w.iter_mut() {
            for x in c.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x += sd * g;
            }
        }
        samples.push(w.clone());
    }
    Ok(NoisePath {
        spec: spec.clone(),
        modes,
        samples,
    })
}

fn synthesize(grid: GridSpec, modes: &[NoiseMode], coeffs: &[ModeCoeffs]) -> Result<TorusField> {
    let mut s = Spectrum::zeros(grid, Rank::Vector);
    for (m, c) in modes.iter().zip(coeffs) {
        let idx = |sign: i64| {
            let k = m.k.map(|x| grid.fft_index(sign * x));
            grid.index(k[0], k[1], k[2])
        };
        let (p, n) = (idx(1), idx(-1));
        for d in 0..3 {
            // σ e (W^c cos + W^s sin) = Re[σ e (W^c − iW^s) e^{ik·x}]
            let z = 0.5
                * m.sigma
                * (m.pol[0][d] * Complex64::new(c[0], -c[1]) + m.pol[1][d] * Complex64::new(c[2], -c[3]));
            s.comps[d][p] += z;
            s.comps[d][n] += z.conj();
        }
    }
    from_spectrum(s)
}

/// The same synthesis as an exact band; modes with negligible weight are dropped.
fn band(modes: &[NoiseMode], coeffs: &[ModeCoeffs]) -> BandField {
    let terms: Vec<([i64; 3], Vec<Complex64>)> = modes
        .iter()
        .zip(coeffs)
        .map(|(m, c)| {
            let z = (0..3)
                .map(|d| {
                    0.5 * m.sigma * (m.pol[0][d] * Complex64::new(c[0], -c[1]) + m.pol[1][d] * Complex64::new(c[2], -c[3]))
                })
                .collect();
            (m.k, z)
        })
        .collect();
    let peak = terms.iter().flat_map(|t| t.1.iter().map(|z| z.norm())).fold(0.0, f64::max);
    let kept = terms
        .into_iter()
        .filter(|t| peak > 0.0 && t.1.iter().any(|z| z.norm() > 1e-14 * peak))
        .collect();
    BandField::from_modes(Rank::Vector, kept).expect("noise modes live in the half space")
}

fn check_grid(grid: GridSpec, k_max: u32) -> Result<()> {
    if 2 * k_max as usize >= grid.n() {
        return Err(Error::Noise(format!(
            "k_max = {k_max} reaches the Nyquist frequency of an n = {} grid",
            grid.n()
        )));
    }
    Ok(())
}

/// Σ_k 2|ẑ_k| max(1, |k|_∞)^n, the Fourier majorant of the C^n norm.
fn majorant(modes: &[NoiseMode], coeffs: &[ModeCoeffs], n: u32) -> f64 {
    modes
        .iter()
        .zip(coeffs)
        .map(|(m, c)| {
            let kinf = m.k.iter().map(|x| x.abs()).max().unwrap().max(1) as f64;
            m.sigma * c.iter().map(|x| x * x).sum::<f64>().sqrt() * kinf.powi(n as i32)
        })
        .sum()
}

impl NoisePath {
    pub fn from_samples(spec: NoiseSpec, samples: Vec<Vec<ModeCoeffs>>) -> Result<Self> {
        let modes = spec.modes();
        if samples.len() != spec.steps() + 1 || samples.iter().any(|s| s.len() != modes.len()) {
            return Err(Error::Noise("sample table does not match the spec".into()));
        }
        Ok(Self { spec, modes, samples })
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|j| j as f64 * self.spec.dt).collect()
    }

    /// Sample j, with the constant extension to negative indices.
    pub fn sample(&self, j: i64) -> &[ModeCoeffs] {
        let j = j.clamp(0, self.samples.len() as i64 - 1) as usize;
        &self.samples[j]
    }

    pub fn coeffs_at(&self, t: f64) -> Vec<ModeCoeffs> {
        let s = (t / self.spec.dt).max(0.0);
        let j = (s.floor() as i64).min(self.samples.len() as i64 - 1);
        let th = (s - j as f64).clamp(0.0, 1.0);
        let (a, b) = (self.sample(j), self.sample(j + 1));
        a.iter()
            .zip(b)
            .map(|(x, y)| std::array::from_fn(|i| x[i] + th * (y[i] - x[i])))
            .collect()
    }

    pub fn field_at(&self, grid: GridSpec, t: f64) -> Result<TorusField> {
        check_grid(grid, self.spec.k_max)?;
        synthesize(grid, &self.modes, &self.coeffs_at(t))
    }

    /// Redraw every increment after time t from a fresh seed; samples at
    /// times ≤ t stay untouched.
    pub fn resampled_after(&self, t: f64, seed: u64) -> Self {
        let mut out = self.clone();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sd = self.spec.dt.sqrt();
        for j in 1..out.samples.len() {
            if (j as f64) * self.spec.dt <= t {
                continue;
            }
            for m in 0..out.modes.len() {
                for i in 0..4 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    out.samples[j][m][i] = out.samples[j - 1][m][i] + sd * g;
                }
            }
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = Vec::new();
        out.extend_from_slice(PATH_MAGIC);
        out.extend_from_slice(&(self.modes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.samples.len() as u32).to_le_bytes());
        out.extend_from_slice(&s.k_max.to_le_bytes());
        out.extend_from_slice(&s.seed.to_le_bytes());
        for x in [s.s_q, s.dt, s.horizon, s.amplitude] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for row in &self.samples {
            for c in row {
                for x in c {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        const HEAD: usize = 56;
        if bytes.len() < HEAD || &bytes[..4] != PATH_MAGIC {
            return Err(Error::Format("missing WEN1 header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (nm, ns) = (u32_at(4) as usize, u32_at(8) as usize);
        let spec = NoiseSpec {
            k_max: u32_at(12),
            seed: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
            s_q: f64_at(24),
            dt: f64_at(32),
            horizon: f64_at(40),
            amplitude: f64_at(48),
        };
        if bytes.len() != HEAD + 32 * nm * ns {
            return Err(Error::Format(format!("noise path has {} bytes", bytes.len())));
        }
        let samples = (0..ns)
            .map(|j| {
                (0..nm)
                    .map(|m| std::array::from_fn(|i| f64_at(HEAD + 32 * (j * nm + m) + 8 * i)))
                    .collect()
            })
            .collect();
        Self::from_samples(spec, samples)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }
}

/// r(τ) = exp(−1/(τ(1−τ))) on (0, 1) and its derivative; unit mass comes from
/// the discrete normalisation.
fn kernel(tau: f64) -> (f64, f64) {
    if tau <= 0.0 || tau >= 1.0 {
        return (0.0, 0.0);
    }
    let g = (-1.0 / (tau * (1.0 - tau))).exp();
    let dg = g * (1.0 - 2.0 * tau) / (tau * (1.0 - tau)).powi(2);
    (g, dg)
}

/// z_q(t) = Σ_j w_j(t) z(s_j), w_j ∝ r((t − s_j)/i) over grid times s_j ≤ t,
/// normalised to unit discrete mass. Smooth in t and causal.
#[derive(Debug, Clone)]
pub struct MollifiedPath<'a> {
    pub path: &'a NoisePath,
    /// None when the width does not resolve the path grid.
    pub width: Option<f64>,
}

pub fn mollify_path(path: &NoisePath, width: f64) -> MollifiedPath<'_> {
    if width <= path.spec.dt {
        log::warn!(
            "mollifier width {width:e} not above the noise step {:e}; using the raw path",
            path.spec.dt
        );
        return MollifiedPath { path, width: None };
    }
    MollifiedPath {
        path,
        width: Some(width),
    }
}

impl MollifiedPath<'_> {
    /// Coefficients of z_q(t) and ∂_t z_q(t).
    pub fn coeffs_with_rate(&self, t: f64) -> (Vec<ModeCoeffs>, Vec<ModeCoeffs>) {
        let nm = self.path.modes.len();
        let Some(w) = self.width else {
            let dt = self.path.spec.dt;
            let a = self.path.coeffs_at(t);
            let j = (t / dt).floor() as i64;
            let rate = if t <= 0.0 || j as usize >= self.path.samples.len() - 1 {
                vec![[0.0; 4]; nm]
            } else {
                let (x, y) = (self.path.sample(j), self.path.sample(j + 1));
                x.iter()
                    .zip(y)
                    .map(|(x, y)| std::array::from_fn(|i| (y[i] - x[i]) / dt))
                    .collect()
            };
            return (a, rate);
        };
        let dt = self.path.spec.dt;
        let hi = (t / dt).floor() as i64;
        let lo = ((t - w) / dt).floor() as i64;
        let mut val = vec![[0.0; 4]; nm];
        let mut dval = vec![[0.0; 4]; nm];
        let (mut s, mut ds) = (0.0, 0.0);
        for j in lo..=hi {
            let (r, dr) = kernel((t - j as f64 * dt) / w);
            if r == 0.0 {
                continue;
            }
            let dr = dr / w;
            s += r;
            ds += dr;
            for (m, c) in self.path.sample(j).iter().enumerate() {
                for i in 0..4 {
                    val[m][i] += r * c[i];
                    dval[m][i] += dr * c[i];
                }
            }
        }
        // quotient rule for w_j = r_j / Σr
        let z: Vec<ModeCoeffs> = val.iter().map(|v| v.map(|x| x / s)).collect();
        let dz = dval
            .iter()
            .zip(&z)
            .map(|(d, z)| std::array::from_fn(|i| (d[i] - ds * z[i]) / s))
            .collect();
        (z, dz)
    }

    pub fn field_at(&self, grid: GridSpec, t: f64) -> Result<TorusField> {
        check_grid(grid, self.path.spec.k_max)?;
        synthesize(grid, &self.path.modes, &self.coeffs_with_rate(t).0)
    }

    pub fn band_with_rate(&self, t: f64) -> (BandField, BandField) {
        let (z, dz) = self.coeffs_with_rate(t);
        (band(&self.path.modes, &z), band(&self.path.modes, &dz))
    }

    pub fn field_and_rate(&self, grid: GridSpec, t: f64) -> Result<(TorusField, TorusField)> {
        check_grid(grid, self.path.spec.k_max)?;
        let (z, dz) = self.coeffs_with_rate(t);
        Ok((
            synthesize(grid, &self.path.modes, &z)?,
            synthesize(grid, &self.path.modes, &dz)?,
        ))
    }
}

/// Time-Hölder pairs are examined only within this many steps.
pub const HOLDER_WINDOW: usize = 64;

/// Discrete 𝔱 = inf{t : ‖z‖_{C^{1/2−δ}([0,t], C^{N₁})} ≥ L} ∧ 2T.
pub fn stopping_time(path: &NoisePath, l: f64, delta_h: f64, n1: u32, t_final: f64) -> f64 {
    let dt = path.spec.dt;
    let cap = 2.0 * t_final;
    let beta = 0.5 - delta_h;
    let mut sup = 0.0f64;
    let mut quot = 0.0f64;
    let mut diff = vec![[0.0; 4]; path.modes.len()];
    for (j, zj) in path.samples.iter().enumerate() {
        let t = j as f64 * dt;
        if t > cap {
            break;
        }
        sup = sup.max(majorant(&path.modes, zj, n1));
        for back in 1..=HOLDER_WINDOW.min(j) {
            let zi = &path.samples[j - back];
            for (d, (a, b)) in diff.iter_mut().zip(zj.iter().zip(zi)) {
                *d = std::array::from_fn(|i| a[i] - b[i]);
            }
            let h = (back as f64 * dt).powf(beta);
            quot = quot.max(majorant(&path.modes, &diff, n1) / h);
        }
        if sup + quot >= l {
            return t;
        }
    }
    cap
}

/// 𝔮 = ½ Σ_k |Q^{1/2}e_k|², constant in space for a diagonal Q.
pub fn noise_q_constant(spec: &NoiseSpec) -> f64 {
    0.5 * spec.trace()
}

pub fn noise_q_field(spec: &NoiseSpec, grid: GridSpec) -> TorusField {
    TorusField::constant(grid, Rank::Scalar, &[noise_q_constant(spec)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::div;

    fn spec(seed: u64) -> NoiseSpec {
        NoiseSpec {
            s_q: 128.0,
            k_max: 1,
            seed,
            dt: 0.01,
            horizon: 2.0,
            amplitude: 1.0,
        }
    }

    fn grid() -> GridSpec {
        GridSpec::new(8).unwrap()
    }

    #[test]
    fn mode_set() {
        let m = spec(0).modes();
        assert_eq!(m.len(), 13);
        for mode in &m {
            let k = mode.k.map(|x| x as f64);
            for e in mode.pol {
                assert!((e[0] * k[0] + e[1] * k[1] + e[2] * k[2]).abs() < 1e-15);
                assert!((e.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-15);
            }
            let [e1, e2] = mode.pol;
            assert!((e1[0] * e2[0] + e1[1] * e2[1] + e1[2] * e2[2]).abs() < 1e-15);
        }
    }

    #[test]
    fn divergence_free_and_mean_zero() {
        let p = sample_path(&spec(3)).unwrap();
        for t in [0.3, 1.0, 1.97] {
            let z = p.field_at(grid(), t).unwrap();
            assert!(div(&z).unwrap().sup_norm() <= 1e-10);
            // k = 0 is never populated; what remains is summation round-off
            assert!(z.mean().iter().all(|m| m.abs() < 1e-13), "{:?}", z.mean());
        }
    }

    #[test]
    fn reproducible_from_seed() {
        assert_eq!(sample_path(&spec(9)).unwrap(), sample_path(&spec(9)).unwrap());
        assert_ne!(sample_path(&spec(9)).unwrap(), sample_path(&spec(10)).unwrap());
    }

    #[test]
    fn nyquist_guard() {
        let mut s = spec(0);
        s.k_max = 4;
        let p = sample_path(&s).unwrap();
        assert!(p.field_at(grid(), 0.5).is_err());
    }

    #[test]
    fn energy_matches_trace() {
        // E ⨍|z(t)|² = t·Tr Q; compare the Monte Carlo mean within 3 standard errors
        let t = 1.0;
        let vol = (2.0 * std::f64::consts::PI).powi(3);
        let samples: Vec<f64> = (0..200)
            .map(|seed| {
                let mut s = spec(1000 + seed);
                s.horizon = t;
                let z = sample_path(&s).unwrap().field_at(grid(), t).unwrap();
                z.l2_norm().powi(2) / vol
            })
            .collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = t * spec(0).trace();
        assert!((mean - want).abs() <= 3.0 * (var / n).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn increments_are_stationary() {
        // batches of increments at early and late times share their variance
        let var_at = |t0: f64| {
            let xs: Vec<f64> = (0..300)
                .map(|seed| {
                    let p = sample_path(&spec(5000 + seed)).unwrap();
                    let a = p.coeffs_at(t0);
                    let b = p.coeffs_at(t0 + 0.5);
                    b[0][0] - a[0][0]
                })
                .collect();
            xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
        };
        let (v1, v2) = (var_at(0.1), var_at(1.4));
        // each estimates 0.5 with relative standard error sqrt(2/300)
        let se = 0.5 * (2.0f64 / 300.0).sqrt();
        assert!((v1 - v2).abs() <= 3.0 * se * 2f64.sqrt(), "{v1} {v2}");
    }

    #[test]
    fn mollified_constant_path_is_unchanged() {
        let s = spec(0);
        let c = vec![[0.3, -1.0, 2.0, 0.5]; s.modes().len()];
        let p = NoisePath::from_samples(s.clone(), vec![c.clone(); s.steps() + 1]).unwrap();
        let m = mollify_path(&p, 0.37);
        // with z(−s) := z(0) the constant extension covers negative times too
        for t in [0.0, 0.1, 1.3] {
            let (z, dz) = m.coeffs_with_rate(t);
            for (a, b) in z.iter().zip(&c) {
                for i in 0..4 {
                    assert!((a[i] - b[i]).abs() < 1e-14);
                }
            }
            assert!(dz.iter().flatten().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn mollification_is_causal() {
        let p = sample_path(&spec(4)).unwrap();
        let q = p.resampled_after(0.8, 77);
        assert_ne!(p, q);
        let (a, b) = (mollify_path(&p, 0.3), mollify_path(&q, 0.3));
        for t in [0.2, 0.5, 0.8] {
            assert_eq!(a.coeffs_with_rate(t), b.coeffs_with_rate(t));
        }
        assert_ne!(a.coeffs_with_rate(0.9).0, b.coeffs_with_rate(0.9).0);
    }

    #[test]
    fn linear_path_lags_by_at_most_width() {
        let s = spec(0);
        let field = [1.0, -2.0, 0.5, 3.0];
        let samples = (0..=s.steps())
            .map(|j| vec![field.map(|x| x * j as f64 * s.dt); 13])
            .collect();
        let p = NoisePath::from_samples(s, samples).unwrap();
        let w = 0.25;
        let m = mollify_path(&p, w);
        let norm = field.iter().map(|x| x * x).sum::<f64>().sqrt();
        for t in [0.3, 0.9, 1.5] {
            let (z, dz) = m.coeffs_with_rate(t);
            let exact = field.map(|x| x * t);
            let err = (0..4).map(|i| (z[0][i] - exact[i]).powi(2)).sum::<f64>().sqrt();
            assert!(err <= w * norm, "{err}");
            // the lag of a symmetric bump is half its width
            assert!((err - 0.5 * w * norm).abs() < 1e-3 * norm);
            for i in 0..4 {
                assert!((dz[0][i] - field[i]).abs() < 1e-5 * field[i].abs());
            }
        }
    }

    #[test]
    fn rate_matches_finite_difference() {
        let p = sample_path(&spec(6)).unwrap();
        let m = mollify_path(&p, 0.4);
        let (t, h) = (0.77, 1e-5);
        let (_, dz) = m.coeffs_with_rate(t);
        let (zp, _) = m.coeffs_with_rate(t + h);
        let (zm, _) = m.coeffs_with_rate(t - h);
        for k in 0..13 {
            for i in 0..4 {
                let fd = (zp[k][i] - zm[k][i]) / (2.0 * h);
                assert!((fd - dz[k][i]).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn unresolved_width_returns_raw_path() {
        let p = sample_path(&spec(2)).unwrap();
        let m = mollify_path(&p, 0.005);
        assert!(m.width.is_none());
        assert_eq!(m.coeffs_with_rate(0.43).0, p.coeffs_at(0.43));
    }

    #[test]
    fn stopping_time_cases() {
        let s = spec(0);
        let zero = NoisePath::from_samples(s.clone(), vec![vec![[0.0; 4]; 13]; s.steps() + 1]).unwrap();
        assert_eq!(stopping_time(&zero, 1.0, 0.05, 124, 1.0), 2.0);
        let p = sample_path(&s).unwrap();
        assert_eq!(stopping_time(&p, 0.0, 0.05, 124, 1.0), 0.0);
    }

    #[test]
    fn stopping_time_monotone_in_level() {
        for seed in 0..50 {
            let p = sample_path(&spec(seed)).unwrap();
            let levels = [0.5, 1.0, 2.0, 4.0, 8.0];
            let ts: Vec<f64> = levels.iter().map(|&l| stopping_time(&p, l, 0.05, 124, 1.0)).collect();
            assert!(ts.windows(2).all(|w| w[0] <= w[1]), "{ts:?}");
        }
    }

    #[test]
    fn q_constant() {
        let mut s = spec(0);
        s.k_max = 0;
        assert_eq!(noise_q_constant(&s), 0.0);
        // a single pair: σ = 1 for |k| = 1, all others below 1e-19
        let s = spec(0);
        let single = s
            .modes()
            .iter()
            .filter(|m| m.sigma > 1e-3)
            .count();
        assert_eq!(single, 3);
        assert!((noise_q_constant(&s) - 3.0).abs() < 1e-15);
        let mut d = s.clone();
        d.amplitude = 2.0;
        assert!((noise_q_constant(&d) - 4.0 * noise_q_constant(&s)).abs() < 1e-14);
    }

    #[test]
    fn single_pair_q_is_one() {
        let m = NoiseMode {
            k: [1, 0, 0],
            sigma: 1.0,
            pol: polarizations([1, 0, 0]),
        };
        assert_eq!(0.5 * 2.0 * m.sigma * m.sigma, 1.0);
    }

    #[test]
    fn binary_roundtrip() {
        let p = sample_path(&spec(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("noise.wen");
        p.write(&f).unwrap();
        assert_eq!(NoisePath::read(&f).unwrap(), p);
    }

    #[test]
    fn band_matches_grid_synthesis() {
        let p = sample_path(&spec(4)).unwrap();
        let m = mollify_path(&p, 0.3);
        let (z, dz) = m.field_and_rate(grid(), 0.8).unwrap();
        let (bz, bdz) = m.band_with_rate(0.8);
        // only the three axis modes survive the 1e-14 cut at s_Q = 128
        assert_eq!(bz.modes.len(), 3);
        let (gz, gdz) = (bz.to_field(grid()).unwrap(), bdz.to_field(grid()).unwrap());
        assert!(gz.sub(&z).unwrap().sup_norm() <= 1e-12 * z.sup_norm());
        assert!(gdz.sub(&dz).unwrap().sup_norm() <= 1e-12 * dz.sup_norm());
    }
}
