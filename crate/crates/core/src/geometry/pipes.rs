use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use super::families::IVec3;
use super::lattice::TransverseLattice;
use crate::bump::plateau;
use crate::error::{Error, Result};
use crate::quad::{bessel_j0, Composite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipeKind {
    /// ∫ψ = ∫ψ³ = 0, ⨍ψ² = 1
    Stress,
    /// ∫ψ = 0, ⨍ψ³ = 1
    Flux,
}

/// Radial building block β: 1 at the origin, 0 for s ≥ 1, flat at both ends.
#[inline]
fn beta(s: f64) -> f64 {
    plateau(s, 0.0, 1.0)
}

const TABLE_SIZE: usize = 4096;

// M_β(x) = ∫₀ˣ β(τ)τ dτ on [0, 1], tabulated for Hermite interpolation.
fn m_beta_table() -> &'static Vec<f64> {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 1.0 / TABLE_SIZE as f64;
        let mut t = vec![0.0; TABLE_SIZE + 1];
        let q = Composite::new(0.0, h, 1, 12);
        for i in 0..TABLE_SIZE {
            let lo = i as f64 * h;
            t[i + 1] = t[i] + q.integrate(|x| beta(lo + x) * (lo + x));
        }
        t
    })
}

#[inline]
fn m_beta(x: f64) -> f64 {
    let t = m_beta_table();
    if x >= 1.0 {
        return t[TABLE_SIZE];
    }
    let h = 1.0 / TABLE_SIZE as f64;
    let u = x / h;
    let i = (u as usize).min(TABLE_SIZE - 1);
    let s = u - i as f64;
    let (x0, x1) = (i as f64 * h, (i + 1) as f64 * h);
    let (d0, d1) = (beta(x0) * x0 * h, beta(x1) * x1 * h);
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * t[i]
        + (s3 - 2.0 * s2 + s) * d0
        + (-2.0 * s3 + 3.0 * s2) * t[i + 1]
        + (s3 - s2) * d1
}

/// Mean-zero radial profile h(r) = A β(r/r₁) − B β(r/r_h), B = A (r₁/r_h)².
#[derive(Debug, Clone, Copy)]
struct Radial {
    a: f64,
    b: f64,
    r1: f64,
    rh: f64,
}

impl Radial {
    fn unit(rh: f64) -> Self {
        let r1 = 0.5 * rh;
        Self {
            a: 1.0,
            b: (r1 / rh).powi(2),
            r1,
            rh,
        }
    }

    fn scaled(self, s: f64) -> Self {
        Self {
            a: self.a * s,
            b: self.b * s,
            ..self
        }
    }

    #[inline]
    fn value(&self, r: f64) -> f64 {
        if r >= self.rh {
            return 0.0;
        }
        self.a * beta(r / self.r1) - self.b * beta(r / self.rh)
    }

    /// ∇𝒢 for −Δ𝒢 = h in the plane: −(∫₀ʳ h s ds / r²) w.
    #[inline]
    fn potential_gradient(&self, w: [f64; 2]) -> [f64; 2] {
        let r2 = w[0] * w[0] + w[1] * w[1];
        if r2 >= self.rh * self.rh {
            return [0.0, 0.0];
        }
        let coef = if r2 < 1e-24 {
            -0.5 * self.value(0.0)
        } else {
            let r = r2.sqrt();
            let m = self.a * self.r1 * self.r1 * m_beta(r / self.r1)
                - self.b * self.rh * self.rh * m_beta(r / self.rh);
            -m / r2
        };
        [coef * w[0], coef * w[1]]
    }

    fn rule(&self) -> Composite {
        Composite::new(0.0, self.rh, 256, 16)
    }

    /// ∫_{ℝ²} h^p
    fn moment(&self, p: i32) -> f64 {
        2.0 * PI * self.rule().integrate(|r| self.value(r).powi(p) * r)
    }

    /// 2D Fourier transforms of h, h², h³ at radial frequency κ.
    fn hankel(&self, rule: &Composite, kappa: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (&r, &w) in rule.nodes.iter().zip(&rule.weights) {
            let h = self.value(r);
            if h == 0.0 {
                continue;
            }
            let j = w * bessel_j0(kappa * r) * r;
            out[0] += h * j;
            out[1] += h * h * j;
            out[2] += h * h * h * j;
        }
        out.map(|x| 2.0 * PI * x)
    }
}

/// Mikado profile ψ_f, constant along f and supported in a tube of radius `tube_radius`
/// around the periodic line through the origin.
#[derive(Debug, Clone)]
pub struct Pipe {
    pub kind: PipeKind,
    /// Direction vector entering the perturbation (may be non-primitive).
    pub direction: IVec3,
    pub lattice: TransverseLattice,
    pub tube_radius: f64,
    radial: Radial,
    /// Centre offset of the positive lobe (stress kind), in lattice-plane coordinates.
    lobe: [f64; 2],
}

impl Pipe {
    /// `eta`: the tube radius is η/10.
    pub fn new(direction: IVec3, kind: PipeKind, eta: f64) -> Result<Self> {
        let lattice = TransverseLattice::new(direction)?;
        let tube_radius = eta / 10.0;
        if !(tube_radius > 0.0) || 2.0 * tube_radius >= lattice.min_spacing() {
            return Err(Error::Pipe(format!(
                "tube radius {tube_radius} overlaps its periodic images for {direction:?} (spacing {})",
                lattice.min_spacing()
            )));
        }
        let fnorm = lattice.line_length() / (2.0 * PI);
        let scale = fnorm / (2.0 * PI).powi(2);
        let (radial, lobe) = match kind {
            PipeKind::Flux => {
                let h = Radial::unit(tube_radius);
                let m3 = h.moment(3);
                if !(m3 > 0.0) {
                    return Err(Error::Pipe("flux profile has nonpositive cubic moment".into()));
                }
                (h.scaled((scale * m3).powf(-1.0 / 3.0)), [0.0, 0.0])
            }
            PipeKind::Stress => {
                let h = Radial::unit(0.5 * tube_radius);
                let m2 = 2.0 * h.moment(2);
                (h.scaled((scale * m2).powf(-0.5)), [0.5 * tube_radius, 0.0])
            }
        };
        let pipe = Self {
            kind,
            direction,
            lattice,
            tube_radius,
            radial,
            lobe,
        };
        let target = match kind {
            PipeKind::Stress => pipe.mean_power(2),
            PipeKind::Flux => pipe.mean_power(3),
        };
        if (target - 1.0).abs() > 1e-6 {
            return Err(Error::Pipe(format!("normalization residual {}", target - 1.0)));
        }
        Ok(pipe)
    }

    /// Transverse coordinates of y relative to the pipe axis (minimal image).
    #[inline]
    pub fn transverse(&self, y: &[f64; 3]) -> [f64; 2] {
        self.lattice.offset(y)
    }

    /// Profile at transverse offset w.
    #[inline]
    pub fn profile(&self, w: [f64; 2]) -> f64 {
        match self.kind {
            PipeKind::Flux => self.radial.value(w[0].hypot(w[1])),
            PipeKind::Stress => {
                let c = self.lobe;
                self.radial.value((w[0] - c[0]).hypot(w[1] - c[1]))
                    - self.radial.value((w[0] + c[0]).hypot(w[1] + c[1]))
            }
        }
    }

    #[inline]
    pub fn value(&self, y: &[f64; 3]) -> f64 {
        let w = self.transverse(y);
        if w[0] * w[0] + w[1] * w[1] >= self.tube_radius * self.tube_radius {
            return 0.0;
        }
        self.profile(w)
    }

    /// Gradient of 𝒢 (−Δ𝒢 = ψ) at transverse offset w, as a 3-vector.
    #[inline]
    pub fn potential_gradient(&self, w: [f64; 2]) -> [f64; 3] {
        let g = match self.kind {
            PipeKind::Flux => self.radial.potential_gradient(w),
            PipeKind::Stress => {
                let c = self.lobe;
                let a = self.radial.potential_gradient([w[0] - c[0], w[1] - c[1]]);
                let b = self.radial.potential_gradient([w[0] + c[0], w[1] + c[1]]);
                [a[0] - b[0], a[1] - b[1]]
            }
        };
        let [e1, e2] = self.lattice.frame;
        [
            g[0] * e1[0] + g[1] * e2[0],
            g[0] * e1[1] + g[1] * e2[1],
            g[0] * e1[2] + g[1] * e2[2],
        ]
    }

    /// ψ and Φ = ∇𝒢 × f at y, where curl Φ = ψ f.
    #[inline]
    pub fn value_and_potential(&self, y: &[f64; 3]) -> Option<(f64, [f64; 3])> {
        let w = self.transverse(y);
        if w[0] * w[0] + w[1] * w[1] >= self.tube_radius * self.tube_radius {
            return None;
        }
        let g = self.potential_gradient(w);
        let f = self.direction.map(|x| x as f64);
        let phi = [
            g[1] * f[2] - g[2] * f[1],
            g[2] * f[0] - g[0] * f[2],
            g[0] * f[1] - g[1] * f[0],
        ];
        Some((self.profile(w), phi))
    }

    /// Gradient of ψ by central differences across the section (transverse by construction).
    pub fn gradient(&self, y: &[f64; 3]) -> [f64; 3] {
        let w = self.transverse(y);
        let h = 1e-7 * self.tube_radius;
        let d0 = (self.profile([w[0] + h, w[1]]) - self.profile([w[0] - h, w[1]])) / (2.0 * h);
        let d1 = (self.profile([w[0], w[1] + h]) - self.profile([w[0], w[1] - h])) / (2.0 * h);
        let [e1, e2] = self.lattice.frame;
        [
            d0 * e1[0] + d1 * e2[0],
            d0 * e1[1] + d1 * e2[1],
            d0 * e1[2] + d1 * e2[2],
        ]
    }

    /// ⨍_{T³} ψ^p from the radial moments.
    pub fn mean_power(&self, p: i32) -> f64 {
        let fnorm = self.lattice.line_length() / (2.0 * PI);
        let m = self.radial.moment(p);
        let cross = match self.kind {
            PipeKind::Flux => m,
            PipeKind::Stress => {
                if p % 2 == 0 {
                    2.0 * m
                } else {
                    0.0
                }
            }
        };
        fnorm * cross / (2.0 * PI).powi(2)
    }

    /// ∫_{ℝ²} ψ^p over the cross-section by a mirror-symmetric tensor Gauss rule.
    pub fn cross_section_moment(&self, p: i32) -> f64 {
        let r = self.tube_radius;
        let q = Composite::new(-r, r, 96, 8);
        let mut total = 0.0;
        for (x, wx) in q.nodes.iter().zip(&q.weights) {
            let mut row = 0.0;
            for (y, wy) in q.nodes.iter().zip(&q.weights) {
                row += wy * self.profile([*x, *y]).powi(p);
            }
            total += wx * row;
        }
        total
    }

    /// Fourier tables, failing when more than 1e-6 of ⨍ψ² lies beyond k_cut.
    pub fn fourier(&self, k_cut: i64) -> Result<PipeFourier> {
        let t = self.fourier_table(k_cut);
        if t.missing_energy > 1e-6 {
            return Err(Error::Pipe(format!(
                "k_cut = {k_cut} misses a fraction {:.2e} of the profile energy",
                t.missing_energy
            )));
        }
        Ok(t)
    }

    /// Fourier coefficients of ψ, ψ², ψ³ over T³ for |k|_∞ ≤ k_cut.
    pub fn fourier_table(&self, k_cut: i64) -> PipeFourier {
        let f = self.lattice.direction;
        let fnorm = self.lattice.line_length() / (2.0 * PI);
        let pre = fnorm / (2.0 * PI).powi(2);
        let rule = Composite::new(0.0, self.radial.rh, 96, 12);
        let mut modes = Vec::new();
        let mut energy = 0.0;
        for a in -k_cut..=k_cut {
            for b in -k_cut..=k_cut {
                for c in -k_cut..=k_cut {
                    if a * f[0] + b * f[1] + c * f[2] != 0 || (a, b, c) == (0, 0, 0) {
                        continue;
                    }
                    let kv = [a as f64, b as f64, c as f64];
                    let kt = self.lattice.project(&kv);
                    let kappa = kt[0].hypot(kt[1]);
                    let phase = kt[0] * self.lobe[0] + kt[1] * self.lobe[1];
                    let hk = self.radial.hankel(&rule, kappa);
                    let coeff = |p: i32| -> Complex64 {
                        let hk = hk[(p - 1) as usize];
                        match self.kind {
                            PipeKind::Flux => Complex64::new(pre * hk, 0.0),
                            PipeKind::Stress => {
                                // lobes at ±c with signs (+, (−1)^p)
                                let plus = Complex64::from_polar(1.0, -phase);
                                let minus = Complex64::from_polar(1.0, phase);
                                let s = if p % 2 == 0 { 1.0 } else { -1.0 };
                                (plus + minus * s) * (pre * hk)
                            }
                        }
                    };
                    let m = PipeMode {
                        k: [a, b, c],
                        b: coeff(1),
                        c: coeff(2),
                        d: coeff(3),
                    };
                    energy += m.b.norm_sqr();
                    modes.push(m);
                }
            }
        }
        let c0 = self.mean_power(2);
        let d0 = self.mean_power(3);
        PipeFourier {
            modes,
            c0,
            d0,
            missing_energy: (c0 - energy) / c0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeMode {
    pub k: IVec3,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

/// Nonzero Fourier modes of ψ, ψ², ψ³ with the zero modes ⨍ψ², ⨍ψ³ kept apart.
#[derive(Debug, Clone)]
pub struct PipeFourier {
    pub modes: Vec<PipeMode>,
    pub c0: f64,
    pub d0: f64,
    /// Fraction of ⨍ψ² carried by modes beyond the table.
    pub missing_energy: f64,
}

pub fn build_pipe(direction: IVec3, kind: PipeKind, eta: f64) -> Result<Pipe> {
    Pipe::new(direction, kind, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{to_spectrum, GridSpec, TorusField};

    #[test]
    fn m_beta_matches_quadrature() {
        let q = Composite::new(0.0, 0.7, 64, 12);
        let direct = q.integrate(|x| beta(x) * x);
        assert!((m_beta(0.7) - direct).abs() < 1e-13);
    }

    #[test]
    fn stress_moments() {
        let p = Pipe::new([1, 2, 0], PipeKind::Stress, 1.0).unwrap();
        assert!(p.cross_section_moment(1).abs() < 1e-12);
        assert!(p.cross_section_moment(3).abs() < 1e-12 * p.cross_section_moment(2));
        let fnorm = 5f64.sqrt();
        let mean2 = fnorm * p.cross_section_moment(2) / (4.0 * PI * PI);
        assert!((mean2 - 1.0).abs() < 1e-6);
        assert!((p.mean_power(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flux_moments() {
        let p = Pipe::new([1, 1, 1], PipeKind::Flux, 0.5).unwrap();
        assert!(p.cross_section_moment(1).abs() < 1e-12 * p.cross_section_moment(2));
        let mean3 = 3f64.sqrt() * p.cross_section_moment(3) / (4.0 * PI * PI);
        assert!((mean3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn potential_recovers_profile() {
        // −Δ𝒢 = ψ checked by finite differences of ∇𝒢 in the plane
        let p = Pipe::new([0, 0, 1], PipeKind::Stress, 2.0).unwrap();
        let h = 1e-5;
        for &(x, y) in &[(0.05, 0.02), (0.1, -0.03), (-0.07, 0.09)] {
            let w = [x, y];
            let div = (p.potential_gradient([x + h, y])[0] - p.potential_gradient([x - h, y])[0]) / (2.0 * h);
            let g = |w: [f64; 2]| {
                let v = p.potential_gradient(w);
                [p.lattice.frame[0], p.lattice.frame[1]].map(|e| e[0] * v[0] + e[1] * v[1] + e[2] * v[2])
            };
            let dxx = (g([x + h, y])[0] - g([x - h, y])[0]) / (2.0 * h);
            let dyy = (g([x, y + h])[1] - g([x, y - h])[1]) / (2.0 * h);
            let _ = div;
            assert!((-(dxx + dyy) - p.profile(w)).abs() < 1e-5 * p.profile(w).abs().max(1.0));
        }
        // compact support of the potential
        assert_eq!(p.potential_gradient([0.25, 0.0]), [0.0; 3]);
    }

    #[test]
    fn constant_along_direction() {
        let p = Pipe::new([1, -1, 0], PipeKind::Flux, 1.0).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.37;
            let y = [0.01 + t, 0.02 - t, 0.3];
            let g = p.gradient(&y);
            assert!((g[0] - g[1]).abs() < 1e-8 * (1.0 + g[0].abs()));
            assert!((p.value(&y) - p.value(&[0.01, 0.02, 0.3])).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_tables_match_fft() {
        let p = Pipe::new([0, 0, 1], PipeKind::Stress, 25.0).unwrap();
        let grid = GridSpec::new(64).unwrap();
        let f = TorusField::scalar_fn(grid, |x| p.value(&x));
        let s = to_spectrum(&f);
        let table = p.fourier_table(6);
        let scale = table.modes.iter().map(|m| m.b.norm()).fold(0.0, f64::max);
        let fft_mode = |k: IVec3| {
            let idx = grid.index(grid.fft_index(k[0]), grid.fft_index(k[1]), grid.fft_index(k[2]));
            s.comps[0][idx]
        };
        // modes with f·k ≠ 0 vanish
        assert!(fft_mode([1, 2, 1]).norm() < 1e-10);
        assert!(fft_mode([0, 3, -2]).norm() < 1e-10);
        for m in table.modes.iter().filter(|m| m.k.iter().all(|x| x.abs() <= 4)) {
            assert!((m.b - fft_mode(m.k)).norm() < 1e-3 * scale, "{:?} {} {} {}", m.k, m.b, fft_mode(m.k), scale);
        }
        let p2 = Pipe::new([0, 0, 1], PipeKind::Flux, 25.0).unwrap();
        assert!((p2.fourier_table(1).d0 - 1.0).abs() < 1e-6);
        assert!(matches!(p2.fourier(2), Err(Error::Pipe(_))));
    }

    #[test]
    fn oversize_tube_rejected() {
        assert!(Pipe::new([0, 0, 1], PipeKind::Flux, 40.0).is_err());
    }
}
