use std::sync::Arc;

use super::algebra::{identity, norm_sq, outer_self, times, traceless};
use super::{EnergyProfile, ErFlow, Snapshot, BAND_TOL};
use crate::error::Result;
use crate::noise::{mollify_path, NoisePath};
use crate::spectral::{GridSpec, LpBand, Rank, TorusField};
use crate::transport::BandField;

/// The q = 0 tuple built from z₀ alone:
/// v₀ = 0, p₀ = −|z₀|²/3, R₀ = z₀⊗̊z₀ + (2E/3)Id, φ₀ = −(|z₀|²/2)z₀.
#[derive(Debug, Clone)]
pub struct InitialTuple {
    pub grid: GridSpec,
    pub path: Arc<NoisePath>,
    /// Mollification width i₀ of the noise.
    pub width: f64,
    pub energy: EnergyProfile,
}

struct Parts {
    p: TorusField,
    r: TorusField,
    phi: TorusField,
}

fn parts(z: &TorusField, e: f64) -> Result<Parts> {
    let g = z.grid();
    let z2 = norm_sq(z)?;
    Ok(Parts {
        p: z2.scale(-1.0 / 3.0),
        r: traceless(&outer_self(z)?)?.add(&identity(g, 2.0 * e / 3.0))?,
        phi: times(&z2, z)?.scale(-0.5),
    })
}

impl InitialTuple {
    pub fn new(grid: GridSpec, path: Arc<NoisePath>, width: f64, energy: EnergyProfile) -> Self {
        Self {
            grid,
            path,
            width,
            energy,
        }
    }

    pub fn z_band(&self, t: f64) -> BandField {
        mollify_path(&self.path, self.width).band_with_rate(t).0
    }

    pub fn z_field(&self, t: f64) -> Result<TorusField> {
        mollify_path(&self.path, self.width).field_at(self.grid, t)
    }

    // R₀ and φ₀ are polynomials of degree ≤ 3 in z₀, so an alias-free
    // auxiliary grid gives their bands exactly.
    fn aux_parts(&self, t: f64) -> Result<(GridSpec, Parts)> {
        let zb = self.z_band(t);
        let aux = aux_grid(3 * zb.k_max)?;
        let z = zb.to_field(aux)?;
        Ok((aux, parts(&z, self.energy.value(t))?))
    }
}

/// Smallest admissible grid holding |k|∞ ≤ k without aliasing onto itself.
fn aux_grid(k: i64) -> Result<GridSpec> {
    GridSpec::new((2 * k.max(1) as usize + 2).max(8))
}

fn lp(l: f64) -> impl Fn([i64; 3]) -> f64 {
    let band = LpBand::below_length(l);
    move |k| band.multiplier(k)
}

impl ErFlow for InitialTuple {
    fn level(&self) -> usize {
        0
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn energy(&self) -> &EnergyProfile {
        &self.energy
    }

    fn snapshot(&self, t: f64) -> Result<Arc<Snapshot>> {
        let z = self.z_field(t)?;
        let Parts { p, r, phi } = parts(&z, self.energy.value(t))?;
        Ok(Arc::new(Snapshot {
            q: 0,
            t,
            v: TorusField::zeros(self.grid, Rank::Vector),
            p,
            r,
            phi,
            z,
        }))
    }

    fn velocity_band(&self, t: f64, l: f64) -> Result<BandField> {
        let zb = self.z_band(t);
        let aux = aux_grid(zb.k_max)?;
        let m = lp(l);
        Ok(BandField::from_field(&zb.to_field(aux)?, Some(&m), BAND_TOL))
    }

    fn stress_band(&self, t: f64, l: f64) -> Result<BandField> {
        let (_, p) = self.aux_parts(t)?;
        let m = lp(l);
        Ok(BandField::from_field(&p.r, Some(&m), BAND_TOL))
    }

    fn current_band(&self, t: f64, l: f64) -> Result<BandField> {
        let (_, p) = self.aux_parts(t)?;
        let m = lp(l);
        Ok(BandField::from_field(&p.phi, Some(&m), BAND_TOL))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_path, NoiseSpec};
    use crate::spectral::lp_project;

    fn tuple(amplitude: f64, energy: EnergyProfile) -> InitialTuple {
        let spec = NoiseSpec {
            s_q: 128.0,
            k_max: 1,
            seed: 3,
            dt: 0.01,
            horizon: 2.0,
            amplitude,
        };
        InitialTuple::new(GridSpec::new(16).unwrap(), Arc::new(sample_path(&spec).unwrap()), 0.2, energy)
    }

    #[test]
    fn zero_noise_zero_energy_is_zero() {
        let s = tuple(0.0, EnergyProfile::Constant(0.0)).snapshot(0.7).unwrap();
        for (_, f) in s.fields() {
            assert_eq!(f.sup_norm(), 0.0);
        }
    }

    #[test]
    fn trace_is_twice_the_energy() {
        let e = EnergyProfile::Linear { e0: 0.1, slope: 1.0 };
        let s = tuple(0.5, e.clone()).snapshot(0.7).unwrap();
        let tr = s.r.trace().unwrap();
        let want = 2.0 * e.value(0.7);
        assert!(tr.map(|x| x - want).sup_norm() < 1e-14);
        assert!(s.z.sup_norm() > 1e-3);
    }

    #[test]
    fn bands_match_projected_snapshot() {
        let tup = tuple(0.5, EnergyProfile::Constant(0.3));
        let s = tup.snapshot(0.9).unwrap();
        let l = 0.45;
        let band = LpBand::below_length(l);
        for (b, f) in [
            (tup.stress_band(0.9, l).unwrap(), &s.r),
            (tup.current_band(0.9, l).unwrap(), &s.phi),
            (tup.velocity_band(0.9, l).unwrap(), &s.u()),
        ] {
            let want = lp_project(f, band);
            let got = b.to_field(tup.grid).unwrap();
            assert!(got.sub(&want).unwrap().sup_norm() <= 1e-13 * (1.0 + want.sup_norm()));
        }
    }
}
