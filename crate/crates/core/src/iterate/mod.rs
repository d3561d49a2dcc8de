//! The iteration: level-0 tuple, one convex-integration step, and the
//! Euler–Reynolds equations used to check both.

pub mod algebra;
pub mod energy;
pub mod equations;
pub mod initial;
pub mod partition;
pub mod pieces;
pub mod step;

use std::sync::Arc;

pub use energy::EnergyProfile;
pub use equations::{drop_nyquist, energy_residual, momentum_residual};
pub use initial::InitialTuple;
pub use partition::Partition;
pub use pieces::{piece_set, PieceSet};
pub use step::{Diagnostics, Step, StepConfig};

use crate::error::Result;
use crate::spectral::{GridSpec, LpBand, TorusField};
use crate::transport::BandField;

/// Coefficients below this fraction of the largest are dropped from bands.
pub const BAND_TOL: f64 = 1e-14;

/// (v, p, R, φ, z) at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub q: usize,
    pub t: f64,
    pub v: TorusField,
    pub p: TorusField,
    pub r: TorusField,
    pub phi: TorusField,
    pub z: TorusField,
}

impl Snapshot {
    pub fn u(&self) -> TorusField {
        self.v.add(&self.z).expect("same grid")
    }

    pub fn fields(&self) -> [(&'static str, &TorusField); 5] {
        [("v", &self.v), ("p", &self.p), ("R", &self.r), ("phi", &self.phi), ("z", &self.z)]
    }
}

/// A dissipative Euler–Reynolds flow, evaluated on demand.
pub trait ErFlow: Send + Sync {
    fn level(&self) -> usize;
    fn grid(&self) -> GridSpec;
    fn energy(&self) -> &EnergyProfile;
    fn snapshot(&self, t: f64) -> Result<Arc<Snapshot>>;

    /// P_{≤l⁻¹}(v + z) at t as an exact band.
    fn velocity_band(&self, t: f64, l: f64) -> Result<BandField> {
        let s = self.snapshot(t)?;
        Ok(lp_band(&s.u(), l))
    }

    /// P_{≤l⁻¹}R at t.
    fn stress_band(&self, t: f64, l: f64) -> Result<BandField> {
        Ok(lp_band(&self.snapshot(t)?.r, l))
    }

    /// P_{≤l⁻¹}φ at t.
    fn current_band(&self, t: f64, l: f64) -> Result<BandField> {
        Ok(lp_band(&self.snapshot(t)?.phi, l))
    }
}

pub(crate) fn lp_band(f: &TorusField, l: f64) -> BandField {
    let band = LpBand::below_length(l);
    BandField::from_field(f, Some(&|k| band.multiplier(k)), BAND_TOL)
}
