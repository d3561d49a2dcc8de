use nalgebra::{SMatrix, SVector};

use super::families::{basis_matrix, FluxFrame, IVec3, StressFamily};
use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

fn sym_vec(k: &Mat3) -> SVector<f64, 6> {
    SVector::from([
        k[0][0],
        0.5 * (k[0][1] + k[1][0]),
        0.5 * (k[0][2] + k[2][0]),
        k[1][1],
        0.5 * (k[1][2] + k[2][1]),
        k[2][2],
    ])
}

/// Precomputed inverse of the k_i⊗k_i basis for one stress family.
#[derive(Debug, Clone)]
pub struct StressDecomposition {
    pub dirs: [IVec3; 6],
    inverse: SMatrix<f64, 6, 6>,
}

impl StressDecomposition {
    pub fn new(family: &StressFamily) -> Result<Self> {
        family.validate()?;
        let inverse = basis_matrix(&family.dirs)
            .try_inverse()
            .ok_or_else(|| Error::Geometry("singular basis".into()))?;
        Ok(Self {
            dirs: family.dirs,
            inverse,
        })
    }

    /// Coefficients c_i with K = Σ c_i k_i⊗k_i (no sign check).
    #[inline]
    pub fn coefficients(&self, k: &Mat3) -> [f64; 6] {
        (self.inverse * sym_vec(k)).into()
    }

    /// Γ_i(K) = √c_i, requiring every c_i > 0.
    pub fn gamma(&self, k: &Mat3) -> Result<[f64; 6]> {
        let c = self.coefficients(k);
        let mut g = [0.0; 6];
        for i in 0..6 {
            if !(c[i] > 0.0) {
                return Err(Error::GammaDomain {
                    direction: self.dirs[i],
                    coefficient: c[i],
                });
            }
            g[i] = c[i].sqrt();
        }
        Ok(g)
    }

    /// Largest N such that every c_i stays positive on the box |K − Id|_∞ ≤ N.
    ///
    /// The coefficients are affine in the six free entries, so the minimum over
    /// the box is c_i(Id) − N Σ_j |A⁻¹_ij| and the supremum is explicit.
    pub fn positivity_radius(&self) -> f64 {
        let id = sym_vec(&IDENTITY);
        let c0 = self.inverse * id;
        (0..6)
            .map(|i| {
                let spread: f64 = (0..6).map(|j| self.inverse[(i, j)].abs()).sum();
                c0[i] / spread
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Safety factor applied to the exact positivity radius.
pub const N0_MARGIN: f64 = 0.99;

pub fn gamma_coeffs(k: &Mat3, family: &StressFamily) -> Result<[f64; 6]> {
    StressDecomposition::new(family)?.gamma(k)
}

/// Certified N₀ for a stress family, with a 1% margin.
pub fn measure_n0(family: &StressFamily) -> Result<f64> {
    Ok(N0_MARGIN * StressDecomposition::new(family)?.positivity_radius())
}

/// Affine weights for a flux frame: Σ Λ_i(u) k_i = u and Λ_i ≥ radius on |u| ≤ radius.
#[derive(Debug, Clone)]
pub struct FluxDecomposition {
    pub dirs: [IVec3; 4],
    radius: f64,
    offset: f64,
    dual: [[f64; 3]; 3],
}

impl FluxDecomposition {
    pub fn new(frame: &FluxFrame, radius: f64) -> Result<Self> {
        frame.validate()?;
        let mut dual = [[0.0; 3]; 3];
        let mut min_norm = f64::INFINITY;
        for i in 0..3 {
            let k = frame.dirs[i].map(|x| x as f64);
            let n2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            min_norm = min_norm.min(n2.sqrt());
            dual[i] = [k[0] / n2, k[1] / n2, k[2] / n2];
        }
        Ok(Self {
            dirs: frame.dirs,
            radius,
            offset: radius * (1.0 + 1.0 / min_norm),
            dual,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// The constant M, i.e. Λ₄.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn lambda(&self, u: &[f64; 3]) -> Result<[f64; 4]> {
        let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if norm > self.radius {
            return Err(Error::LambdaDomain {
                radius: self.radius,
                norm,
            });
        }
        let mut out = [self.offset; 4];
        for i in 0..3 {
            let d = self.dual[i];
            out[i] += u[0] * d[0] + u[1] * d[1] + u[2] * d[2];
        }
        Ok(out)
    }
}

pub fn lambda_coeffs(u: &[f64; 3], frame: &FluxFrame, n0_target: f64) -> Result<[f64; 4]> {
    FluxDecomposition::new(frame, n0_target)?.lambda(u)
}
