use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::geometry::{
    build_families, build_pipe, choose_shifts, DirectionFamilies, FluxDecomposition, IVec3, Pipe, PipeKind,
    ShiftTable, StressDecomposition, SLOTS,
};

/// Slots 0..6 are the stress directions of a class, 6..10 its flux frame.
pub const STRESS_SLOTS: usize = 6;

/// Everything the perturbation needs that depends only on the geometry:
/// decompositions per class, shifted pipes per (class, slot), and the shift table.
#[derive(Debug)]
pub struct PieceSet {
    pub families: DirectionFamilies,
    pub stress: Vec<StressDecomposition>,
    pub flux: Vec<FluxDecomposition>,
    pub pipes: Vec<Vec<Pipe>>,
    pub shifts: ShiftTable,
    pub tube_radius: f64,
    pub margin: f64,
    /// ⨍ψ² and ⨍ψ³ per (class, slot).
    pub mean_sq: Vec<[f64; SLOTS]>,
    pub mean_cube: Vec<[f64; SLOTS]>,
}

impl PieceSet {
    pub fn direction(&self, class: usize, slot: usize) -> IVec3 {
        self.pipes[class][slot].direction
    }

    /// Constant in ρ = C M̄² λ_q^{−γ} δ_{q+1} / inf N₀ large enough that the
    /// flux pieces' contribution ∇ξ M ∇ξᵀ stays below ρN₀/4 when |∇ξ| ≤ 3/2:
    /// at most 2 time cells × 8 space cells × 4 directions contribute, each
    /// bounded by 2^{2/3}(2|f|)^{2/3} Λ_max^{2/3} ⨍ψ² · M̄²ρ₁^{2/3}.
    pub fn rho_constant(&self) -> f64 {
        let mut fmax = 0.0f64;
        let mut lam_max = 0.0f64;
        let mut psi2 = 0.0f64;
        for (class, fd) in self.flux.iter().enumerate() {
            let min_norm = fd
                .dirs
                .iter()
                .take(3)
                .map(|k| norm(k))
                .fold(f64::INFINITY, f64::min);
            lam_max = lam_max.max(fd.radius() / min_norm + fd.offset());
            for slot in STRESS_SLOTS..SLOTS {
                fmax = fmax.max(norm(&self.direction(class, slot)));
                psi2 = psi2.max(self.mean_sq[class][slot]);
            }
        }
        4.0 * 2.25 * 64.0 * 2f64.powf(2.0 / 3.0) * (2.0 * fmax).powf(2.0 / 3.0) * lam_max.powf(2.0 / 3.0) * psi2
    }

    /// Wavenumber scale of the profiles (one lobe across a tube diameter).
    pub fn mode_bound(&self) -> f64 {
        (2.0 * PI / self.tube_radius).ceil()
    }
}

fn norm(k: &IVec3) -> f64 {
    ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt()
}

fn build(margin: f64, lambda_n0: f64) -> Result<PieceSet> {
    let families = build_families()?;
    let shifts = choose_shifts(&families, margin)?;
    let tube_radius = 0.99 * shifts.max_tube_radius(margin);
    if !(tube_radius > 0.0) {
        return Err(Error::Shifts(format!(
            "drift margin {margin:.3e} leaves no room for tubes (separations {:.3e}/{:.3e})",
            shifts.same_separation, shifts.cross_separation
        )));
    }
    shifts.validate(10.0 * tube_radius, margin)?;
    let stress = families.stress.iter().map(StressDecomposition::new).collect::<Result<Vec<_>>>()?;
    let flux = families
        .flux
        .iter()
        .map(|f| FluxDecomposition::new(f, lambda_n0))
        .collect::<Result<Vec<_>>>()?;
    let mut pipes = Vec::with_capacity(families.stress.len());
    let mut mean_sq = Vec::with_capacity(families.stress.len());
    let mut mean_cube = Vec::with_capacity(families.stress.len());
    for (s, f) in families.stress.iter().zip(&families.flux) {
        let mut row = Vec::with_capacity(SLOTS);
        for &d in &s.dirs {
            row.push(build_pipe(d, PipeKind::Stress, 10.0 * tube_radius)?);
        }
        for &d in &f.dirs {
            row.push(build_pipe(d, PipeKind::Flux, 10.0 * tube_radius)?);
        }
        mean_sq.push(std::array::from_fn(|i| row[i].mean_power(2)));
        mean_cube.push(std::array::from_fn(|i| row[i].mean_power(3)));
        pipes.push(row);
    }
    Ok(PieceSet {
        families,
        stress,
        flux,
        pipes,
        shifts,
        tube_radius,
        margin,
        mean_sq,
        mean_cube,
    })
}

/// Built once per (margin, Λ radius) and shared; the shift search is the
/// expensive part.
pub fn piece_set(margin: f64, lambda_n0: f64) -> Result<Arc<PieceSet>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), Arc<PieceSet>>>> = OnceLock::new();
    let key = (margin.to_bits(), lambda_n0.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(p) = cache.lock().unwrap().get(&key) {
        return Ok(p.clone());
    }
    let p = Arc::new(build(margin, lambda_n0)?);
    cache.lock().unwrap().insert(key, p.clone());
    Ok(p)
}

/// Half the cross-parity separation the shift search reaches with no drift
/// allowance: the default budget for relative pipe drift.
pub fn natural_margin() -> Result<f64> {
    static M: OnceLock<f64> = OnceLock::new();
    if let Some(m) = M.get() {
        return Ok(*m);
    }
    let t = choose_shifts(&build_families()?, 0.0)?;
    Ok(*M.get_or_init(|| 0.5 * t.cross_separation.min(t.same_separation)))
}
