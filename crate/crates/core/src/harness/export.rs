//! Plot-ready CSV tables and snapshot trees on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::iterate::{EnergyProfile, ErFlow, Snapshot};
use crate::spectral::{read_snapshot, to_spectrum, GridSpec, Rank, TorusField};

pub const SERIES_HEADER: &str = "q,t,energy_u,energy_v,energy_profile,mean_trace_r,r_sup,phi_sup,v_sup,z_l2";
pub const SPECTRUM_HEADER: &str = "q,t,shell,energy";

fn e(x: f64) -> String {
    format!("{x:.16e}")
}

/// ½‖v + z‖²_{L²} over the box.
pub fn kinetic_energy(s: &Snapshot) -> f64 {
    0.5 * s.u().l2_norm().powi(2)
}

/// One row per snapshot, in the order given.
pub fn export_series(history: &[Arc<Snapshot>], energy: &EnergyProfile) -> Result<String> {
    let mut out = format!("{SERIES_HEADER}\n");
    for s in history {
        let tr = s.r.trace()?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.q,
            e(s.t),
            e(kinetic_energy(s)),
            e(0.5 * s.v.l2_norm().powi(2)),
            e(energy.value(s.t)),
            e(tr.mean()[0]),
            e(s.r.sup_norm()),
            e(s.phi.sup_magnitude()),
            e(s.v.sup_magnitude()),
            e(s.z.l2_norm()),
        );
    }
    Ok(out)
}

/// Shell energies ½(2π)³ Σ_{round|k| = m} |û_k|²; they sum to ½‖u‖²_{L²}.
pub fn shell_spectrum(u: &TorusField) -> Vec<f64> {
    let g = u.grid();
    let spec = to_spectrum(u);
    let vol = (2.0 * std::f64::consts::PI).powi(3);
    let kmax = (3.0f64.sqrt() * (g.n() / 2) as f64).round() as usize;
    let mut shells = vec![0.0; kmax + 1];
    for idx in 0..g.len() {
        let k = g.wavevector(idx);
        let m = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt().round() as usize;
        let a: f64 = spec.comps.iter().map(|c| c[idx].norm_sqr()).sum();
        shells[m] += 0.5 * vol * a;
    }
    shells
}

pub fn export_spectra(history: &[Arc<Snapshot>]) -> String {
    let mut out = format!("{SPECTRUM_HEADER}\n");
    for s in history {
        for (m, x) in shell_spectrum(&s.u()).iter().enumerate() {
            let _ = writeln!(out, "{},{},{m},{}", s.q, e(s.t), e(*x));
        }
    }
    out
}

pub const FIELD_NAMES: [&str; 5] = ["v", "p", "R", "phi", "z"];

pub fn snapshot_path(root: &Path, q: usize, k: usize, name: &str) -> PathBuf {
    root.join(format!("q{q}")).join(format!("k{k:04}_{name}.wef"))
}

/// A level read back from `q{q}/k####_{field}.wef` files; only stored times exist.
pub struct SavedFlow {
    q: usize,
    grid: GridSpec,
    energy: EnergyProfile,
    snaps: Vec<Arc<Snapshot>>,
}

impl SavedFlow {
    pub fn load(root: &Path, q: usize, energy: EnergyProfile) -> Result<Self> {
        let dir = root.join(format!("q{q}"));
        let mut ks: BTreeMap<usize, ()> = BTreeMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(k) = name
                .strip_prefix('k')
                .and_then(|r| r.strip_suffix("_v.wef"))
                .and_then(|k| k.parse().ok())
            {
                ks.insert(k, ());
            }
        }
        let mut snaps = Vec::new();
        let mut grid = None;
        for &k in ks.keys() {
            let mut f = Vec::with_capacity(5);
            let mut t = None;
            for name in FIELD_NAMES {
                let (field, tf) = read_snapshot(&snapshot_path(root, q, k, name))?;
                if t.is_some_and(|t| t != tf) {
                    return Err(Error::Format(format!("q{q} k{k}: fields stamped at different times")));
                }
                t = Some(tf);
                f.push(field);
            }
            let expect = [Rank::Vector, Rank::Scalar, Rank::Sym, Rank::Vector, Rank::Vector];
            for (x, r) in f.iter().zip(expect) {
                x.expect_rank(r)?;
            }
            let g = f[0].grid();
            if grid.is_some_and(|x| x != g) {
                return Err(Error::Format(format!("q{q}: snapshots on different grids")));
            }
            grid = Some(g);
            let mut it = f.into_iter();
            let mut next = || it.next().expect("five fields");
            snaps.push(Arc::new(Snapshot {
                q,
                t: t.expect("five fields"),
                v: next(),
                p: next(),
                r: next(),
                phi: next(),
                z: next(),
            }));
        }
        let grid = grid.ok_or_else(|| Error::Snapshots(format!("no snapshots under {}", dir.display())))?;
        Ok(Self { q, grid, energy, snaps })
    }

    pub fn snapshots(&self) -> &[Arc<Snapshot>] {
        &self.snaps
    }

    pub fn times(&self) -> Vec<f64> {
        self.snaps.iter().map(|s| s.t).collect()
    }
}

impl ErFlow for SavedFlow {
    fn level(&self) -> usize {
        self.q
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn energy(&self) -> &EnergyProfile {
        &self.energy
    }

    fn snapshot(&self, t: f64) -> Result<Arc<Snapshot>> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.snaps
            .iter()
            .find(|s| (s.t - t).abs() <= tol)
            .cloned()
            .ok_or_else(|| Error::Snapshots(format!("no saved q{} snapshot at t = {t}", self.q)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterate::algebra::identity;

    fn snap(g: GridSpec) -> Arc<Snapshot> {
        Arc::new(Snapshot {
            q: 0,
            t: 0.5,
            v: TorusField::vector_fn(g, |x| [x[1].sin() + 0.3 * (2.0 * x[2]).cos(), 0.2, 0.0]),
            p: TorusField::zeros(g, Rank::Scalar),
            r: identity(g, 0.1),
            phi: TorusField::zeros(g, Rank::Vector),
            z: TorusField::vector_fn(g, |x| [0.0, (3.0 * x[0]).sin(), 0.0]),
        })
    }

    #[test]
    fn empty_history_is_header_only() {
        assert_eq!(export_series(&[], &EnergyProfile::Constant(0.0)).unwrap(), format!("{SERIES_HEADER}\n"));
        assert_eq!(export_spectra(&[]), format!("{SPECTRUM_HEADER}\n"));
    }

    #[test]
    fn energy_and_spectrum_agree() {
        let g = GridSpec::new(16).unwrap();
        let s = snap(g);
        let total = kinetic_energy(&s);
        let shells: f64 = shell_spectrum(&s.u()).iter().sum();
        assert!((shells - total).abs() <= 1e-10 * total);
        let csv = export_series(&[s.clone()], &EnergyProfile::Constant(0.0)).unwrap();
        let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(row[2], total);
    }

    #[test]
    fn saved_flow_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(8).unwrap();
        let s = snap(g);
        std::fs::create_dir_all(dir.path().join("q0")).unwrap();
        for (name, f) in s.fields() {
            crate::spectral::write_snapshot(&snapshot_path(dir.path(), 0, 3, name), f, s.t).unwrap();
        }
        let flow = SavedFlow::load(dir.path(), 0, EnergyProfile::Constant(0.0)).unwrap();
        assert_eq!(*flow.snapshot(0.5).unwrap(), *s);
        assert!(matches!(flow.snapshot(0.4), Err(Error::Snapshots(_))));
    }
}
