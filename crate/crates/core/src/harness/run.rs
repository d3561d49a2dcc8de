//! One run: noise, stopping time, the level-0 tuple, the step, and every artifact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::config::RunConfig;
use super::export::{export_series, export_spectra, snapshot_path, SavedFlow};
use super::report::{
    distance_ratios, estimate_ratios, lei_check, refinement, residual_row, EstimateRatio, LeiSummary, Refinement,
    ResidualRow, DIV_ID, ENERGY_ID, MOMENTUM_ID, RATE_ID,
};
use crate::error::{Error, Result};
use crate::iterate::{Diagnostics, EnergyProfile, ErFlow, InitialTuple, Snapshot, Step};
use crate::noise::{noise_q_constant, sample_path, stopping_time, NoisePath};
use crate::params::{build_cascade, Cascade};
use crate::spectral::io::{encode_snapshot, write_atomic};
use crate::spectral::GridSpec;

/// Snaps requested times to the run's grid so that in-memory evaluation and
/// saved snapshots agree to the bit.
struct OnGrid {
    inner: Arc<dyn ErFlow>,
    anchor: f64,
    h: f64,
}

impl OnGrid {
    fn time(&self, k: i64) -> f64 {
        self.anchor + k as f64 * self.h
    }
}

impl ErFlow for OnGrid {
    fn level(&self) -> usize {
        self.inner.level()
    }
    fn grid(&self) -> GridSpec {
        self.inner.grid()
    }
    fn energy(&self) -> &EnergyProfile {
        self.inner.energy()
    }
    fn snapshot(&self, t: f64) -> Result<Arc<Snapshot>> {
        let k = ((t - self.anchor) / self.h).round() as i64;
        self.inner.snapshot(self.time(k))
    }
}

/// Writes files under the output root; on resume, existing files must match byte for byte.
struct Sink {
    root: PathBuf,
    resume: bool,
    written: Vec<String>,
}

impl Sink {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        if self.resume && path.exists() {
            if std::fs::read(&path)? != bytes {
                return Err(Error::Format(format!("resume: {rel} differs from the recomputed artifact")));
            }
        } else {
            write_atomic(&path, bytes)?;
        }
        self.written.push(rel.to_string());
        Ok(())
    }

    /// Always overwrite: the report of an earlier, failed attempt must not block a resume.
    fn replace(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.written.push(rel.to_string());
        Ok(())
    }
}

fn rel_snapshot(q: usize, k: usize, name: &str) -> String {
    snapshot_path(Path::new(""), q, k, name).to_string_lossy().into_owned()
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub h: f64,
    pub stopping_time: f64,
    pub times: Vec<f64>,
    pub residuals: Vec<ResidualRow>,
    pub refinements: Vec<Refinement>,
    pub lei: LeiSummary,
    pub estimates: Vec<EstimateRatio>,
    pub diagnostics: Option<Diagnostics>,
}

/// Everything up to the first failure; a failure still leaves a report behind.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let root = config.out.clone();
    if root.exists() && std::fs::read_dir(&root)?.next().is_some() && !config.resume {
        return Err(Error::Config(format!(
            "output directory {} is not empty; set resume to continue it",
            root.display()
        )));
    }
    std::fs::create_dir_all(&root)?;
    let mut sink = Sink {
        root: root.clone(),
        resume: config.resume,
        written: Vec::new(),
    };
    let mut report = String::new();
    match execute(config, &mut sink, &mut report) {
        Ok(s) => Ok(s),
        Err(e) => {
            let _ = writeln!(report, "status = failed");
            let kind = match &e {
                Error::Guard(_) => "guard",
                Error::Config(_) => "config",
                Error::Io(_) => "io",
                _ => "error",
            };
            let _ = writeln!(report, "failure.kind = {kind}");
            let _ = writeln!(report, "failure.message = {e}");
            // The report is diagnostic only; resume may legitimately replace it.
            let _ = write_atomic(&root.join("report.txt"), report.as_bytes());
            Err(e)
        }
    }
}

fn execute(config: &RunConfig, sink: &mut Sink, report: &mut String) -> Result<RunSummary> {
    let cascade = build_cascade(config.cascade.clone())?;
    let spec = config.noise_spec();
    let path = Arc::new(sample_path(&spec)?);
    let grid = GridSpec::new(config.grid)?;
    sink.put("config.txt", config.to_text().as_bytes())?;
    sink.put("noise.wen1", &path.encode())?;

    let t_stop = stopping_time(
        &path,
        cascade.input.l_const,
        cascade.input.delta_h,
        cascade.n1,
        cascade.input.t_final,
    );
    let _ = writeln!(report, "formula.momentum = {MOMENTUM_ID}");
    let _ = writeln!(report, "formula.energy = {ENERGY_ID}");
    let _ = writeln!(report, "formula.divergence = {DIV_ID}");
    let _ = writeln!(report, "formula.rate = {RATE_ID}");
    let _ = writeln!(report, "stopping_time = {t_stop:.16e}");

    let level0: Arc<dyn ErFlow> = Arc::new(InitialTuple::new(grid, path.clone(), cascade.i_q[0], config.energy.clone()));
    let step = if cascade.q_max() >= 1 {
        Some(Arc::new(Step::new(level0.clone(), path.clone(), &cascade, config.step_config())?))
    } else {
        None
    };
    let h = match &step {
        Some(s) => s.h,
        None => config.dt.unwrap_or(cascade.eps[0] / config.steps_per_eps as f64),
    };
    let _ = writeln!(report, "h = {h:.16e}");
    let t_end = config.t_start + config.steps as f64 * h;
    if t_end > t_stop {
        return Err(Error::Guard(format!(
            "window end {t_end:.6e} lies beyond the stopping time {t_stop:.6e}"
        )));
    }

    let mut levels: Vec<Arc<OnGrid>> = vec![Arc::new(OnGrid {
        inner: level0,
        anchor: config.t_start,
        h,
    })];
    if let Some(s) = &step {
        levels.push(Arc::new(OnGrid {
            inner: s.clone() as Arc<dyn ErFlow>,
            anchor: config.t_start,
            h,
        }));
    }

    let mut history: Vec<Arc<Snapshot>> = Vec::new();
    let mut residuals = Vec::new();
    let mut refinements = Vec::new();
    let mut estimates: Vec<EstimateRatio> = Vec::new();
    let mut residual_csv = format!("{}\n", ResidualRow::HEADER);
    let times: Vec<f64> = (0..=config.steps).map(|k| levels[0].time(k as i64)).collect();

    for (q, flow) in levels.iter().enumerate() {
        let mut level_snaps = Vec::new();
        for k in 0..=config.steps {
            let s = flow.snapshot(times[k])?;
            for (name, f) in s.fields() {
                sink.put(&rel_snapshot(q, k, name), &encode_snapshot(f, s.t))?;
            }
            level_snaps.push(s);
        }
        for k in 2..=config.steps {
            let row = residual_row(flow.as_ref(), times[k], h)?;
            residual_csv.push_str(&row.csv());
            residual_csv.push('\n');
            residuals.push(row);
        }
        refinements.push(refinement(flow.as_ref(), t_end, h)?);
        for s in &level_snaps {
            merge_max(&mut estimates, estimate_ratios(&cascade, s));
        }
        if q > 0 {
            for (old, new) in history.iter().filter(|s| s.q == q - 1).zip(&level_snaps) {
                merge_max(&mut estimates, distance_ratios(&cascade, old, new)?);
            }
        }
        history.extend(level_snaps);
    }

    let last = levels.last().expect("level 0 always present");
    let lei = lei_check(last.as_ref(), t_end, h, noise_q_constant(&spec), t_stop)?;

    let mut diag_csv = String::from("t,key,value\n");
    let mut final_diag = None;
    if let Some(s) = &step {
        for &t in &times {
            let d = s.diagnostics(t)?;
            for (key, v) in &d {
                let _ = writeln!(diag_csv, "{t:.16e},{key},{v:.16e}");
            }
            final_diag = Some(d);
        }
    }

    sink.put("series.csv", export_series(&history, &config.energy)?.as_bytes())?;
    sink.put("spectrum.csv", export_spectra(&history).as_bytes())?;
    sink.put("residuals.csv", residual_csv.as_bytes())?;
    sink.put("diagnostics.csv", diag_csv.as_bytes())?;

    let _ = writeln!(report, "status = ok");
    write_report(report, &residuals, &refinements, &lei, &estimates, final_diag.as_ref());
    sink.replace("report.txt", report.as_bytes())?;
    sink.put("manifest.txt", manifest(config, &cascade, &path, t_stop, h, step.as_deref(), sink).as_bytes())?;

    Ok(RunSummary {
        out: sink.root.clone(),
        h,
        stopping_time: t_stop,
        times,
        residuals,
        refinements,
        lei,
        estimates,
        diagnostics: final_diag,
    })
}

/// Keep the largest measured value per (q, name, N).
fn merge_max(acc: &mut Vec<EstimateRatio>, new: Vec<EstimateRatio>) {
    for r in new {
        match acc.iter_mut().find(|a| (a.q, a.name, a.n) == (r.q, r.name, r.n)) {
            Some(a) if r.measured > a.measured => a.measured = r.measured,
            Some(_) => {}
            None => acc.push(r),
        }
    }
}

fn write_report(
    s: &mut String,
    residuals: &[ResidualRow],
    refinements: &[Refinement],
    lei: &LeiSummary,
    estimates: &[EstimateRatio],
    diag: Option<&Diagnostics>,
) {
    let _ = writeln!(s, "\n[residuals] dt = h; t, L2 and sup norms");
    for r in residuals {
        let _ = writeln!(
            s,
            "q = {} t = {:.10e} momentum = {:.6e} / {:.6e} energy = {:.6e} / {:.6e} div_v = {:.6e} / {:.6e}",
            r.q, r.t, r.momentum_l2, r.momentum_sup, r.energy_l2, r.energy_sup, r.div_v_l2, r.div_v_sup
        );
    }
    let _ = writeln!(s, "\n[refinement] dt = 4h, 2h, h at the last time");
    for r in refinements {
        s.push_str(&r.summary());
    }
    let _ = writeln!(s, "\n[local energy] D = E′ − energy residual, at t = {:.10e}", lei.t);
    let _ = writeln!(s, "E′ = {:.10e}", lei.e_rate);
    let _ = writeln!(s, "mean D = {:.10e}", lei.dissipation_mean);
    let _ = writeln!(s, "min D = {:.10e}", lei.dissipation_min);
    let _ = writeln!(s, "residual sup = {:.6e} L1 = {:.6e}", lei.residual_sup, lei.residual_l1);
    let _ = writeln!(s, "noise correction = {:.10e}", lei.noise_q);
    let _ = writeln!(s, "within stopping time = {}", lei.within_stopping_time);
    let _ = writeln!(s, "strict = {}", lei.strict);
    let _ = writeln!(
        s,
        "\n[estimates] measured / target with the configured constants; ratios only, not a certificate"
    );
    for e in estimates {
        let _ = writeln!(
            s,
            "q = {} {} N = {} ratio = {:.6e} measured = {:.6e} target = {:.6e}   {}",
            e.q,
            e.name,
            e.n,
            e.ratio(),
            e.measured,
            e.target,
            e.formula
        );
    }
    if let Some(d) = diag {
        let _ = writeln!(s, "\n[step diagnostics] last time");
        for (k, v) in d {
            let _ = writeln!(s, "{k} = {v:.10e}");
        }
    }
}

fn manifest(
    config: &RunConfig,
    cascade: &Cascade,
    path: &NoisePath,
    t_stop: f64,
    h: f64,
    step: Option<&Step>,
    sink: &Sink,
) -> String {
    let mut s = String::from("format = wild-euler run 1\n");
    for line in config.to_text().lines() {
        let _ = writeln!(s, "config.{line}");
    }
    s.push_str(&cascade.manifest_block());
    s.push_str(&path.spec.manifest_block());
    let _ = writeln!(s, "noise.modes = {}", path.modes.len());
    let _ = writeln!(s, "run.stopping_time = {t_stop:.16e}");
    let _ = writeln!(s, "run.h = {h:.16e}");
    if let Some(st) = step {
        let _ = writeln!(s, "step.rho = {:.16e}", st.rho);
        let _ = writeln!(s, "step.rho1 = {:.16e}", st.rho1);
        let _ = writeln!(s, "step.tube_radius = {:.16e}", st.pieces.tube_radius);
        let _ = writeln!(s, "step.drift_margin = {:.16e}", st.pieces.margin);
        let _ = writeln!(s, "step.resolved = {}", st.resolved);
    }
    for rel in &sink.written {
        let size = std::fs::metadata(sink.root.join(rel)).map(|m| m.len()).unwrap_or(0);
        let _ = writeln!(s, "file {rel} {size}");
    }
    s
}

/// Recompute the dt = h residual table from saved snapshots and compare it
/// with residuals.csv. Returns the recomputed rows and whether all matched.
pub fn check(root: &Path) -> Result<(Vec<ResidualRow>, bool)> {
    let config_text = std::fs::read_to_string(root.join("config.txt"))?;
    let mut config = RunConfig::default();
    config.apply_text(&config_text)?;
    let manifest = std::fs::read_to_string(root.join("manifest.txt"))?;
    let h: f64 = manifest
        .lines()
        .find_map(|l| l.strip_prefix("run.h = "))
        .ok_or_else(|| Error::Format("manifest without run.h".into()))?
        .trim()
        .parse()
        .map_err(|_| Error::Format("bad run.h".into()))?;
    let stored = std::fs::read_to_string(root.join("residuals.csv"))?;
    let mut out = String::from(ResidualRow::HEADER);
    out.push('\n');
    let mut rows = Vec::new();
    for q in 0..=config.cascade.q_max {
        let flow = SavedFlow::load(root, q, config.energy.clone())?;
        let times = flow.times();
        for &t in times.iter().skip(2) {
            let row = residual_row(&flow, t, h)?;
            out.push_str(&row.csv());
            out.push('\n');
            rows.push(row);
        }
    }
    Ok((rows, out == stored))
}
