//! Python bindings: run, check, read snapshots, cascade and stopping time.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use wild_euler::harness::{self, RunConfig};
use wild_euler::noise::{sample_path, stopping_time as stop, NoiseSpec};
use wild_euler::params::build_cascade;
use wild_euler::spectral::read_snapshot as read_wef;
use wild_euler::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parameter(_) => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config_from(text: &str, out: &str) -> wild_euler::Result<RunConfig> {
    let mut c = RunConfig::default();
    c.apply_text(text)?;
    c.out = out.into();
    Ok(c)
}

/// Scalar summary of a finished run.
fn run_summary(text: &str, out: &str) -> wild_euler::Result<BTreeMap<String, f64>> {
    let s = harness::run(&config_from(text, out)?)?;
    let mut m = BTreeMap::new();
    m.insert("h".into(), s.h);
    m.insert("stopping_time".into(), s.stopping_time);
    m.insert("times".into(), s.times.len() as f64);
    let worst = |f: fn(&harness::ResidualRow) -> f64| s.residuals.iter().map(f).fold(0.0, f64::max);
    m.insert("momentum_sup_max".into(), worst(|r| r.momentum_sup));
    m.insert("energy_sup_max".into(), worst(|r| r.energy_sup));
    m.insert("lei_dissipation_mean".into(), s.lei.dissipation_mean);
    m.insert("lei_residual_sup".into(), s.lei.residual_sup);
    if let Some(d) = s.diagnostics {
        m.extend(d.into_iter().map(|(k, v)| (format!("step.{k}"), v)));
    }
    Ok(m)
}

/// Run with `key = value` config text into `out`; returns scalar results.
#[pyfunction]
fn run(py: Python<'_>, config: &str, out: &str) -> PyResult<BTreeMap<String, f64>> {
    py.detach(|| run_summary(config, out)).map_err(py_err)
}

/// Recompute residuals from a run's snapshots; True if residuals.csv is reproduced exactly.
#[pyfunction]
fn check(dir: &str) -> PyResult<bool> {
    harness::check(Path::new(dir)).map(|(_, same)| same).map_err(py_err)
}

/// (n, rank, t, components) of a WEF1 file; components are flat, x-index fastest last.
#[pyfunction]
fn read_snapshot(path: &str) -> PyResult<(usize, String, f64, Vec<Vec<f64>>)> {
    let (f, t) = read_wef(Path::new(path)).map_err(py_err)?;
    Ok((f.grid().n(), f.rank().name().to_string(), t, f.into_components()))
}

/// The parameter cascade for a config text, as the manifest's key → value pairs.
#[pyfunction]
fn cascade(config: &str) -> PyResult<BTreeMap<String, f64>> {
    let c = config_from(config, ".").map_err(py_err)?;
    let cascade = build_cascade(c.cascade).map_err(py_err)?;
    Ok(parse_block(&cascade.manifest_block()))
}

fn parse_block(text: &str) -> BTreeMap<String, f64> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .filter_map(|(k, v)| Some((k.to_string(), v.trim().parse().ok()?)))
        .collect()
}

/// Discrete stopping time of the noise path a config text describes.
#[pyfunction]
fn stopping_time(config: &str) -> PyResult<f64> {
    let c = config_from(config, ".").map_err(py_err)?;
    let cascade = build_cascade(c.cascade.clone()).map_err(py_err)?;
    let spec: NoiseSpec = c.noise_spec();
    let path = sample_path(&spec).map_err(py_err)?;
    Ok(stop(&path, cascade.input.l_const, cascade.input.delta_h, cascade.n1, cascade.input.t_final))
}

/// Every accepted config key.
#[pyfunction]
fn config_keys() -> Vec<&'static str> {
    RunConfig::KEYS.to_vec()
}

#[pymodule]
fn wild_euler_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(read_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(cascade, m)?)?;
    m.add_function(wrap_pyfunction!(stopping_time, m)?)?;
    m.add_function(wrap_pyfunction!(config_keys, m)?)?;
    Ok(())
}
