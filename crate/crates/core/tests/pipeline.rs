use std::path::Path;

use wild_euler::harness::{check, run, RunConfig};
use wild_euler::iterate::EnergyProfile;
use wild_euler::noise::{sample_path, stopping_time, NoiseSpec};
use wild_euler::params::{build_cascade, CascadeInput};

fn config(out: &Path) -> RunConfig {
    RunConfig {
        grid: 16,
        steps: 2,
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn zero_noise_zero_energy_pipeline_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig {
        grid: 32,
        amplitude: 0.0,
        energy: EnergyProfile::Constant(0.0),
        ..config(&dir.path().join("run"))
    };
    let s = run(&c).unwrap();
    assert_eq!(s.residuals.len(), 2 * (c.steps - 1));
    for r in &s.residuals {
        for x in [r.momentum_l2, r.momentum_sup, r.energy_l2, r.energy_sup, r.div_v_l2, r.div_v_sup] {
            assert!(x <= 1e-6, "{r:?}");
        }
    }
    let lei = &s.lei;
    assert!(lei.residual_sup <= 1e-6 && !lei.strict);
    let (_, same) = check(&c.out).unwrap();
    assert!(same);
}

#[test]
fn failed_guard_leaves_report_and_no_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(&dir.path().join("run"));
    c.cascade.l_const = 0.01;
    let err = run(&c).unwrap_err();
    assert!(matches!(err, wild_euler::Error::Guard(_)), "{err}");
    let report = std::fs::read_to_string(c.out.join("report.txt")).unwrap();
    assert!(report.contains("status = failed") && report.contains("failure.kind = guard"));
    for e in std::fs::read_dir(&c.out).unwrap() {
        let name = e.unwrap().file_name().to_string_lossy().into_owned();
        assert!(!name.ends_with(".partial"), "{name}");
    }
    assert!(!c.out.join("q0").exists());
}

#[test]
fn refuses_nonempty_output_without_resume() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk"), b"x").unwrap();
    let err = run(&config(dir.path())).unwrap_err();
    assert!(matches!(err, wild_euler::Error::Config(_)));
}

// The frequency of {𝔱 ≥ T} over seeds can only grow with the threshold L.
#[test]
fn survival_frequency_grows_with_threshold() {
    let c = build_cascade(CascadeInput::default()).unwrap();
    let spec = |seed| NoiseSpec {
        s_q: 128.0,
        k_max: 1,
        seed,
        dt: 0.01,
        horizon: 2.0,
        amplitude: 1.0,
    };
    let paths: Vec<_> = (0..50).map(|s| sample_path(&spec(s)).unwrap()).collect();
    let freq: Vec<usize> = [1.0, 2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&l| {
            paths
                .iter()
                .filter(|p| stopping_time(p, l, c.input.delta_h, c.n1, 1.0) >= 1.0)
                .count()
        })
        .collect();
    assert!(freq.windows(2).all(|w| w[0] <= w[1]), "{freq:?}");
    assert!(freq[0] < freq[4], "{freq:?}");
}

#[test]
fn resume_accepts_identical_and_rejects_altered_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig {
        amplitude: 0.0,
        steps: 2,
        ..config(&dir.path().join("run"))
    };
    run(&c).unwrap();
    let manifest = std::fs::read(c.out.join("manifest.txt")).unwrap();
    std::fs::write(c.out.join("report.txt"), "status = failed\n").unwrap();
    let again = RunConfig { resume: true, ..c.clone() };
    run(&again).unwrap();
    assert_eq!(std::fs::read(c.out.join("manifest.txt")).unwrap(), manifest);

    std::fs::write(c.out.join("series.csv"), "tampered\n").unwrap();
    let err = run(&again).unwrap_err();
    assert!(matches!(err, wild_euler::Error::Format(_)), "{err}");
}
