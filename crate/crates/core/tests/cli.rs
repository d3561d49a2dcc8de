use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wild-euler"))
        .args(args)
        .env("WILD_EULER_OUT", root)
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr)
}

#[test]
fn run_check_spectra_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["run", "--grid", "16", "--set", "steps=2", "--seed", "3", "--out", "a"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    let out = dir.path().join("a");
    for f in ["manifest.txt", "config.txt", "noise.wen1", "series.csv", "spectrum.csv", "residuals.csv", "report.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.seed = 3") && manifest.contains("config.grid = 16"));

    let o = cli(&["check", out.to_str().unwrap()], dir.path());
    assert!(o.status.success() && text(&o).contains("reproduced exactly"), "{}", text(&o));

    // shell energies per snapshot add up to the energy column of series.csv
    let o = cli(&["spectra", out.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let spectra = String::from_utf8(o.stdout).unwrap();
    assert_eq!(spectra, std::fs::read_to_string(out.join("spectrum.csv")).unwrap());
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    for row in series.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let (q, t, energy): (&str, &str, f64) = (cols[0], cols[1], cols[2].parse().unwrap());
        let sum: f64 = spectra
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|c| c[0] == q && c[1] == t)
            .map(|c| c[3].parse::<f64>().unwrap())
            .sum();
        assert!((sum - energy).abs() <= 1e-10 * energy.max(1e-300), "{sum} vs {energy}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["run", "--grid", "7", "--set", "bogus=1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let t = text(&o);
    assert!(t.contains("bogus") && t.contains("grid must be even"), "{t}");

    let o = cli(&["run", "--grid", "16", "--set", "L=0.01", "--out", "g"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));

    let o = cli(&["audit", "--set", "a=4"], dir.path());
    assert!(o.status.success());
    assert!(text(&o).contains("cascade.lambda[1]") && text(&o).contains("non-certifying"));
}
