use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::iterate::{EnergyProfile, StepConfig};
use crate::noise::NoiseSpec;
use crate::params::CascadeInput;

/// Everything a run depends on. Artifacts are a function of this alone.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cascade: CascadeInput,
    pub grid: usize,
    /// Internal time step; ε₀/steps_per_eps when absent.
    pub dt: Option<f64>,
    pub steps_per_eps: usize,
    pub t_start: f64,
    /// Snapshots are written at t_start + k·dt for k = 0..=steps.
    pub steps: usize,
    pub s_q: f64,
    pub k_max: u32,
    pub seed: u64,
    pub noise_dt: f64,
    pub amplitude: f64,
    pub energy: EnergyProfile,
    pub allow_unresolved_pipes: bool,
    pub drift_bound: Option<f64>,
    pub lambda_n0: f64,
    pub cache: usize,
    pub out: PathBuf,
    pub resume: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cascade: CascadeInput::default(),
            grid: 32,
            dt: None,
            steps_per_eps: 32,
            t_start: 0.25,
            steps: 4,
            s_q: 128.0,
            k_max: 1,
            seed: 1,
            noise_dt: 1e-3,
            amplitude: 0.05,
            energy: EnergyProfile::Linear { e0: 0.1, slope: 1.0 },
            // no feasible grid resolves the desk-scale tubes
            allow_unresolved_pipes: true,
            drift_bound: None,
            lambda_n0: std::f64::consts::E,
            cache: 10,
            out: PathBuf::from("run"),
            resume: false,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn optional(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "a", "b", "alpha", "delta_h", "L", "T", "kappa", "q_max", "C_v", "M_bar", "C_1", "C_2", "grid", "dt", "steps_per_eps",
        "t_start", "steps", "s_Q", "k_max", "seed", "noise_dt", "amplitude", "energy", "allow_unresolved_pipes",
        "drift_bound", "lambda_n0", "cache", "out", "resume",
    ];

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        let c = &mut self.cascade;
        match key {
            "a" => c.a = num(key, v)?,
            "b" => c.b = num(key, v)?,
            "alpha" => c.alpha = num(key, v)?,
            "delta_h" => c.delta_h = num(key, v)?,
            "L" => c.l_const = num(key, v)?,
            "T" => c.t_final = num(key, v)?,
            "kappa" => c.kappa = num(key, v)?,
            "q_max" => c.q_max = num(key, v)?,
            "C_v" => c.c_v = num(key, v)?,
            "M_bar" => c.m_bar = num(key, v)?,
            "C_1" => c.c1 = num(key, v)?,
            "C_2" => c.c2 = num(key, v)?,
            "grid" => self.grid = num(key, v)?,
            "dt" => self.dt = optional(key, v)?,
            "steps_per_eps" => self.steps_per_eps = num(key, v)?,
            "t_start" => self.t_start = num(key, v)?,
            "steps" => self.steps = num(key, v)?,
            "s_Q" => self.s_q = num(key, v)?,
            "k_max" => self.k_max = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "noise_dt" => self.noise_dt = num(key, v)?,
            "amplitude" => self.amplitude = num(key, v)?,
            "energy" => self.energy = EnergyProfile::parse(v)?,
            "allow_unresolved_pipes" => self.allow_unresolved_pipes = flag(key, v)?,
            "drift_bound" => self.drift_bound = optional(key, v)?,
            "lambda_n0" => self.lambda_n0 = num(key, v)?,
            "cache" => self.cache = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "resume" => self.resume = flag(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment. All bad lines are reported together.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v) {
                        errors.push(format!("line {}: {e}", i + 1));
                    }
                }
                None => errors.push(format!("line {}: expected key = value", i + 1)),
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            s_q: self.s_q,
            k_max: self.k_max,
            seed: self.seed,
            dt: self.noise_dt,
            horizon: 2.0 * self.cascade.t_final,
            amplitude: self.amplitude,
        }
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            h: self.dt,
            steps_per_eps: self.steps_per_eps,
            anchor: self.t_start,
            allow_unresolved_pipes: self.allow_unresolved_pipes,
            drift_bound: self.drift_bound,
            lambda_n0: self.lambda_n0,
            cache: self.cache,
            ..StepConfig::default()
        }
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        if self.grid < 8 || self.grid % 2 != 0 {
            e.push(format!("grid must be even and at least 8, got {}", self.grid));
        }
        if (2 * self.k_max as usize) >= self.grid {
            e.push(format!("noise k_max = {} does not fit grid {}", self.k_max, self.grid));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                e.push(format!("dt must be positive, got {dt}"));
            }
        }
        if self.steps_per_eps == 0 {
            e.push("steps_per_eps must be positive".into());
        }
        if self.cascade.q_max > 1 {
            e.push(format!(
                "q_max = {} unsupported: only the step q = 0 → 1 is implemented",
                self.cascade.q_max
            ));
        }
        if !(self.t_start >= 0.0) {
            e.push(format!("t_start must be non-negative, got {}", self.t_start));
        }
        if !(self.t_start < 2.0 * self.cascade.t_final) {
            e.push(format!("t_start {} beyond the noise horizon 2T", self.t_start));
        }
        if let Err(err) = self.energy.validate() {
            e.push(err.to_string());
        }
        if let Err(err) = self.noise_spec().validate() {
            e.push(err.to_string());
        }
        match crate::params::build_cascade(self.cascade.clone()) {
            Ok(c) => {
                if let Err(err) = self.noise_spec().check_regularity(c.n1) {
                    e.push(err.to_string());
                }
            }
            Err(err) => e.push(err.to_string()),
        }
        if self.cache < 9 {
            e.push(format!("cache must hold at least 9 time levels, got {}", self.cache));
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(e.join("; ")))
        }
    }

    /// Canonical `key = value` text; reading it back reproduces the config.
    pub fn to_text(&self) -> String {
        let c = &self.cascade;
        let opt = |x: Option<f64>| x.map_or("auto".to_string(), |v| format!("{v:e}"));
        let mut s = String::new();
        for (k, v) in [
            ("a", format!("{:e}", c.a)),
            ("b", format!("{:e}", c.b)),
            ("alpha", format!("{:e}", c.alpha)),
            ("delta_h", format!("{:e}", c.delta_h)),
            ("L", format!("{:e}", c.l_const)),
            ("T", format!("{:e}", c.t_final)),
            ("kappa", format!("{:e}", c.kappa)),
            ("q_max", c.q_max.to_string()),
            ("C_v", format!("{:e}", c.c_v)),
            ("M_bar", format!("{:e}", c.m_bar)),
            ("C_1", format!("{:e}", c.c1)),
            ("C_2", format!("{:e}", c.c2)),
            ("grid", self.grid.to_string()),
            ("dt", opt(self.dt)),
            ("steps_per_eps", self.steps_per_eps.to_string()),
            ("t_start", format!("{:e}", self.t_start)),
            ("steps", self.steps.to_string()),
            ("s_Q", format!("{:e}", self.s_q)),
            ("k_max", self.k_max.to_string()),
            ("seed", self.seed.to_string()),
            ("noise_dt", format!("{:e}", self.noise_dt)),
            ("amplitude", format!("{:e}", self.amplitude)),
            ("energy", self.energy.describe()),
            ("allow_unresolved_pipes", self.allow_unresolved_pipes.to_string()),
            ("drift_bound", opt(self.drift_bound)),
            ("lambda_n0", format!("{:e}", self.lambda_n0)),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::default();
        c.apply_text("grid = 16 # small\nseed=7\nenergy = table:0=0,1=2\ndt = 1e-5\n").unwrap();
        assert_eq!((c.grid, c.seed, c.dt), (16, 7, Some(1e-5)));
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn all_errors_reported() {
        let mut c = RunConfig::default();
        let e = c.apply_text("bogus = 1\ngrid = x\nnonsense").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("line 2") && e.contains("line 3"), "{e}");
        c.grid = 7;
        c.cascade.q_max = 3;
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("grid") && e.contains("q_max"), "{e}");
    }
}
