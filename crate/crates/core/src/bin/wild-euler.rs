use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wild_euler::harness::{self, RunConfig, SavedFlow};
use wild_euler::params::{audit_scale_inequalities, build_cascade};
use wild_euler::Error;

#[derive(Parser)]
#[command(name = "wild-euler", version, about = "Convex-integration iterates for the stochastic 3D Euler equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample noise, build the iterates and write all artifacts.
    Run(ConfigArgs),
    /// Recompute the residual table of a finished run from its snapshots.
    Check { dir: PathBuf },
    /// Print the parameter cascade and the scale-inequality table.
    Audit(ConfigArgs),
    /// Print shell energy spectra of the saved snapshots as CSV.
    Spectra { dir: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    qmax: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory; relative paths live under $WILD_EULER_OUT when set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
    /// Any config key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, env = "WILD_EULER_OUT", hide_env_values = true)]
    out_root: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> wild_euler::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let mut errors = Vec::new();
        for kv in &self.set {
            match kv.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = c.set(k.trim(), v) {
                        errors.push(message(e));
                    }
                }
                None => errors.push(format!("--set expects key=value, got '{kv}'")),
            }
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(g) = self.grid {
            c.grid = g;
        }
        if let Some(q) = self.qmax {
            c.cascade.q_max = q;
        }
        if let Some(dt) = self.dt {
            c.dt = Some(dt);
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if self.resume {
            c.resume = true;
        }
        if let Some(root) = &self.out_root {
            if c.out.is_relative() {
                c.out = root.join(&c.out);
            }
        }
        if let Err(e) = c.validate() {
            errors.push(message(e));
        }
        if errors.is_empty() {
            Ok(c)
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }
}

fn message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        e => e.to_string(),
    }
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Guard(_) => ExitCode::from(2),
        Error::Config(_) => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => a.resolve().and_then(|c| harness::run(&c)).map(|s| {
            println!("wrote {}", s.out.display());
            println!("stopping time {:.6e}, h {:.6e}, {} times", s.stopping_time, s.h, s.times.len());
            for r in &s.refinements {
                print!("{}", r.summary());
            }
            true
        }),
        Cmd::Check { dir } => harness::check(&dir).map(|(rows, same)| {
            for r in &rows {
                println!(
                    "q = {} t = {:.10e} momentum L2 = {:.6e} energy L2 = {:.6e} div v L2 = {:.6e}",
                    r.q, r.t, r.momentum_l2, r.energy_l2, r.div_v_l2
                );
            }
            println!("residuals.csv {}", if same { "reproduced exactly" } else { "DIFFERS" });
            same
        }),
        Cmd::Audit(a) => a.resolve().and_then(|c| {
            let cascade = build_cascade(c.cascade.clone())?;
            print!("{}", cascade.manifest_block());
            println!("# scale inequalities: log10 lhs, log10 rhs (measured, non-certifying)");
            for q in 0..=cascade.q_max() {
                for r in audit_scale_inequalities(&cascade, q)? {
                    println!(
                        "q = {q} {:>6} {:+.4} {:+.4}  {}",
                        if r.satisfied { "holds" } else { "fails" },
                        r.log10_lhs,
                        r.log10_rhs,
                        r.name
                    );
                }
            }
            Ok(true)
        }),
        Cmd::Spectra { dir } => (|| {
            let mut c = RunConfig::default();
            c.apply_text(&std::fs::read_to_string(dir.join("config.txt"))?)?;
            let mut all = Vec::new();
            for q in 0..=c.cascade.q_max {
                all.extend_from_slice(SavedFlow::load(&dir, q, c.energy.clone())?.snapshots());
            }
            print!("{}", harness::export_spectra(&all));
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => exit_for(&e),
    }
}
