use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lodgpe::bench::config::{ExperimentConfig, FormChoice, Problem};
use lodgpe::bench::report::{csv_string, emit, text_table};
use lodgpe::bench::run::{exit_code, lod_info, run_coupled, run_evolve, run_groundstate};
use lodgpe::{Error, Result};

/// Multiscale ground states and dynamics of the Gross-Pitaevskii equation.
#[derive(Parser)]
#[command(name = "lodgpe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground states over a sweep of discretizations.
    Groundstate(Overrides),
    /// Time evolution over a sweep of step sizes.
    Evolve(Overrides),
    /// Ground state in one trap, released into another.
    Coupled(Overrides),
    /// Space dimensions, tensor size and build times.
    Lodinfo(Overrides),
}

/// Every flag maps to the config key of the same name and overrides the file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to start from when no config file is given.
    #[arg(long, value_parser = parse_problem)]
    problem: Option<Problem>,
    /// Box as `lo:hi` per axis, comma separated, e.g. `-6:6,-6:6`.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// Coarse cell width.
    #[arg(long = "H")]
    h: Option<f64>,
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long, value_parser = parse_form)]
    form: Option<FormChoice>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    /// Step size; repeat or comma-separate for a sweep.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    fp_tol: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output stem; `.csv`, `.txt` and `.json` are appended.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_problem(s: &str) -> std::result::Result<Problem, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_form(s: &str) -> std::result::Result<FormChoice, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_domain(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for axis in s.split(',') {
        let (a, b) = axis
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("domain axis '{axis}' is not of the form lo:hi")))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::Config(format!("domain '{t}': {e}")));
        lower.push(num(a)?);
        upper.push(num(b)?);
    }
    Ok((lower, upper))
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.problem) {
            (Some(path), _) => ExperimentConfig::from_file(path)?,
            (None, Some(p)) => ExperimentConfig::preset(p),
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(p) = self.problem.filter(|&p| p != cfg.problem) {
            return Err(Error::Config(format!("--problem {} contradicts the config file", p.name())));
        }
        if let Some(d) = &self.domain {
            (cfg.lower, cfg.upper) = parse_domain(d)?;
        }
        if let Some(h) = self.h {
            cfg.h = h;
            cfg.levels.clear();
        }
        if let Some(f) = self.factor {
            cfg.factor = f;
            cfg.levels.iter_mut().for_each(|l| l.factor = None);
        }
        if let Some(ell) = self.ell {
            cfg.ell = ell;
            cfg.levels.clear();
        }
        if let Some(form) = self.form {
            cfg.form = form;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(q) = self.q {
            cfg.q = q;
        }
        match self.tau.as_slice() {
            [] => {}
            [tau] => {
                cfg.tau = *tau;
                cfg.taus.clear();
            }
            many => {
                cfg.tau = many[0];
                cfg.taus = many.to_vec();
            }
        }
        if let Some(t) = self.t_end {
            cfg.t_end = t;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(t) = self.fp_tol {
            cfg.fp_tol = t;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.cache_dir.is_some() {
            cfg.cache_dir = self.cache_dir.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report<R: serde::Serialize>(cfg: &ExperimentConfig, command: &str, rows: &[R], extra: &[(&str, String)]) -> Result<()> {
    print!("{}", text_table(rows)?);
    for f in emit(cfg, command, rows, extra)?.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn status_error(statuses: impl Iterator<Item = String>) -> Option<i32> {
    statuses
        .filter(|s| s != "ok")
        .map(|s| {
            if s.starts_with("not_converged") {
                2
            } else if s.starts_with("fixed_point_diverged") {
                3
            } else if s.starts_with("config") {
                4
            } else {
                1
            }
        })
        .max()
}

fn execute(command: &Command) -> Result<i32> {
    let (name, overrides) = match command {
        Command::Groundstate(o) => ("groundstate", o),
        Command::Evolve(o) => ("evolve", o),
        Command::Coupled(o) => ("coupled", o),
        Command::Lodinfo(o) => ("lodinfo", o),
    };
    let cfg = overrides.resolve()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match command {
        Command::Groundstate(_) => {
            let rows = run_groundstate(&cfg)?;
            report(&cfg, name, &rows, &[])?;
            Ok(status_error(rows.into_iter().map(|r| r.status)).unwrap_or(0))
        }
        Command::Evolve(_) => {
            let rows = run_evolve(&cfg)?;
            report(&cfg, name, &rows, &[])?;
            Ok(status_error(rows.into_iter().map(|r| r.status)).unwrap_or(0))
        }
        Command::Coupled(_) => {
            let run = run_coupled(&cfg)?;
            eprintln!("ground state energy {:.10} after {} iterations", run.ground_energy, run.ground_iterations);
            let densities = csv_string(&run.densities)?;
            report(&cfg, name, &run.trace, &[("density", densities)])?;
            Ok(status_error(run.failure.into_iter()).unwrap_or(0))
        }
        Command::Lodinfo(_) => {
            let rows = lod_info(&cfg)?;
            report(&cfg, name, &rows, &[])?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
