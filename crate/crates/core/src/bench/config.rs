//! Experiment configuration, read from TOML and overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::problems::potential;
use crate::fem::ScalarField;
use crate::lod::{BilinearForm, LodOptions};
use crate::mesh::{build_box_mesh, refine_uniform, BoxDomain, MeshPair};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    /// Smooth double-well trap in 2d.
    DoubleWell,
    /// Harmonic trap plus a half-space step.
    Discontinuous,
    /// Pure harmonic trap in any dimension.
    Harmonic,
    /// Exactly solvable two-soliton dynamics in 1d.
    Soliton,
    /// Ground state in a checkerboard trap released into the harmonic trap.
    Coupled,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::DoubleWell => "double_well",
            Problem::Discontinuous => "discontinuous",
            Problem::Harmonic => "harmonic",
            Problem::Soliton => "soliton",
            Problem::Coupled => "coupled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormChoice {
    Canonical,
    Potential,
}

/// One discretization level of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    #[serde(rename = "H")]
    pub h: f64,
    pub ell: usize,
    /// Overrides the global refinement factor.
    #[serde(default)]
    pub factor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Box corners.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Coarse cell width; the number of cells per axis is the extent over `H`.
    #[serde(rename = "H")]
    pub h: f64,
    pub factor: usize,
    pub ell: usize,
    /// Sweep levels; when empty the single level `(H, ell, factor)` is used.
    pub levels: Vec<Level>,
    pub form: FormChoice,
    /// Potential inside the potential-adapted form; defaults to the trap.
    #[serde(default)]
    pub form_potential: Option<String>,
    /// Diffusion coefficient of the potential-adapted form.
    pub form_diffusion: f64,
    /// Trap of the problem (for `coupled`: the trap of the time evolution).
    pub potential: String,
    /// Trap of the initial ground state in `coupled` runs.
    #[serde(default)]
    pub initial_potential: Option<String>,
    pub beta: f64,
    /// Coefficient in front of the Laplacian in the energy.
    pub kinetic: f64,
    pub tol: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub reference_energy: Option<f64>,
    /// Free-text note on where `reference_energy` comes from.
    #[serde(default)]
    pub reference_source: Option<String>,
    pub q: usize,
    pub tau: f64,
    /// Step sizes of a convergence sweep; when empty only `tau` is run.
    pub taus: Vec<f64>,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub fp_tol: f64,
    pub fp_max: usize,
    /// Record a snapshot every this many steps (0: none).
    pub snapshot_every: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Output stem; `.csv`, `.txt` and `.json` are appended.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Quadrature degree for the three-tensor.
    pub tensor_degree: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(Problem::DoubleWell)
    }
}

impl ExperimentConfig {
    /// Defaults for each problem.
    pub fn preset(problem: Problem) -> Self {
        let base = ExperimentConfig {
            problem,
            lower: vec![-6.0, -6.0],
            upper: vec![6.0, 6.0],
            h: 2.0,
            factor: 10,
            ell: 1,
            levels: Vec::new(),
            form: FormChoice::Canonical,
            form_potential: None,
            form_diffusion: 0.5,
            potential: "double_well".into(),
            initial_potential: None,
            beta: 50.0,
            kinetic: 0.5,
            tol: 1e-10,
            max_iters: 500,
            reference_energy: None,
            reference_source: None,
            q: 2,
            tau: 1.0 / 64.0,
            taus: Vec::new(),
            t_end: 1.0,
            fp_tol: 1e-12,
            fp_max: 200,
            snapshot_every: 0,
            threads: None,
            cache_dir: None,
            out: None,
            tensor_degree: 3,
        };
        match problem {
            Problem::DoubleWell => ExperimentConfig {
                reference_energy: Some(7.0823112),
                reference_source: Some("published fine reference, H = 0.3, h = H/80, ell = 7".into()),
                ..base
            },
            Problem::Discontinuous => ExperimentConfig {
                potential: "harmonic_step".into(),
                form_potential: Some("indicator".into()),
                h: 1.2,
                reference_energy: Some(3.341711792),
                reference_source: Some("published Richardson-extrapolated reference".into()),
                ..base
            },
            Problem::Harmonic => ExperimentConfig {
                potential: "harmonic".into(),
                h: 1.0,
                reference_energy: Some(2.896031852200792),
                reference_source: Some("published radial finite-difference reference (2d)".into()),
                ..base
            },
            Problem::Soliton => ExperimentConfig {
                problem,
                lower: vec![-20.0],
                upper: vec![20.0],
                h: 40.0 / 256.0,
                factor: 8,
                ell: 6,
                potential: "zero".into(),
                beta: -2.0,
                kinetic: 1.0,
                ..base
            },
            Problem::Coupled => ExperimentConfig {
                lower: vec![-3.0; 3],
                upper: vec![3.0; 3],
                h: 1.0,
                factor: 5,
                ell: 1,
                form: FormChoice::Potential,
                form_potential: Some("lattice".into()),
                potential: "harmonic".into(),
                initial_potential: Some("harmonic_lattice".into()),
                tau: 10.0 / 128.0,
                t_end: 10.0,
                snapshot_every: 16,
                ..base
            },
        }
    }

    /// Read a TOML file. Keys absent from the file take the preset of the
    /// file's `problem` (or the double-well preset).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let problem = match table.get("problem") {
            Some(v) => Problem::deserialize(v.clone()).map_err(|e| Error::Config(format!("problem: {e}")))?,
            None => Problem::DoubleWell,
        };
        let mut merged = toml::Table::try_from(ExperimentConfig::preset(problem))
            .map_err(|e| Error::Config(format!("{e}")))?;
        for (k, v) in table {
            merged.insert(k, v);
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(merged).try_into().map_err(|e| Error::Config(format!("{e}")))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Levels of the sweep (the single configured level when no sweep is set).
    pub fn sweep(&self) -> Vec<Level> {
        if self.levels.is_empty() {
            vec![Level { h: self.h, ell: self.ell, factor: Some(self.factor) }]
        } else {
            self.levels.clone()
        }
    }

    pub fn step_sizes(&self) -> Vec<f64> {
        if self.taus.is_empty() {
            vec![self.tau]
        } else {
            self.taus.clone()
        }
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.lower.clone(), self.upper.clone())
    }

    /// Cells per axis for coarse width `h`; the extent must be a multiple of `h`.
    pub fn cells(&self, h: f64) -> Result<Vec<usize>> {
        if !(h > 0.0) {
            return Err(Error::Config(format!("H must be positive, got {h}")));
        }
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| {
                let n = (b - a) / h;
                let r = n.round();
                if r < 1.0 || (n - r).abs() > 1e-9 * n.max(1.0) {
                    Err(Error::Config(format!("H = {h} does not divide the extent {}", b - a)))
                } else {
                    Ok(r as usize)
                }
            })
            .collect()
    }

    pub fn mesh_pair(&self, level: &Level) -> Result<MeshPair> {
        let coarse = build_box_mesh(&self.domain()?, &self.cells(level.h)?)?;
        refine_uniform(&coarse, level.factor.unwrap_or(self.factor))
    }

    pub fn trap(&self) -> Result<ScalarField> {
        potential(&self.potential)
    }

    pub fn bilinear_form(&self) -> Result<BilinearForm> {
        Ok(match self.form {
            FormChoice::Canonical => BilinearForm::canonical(),
            FormChoice::Potential => {
                let v = potential(self.form_potential.as_deref().unwrap_or(&self.potential))?;
                BilinearForm::with_diffusion(self.form_diffusion, v)
            }
        })
    }

    pub fn lod_options(&self) -> LodOptions {
        LodOptions { tensor_degree: self.tensor_degree, cache_dir: self.cache_dir.clone(), ..LodOptions::default() }
    }

    /// Check ranges before any work is done.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lower.len() != self.upper.len() || !(1..=3).contains(&self.lower.len()) {
            return bad("lower and upper must have equal length 1, 2 or 3".into());
        }
        self.domain()?;
        for level in self.sweep() {
            self.cells(level.h)?;
            if level.factor.unwrap_or(self.factor) == 0 {
                return bad("factor must be at least 1".into());
            }
        }
        potential(&self.potential)?;
        self.bilinear_form()?;
        if let Some(p) = &self.initial_potential {
            potential(p)?;
        }
        if !(self.kinetic > 0.0) {
            return bad("kinetic must be positive".into());
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return bad("tol must be positive and max_iters nonzero".into());
        }
        if !(1..=4).contains(&self.q) {
            return bad(format!("q must be in 1..=4, got {}", self.q));
        }
        if !(self.fp_tol > 0.0) || self.fp_max == 0 {
            return bad("fp_tol must be positive and fp_max nonzero".into());
        }
        if !(self.t_end > 0.0) {
            return bad("T must be positive".into());
        }
        for tau in self.step_sizes() {
            crate::dynamics::step_count(tau, self.t_end)?;
        }
        if matches!(self.problem, Problem::Soliton) && self.dim() != 1 {
            return bad("the soliton benchmark is one-dimensional".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for p in [Problem::DoubleWell, Problem::Discontinuous, Problem::Harmonic, Problem::Soliton, Problem::Coupled] {
            let cfg = ExperimentConfig::preset(p);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn file_keys_override_preset() {
        let cfg = ExperimentConfig::from_toml_str(
            "problem = \"soliton\"\nH = 0.3125\nq = 3\ntaus = [0.5, 0.25]\n[[levels]]\nH = 0.625\nell = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.q, 3);
        assert_eq!(cfg.beta, -2.0);
        assert_eq!(cfg.lower, vec![-20.0]);
        assert_eq!(cfg.cells(cfg.h).unwrap(), vec![128]);
        assert_eq!(cfg.sweep(), vec![Level { h: 0.625, ell: 2, factor: None }]);
        assert_eq!(cfg.step_sizes(), vec![0.5, 0.25]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("problem = \"nothing\"").is_err());
        let mut cfg = ExperimentConfig::preset(Problem::DoubleWell);
        cfg.h = 0.7;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::preset(Problem::Soliton);
        cfg.tau = 0.3;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::preset(Problem::DoubleWell);
        cfg.potential = "unknown".into();
        assert!(cfg.validate().is_err());
    }
}
