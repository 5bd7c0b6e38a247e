//! CSV, aligned text and JSON manifest output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::config::ExperimentConfig;
use crate::Result;

/// One level of a ground-state sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateRow {
    #[serde(rename = "H")]
    pub h: f64,
    pub ell: usize,
    pub factor: usize,
    pub form: String,
    #[serde(rename = "E_lod")]
    pub e_lod: Option<f64>,
    #[serde(rename = "E_exactform")]
    pub e_exactform: Option<f64>,
    pub lambda: Option<f64>,
    pub iters: Option<usize>,
    pub err_vs_ref: Option<f64>,
    pub t_basis_s: f64,
    pub t_omega_s: f64,
    pub t_online_s: f64,
    /// `ok`, or the error that ended this row.
    pub status: String,
}

/// One step size of a dynamics sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub tau: f64,
    pub q: usize,
    pub rel_l2: Option<f64>,
    pub rel_h1: Option<f64>,
    pub eoc_l2: Option<f64>,
    pub energy_drift: Option<f64>,
    pub mass_drift: Option<f64>,
    pub fp_iters_mean: Option<f64>,
    pub t_online_s: f64,
    pub status: String,
}

/// Observables at one recorded time of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    #[serde(rename = "E_lod")]
    pub e_lod: f64,
    #[serde(rename = "E_exactform")]
    pub e_exactform: Option<f64>,
    pub mass: f64,
}

pub const GROUNDSTATE_COLUMNS: [&str; 13] = [
    "H",
    "ell",
    "factor",
    "form",
    "E_lod",
    "E_exactform",
    "lambda",
    "iters",
    "err_vs_ref",
    "t_basis_s",
    "t_omega_s",
    "t_online_s",
    "status",
];

pub const DYNAMICS_COLUMNS: [&str; 10] = [
    "tau",
    "q",
    "rel_l2",
    "rel_h1",
    "eoc_l2",
    "energy_drift",
    "mass_drift",
    "fp_iters_mean",
    "t_online_s",
    "status",
];

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}

/// Rows rendered as a right-aligned text table, using the CSV cell text.
pub fn text_table<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes.as_slice());
    let cells: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(|c| if c.is_empty() { "-".into() } else { shorten(c) }).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)?;
    let ncol = cells.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..ncol).map(|j| cells.iter().filter_map(|r| r.get(j)).map(|c| c.len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    Ok(out)
}

fn shorten(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(v) if cell.contains('.') || cell.contains('e') => {
            if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
                format!("{v:.4e}")
            } else {
                format!("{v:.8}").trim_end_matches('0').trim_end_matches('.').to_string()
            }
        }
        _ => cell.to_string(),
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    library: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    reference_energy: Option<f64>,
    reference_source: Option<&'a str>,
    threads: usize,
    determinism: &'static str,
    outputs: Vec<String>,
}

/// Paths of the files written for one command.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Write `<out>.csv`, `<out>.txt` and `<out>.json`, plus any extra tables
/// as `<out>.<name>.csv`.
pub fn emit<R: Serialize>(
    cfg: &ExperimentConfig,
    command: &str,
    rows: &[R],
    extra: &[(&str, String)],
) -> Result<Outputs> {
    let Some(stem) = &cfg.out else {
        return Ok(Outputs { files: Vec::new() });
    };
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut files = Vec::new();
    let csv_path = with_suffix(stem, ".csv");
    write_csv(&csv_path, rows)?;
    files.push(csv_path);
    let txt_path = with_suffix(stem, ".txt");
    File::create(&txt_path)?.write_all(text_table(rows)?.as_bytes())?;
    files.push(txt_path);
    for (name, content) in extra {
        let p = with_suffix(stem, &format!(".{name}.csv"));
        File::create(&p)?.write_all(content.as_bytes())?;
        files.push(p);
    }
    let json_path = with_suffix(stem, ".json");
    let manifest = Manifest {
        command,
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        reference_energy: cfg.reference_energy,
        reference_source: cfg.reference_source.as_deref(),
        threads: rayon::current_num_threads(),
        determinism: "no random numbers are used; parallel reductions are merged in a fixed order, \
                      so identical configurations and thread counts give identical output",
        outputs: files.iter().map(|p| p.display().to_string()).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| crate::Error::Io(std::io::Error::other(e)))?;
    File::create(&json_path)?.write_all(json.as_bytes())?;
    files.push(json_path);
    Ok(Outputs { files })
}

/// CSV text of arbitrary rows, for the extra tables of [`emit`].
pub fn csv_string<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}
