//! CSV and JSON artifacts of a run plus the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component as PathComponent, Path};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eom::Component;
use crate::error::{CitError, Result};
use crate::grid::Grid1D;
use crate::observables::ObservableSeries;
use crate::solver1::{AmplitudeField1, DetectorTrace1};
use crate::solver2::AmplitudeField2;
use crate::validate::Check;

pub const SNAPSHOT1_HEADER: [&str; 7] = ["t", "z", "re_f", "im_f", "abs2_f", "abs2_e", "abs2_s"];
pub const HEATMAP_HEADER: [&str; 4] = ["t", "z1", "z2", "abs2_ff"];
pub const DIAGONAL_HEADER: [&str; 3] = ["t", "z", "abs2_ff"];
pub const SERIES_HEADER: [&str; 5] = ["t", "intensity", "g2_unnorm", "sector1_norm", "sector2_norm"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> CitError {
    CitError::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

/// A file written by a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    /// Data rows, header excluded.
    pub rows: usize,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Writes rows of numbers under `header` and returns the file record.
pub fn write_csv<I>(dir: &Path, name: &str, header: &[&str], rows: I) -> Result<OutputFile>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(header).map_err(|e| io_err(&path, e))?;
    let mut count = 0;
    for row in rows {
        if row.len() != header.len() {
            return Err(CitError::Io(std::io::Error::other(format!(
                "{name}: row has {} columns, header has {}",
                row.len(),
                header.len()
            ))));
        }
        w.write_record(row.iter().map(|x| format!("{x:.17e}")))
            .map_err(|e| io_err(&path, e))?;
        count += 1;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    drop(w);
    Ok(OutputFile {
        path: name.to_string(),
        rows: count,
        sha256: sha256_file(&path)?,
    })
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<OutputFile> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(OutputFile {
        path: name.to_string(),
        rows: 0,
        sha256: sha256_file(&path)?,
    })
}

/// Single-excitation snapshots, one row per grid point and snapshot.
pub fn write_snapshots1(dir: &Path, name: &str, grid: &Grid1D, snaps: &[AmplitudeField1]) -> Result<OutputFile> {
    let z = grid.points();
    let rows = snaps.iter().flat_map(|s| {
        z.iter().enumerate().map(move |(j, &zj)| {
            vec![
                s.time,
                zj,
                s.f[j].re,
                s.f[j].im,
                s.f[j].norm_sqr(),
                s.e[j].norm_sqr(),
                s.s[j].norm_sqr(),
            ]
        })
    });
    write_csv(dir, name, &SNAPSHOT1_HEADER, rows)
}

/// Photon-pair density on every `stride`-th grid point in both directions.
pub fn heatmap_rows(grid: &Grid1D, st: &AmplitudeField2, stride: usize) -> Vec<Vec<f64>> {
    let z = grid.points();
    let n = z.len();
    let ff = st.get(Component::Ff);
    let stride = stride.max(1);
    let mut rows = Vec::new();
    for i in (0..n).step_by(stride) {
        for j in (0..n).step_by(stride) {
            rows.push(vec![st.time, z[i], z[j], ff[i * n + j].norm_sqr()]);
        }
    }
    rows
}

/// `|ff(z, z)|²` along the diagonal.
pub fn diagonal_rows(grid: &Grid1D, st: &AmplitudeField2) -> Vec<Vec<f64>> {
    let z = grid.points();
    let n = z.len();
    let ff = st.get(Component::Ff);
    (0..n).map(|j| vec![st.time, z[j], ff[j * n + j].norm_sqr()]).collect()
}

/// `|ff|²` along the anti-diagonal through the peak of the diagonal, i.e.
/// versus photon separation at fixed pair centre.
pub fn anti_diagonal_rows(grid: &Grid1D, st: &AmplitudeField2) -> Vec<Vec<f64>> {
    let z = grid.points();
    let n = z.len();
    let ff = st.get(Component::Ff);
    let k = (0..n)
        .max_by(|&a, &b| ff[a * n + a].norm_sqr().total_cmp(&ff[b * n + b].norm_sqr()))
        .unwrap_or(0);
    let reach = k.min(n - 1 - k);
    (0..=2 * reach)
        .map(|m| {
            let (i, j) = (k + reach - m, k + m - reach);
            vec![st.time, z[i], z[j], ff[i * n + j].norm_sqr()]
        })
        .collect()
}

pub fn series_rows(s: &ObservableSeries) -> Vec<Vec<f64>> {
    (0..s.times.len())
        .map(|k| {
            vec![
                s.times[k],
                s.intensity[k],
                s.g2_unnorm[k],
                s.sector1_norm[k],
                s.sector2_norm[k],
            ]
        })
        .collect()
}

pub fn trace1_rows(t: &DetectorTrace1) -> Vec<Vec<f64>> {
    t.times
        .iter()
        .zip(&t.amplitude)
        .zip(&t.norms)
        .map(|((&time, a), &n)| vec![time, a.norm_sqr(), n])
        .collect()
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    /// Effective configuration entries, presets expanded.
    pub config: BTreeMap<String, String>,
    pub params: serde_json::Value,
    pub params_natural: serde_json::Value,
    pub derived: serde_json::Value,
    pub conditions: serde_json::Value,
    pub threads: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub outputs: Vec<OutputFile>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.tool.is_empty() || self.version.is_empty() {
            return Err(CitError::Config("manifest lacks tool or version".into()));
        }
        self.scenario
            .parse::<crate::config::Scenario>()
            .map_err(CitError::Config)?;
        if !(self.wall_time_s >= 0.0) {
            return Err(CitError::Config("negative wall time".into()));
        }
        for out in &self.outputs {
            let p = Path::new(&out.path);
            let plain = !out.path.is_empty()
                && p.components().all(|c| matches!(c, PathComponent::Normal(_)));
            if !plain {
                return Err(CitError::Config(format!("output path '{}' escapes the run directory", out.path)));
            }
            if out.sha256.len() != 64 || !out.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(CitError::Config(format!("bad checksum for '{}'", out.path)));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }

    /// Recomputes every output checksum under `dir`.
    pub fn verify_outputs(&self, dir: &Path) -> Result<()> {
        for out in &self.outputs {
            let got = sha256_file(&dir.join(&out.path))?;
            if got != out.sha256 {
                return Err(CitError::Io(std::io::Error::other(format!("checksum mismatch for {}", out.path))));
            }
        }
        Ok(())
    }
}

/// Parses and validates manifest JSON.
pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text)?;
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Medium;
    use num_complex::Complex64;

    fn sample_manifest() -> Manifest {
        Manifest {
            tool: "cit-filter".into(),
            version: "0.1.0".into(),
            scenario: "fig4".into(),
            config: BTreeMap::from([("scenario".to_string(), "fig4".to_string())]),
            params: serde_json::Value::Null,
            params_natural: serde_json::Value::Null,
            derived: serde_json::Value::Null,
            conditions: serde_json::Value::Null,
            threads: 1,
            seed: 0,
            wall_time_s: 0.5,
            results: serde_json::json!({"x": 1}),
            checks: vec![],
            outputs: vec![OutputFile {
                path: "fig4.csv".into(),
                rows: 30,
                sha256: "0".repeat(64),
            }],
        }
    }

    #[test]
    fn manifest_round_trip() {
        let m = sample_manifest();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(parse_manifest(&text).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_escaping_paths_and_bad_checksums() {
        let mut m = sample_manifest();
        m.outputs[0].path = "../etc/passwd".into();
        assert!(parse_manifest(&serde_json::to_string(&m).unwrap()).is_err());
        let mut m = sample_manifest();
        m.outputs[0].path = "/abs".into();
        assert!(parse_manifest(&serde_json::to_string(&m).unwrap()).is_err());
        let mut m = sample_manifest();
        m.outputs[0].sha256 = "xyz".into();
        assert!(parse_manifest(&serde_json::to_string(&m).unwrap()).is_err());
        let mut m = sample_manifest();
        m.scenario = "fig9".into();
        assert!(parse_manifest(&serde_json::to_string(&m).unwrap()).is_err());
        assert!(matches!(parse_manifest("{"), Err(CitError::Json(_))));
    }

    #[test]
    fn csv_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let out = write_csv(dir.path(), "a.csv", &["x", "y"], vec![vec![1.0, 2.5], vec![-3.0, 1e-300]]).unwrap();
        assert_eq!(out.rows, 2);
        let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y"));
        let vals: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals, vec![1.0, 2.5]);
        assert_eq!(out.sha256, sha256_file(&dir.path().join("a.csv")).unwrap());
        assert!(write_csv(dir.path(), "b.csv", &["x"], vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn cuts_have_expected_geometry() {
        let grid = Grid1D::new(0.0, 1.0, 16, Medium::Vacuum).unwrap();
        let mut st = AmplitudeField2::zeros(16);
        st.get_mut(Component::Ff)[5 * 16 + 5] = Complex64::new(2.0, 0.0);
        let d = diagonal_rows(&grid, &st);
        assert_eq!(d.len(), 16);
        assert_eq!(d[5][2], 4.0);
        let a = anti_diagonal_rows(&grid, &st);
        assert_eq!(a.len(), 11);
        assert!(a.iter().all(|r| (r[1] + r[2] - 2.0 * grid.z(5)).abs() < 1e-12));
        assert_eq!(heatmap_rows(&grid, &st, 4).len(), 16);
    }
}
