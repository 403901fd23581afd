//! Grid and report files.
//!
//! A diagram is stored as a CSV matrix next to a JSON sidecar holding the
//! axes, units, provenance parameters, and warnings. The CSV layout is one
//! header row (`y` followed by every x coordinate) and then one row per y
//! coordinate: the y value followed by the samples of that row. Floats are
//! written in Rust's shortest round-trip representation, so a write/read
//! cycle reproduces every sample bit for bit.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::diagram::{Axis, DetuningCalibration, DiagramGrid, GridMeta};
use crate::error::DiagramError;

/// Format version written into sidecars.
pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    kind: String,
    axes: SidecarAxes,
    units: SidecarUnits,
    params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    calibration: Option<DetuningCalibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default)]
    warnings: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarAxes {
    x: Axis,
    y: Axis,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarUnits {
    signal: String,
}

fn io_err(path: &Path, source: std::io::Error) -> DiagramError {
    DiagramError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> DiagramError {
    DiagramError::Malformed {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Sidecar path belonging to a diagram CSV path.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write `grid` as `<dir>/<basename>.csv` plus `<dir>/<basename>.json`,
/// creating the directory if needed. Returns the two paths.
pub fn write_diagram(
    dir: &Path,
    basename: &str,
    grid: &DiagramGrid,
) -> Result<(PathBuf, PathBuf), DiagramError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv_path = dir.join(format!("{basename}.csv"));
    let json_path = dir.join(format!("{basename}.json"));

    let xs = grid.axis_x.values();
    let ys = grid.axis_y.values();
    let mut out = String::new();
    out.push('y');
    for x in &xs {
        out.push(',');
        out.push_str(&x.to_string());
    }
    out.push('\n');
    for (iy, y) in ys.iter().enumerate() {
        out.push_str(&y.to_string());
        for v in grid.row(iy) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    let mut file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| io_err(&csv_path, e))?;

    let sidecar = Sidecar {
        version: SIDECAR_VERSION,
        kind: grid.meta.kind.clone(),
        axes: SidecarAxes {
            x: grid.axis_x.clone(),
            y: grid.axis_y.clone(),
        },
        units: SidecarUnits {
            signal: "arb".into(),
        },
        params: grid.meta.params.clone(),
        calibration: grid.meta.calibration,
        seed: grid.meta.seed,
        warnings: grid.meta.warnings.clone(),
    };
    write_json(&json_path, &sidecar)?;
    Ok((csv_path, json_path))
}

/// Read a diagram back from its CSV path; the JSON sidecar must sit next to
/// it. The CSV coordinates are validated against the sidecar axes.
pub fn read_diagram(csv_path: &Path) -> Result<DiagramGrid, DiagramError> {
    let json_path = sidecar_path(csv_path);
    if !json_path.exists() {
        return Err(malformed(
            csv_path,
            format!("missing sidecar {}", json_path.display()),
        ));
    }
    let sidecar: Sidecar = read_json(&json_path)?;
    if sidecar.version != SIDECAR_VERSION {
        return Err(malformed(
            &json_path,
            format!(
                "unsupported sidecar version {} (expected {SIDECAR_VERSION})",
                sidecar.version
            ),
        ));
    }
    sidecar.axes.x.validate()?;
    sidecar.axes.y.validate()?;

    let text = fs::read_to_string(csv_path).map_err(|e| io_err(csv_path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed(csv_path, "empty file"))?;
    let xs = sidecar.axes.x.values();
    let ys = sidecar.axes.y.values();
    let nx = xs.len();

    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != nx + 1 || fields[0] != "y" {
        return Err(malformed(
            csv_path,
            format!(
                "header must be 'y' plus {nx} x coordinates, found {} fields",
                fields.len()
            ),
        ));
    }
    for (i, f) in fields[1..].iter().enumerate() {
        let parsed: f64 = f
            .parse()
            .map_err(|_| malformed(csv_path, format!("bad x coordinate '{f}'")))?;
        if !close(parsed, xs[i]) {
            return Err(malformed(
                csv_path,
                format!("x coordinate {i} is {parsed}, sidecar says {}", xs[i]),
            ));
        }
    }

    let mut values = Vec::with_capacity(nx * ys.len());
    let mut row_count = 0usize;
    for (iy, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        if iy >= ys.len() {
            return Err(malformed(
                csv_path,
                format!("more data rows than the {} y coordinates", ys.len()),
            ));
        }
        let mut parts = line.split(',');
        let y_str = parts.next().unwrap_or("");
        let y: f64 = y_str
            .parse()
            .map_err(|_| malformed(csv_path, format!("row {}: bad y value '{y_str}'", iy + 2)))?;
        if !close(y, ys[iy]) {
            return Err(malformed(
                csv_path,
                format!("row {}: y is {y}, sidecar says {}", iy + 2, ys[iy]),
            ));
        }
        let before = values.len();
        for part in parts {
            let v: f64 = part.parse().map_err(|_| {
                malformed(csv_path, format!("row {}: bad sample '{part}'", iy + 2))
            })?;
            values.push(v);
        }
        if values.len() - before != nx {
            return Err(malformed(
                csv_path,
                format!(
                    "row {}: expected {nx} samples, found {}",
                    iy + 2,
                    values.len() - before
                ),
            ));
        }
        row_count += 1;
    }
    if row_count != ys.len() {
        return Err(malformed(
            csv_path,
            format!("expected {} data rows, found {row_count}", ys.len()),
        ));
    }

    Ok(DiagramGrid {
        axis_x: sidecar.axes.x,
        axis_y: sidecar.axes.y,
        values,
        meta: GridMeta {
            kind: sidecar.kind,
            params: sidecar.params,
            calibration: sidecar.calibration,
            seed: sidecar.seed,
            warnings: sidecar.warnings,
        },
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Serialize `value` as pretty JSON at `path`, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DiagramError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| malformed(path, format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Parse a JSON file into `T`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DiagramError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| malformed(path, e.to_string()))
}
