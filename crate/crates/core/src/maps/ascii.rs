//! ESRI-ASCII style grid files with a reference-altitude header line.
//!
//! Coordinates in the header are degrees. `xllcorner`/`yllcorner` give the outer
//! corner of the lower-left cell; grid nodes sit at cell centres, so the first
//! node is half a cell inside. `xllcenter`/`yllcenter` are accepted as well.
//! The first body row is the northernmost. When longitude and latitude spacing
//! differ, `cellsize` holds the latitude spacing and an extra `xcellsize` line
//! holds the longitude spacing.

use std::fmt::Write as _;
use std::path::Path;

use super::{AnomalyGrid, MapError, StackManifestEntry};

const DEFAULT_NODATA: f64 = -99999.0;

fn parse_err(line: usize, message: impl Into<String>) -> MapError {
    MapError::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_grid_ascii(text: &str, name: &str) -> Result<AnomalyGrid, MapError> {
    let mut ncols = None;
    let mut nrows = None;
    let mut x_corner = None;
    let mut y_corner = None;
    let mut x_center = None;
    let mut y_center = None;
    let mut cellsize = None;
    let mut xcellsize = None;
    let mut nodata = DEFAULT_NODATA;
    let mut ref_alt = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.peek().copied() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            lines.next();
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let key = tokens.next().unwrap_or_default();
        if key.parse::<f64>().is_ok() {
            break;
        }
        lines.next();
        let lineno = idx + 1;
        let value = tokens
            .next()
            .ok_or_else(|| parse_err(lineno, format!("header key {key} has no value")))?;
        if tokens.next().is_some() {
            return Err(parse_err(
                lineno,
                format!("header key {key} has extra fields"),
            ));
        }
        let num: f64 = value
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad number {value:?} for {key}")))?;
        let count = || -> Result<usize, MapError> {
            if num >= 2.0 && num.fract() == 0.0 {
                Ok(num as usize)
            } else {
                Err(parse_err(lineno, format!("{key} must be an integer >= 2")))
            }
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(count()?),
            "nrows" => nrows = Some(count()?),
            "xllcorner" => x_corner = Some(num),
            "yllcorner" => y_corner = Some(num),
            "xllcenter" => x_center = Some(num),
            "yllcenter" => y_center = Some(num),
            "cellsize" => cellsize = Some(num),
            "xcellsize" => xcellsize = Some(num),
            "nodata_value" => nodata = num,
            "ref_alt_m" => ref_alt = Some(num),
            _ => return Err(parse_err(lineno, format!("unknown header key {key}"))),
        }
    }

    let header_end = lines
        .peek()
        .map_or(text.lines().count() + 1, |(i, _)| i + 1);
    let missing = |k: &str| parse_err(header_end, format!("missing header key {k}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let cell_lat = cellsize.ok_or_else(|| missing("cellsize"))?;
    let cell_lon = xcellsize.unwrap_or(cell_lat);
    if !(cell_lat > 0.0 && cell_lon > 0.0) {
        return Err(parse_err(header_end, "cell size must be positive"));
    }
    let ref_alt = ref_alt.ok_or_else(|| missing("REF_ALT_M"))?;
    let lon0 = match (x_corner, x_center) {
        (Some(c), None) => c + 0.5 * cell_lon,
        (None, Some(c)) => c,
        _ => {
            return Err(parse_err(
                header_end,
                "exactly one of xllcorner/xllcenter is required",
            ))
        }
    };
    let lat0 = match (y_corner, y_center) {
        (Some(c), None) => c + 0.5 * cell_lat,
        (None, Some(c)) => c,
        _ => {
            return Err(parse_err(
                header_end,
                "exactly one of yllcorner/yllcenter is required",
            ))
        }
    };

    // File rows, north first.
    let mut rows: Vec<Vec<Option<f64>>> = Vec::with_capacity(nrows);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if rows.len() == nrows {
            return Err(parse_err(lineno, format!("more than {nrows} data rows")));
        }
        let mut row = Vec::with_capacity(ncols);
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad value {tok:?}")))?;
            row.push(if v == nodata || !v.is_finite() {
                None
            } else {
                Some(v)
            });
        }
        if row.len() != ncols {
            return Err(parse_err(
                lineno,
                format!("expected {ncols} values, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.len() != nrows {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {nrows} data rows, found {}", rows.len()),
        ));
    }

    // Crop border rows/columns that hold no data at all.
    let row_has = |r: usize| rows[r].iter().any(Option::is_some);
    let col_has = |c: usize| rows.iter().any(|r| r[c].is_some());
    let Some(top) = (0..nrows).find(|&r| row_has(r)) else {
        return Err(MapError::Invalid("grid holds no data".into()));
    };
    let bottom = (0..nrows).rev().find(|&r| row_has(r)).unwrap();
    let left = (0..ncols).find(|&c| col_has(c)).unwrap();
    let right = (0..ncols).rev().find(|&c| col_has(c)).unwrap();

    let n_rows = bottom - top + 1;
    let n_cols = right - left + 1;
    let mut values = vec![0.0; n_rows * n_cols];
    for (fr, row) in rows.iter().enumerate().take(bottom + 1).skip(top) {
        for (c, v) in row.iter().enumerate().take(right + 1).skip(left) {
            let Some(v) = v else {
                return Err(MapError::Invalid(format!(
                    "nodata inside data region at row {}, col {} (file order, 1-based)",
                    fr + 1,
                    c + 1
                )));
            };
            let i = bottom - fr;
            values[i * n_cols + (c - left)] = *v;
        }
    }

    let origin_lat = (lat0 + (nrows - 1 - bottom) as f64 * cell_lat).to_radians();
    let origin_lon = (lon0 + left as f64 * cell_lon).to_radians();
    AnomalyGrid::new(
        name,
        0,
        origin_lat,
        origin_lon,
        cell_lat.to_radians(),
        cell_lon.to_radians(),
        n_rows,
        n_cols,
        ref_alt,
        values,
    )
}

pub fn write_grid_ascii(grid: &AnomalyGrid) -> String {
    let cell_lat = grid.d_lat.to_degrees();
    let cell_lon = grid.d_lon.to_degrees();
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", grid.n_cols);
    let _ = writeln!(out, "nrows {}", grid.n_rows);
    let _ = writeln!(
        out,
        "xllcorner {:?}",
        grid.origin_lon.to_degrees() - 0.5 * cell_lon
    );
    let _ = writeln!(
        out,
        "yllcorner {:?}",
        grid.origin_lat.to_degrees() - 0.5 * cell_lat
    );
    let _ = writeln!(out, "cellsize {:?}", cell_lat);
    if grid.d_lon != grid.d_lat {
        let _ = writeln!(out, "xcellsize {:?}", cell_lon);
    }
    let _ = writeln!(out, "NODATA_value {DEFAULT_NODATA:?}");
    let _ = writeln!(out, "REF_ALT_M {:?}", grid.reference_altitude);
    for i in (0..grid.n_rows).rev() {
        let row: Vec<String> = (0..grid.n_cols)
            .map(|j| format!("{:?}", grid.value(i, j)))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn io_err(path: &Path, source: std::io::Error) -> MapError {
    MapError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a grid file; the layer name is the file stem.
pub fn load_grid_file(path: &Path) -> Result<AnomalyGrid, MapError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(|| "grid".to_string(), |s| s.to_string_lossy().into_owned());
    load_grid_ascii(&text, &name)
}

pub fn write_grid_file(grid: &AnomalyGrid, path: &Path) -> Result<(), MapError> {
    std::fs::write(path, write_grid_ascii(grid)).map_err(|e| io_err(path, e))
}

/// Reads a JSON manifest (`[{"path": ..., "priority": ...}]`) and loads each
/// grid. Relative paths resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<AnomalyGrid>, MapError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let entries: Vec<StackManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| MapError::Stack(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    entries
        .iter()
        .map(|e| {
            let p = base.join(&e.path);
            let mut g = load_grid_file(&p)?;
            g.priority = e.priority;
            Ok(g)
        })
        .collect()
}
