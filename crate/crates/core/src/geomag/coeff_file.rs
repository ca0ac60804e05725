//! Plain-text coefficient files.
//!
//! ```text
//! # comment
//! SHMODEL <epoch> <max_degree>
//! n m g h [g_dot h_dot]
//! ```
//!
//! The header is optional; without it the epoch is [`DEFAULT_EPOCH`] and the
//! degree is the largest `n` present. Missing secular-variation columns are zero.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::{GeomagError, SphericalHarmonicModel};

pub const DEFAULT_EPOCH: f64 = 2020.0;

struct Record {
    line: usize,
    n: usize,
    m: usize,
    vals: [f64; 4],
}

pub fn load_harmonic_coefficients(text: &str) -> Result<SphericalHarmonicModel, GeomagError> {
    let mut header: Option<(f64, usize)> = None;
    let mut records = Vec::new();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens[0].eq_ignore_ascii_case("SHMODEL") {
            if header.is_some() || !records.is_empty() {
                return Err(GeomagError::Parse {
                    line,
                    message: "header must come first".into(),
                });
            }
            if tokens.len() != 3 {
                return Err(GeomagError::Parse {
                    line,
                    message: "expected `SHMODEL <epoch> <max_degree>`".into(),
                });
            }
            let epoch = parse_f64(tokens[1], line)?;
            let degree = parse_usize(tokens[2], line)?;
            header = Some((epoch, degree));
            continue;
        }
        if tokens.len() != 4 && tokens.len() != 6 {
            return Err(GeomagError::Parse {
                line,
                message: format!("expected 4 or 6 fields, found {}", tokens.len()),
            });
        }
        let n = parse_usize(tokens[0], line)?;
        let m = parse_usize(tokens[1], line)?;
        if n == 0 || m > n {
            return Err(GeomagError::Parse {
                line,
                message: format!("invalid (n={n}, m={m})"),
            });
        }
        let mut vals = [0.0; 4];
        for (slot, tok) in vals.iter_mut().zip(&tokens[2..]) {
            *slot = parse_f64(tok, line)?;
        }
        if !seen.insert((n, m)) {
            return Err(GeomagError::DuplicateEntry { line, n, m });
        }
        records.push(Record { line, n, m, vals });
    }

    let body_degree = records.iter().map(|r| r.n).max().unwrap_or(0);
    if body_degree == 0 {
        return Err(GeomagError::ModelInvalid(
            "no coefficients (max_degree would be 0)".into(),
        ));
    }
    let (epoch, degree) = header.unwrap_or((DEFAULT_EPOCH, body_degree));
    let mut model = SphericalHarmonicModel::new(epoch, degree)?;
    for r in &records {
        if r.n > degree {
            return Err(GeomagError::Parse {
                line: r.line,
                message: format!("degree {} exceeds header max_degree {degree}", r.n),
            });
        }
        let [g, h, gd, hd] = r.vals;
        model
            .set(r.n, r.m, g, h, gd, hd)
            .map_err(|e| GeomagError::Parse {
                line: r.line,
                message: e.to_string(),
            })?;
    }
    model.validate()?;
    Ok(model)
}

pub fn write_harmonic_coefficients(model: &SphericalHarmonicModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "SHMODEL {:?} {}", model.epoch, model.max_degree);
    for n in 1..=model.max_degree {
        for m in 0..=n {
            let (g, h, gd, hd) = model.get(n, m).expect("in range");
            let _ = writeln!(out, "{n} {m} {g:?} {h:?} {gd:?} {hd:?}");
        }
    }
    out
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, GeomagError> {
    let v: f64 = tok.parse().map_err(|_| GeomagError::Parse {
        line,
        message: format!("not a number: {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(GeomagError::Parse {
            line,
            message: format!("non-finite value {tok:?}"),
        });
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, GeomagError> {
    tok.parse().map_err(|_| GeomagError::Parse {
        line,
        message: format!("not an integer: {tok:?}"),
    })
}
