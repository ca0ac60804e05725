use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{Divergence, InnovationStats, RunReport};
use super::HarnessError;
use crate::filter::write_innovation_csv;

pub const EPOCH_CSV: &str = "epochs.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const DETAILS_JSON: &str = "details.json";
pub const INNOVATIONS_CSV: &str = "innovations.csv";
pub const SNAPSHOT_JSON: &str = "snapshot.json";
pub const PLOT_SVG: &str = "error_vs_distance.svg";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportFormats {
    /// Error-vs-distance plot; `band` is the shaded accuracy band (m).
    pub plot: Option<f64>,
}

impl Default for ReportFormats {
    fn default() -> Self {
        Self { plot: Some(100.0) }
    }
}

#[derive(Serialize)]
struct CsvRow {
    t_s: f64,
    truth_lat: f64,
    truth_lon: f64,
    ins_err_m: f64,
    magnav_err_m: f64,
    magnav_sigma_m: f64,
    gate_open: bool,
    #[serde(rename = "innovation_nT")]
    innovation_nt: Option<f64>,
    accepted: Option<bool>,
}

#[derive(Serialize)]
struct Details<'a> {
    name: &'a str,
    seed: u64,
    distance_m: f64,
    ins_final_m: f64,
    magnav_final_m: f64,
    bounded_statistic: f64,
    gate_open_time_s: Option<f64>,
    innovations: &'a InnovationStats,
    divergence: &'a Option<Divergence>,
    warnings: &'a [String],
    runtime_s: f64,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Per-epoch CSV with the fixed column set.
pub fn write_epoch_csv(report: &RunReport, out: impl std::io::Write) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for e in &report.epochs {
        w.serialize(CsvRow {
            t_s: e.t,
            truth_lat: e.truth.latitude.to_degrees(),
            truth_lon: e.truth.longitude.to_degrees(),
            ins_err_m: e.ins_err,
            magnav_err_m: e.magnav_err,
            magnav_sigma_m: e.magnav_sigma,
            gate_open: e.gate_open,
            innovation_nt: e.innovation.filter(|v| v.is_finite()),
            accepted: e.accepted,
        })
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: PathBuf::from(EPOCH_CSV),
        source: e,
    })?;
    Ok(())
}

/// Writes the epoch CSV, summary and details JSON, innovation log, the final
/// coefficient snapshot and optionally the plot. Returns the written paths.
pub fn emit_report(
    report: &RunReport,
    dir: &Path,
    formats: ReportFormats,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();

    let p = dir.join(EPOCH_CSV);
    write_epoch_csv(report, fs::File::create(&p).map_err(io(&p))?)?;
    written.push(p);

    let p = dir.join(SUMMARY_JSON);
    let text = serde_json::to_string_pretty(&report.summary)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&p, text + "\n").map_err(io(&p))?;
    written.push(p);

    let p = dir.join(DETAILS_JSON);
    let details = Details {
        name: &report.name,
        seed: report.seed,
        distance_m: report.distance_m,
        ins_final_m: report.metrics.ins_final_m,
        magnav_final_m: report.metrics.magnav_final_m,
        bounded_statistic: report.metrics.bounded_statistic,
        gate_open_time_s: report.gate_open_time,
        innovations: &report.innovations,
        divergence: &report.divergence,
        warnings: &report.warnings,
        runtime_s: report.runtime_s,
    };
    let text =
        serde_json::to_string_pretty(&details).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&p, text + "\n").map_err(io(&p))?;
    written.push(p);

    let p = dir.join(INNOVATIONS_CSV);
    let mut f = std::io::BufWriter::new(fs::File::create(&p).map_err(io(&p))?);
    write_innovation_csv(&report.innovation_log, &mut f).map_err(io(&p))?;
    written.push(p);

    if let Some(s) = &report.snapshot {
        let p = dir.join(SNAPSHOT_JSON);
        s.save(&p)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        written.push(p);
    }

    if let Some(band) = formats.plot {
        let p = dir.join(PLOT_SVG);
        fs::write(&p, render_svg(report, band)).map_err(io(&p))?;
        written.push(p);
    }
    Ok(written)
}

/// Horizontal error against distance flown, with a shaded accuracy band.
pub fn render_svg(report: &RunReport, band: f64) -> String {
    let (w, h, margin) = (900.0, 450.0, 60.0);
    let x_max = (report.distance_m / 1000.0).max(1e-3);
    let y_max = report
        .epochs
        .iter()
        .map(|e| e.ins_err.max(e.magnav_err))
        .fold(band * 1.5, f64::max)
        * 1.05;
    let sx = |x: f64| margin + x / x_max * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - y / y_max * (h - 2.0 * margin);
    let line = |f: &dyn Fn(&super::run::EpochRecord) -> f64| {
        report
            .epochs
            .iter()
            .map(|e| format!("{:.1},{:.1}", sx(e.distance / 1000.0), sy(f(e))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#4a90d9" fill-opacity="0.15"/>"##,
        sx(0.0),
        sy(band),
        sx(x_max) - sx(0.0),
        sy(0.0) - sy(band)
    );
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#d0021b" stroke-width="1.5" points="{}"/>"##,
        line(&|e| e.ins_err)
    );
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#2b5f9e" stroke-width="1.5" points="{}"/>"##,
        line(&|e| e.magnav_err)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = margin,
        b = h - margin,
        r = w - margin,
        t = margin
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">distance (km), 0 to {x_max:.0}</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle">horizontal error (m), 0 to {y_max:.0}</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r##"<text x="{}" y="{}" fill="#d0021b">INS</text><text x="{}" y="{}" fill="#2b5f9e">MagNav</text><text x="{}" y="{}">band {band:.0} m</text>"##,
        w - 200.0,
        margin - 20.0,
        w - 150.0,
        margin - 20.0,
        w - 90.0,
        margin - 20.0
    );
    s.push_str("</svg>\n");
    s
}
