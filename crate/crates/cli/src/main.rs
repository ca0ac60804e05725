use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magnav_core::geomag::SphericalHarmonicModel;
use magnav_core::geomag::TemporalModel;
use magnav_core::harness::{
    emit_report, parse_sweep_param, preset, presets, run_scenario, sweep, HarnessError,
    ReportFormats, RunReport, ScenarioConfig,
};
use magnav_core::maps::{
    continue_to, level_layers, load_grid_file, load_manifest, write_grid_file, MapError, MapStack,
    StackConfig, StackManifestEntry,
};

/// Writes to stdout, ignoring a closed pipe.
macro_rules! say {
    (noline $($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($arg)*);
    }};
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "magnav",
    version,
    about = "Magnetic-anomaly navigation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the SVG plot.
        #[arg(long)]
        no_plot: bool,
    },
    /// Run a scenario once per value of one parameter (dotted path into the scenario JSON).
    Sweep {
        scenario: PathBuf,
        /// `<path>=<v1,v2,...>`, e.g. `filter.map_sigma=1,2,4`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Anomaly grid utilities.
    Map {
        #[command(subcommand)]
        command: MapCommand,
    },
    /// Built-in scenario presets.
    Presets {
        #[command(subcommand)]
        command: PresetCommand,
    },
}

#[derive(Subcommand)]
enum MapCommand {
    /// Continue a grid up (dz > 0) or down (dz < 0).
    Continue {
        #[arg(long, allow_hyphen_values = true)]
        dz: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Downward-continuation cutoff as a fraction of the Nyquist wavenumber.
        #[arg(long, default_value_t = 0.5)]
        cutoff: f64,
    },
    /// Level overlapping layers of a manifest against the highest-priority layer.
    Level {
        #[arg(long)]
        stack: PathBuf,
        /// Output directory (defaults to the manifest's directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PresetCommand {
    /// List preset names.
    List,
    /// Print a preset as scenario JSON.
    Show { name: String },
}

/// CLI failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Self {
            code: if e.is_config() { EXIT_CONFIG } else { 1 },
            message: e.to_string(),
        }
    }
}

impl From<MapError> for Failure {
    fn from(e: MapError) -> Self {
        let code = if matches!(e, MapError::Io { .. }) {
            1
        } else {
            EXIT_CONFIG
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    Ok(ScenarioConfig::load(path)?)
}

fn default_out(config: &ScenarioConfig) -> PathBuf {
    let safe: String = config
        .name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    config
        .output_dir
        .as_ref()
        .map_or_else(|| PathBuf::from("runs").join(safe), PathBuf::from)
}

fn print_summary(report: &RunReport) {
    let s = &report.summary;
    say!(
        "{}: distance {:.1} km, INS {:.0} m ({}%), MagNav {:.0} m ({}%), advantage {}",
        report.name,
        s.distance_km,
        s.ins_error_m,
        s.ins_error_pct,
        s.magnav_error_m,
        s.magnav_error_pct,
        s.advantage_factor
    );
}

fn diverged(report: &RunReport) -> Option<Failure> {
    report.divergence.as_ref().map(|d| Failure {
        code: EXIT_DIVERGED,
        message: format!(
            "{}: filter diverged at t = {:.1} s (last good {:.1} s): {}",
            report.name, d.t, d.last_good_t, d.reason
        ),
    })
}

fn run(
    scenario: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    plot: bool,
) -> Result<(), Failure> {
    let mut config = load_scenario(scenario)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let dir = out.unwrap_or_else(|| default_out(&config));
    let report = run_scenario(&config)?;
    let formats = ReportFormats {
        plot: plot.then_some(100.0),
    };
    let written = emit_report(&report, &dir, formats)?;
    print_summary(&report);
    for p in written {
        say!("  wrote {}", p.display());
    }
    match diverged(&report) {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn run_sweep(scenario: &Path, param: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    let config = load_scenario(scenario)?;
    let (path, values) = parse_sweep_param(param)?;
    let dir = out.unwrap_or_else(|| default_out(&config).join("sweep"));
    let results = sweep(&config, &path, &values)?;
    let mut rows = Vec::new();
    let mut worst = None;
    for (i, (value, report)) in results.iter().enumerate() {
        let sub = dir.join(format!("{i:02}"));
        emit_report(report, &sub, ReportFormats::default())?;
        say!(noline "{path}={value}  ");
        print_summary(report);
        rows.push(serde_json::json!({ "value": value, "dir": sub.to_string_lossy(), "summary": report.summary }));
        if worst.is_none() {
            worst = diverged(report);
        }
    }
    let index = dir.join("sweep.json");
    std::fs::write(
        &index,
        serde_json::to_string_pretty(&rows).expect("json") + "\n",
    )
    .map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", index.display()),
    })?;
    say!("wrote {}", index.display());
    worst.map_or(Ok(()), Err)
}

fn map_continue(dz: f64, input: &Path, out: &Path, cutoff: f64) -> Result<(), Failure> {
    if !dz.is_finite() {
        return Err(Failure::config("--dz must be finite"));
    }
    if !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Failure::config("--cutoff must lie in (0, 1]"));
    }
    let grid = load_grid_file(input)?;
    let target = grid.reference_altitude + dz;
    let continued = continue_to(&grid, target, cutoff, 0.0);
    write_grid_file(&continued, out)?;
    say!(
        "{} -> {} ({:+} m, reference altitude {} m)",
        input.display(),
        out.display(),
        dz,
        target
    );
    Ok(())
}

fn map_level(manifest: &Path, out_dir: Option<PathBuf>) -> Result<(), Failure> {
    let layers = load_manifest(manifest)?;
    let before: Vec<(String, f64)> = layers
        .iter()
        .map(|g| (g.name.clone(), g.values[0]))
        .collect();
    let stack = MapStack::new(
        layers,
        SphericalHarmonicModel::builtin_synthetic(),
        TemporalModel::default(),
        StackConfig::default(),
    )?;
    let levelled = level_layers(&stack)?;
    let dir = out_dir.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).to_path_buf());
    std::fs::create_dir_all(&dir).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", dir.display()),
    })?;
    let mut entries = Vec::new();
    for g in levelled.layers() {
        let file = format!("{}_levelled.asc", g.name);
        write_grid_file(g, &dir.join(&file))?;
        let offset = before
            .iter()
            .find(|(n, _)| *n == g.name)
            .map_or(0.0, |(_, v0)| g.values[0] - v0);
        say!("{}: offset {offset:+.3} nT -> {file}", g.name);
        entries.push(StackManifestEntry {
            path: file,
            priority: g.priority,
        });
    }
    let out_manifest = dir.join("levelled_manifest.json");
    std::fs::write(
        &out_manifest,
        serde_json::to_string_pretty(&entries).expect("json") + "\n",
    )
    .map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", out_manifest.display()),
    })?;
    say!("wrote {}", out_manifest.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            no_plot,
        } => run(&scenario, seed, out, !no_plot),
        Command::Sweep {
            scenario,
            param,
            out,
        } => run_sweep(&scenario, &param, out),
        Command::Map {
            command:
                MapCommand::Continue {
                    dz,
                    input,
                    out,
                    cutoff,
                },
        } => map_continue(dz, &input, &out, cutoff),
        Command::Map {
            command: MapCommand::Level { stack, out_dir },
        } => map_level(&stack, out_dir),
        Command::Presets {
            command: PresetCommand::List,
        } => {
            for p in presets() {
                say!("{:<22} {}", p.name, p.description);
            }
            Ok(())
        }
        Command::Presets {
            command: PresetCommand::Show { name },
        } => {
            let p =
                preset(&name).ok_or_else(|| Failure::config(format!("unknown preset {name:?}")))?;
            say!("{}", serde_json::to_string_pretty(&p).expect("json"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
