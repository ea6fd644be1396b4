//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
//! 3 vector-grid memory budget exceeded, 4 rasters differ.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::thread;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, ExperimentConfig};
use crate::engine::{self, Engine, EngineError, EngineOptions, DEFAULT_CELL_CAP};
use crate::grid::{Band, GridSpec};
use crate::ingest::{self, CsvFixReader, SpeedDeriver, DEFAULT_MAX_IN_MEMORY};
use crate::raster_io::{self, DiffReport, RasterIoError};
use crate::timing::{format_seconds, timed, TimingReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_CELL_CAP: i32 = 3;
pub const EXIT_DIFFERENT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "trajgrid", version, about = "Rasterize GPS trajectories into count and speed grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize a trajectory CSV into three ESRI ASCII grids.
    Rasterize(RasterizeArgs),
    /// Subtract two rasters band by band.
    Compare(CompareArgs),
    /// Run a benchmark sweep and write a CSV report.
    Bench(BenchArgs),
    /// Write a synthetic trajectory CSV.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("extent").required(true).args(["size", "extent_km"])))]
struct RasterizeArgs {
    /// Trajectory CSV with id,timestamp,latitude,longitude[,speed].
    #[arg(long)]
    input: PathBuf,
    /// Top-left corner in projected meters.
    #[arg(long, num_args = 2, value_names = ["X", "Y"], allow_negative_numbers = true, required = true)]
    origin: Vec<f64>,
    /// Grid size in cells.
    #[arg(long, num_args = 2, value_names = ["COLS", "ROWS"])]
    size: Option<Vec<usize>>,
    /// Grid size in kilometers; cells per side are rounded up.
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    extent_km: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5.0)]
    pixel_size: f64,
    #[arg(long, value_enum, default_value_t = EngineArg::Direct)]
    engine: EngineArg,
    /// Worker threads for the direct engine [default: logical cores].
    #[arg(long)]
    workers: Option<usize>,
    /// Output prefix; writes <prefix>_count.asc, _speed_avg.asc, _speed_max.asc.
    #[arg(long)]
    out: PathBuf,
    /// Largest vector grid (in cells) the vectorgrid engine may build.
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cell_cap: usize,
    /// Rows sorted in memory before spilling to temporary files.
    #[arg(long, default_value_t = DEFAULT_MAX_IN_MEMORY)]
    max_in_memory: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    a_prefix: PathBuf,
    b_prefix: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Direct,
    Vectorgrid,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Engine {
        match e {
            EngineArg::Direct => Engine::Direct,
            EngineArg::Vectorgrid => Engine::VectorGrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    PaperScaled,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("sweep").required(true).args(["preset", "areas"])))]
struct BenchArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Test areas in km² (comma separated); requires --points.
    #[arg(long, value_delimiter = ',', requires = "points")]
    areas: Option<Vec<f64>>,
    /// Point counts (comma separated), crossed with --areas.
    #[arg(long, value_delimiter = ',')]
    points: Option<Vec<usize>>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EngineArg::Direct, EngineArg::Vectorgrid])]
    engines: Vec<EngineArg>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Worker threads for the direct engine [default: logical cores].
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5.0)]
    pixel_size: f64,
    #[arg(long, default_value_t = DEFAULT_CELL_CAP)]
    cell_cap: usize,
    /// Report path [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    points: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of trajectories [default: one per 1000 points].
    #[arg(long)]
    trajectories: Option<usize>,
    /// Square test area anchored at the benchmark origin.
    #[arg(long, default_value_t = 2.0)]
    area_km2: f64,
    #[arg(long, default_value_t = 5.0)]
    pixel_size: f64,
    /// Output CSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Rasterize(args) => cmd_rasterize(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("trajgrid: {}", failure.message);
            failure.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn io(context: &str, err: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{context}: {err}"),
        }
    }
}

fn default_workers() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

fn cmd_rasterize(args: RasterizeArgs) -> Result<i32, Failure> {
    let (n_cols, n_rows) = match (&args.size, &args.extent_km) {
        (Some(size), _) => (size[0], size[1]),
        (None, Some(km)) => {
            let cells = |km: f64| (1000.0 * km / args.pixel_size).ceil();
            let (w, h) = (cells(km[0]), cells(km[1]));
            if !(w.is_finite() && h.is_finite() && w >= 1.0 && h >= 1.0) {
                return Err(Failure::config(format!(
                    "--extent-km {} {} gives no cells at pixel size {}",
                    km[0], km[1], args.pixel_size
                )));
            }
            (w as usize, h as usize)
        }
        (None, None) => unreachable!("clap requires --size or --extent-km"),
    };
    let spec = GridSpec::new(args.origin[0], args.origin[1], args.pixel_size, n_cols, n_rows)
        .map_err(|e| Failure::config(e.to_string()))?;
    let workers = args.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Failure::config("--workers must be at least 1"));
    }
    let engine: Engine = args.engine.into();

    let input = File::open(&args.input)
        .map_err(|e| Failure::io(&format!("cannot open {}", args.input.display()), e))?;
    let (ingested, t_ingest) = timed(|| -> Result<_, Failure> {
        let mut reader = CsvFixReader::new(BufReader::new(input))
            .map_err(|e| Failure::io(&format!("cannot read {}", args.input.display()), e))?;
        let mut points = Vec::new();
        let mut outside = 0usize;
        SpeedDeriver::new(args.max_in_memory)
            .derive(reader.by_ref(), |p| {
                if ingest::in_grid(&p, &spec) {
                    points.push(p);
                } else {
                    outside += 1;
                }
            })
            .map_err(|e| Failure::io("sorting trajectories", e))?;
        if let Some(e) = reader.take_error() {
            return Err(Failure::io(&format!("cannot read {}", args.input.display()), e));
        }
        Ok((points, reader.skipped(), outside))
    });
    let (points, bad_rows, outside) = ingested?;
    if bad_rows > 0 {
        eprintln!("trajgrid: skipped {bad_rows} malformed row(s)");
    }
    if outside > 0 {
        eprintln!("trajgrid: ignored {outside} point(s) outside the grid");
    }

    let opts = EngineOptions {
        workers,
        cell_cap: args.cell_cap,
    };
    let output = match engine::rasterize(engine, &points, &spec, &opts) {
        Ok(out) => out,
        Err(e @ EngineError::CellCap { .. }) => {
            return Err(Failure {
                code: EXIT_CELL_CAP,
                message: e.to_string(),
            })
        }
        Err(e) => return Err(Failure::config(e.to_string())),
    };
    if output.skipped.invalid_speed > 0 {
        eprintln!(
            "trajgrid: dropped {} point(s) with unusable speed",
            output.skipped.invalid_speed
        );
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| Failure::io(&format!("cannot create {}", parent.display()), e))?;
    }
    raster_io::write_raster(&output.raster, &args.out)
        .map_err(|e| Failure::io("cannot write rasters", e))?;

    let timing = TimingReport {
        ingest: t_ingest,
        ..output.timing
    };
    let mut line = engine.name().to_string();
    for s in timing.seconds() {
        line.push(',');
        line.push_str(&format_seconds(s));
    }
    println!("{line}");
    Ok(EXIT_OK)
}

fn cmd_compare(args: CompareArgs) -> Result<i32, Failure> {
    let mut reports: Vec<(Band, DiffReport)> = Vec::new();
    for band in Band::ALL {
        let read = |prefix: &Path| {
            raster_io::read_band(prefix, band).map_err(|e| {
                Failure::io(&format!("cannot read {}", raster_io::band_path(prefix, band).display()), e)
            })
        };
        let a = read(&args.a_prefix)?;
        let b = read(&args.b_prefix)?;
        if a.header.xll_corner != b.header.xll_corner
            || a.header.yll_corner != b.header.yll_corner
            || a.header.cell_size != b.header.cell_size
        {
            eprintln!("trajgrid: warning: {} bands are georeferenced differently", band.name());
        }
        let report = raster_io::raster_diff(&a.values, &b.values, a.header.nodata).map_err(|e| match e {
            RasterIoError::DimensionMismatch { .. } => Failure::config(format!("{} band: {e}", band.name())),
            other => Failure::io("compare", other),
        })?;
        reports.push((band, report));
    }
    if reports.iter().all(|(_, r)| r.is_identical()) {
        println!("IDENTICAL");
        return Ok(EXIT_OK);
    }
    for (band, r) in &reports {
        println!(
            "{}: {} differing cell(s), max abs diff {}",
            band.name(),
            r.n_differing_cells,
            r.max_abs_diff
        );
    }
    Ok(EXIT_DIFFERENT)
}

fn cmd_bench(args: BenchArgs) -> Result<i32, Failure> {
    let workers = args.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Failure::config("--workers must be at least 1"));
    }
    if args.reps == 0 {
        return Err(Failure::config("--reps must be at least 1"));
    }
    let engines: Vec<Engine> = args.engines.iter().map(|&e| e.into()).collect();
    let mut configs = match (args.preset, &args.areas, &args.points) {
        (Some(Preset::PaperScaled), _, _) => bench::scaled_preset_configs(&engines, workers, args.seed),
        (None, Some(areas), Some(points)) => {
            let mut out = Vec::new();
            for &engine in &engines {
                for &area in areas {
                    for &n in points {
                        out.push(ExperimentConfig {
                            workers,
                            seed: args.seed,
                            ..ExperimentConfig::new(engine, area, n)
                        });
                    }
                }
            }
            out
        }
        _ => return Err(Failure::config("give --preset or both --areas and --points")),
    };
    for cfg in &mut configs {
        cfg.pixel_size = args.pixel_size;
        cfg.cell_cap = args.cell_cap;
    }
    let rows = bench::run_matrix(&configs, args.reps);
    match &args.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| Failure::io(&format!("cannot create {}", path.display()), e))?;
            bench::write_report(&rows, file).map_err(|e| Failure::io("cannot write report", e))?;
        }
        None => {
            bench::write_report(&rows, io::stdout().lock())
                .map_err(|e| Failure::io("cannot write report", e))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_gen(args: GenArgs) -> Result<i32, Failure> {
    if args.points == 0 {
        return Err(Failure::config("--points must be at least 1"));
    }
    let spec = bench::grid_for_area(args.area_km2, args.pixel_size)
        .map_err(|e| Failure::config(e.to_string()))?;
    let trajectories = args
        .trajectories
        .unwrap_or(args.points / bench::FIXES_PER_TRAJECTORY)
        .max(1);
    if trajectories > args.points {
        return Err(Failure::config("--trajectories cannot exceed --points"));
    }
    let points = bench::generate_synthetic(args.points, &spec, trajectories, args.seed);
    eprintln!(
        "trajgrid: grid --origin {} {} --size {} {} --pixel-size {}",
        spec.origin_x(),
        spec.origin_y(),
        spec.n_cols(),
        spec.n_rows(),
        spec.pixel_size()
    );
    let write = |sink: &mut dyn Write| -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(sink);
        out.write_record(["id", "timestamp", "latitude", "longitude"])?;
        for p in &points {
            out.write_record([
                p.fix.trajectory_id.to_string(),
                p.fix.timestamp.to_string(),
                p.fix.coord.lat().to_string(),
                p.fix.coord.lon().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    };
    match &args.out {
        Some(path) => {
            let mut file = io::BufWriter::new(
                File::create(path).map_err(|e| Failure::io(&format!("cannot create {}", path.display()), e))?,
            );
            write(&mut file).map_err(|e| Failure::io("cannot write CSV", e))?;
        }
        None => write(&mut io::stdout().lock()).map_err(|e| Failure::io("cannot write CSV", e))?,
    }
    Ok(EXIT_OK)
}
