//! Benchmark harness: seeded synthetic trajectories, single experiments
//! with per-stage timing, and sweeps written as CSV reports.

use std::io;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::engine::{self, Engine, EngineOptions, DEFAULT_CELL_CAP};
use crate::geo::{self, GeoCoord, ProjCoord};
use crate::grid::{AggregateRaster, GridSpec};
use crate::ingest::{derive_speeds, RawFix, TrajectoryPoint};
use crate::timing::{format_seconds, timed};

pub use crate::timing::TimingReport;

/// Geographic top-left corner of every benchmark grid (central Montreal).
pub const BENCH_ORIGIN: (f64, f64) = (45.55, -73.65);

/// First timestamp of generated trajectories (epoch seconds).
pub const SYNTHETIC_T0: f64 = 1_464_800_000.0;

/// Default fixes per synthetic trajectory.
pub const FIXES_PER_TRAJECTORY: usize = 1000;

/// Test areas (km²) and point counts of the original experiment matrix,
/// scaled down 50x for desk-sized runs.
pub const SCALED_PRESET_MATRIX: [(f64, &[usize]); 5] = [
    (2.0, &[100_000]),
    (4.5, &[100_000, 200_000, 220_000]),
    (8.0, &[100_000, 200_000, 300_000]),
    (12.5, &[100_000, 200_000, 300_000, 360_000]),
    (18.0, &[100_000, 200_000, 300_000, 400_000]),
];

/// Square grid of `area_km2` anchored at [`BENCH_ORIGIN`]; the side length
/// in cells is `ceil(1000 * sqrt(area_km2) / pixel_size)`.
pub fn grid_for_area(area_km2: f64, pixel_size: f64) -> Result<GridSpec, crate::grid::GridError> {
    let side_m = area_km2.sqrt() * 1000.0;
    let n = (side_m / pixel_size).ceil().max(1.0) as usize;
    let origin = geo::project_forward(
        GeoCoord::new(BENCH_ORIGIN.0, BENCH_ORIGIN.1).expect("valid constant"),
    )
    .expect("origin inside projection");
    GridSpec::new(origin.x, origin.y, pixel_size, n, n)
}

/// Seeded random-walk trajectories inside `spec`.
///
/// `n_points` fixes are split as evenly as possible over `n_trajectories`
/// walks. Each walk starts uniformly inside the extent and takes 1 s steps
/// with Gaussian displacement (σ = 3 pixels per axis), reflecting off the
/// extent borders. Speeds are derived from consecutive fixes exactly as for
/// ingested data.
pub fn generate_synthetic(
    n_points: usize,
    spec: &GridSpec,
    n_trajectories: usize,
    seed: u64,
) -> Vec<TrajectoryPoint> {
    let n_trajectories = n_trajectories.clamp(1, n_points.max(1));
    if n_points == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = 3.0 * spec.pixel_size();
    let step = Normal::new(0.0, sigma).expect("positive sigma");
    // keep clear of the excluded right/bottom edges despite projection round trips
    let margin = (spec.pixel_size() * 1e-3).min(1e-3);
    let (x_lo, x_hi) = (spec.origin_x() + margin, spec.right() - margin);
    let (y_lo, y_hi) = (spec.bottom() + margin, spec.origin_y() - margin);

    let width = n_trajectories.to_string().len();
    let mut fixes = Vec::with_capacity(n_points);
    for t in 0..n_trajectories {
        let len = n_points / n_trajectories + usize::from(t < n_points % n_trajectories);
        let id: Arc<str> = Arc::from(format!("syn{t:0width$}"));
        let mut x = rng.random_range(x_lo..=x_hi);
        let mut y = rng.random_range(y_lo..=y_hi);
        for i in 0..len {
            if i > 0 {
                x = reflect(x + step.sample(&mut rng), x_lo, x_hi);
                y = reflect(y + step.sample(&mut rng), y_lo, y_hi);
            }
            let g = geo::project_inverse(ProjCoord::new(x, y));
            fixes.push(RawFix {
                trajectory_id: id.clone(),
                timestamp: SYNTHETIC_T0 + i as f64,
                coord: GeoCoord::new(g.lat(), g.lon()).expect("grid lies inside the projection"),
                reported_speed: None,
            });
        }
    }
    derive_speeds(fixes)
}

fn reflect(mut v: f64, lo: f64, hi: f64) -> f64 {
    loop {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return v;
        }
    }
}

/// Order-independent per-band checksums of a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RasterDigest {
    pub count: u64,
    pub mean: u64,
    pub max: u64,
}

impl RasterDigest {
    pub fn of(raster: &AggregateRaster) -> Self {
        let n_cols = raster.spec().n_cols() as u64;
        let position = |(r, c): (usize, usize)| splitmix64(r as u64 * n_cols + c as u64);
        let fold = |values: &mut dyn Iterator<Item = ((usize, usize), u64)>| {
            values.fold(0u64, |acc, (at, bits)| {
                acc.wrapping_add(splitmix64(bits).wrapping_mul(position(at) | 1))
            })
        };
        Self {
            count: fold(&mut raster.count_band().indexed_iter().map(|(at, &v)| (at, v))),
            mean: fold(&mut raster.mean_band().indexed_iter().map(|(at, v)| (at, v.to_bits()))),
            max: fold(&mut raster.max_band().indexed_iter().map(|(at, v)| (at, v.to_bits()))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub area_km2: f64,
    pub n_points: usize,
    pub pixel_size: f64,
    pub engine: Engine,
    pub workers: usize,
    pub seed: u64,
    /// Defaults to one trajectory per [`FIXES_PER_TRAJECTORY`] points.
    pub n_trajectories: Option<usize>,
    pub cell_cap: usize,
}

impl ExperimentConfig {
    pub fn new(engine: Engine, area_km2: f64, n_points: usize) -> Self {
        Self {
            area_km2,
            n_points,
            pixel_size: 5.0,
            engine,
            workers: 1,
            seed: 42,
            n_trajectories: None,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }

    pub fn trajectories(&self) -> usize {
        self.n_trajectories
            .unwrap_or(self.n_points / FIXES_PER_TRAJECTORY)
            .max(1)
    }

    fn validate(&self) -> Result<GridSpec, String> {
        if !(self.area_km2.is_finite() && self.area_km2 > 0.0) {
            return Err(format!("area must be positive, got {}", self.area_km2));
        }
        if self.n_points == 0 {
            return Err("point count must be positive".into());
        }
        if self.workers == 0 {
            return Err("worker count must be positive".into());
        }
        grid_for_area(self.area_km2, self.pixel_size).map_err(|e| e.to_string())
    }
}

/// Every (area, points) pair of [`SCALED_PRESET_MATRIX`] for each engine.
pub fn scaled_preset_configs(engines: &[Engine], workers: usize, seed: u64) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for &engine in engines {
        for (area, counts) in SCALED_PRESET_MATRIX {
            for &n in counts {
                out.push(ExperimentConfig {
                    workers,
                    seed,
                    ..ExperimentConfig::new(engine, area, n)
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub timing: TimingReport,
    /// `Err` holds the failure message, e.g. an exceeded cell cap.
    pub digest: Result<RasterDigest, String>,
}

impl ExperimentResult {
    pub fn is_ok(&self) -> bool {
        self.digest.is_ok()
    }
}

/// Generates the workload, runs the configured engine and digests the
/// result. Generation time is reported as the ingest stage.
pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentResult {
    let spec = match cfg.validate() {
        Ok(spec) => spec,
        Err(msg) => {
            return ExperimentResult {
                timing: TimingReport::default(),
                digest: Err(msg),
            }
        }
    };
    let (points, t_ingest) =
        timed(|| generate_synthetic(cfg.n_points, &spec, cfg.trajectories(), cfg.seed));
    let opts = EngineOptions {
        workers: cfg.workers,
        cell_cap: cfg.cell_cap,
    };
    match engine::rasterize(cfg.engine, &points, &spec, &opts) {
        Ok(out) => ExperimentResult {
            timing: TimingReport {
                ingest: t_ingest,
                ..out.timing
            },
            digest: Ok(RasterDigest::of(&out.raster)),
        },
        Err(e) => ExperimentResult {
            timing: TimingReport {
                ingest: t_ingest,
                ..TimingReport::default()
            },
            digest: Err(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rep {
    Run(usize),
    Median,
}

/// One line of a sweep report. Timings are seconds in the order
/// ingest, transform, grid creation, spatial join, rasterize, total.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub config: ExperimentConfig,
    pub rep: Rep,
    pub seconds: [f64; 6],
    pub digest: Option<RasterDigest>,
    pub status: String,
}

pub const REPORT_HEADER: [&str; 17] = [
    "engine",
    "area_km2",
    "n_points",
    "pixel_size",
    "workers",
    "seed",
    "rep",
    "t_ingest",
    "t_transform",
    "t_grid_creation",
    "t_spatial_join",
    "t_rasterize",
    "t_total",
    "digest_count",
    "digest_mean",
    "digest_max",
    "status",
];

/// Runs every config `repetitions` times, in order, and appends a median
/// row per config. Failed runs are kept as rows and excluded from the
/// median.
pub fn run_matrix(configs: &[ExperimentConfig], repetitions: usize) -> Vec<ReportRow> {
    let repetitions = repetitions.max(1);
    let mut rows = Vec::with_capacity(configs.len() * (repetitions + 1));
    for cfg in configs {
        let mut ok: Vec<[f64; 6]> = Vec::new();
        let mut digest = None;
        let mut last_error = None;
        for rep in 0..repetitions {
            let result = run_experiment(cfg);
            let seconds = result.timing.seconds();
            let (row_digest, status) = match result.digest {
                Ok(d) => {
                    ok.push(seconds);
                    digest.get_or_insert(d);
                    (Some(d), "ok".to_string())
                }
                Err(msg) => {
                    let status = format!("failed: {msg}");
                    last_error = Some(status.clone());
                    (None, status)
                }
            };
            rows.push(ReportRow {
                config: *cfg,
                rep: Rep::Run(rep + 1),
                seconds,
                digest: row_digest,
                status,
            });
        }
        let (seconds, status) = if ok.is_empty() {
            ([0.0; 6], last_error.unwrap_or_else(|| "failed".into()))
        } else {
            (std::array::from_fn(|i| median(ok.iter().map(|s| s[i]).collect())), "ok".into())
        };
        rows.push(ReportRow {
            config: *cfg,
            rep: Rep::Median,
            seconds,
            digest,
            status,
        });
    }
    rows
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn write_report<W: io::Write>(rows: &[ReportRow], sink: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(sink);
    out.write_record(REPORT_HEADER)?;
    for row in rows {
        let c = &row.config;
        let mut record = vec![
            c.engine.name().to_string(),
            c.area_km2.to_string(),
            c.n_points.to_string(),
            c.pixel_size.to_string(),
            c.workers.to_string(),
            c.seed.to_string(),
            match row.rep {
                Rep::Run(i) => i.to_string(),
                Rep::Median => "median".into(),
            },
        ];
        record.extend(row.seconds.iter().map(|&s| format_seconds(s)));
        match row.digest {
            Some(d) => record.extend([d.count, d.mean, d.max].map(|v| format!("{v:016x}"))),
            None => record.extend(std::iter::repeat_n(String::new(), 3)),
        }
        record.push(row.status.clone());
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}
