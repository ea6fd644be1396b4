//! The two rasterization pipelines. Both take trajectory points plus a grid
//! and produce the same [`AggregateRaster`]; they differ in how points are
//! assigned to cells.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::{AggregateRaster, GridSpec};
use crate::ingest::TrajectoryPoint;
use crate::timing::TimingReport;

pub mod direct;
pub mod vectorgrid;

pub use direct::rasterize_direct;
pub use vectorgrid::{create_vector_grid, rasterize_vectorgrid, spatial_join, GridCellPolygon};

/// Default limit on the number of cell polygons the vector-grid engine
/// materializes.
pub const DEFAULT_CELL_CAP: usize = 200_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("vector grid of {cells} cells exceeds the memory budget of {cap} cells")]
    CellCap { cells: u128, cap: usize },
}

/// Points dropped before aggregation, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipTally {
    /// Latitude beyond the projection's guard band.
    pub unprojectable: usize,
    /// Projected position outside the grid extent.
    pub out_of_bounds: usize,
    /// Speed outside the range the aggregate accepts.
    pub invalid_speed: usize,
}

impl SkipTally {
    pub fn total(&self) -> usize {
        self.unprojectable + self.out_of_bounds + self.invalid_speed
    }

    pub(crate) fn add(&mut self, other: &SkipTally) {
        self.unprojectable += other.unprojectable;
        self.out_of_bounds += other.out_of_bounds;
        self.invalid_speed += other.invalid_speed;
    }
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    pub raster: AggregateRaster,
    pub timing: TimingReport,
    pub skipped: SkipTally,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Direct,
    VectorGrid,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Direct => "direct",
            Engine::VectorGrid => "vectorgrid",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "direct" => Ok(Engine::Direct),
            "vectorgrid" => Ok(Engine::VectorGrid),
            other => Err(format!("unknown engine '{other}' (expected direct or vectorgrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    /// Threads used by the direct engine; the vector-grid engine is serial.
    pub workers: usize,
    pub cell_cap: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }
}

pub fn rasterize(
    engine: Engine,
    points: &[TrajectoryPoint],
    spec: &GridSpec,
    opts: &EngineOptions,
) -> Result<EngineOutput, EngineError> {
    match engine {
        Engine::Direct => rasterize_direct(points, spec, opts.workers),
        Engine::VectorGrid => rasterize_vectorgrid(points, spec, opts.cell_cap),
    }
}
