//! Rasterization of GPS trajectory points into count, mean-speed and
//! max-speed grids.
//!
//! Two engines produce identical rasters: [`engine::rasterize_direct`] bins
//! projected points arithmetically into a structured grid, while
//! [`engine::rasterize_vectorgrid`] builds explicit cell polygons and joins
//! points into them through a spatial index. [`bench`] measures both.

pub mod bench;
pub mod cli;
pub mod engine;
pub mod geo;
pub mod grid;
pub mod ingest;
pub mod raster_io;
pub mod rtree;
pub mod timing;

pub use engine::{Engine, EngineError, EngineOptions, EngineOutput, SkipTally};
pub use geo::{GeoCoord, ProjCoord};
pub use grid::{AggCell, AggregateRaster, Band, CellIndex, GridSpec, NODATA};
pub use ingest::{RawFix, TrajectoryPoint};
pub use timing::TimingReport;
