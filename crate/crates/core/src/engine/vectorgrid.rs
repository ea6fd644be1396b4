//! Baseline pipeline that mirrors desktop-GIS workflows: materialize one
//! polygon per cell, index them, spatially join the points into the
//! polygons, then rasterize the joined aggregates.

use std::time::Duration;

use crate::geo::project_forward;
use crate::grid::{finalize, is_valid_speed, CellIndex, CellMap, GridSpec};
use crate::ingest::TrajectoryPoint;
use crate::rtree::{Aabb, Bounded, PackedRTree};
use crate::timing::{timed, TimingReport};

use super::{EngineError, EngineOutput, SkipTally};

/// Leaf fanout of the cell index.
pub const INDEX_FANOUT: usize = 16;

/// One grid cell as an axis-aligned box. Containment is half-open:
/// `[min_x, max_x) x (min_y, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCellPolygon {
    pub cell: CellIndex,
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl GridCellPolygon {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.min_x <= x && x < self.max_x && self.min_y < y && y <= self.max_y
    }
}

impl Bounded for GridCellPolygon {
    fn bbox(&self) -> Aabb {
        Aabb::new(self.min_x, self.min_y, self.max_x, self.max_y)
    }
}

/// Builds every cell polygon in row-major order. Fails without allocating
/// when the grid has more than `cell_cap` cells.
pub fn create_vector_grid(
    spec: &GridSpec,
    cell_cap: usize,
) -> Result<(Vec<GridCellPolygon>, Duration), EngineError> {
    let cells = spec.n_rows() as u128 * spec.n_cols() as u128;
    if cells > cell_cap as u128 {
        return Err(EngineError::CellCap {
            cells,
            cap: cell_cap,
        });
    }
    Ok(timed(|| {
        let mut polygons = Vec::with_capacity(cells as usize);
        for row in 0..spec.n_rows() {
            for col in 0..spec.n_cols() {
                let cell = CellIndex::new(row, col);
                let (min_x, min_y, max_x, max_y) = spec.cell_box(cell);
                polygons.push(GridCellPolygon {
                    cell,
                    min_x,
                    min_y,
                    max_x,
                    max_y,
                });
            }
        }
        polygons
    }))
}

/// Projects each point, finds its containing polygon through a bulk-loaded
/// R-tree and aggregates per cell. The duration covers index construction,
/// projection and lookups.
pub fn spatial_join(
    points: &[TrajectoryPoint],
    cells: Vec<GridCellPolygon>,
) -> (CellMap, SkipTally, Duration) {
    let ((map, skipped), elapsed) = timed(|| {
        let index = PackedRTree::bulk_load(cells, INDEX_FANOUT);
        let mut map = CellMap::default();
        let mut skipped = SkipTally::default();
        for point in points {
            let Ok(p) = project_forward(point.coord()) else {
                skipped.unprojectable += 1;
                continue;
            };
            let Some(hit) = index.locate(p.x, p.y, |poly| poly.contains(p.x, p.y)) else {
                skipped.out_of_bounds += 1;
                continue;
            };
            if !is_valid_speed(point.speed) {
                skipped.invalid_speed += 1;
                continue;
            }
            map.entry(hit.cell)
                .or_default()
                .insert(point.speed)
                .expect("speed already validated");
        }
        (map, skipped)
    });
    (map, skipped, elapsed)
}

/// Grid creation, spatial join and rasterization, single-threaded.
pub fn rasterize_vectorgrid(
    points: &[TrajectoryPoint],
    spec: &GridSpec,
    cell_cap: usize,
) -> Result<EngineOutput, EngineError> {
    let (polygons, t_grid) = create_vector_grid(spec, cell_cap)?;
    let (cells, skipped, t_join) = spatial_join(points, polygons);
    let (raster, t_rasterize) = timed(|| finalize(cells, *spec));
    let raster = raster.expect("polygons only cover cells of the grid");
    Ok(EngineOutput {
        raster,
        timing: TimingReport {
            grid_creation: t_grid,
            spatial_join: t_join,
            rasterize: t_rasterize,
            ..TimingReport::default()
        },
        skipped,
    })
}
