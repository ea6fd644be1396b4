//! Direct structured-grid binning: each point's cell is computed from the
//! grid origin and pixel size, and aggregates are grouped by cell without
//! ever materializing cell geometries.

use std::thread;

use crate::geo::{project_forward, ProjCoord};
use crate::grid::{finalize, is_valid_speed, merge_maps, CellMap, GridSpec};
use crate::ingest::TrajectoryPoint;
use crate::timing::{timed, TimingReport};

use super::{EngineError, EngineOutput, SkipTally};

/// Projects, bins and aggregates `points` on `workers` threads.
///
/// The input is cut into `workers` contiguous slices; each thread fills a
/// private sparse map and the maps are merged afterwards. Because the cell
/// aggregate merges exactly, the output does not depend on `workers`.
pub fn rasterize_direct(
    points: &[TrajectoryPoint],
    spec: &GridSpec,
    workers: usize,
) -> Result<EngineOutput, EngineError> {
    if workers == 0 {
        return Err(EngineError::NoWorkers);
    }
    let chunk = points.len().div_ceil(workers).max(1);

    let (projected, t_transform) = timed(|| project_all(points, chunk));

    let ((cells, skipped), t_join) = timed(|| {
        let partials = map_chunks(points, &projected, chunk, |pts, proj| bin_chunk(pts, proj, spec));
        let mut skipped = SkipTally::default();
        let mut merged = CellMap::default();
        for (map, tally) in partials {
            skipped.add(&tally);
            merged = merge_maps(merged, map);
        }
        (merged, skipped)
    });

    let (raster, t_rasterize) = timed(|| finalize(cells, *spec));
    let raster = raster.expect("binned cells always lie inside the grid");

    Ok(EngineOutput {
        raster,
        timing: TimingReport {
            transform: t_transform,
            spatial_join: t_join,
            rasterize: t_rasterize,
            ..TimingReport::default()
        },
        skipped,
    })
}

fn project_all(points: &[TrajectoryPoint], chunk: usize) -> Vec<Option<ProjCoord>> {
    let mut out = vec![None; points.len()];
    let project = |src: &[TrajectoryPoint], dst: &mut [Option<ProjCoord>]| {
        for (p, slot) in src.iter().zip(dst.iter_mut()) {
            *slot = project_forward(p.coord()).ok();
        }
    };
    if chunk >= points.len() {
        project(points, &mut out);
    } else {
        thread::scope(|s| {
            for (src, dst) in points.chunks(chunk).zip(out.chunks_mut(chunk)) {
                s.spawn(move || project(src, dst));
            }
        });
    }
    out
}

fn map_chunks<R: Send>(
    points: &[TrajectoryPoint],
    projected: &[Option<ProjCoord>],
    chunk: usize,
    f: impl Fn(&[TrajectoryPoint], &[Option<ProjCoord>]) -> R + Sync,
) -> Vec<R> {
    if chunk >= points.len() {
        return vec![f(points, projected)];
    }
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .zip(projected.chunks(chunk))
            .map(|(pts, proj)| s.spawn(move || f(pts, proj)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("binning worker panicked"))
            .collect()
    })
}

fn bin_chunk(
    points: &[TrajectoryPoint],
    projected: &[Option<ProjCoord>],
    spec: &GridSpec,
) -> (CellMap, SkipTally) {
    let mut cells = CellMap::default();
    let mut skipped = SkipTally::default();
    for (point, proj) in points.iter().zip(projected) {
        let Some(p) = proj else {
            skipped.unprojectable += 1;
            continue;
        };
        let Some(cell) = spec.bin_point(p.x, p.y) else {
            skipped.out_of_bounds += 1;
            continue;
        };
        if !is_valid_speed(point.speed) {
            skipped.invalid_speed += 1;
            continue;
        }
        cells
            .entry(cell)
            .or_default()
            .insert(point.speed)
            .expect("speed already validated");
    }
    (cells, skipped)
}
