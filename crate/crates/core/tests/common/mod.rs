#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajgrid::bench::{generate_synthetic, BENCH_ORIGIN};
use trajgrid::geo::{project_forward, project_inverse};
use trajgrid::{AggregateRaster, GeoCoord, GridSpec, ProjCoord, RawFix, TrajectoryPoint, NODATA};

pub struct Workload {
    pub spec: GridSpec,
    pub points: Vec<TrajectoryPoint>,
}

/// Random walks inside the grid plus a uniform scatter over a box 10%
/// larger than the grid (so some points fall outside), some without speed.
pub fn workload(seed: u64, n_points: usize, n_cols: usize, n_rows: usize) -> Workload {
    let origin = project_forward(GeoCoord::new(BENCH_ORIGIN.0, BENCH_ORIGIN.1).unwrap()).unwrap();
    let spec = GridSpec::new(origin.x, origin.y, 5.0, n_cols, n_rows).unwrap();
    let n_walk = n_points * 4 / 5;
    let mut points = generate_synthetic(n_walk, &spec, (n_walk / 200).max(1), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (w, h) = (n_cols as f64 * 5.0, n_rows as f64 * 5.0);
    for i in points.len()..n_points {
        let x = spec.origin_x() + rng.random_range(-0.1 * w..1.1 * w);
        let y = spec.origin_y() - rng.random_range(-0.1 * h..1.1 * h);
        let g = project_inverse(ProjCoord::new(x, y));
        let speed = rng.random_bool(0.9).then(|| rng.random_range(0.0..40.0));
        points.push(TrajectoryPoint {
            fix: RawFix {
                trajectory_id: Arc::from(format!("scatter{i}")),
                timestamp: i as f64,
                coord: GeoCoord::new(g.lat(), g.lon()).unwrap(),
                reported_speed: speed,
            },
            speed,
        });
    }
    Workload { spec, points }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCell {
    pub count: u64,
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

/// For every cell, scans every point and recomputes the aggregates with
/// plain f64 arithmetic. Row-major.
pub fn brute_force(points: &[TrajectoryPoint], spec: &GridSpec) -> Vec<OracleCell> {
    let projected: Vec<(f64, f64, Option<f64>)> = points
        .iter()
        .filter_map(|p| project_forward(p.coord()).ok().map(|q| (q.x, q.y, p.speed)))
        .collect();
    let (ox, oy, px) = (spec.origin_x(), spec.origin_y(), spec.pixel_size());
    let mut out = Vec::with_capacity(spec.n_rows() * spec.n_cols());
    for row in 0..spec.n_rows() {
        let top = oy - row as f64 * px;
        let bottom = oy - (row + 1) as f64 * px;
        for col in 0..spec.n_cols() {
            let left = ox + col as f64 * px;
            let right = ox + (col + 1) as f64 * px;
            let mut count = 0u64;
            let mut sum = 0.0;
            let mut valid = 0u64;
            let mut max: Option<f64> = None;
            for &(x, y, s) in &projected {
                if left <= x && x < right && bottom < y && y <= top {
                    count += 1;
                    if let Some(s) = s {
                        sum += s;
                        valid += 1;
                        max = Some(max.map_or(s, |m: f64| m.max(s)));
                    }
                }
            }
            out.push(OracleCell {
                count,
                mean: (valid > 0).then(|| sum / valid as f64),
                max,
            });
        }
    }
    out
}

/// Compares a raster with oracle cells: count and max exactly, mean within
/// `mean_rel_tol` relative.
pub fn check_against_oracle(
    raster: &AggregateRaster,
    oracle: &[OracleCell],
    mean_rel_tol: f64,
) -> Result<(), String> {
    let n_cols = raster.spec().n_cols();
    for (i, cell) in oracle.iter().enumerate() {
        let at = (i / n_cols, i % n_cols);
        let count = raster.count_band()[at];
        if count != cell.count {
            return Err(format!("count at {at:?}: {count} vs oracle {}", cell.count));
        }
        let max = raster.max_band()[at];
        if max != cell.max.unwrap_or(NODATA) {
            return Err(format!("max at {at:?}: {max} vs oracle {:?}", cell.max));
        }
        let mean = raster.mean_band()[at];
        match cell.mean {
            None if mean != NODATA => return Err(format!("mean at {at:?}: {mean} vs nodata")),
            Some(m) if (mean - m).abs() > mean_rel_tol * m.abs() => {
                return Err(format!("mean at {at:?}: {mean} vs oracle {m}"))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Count and max bands identical, mean within `mean_rel_tol` relative.
pub fn rasters_equivalent(a: &AggregateRaster, b: &AggregateRaster, mean_rel_tol: f64) -> Result<(), String> {
    if a.spec() != b.spec() {
        return Err("grid specs differ".into());
    }
    if a.count_band() != b.count_band() {
        return Err("count bands differ".into());
    }
    if a.max_band() != b.max_band() {
        return Err("max bands differ".into());
    }
    for (x, y) in a.mean_band().iter().zip(b.mean_band().iter()) {
        let same_nodata = (*x == NODATA) == (*y == NODATA);
        if !same_nodata || (x - y).abs() > mean_rel_tol * x.abs().max(y.abs()) {
            return Err(format!("mean bands differ: {x} vs {y}"));
        }
    }
    Ok(())
}
