//! Per-stage wall-clock durations of one pipeline run.

use std::time::{Duration, Instant};

/// Stage durations. Stages an engine does not have stay zero, so the total
/// is always the plain sum of the fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimingReport {
    pub ingest: Duration,
    pub transform: Duration,
    pub grid_creation: Duration,
    pub spatial_join: Duration,
    pub rasterize: Duration,
}

impl TimingReport {
    pub fn total(&self) -> Duration {
        self.ingest + self.transform + self.grid_creation + self.spatial_join + self.rasterize
    }

    /// `[t_ingest, t_transform, t_grid_creation, t_spatial_join, t_rasterize, t_total]` in seconds.
    pub fn seconds(&self) -> [f64; 6] {
        [
            self.ingest,
            self.transform,
            self.grid_creation,
            self.spatial_join,
            self.rasterize,
            self.total(),
        ]
        .map(|d| d.as_secs_f64())
    }
}

/// Runs `f`, returning its result and elapsed monotonic time.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Seconds with millisecond precision, as written to reports.
pub fn format_seconds(d: f64) -> String {
    format!("{d:.3}")
}
