//! Structured grid geometry, point-to-cell binning and the per-cell
//! aggregation monoid.
//!
//! Cells follow the north-up raster convention: columns grow eastward from
//! the left edge, rows grow southward from the top edge. Every cell is the
//! half-open box `[left, right) x (bottom, top]`, so a point on a shared edge
//! belongs to the cell east of it (vertical edges) or south of it
//! (horizontal edges).

use ndarray::Array2;
use rustc_hash::FxHashMap;
use thiserror::Error;

/// Sentinel written to the mean and max bands for cells without a valid speed.
pub const NODATA: f64 = -9999.0;

/// Largest speed (m/s) accepted by [`AggCell::insert`].
pub const MAX_SPEED: f64 = 1.0e12;

/// Whether [`AggCell::insert`] accepts `speed`.
pub fn is_valid_speed(speed: Option<f64>) -> bool {
    speed.is_none_or(|s| s.is_finite() && (0.0..=MAX_SPEED).contains(&s))
}

/// Speed sums are accumulated as integers in units of 2^-52 m/s so that
/// merging partial aggregates is exactly associative and commutative.
const SUM_SCALE: f64 = 4_503_599_627_370_496.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidSpec(String),
    #[error("cell (row {row}, col {col}) lies outside a {n_rows}x{n_cols} grid")]
    CellOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum AggError {
    #[error("speed must be finite, non-negative and at most {MAX_SPEED} m/s, got {0}")]
    InvalidSpeed(f64),
}

/// Geometry of the output raster in projected meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    origin_x: f64,
    origin_y: f64,
    pixel_size: f64,
    n_cols: usize,
    n_rows: usize,
}

impl GridSpec {
    /// `origin_x` is the left edge, `origin_y` the top edge.
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size: f64,
        n_cols: usize,
        n_rows: usize,
    ) -> Result<Self, GridError> {
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(GridError::InvalidSpec(format!(
                "origin ({origin_x}, {origin_y}) is not finite"
            )));
        }
        if !(pixel_size.is_finite() && pixel_size > 0.0) {
            return Err(GridError::InvalidSpec(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if n_cols == 0 || n_rows == 0 {
            return Err(GridError::InvalidSpec(format!(
                "grid needs at least one row and column, got {n_cols}x{n_rows}"
            )));
        }
        let width = n_cols as f64 * pixel_size;
        let height = n_rows as f64 * pixel_size;
        if !(origin_x + width).is_finite() || !(origin_y - height).is_finite() {
            return Err(GridError::InvalidSpec("grid extent overflows".into()));
        }
        // Cell edges must stay distinct in f64 for binning to be well defined.
        let magnitude = origin_x.abs().max(origin_y.abs()).max(width).max(height);
        if pixel_size < magnitude * 1e-12 {
            return Err(GridError::InvalidSpec(format!(
                "pixel size {pixel_size} is too small relative to coordinates of magnitude {magnitude}"
            )));
        }
        Ok(Self {
            origin_x,
            origin_y,
            pixel_size,
            n_cols,
            n_rows,
        })
    }

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }

    pub fn origin_y(&self) -> f64 {
        self.origin_y
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Total number of cells, or `None` if it does not fit in `usize`.
    pub fn n_cells(&self) -> Option<usize> {
        self.n_rows.checked_mul(self.n_cols)
    }

    /// Western edge of column `col` (also the eastern edge of `col - 1`).
    pub fn col_edge(&self, col: i64) -> f64 {
        self.origin_x + col as f64 * self.pixel_size
    }

    /// Northern edge of row `row` (also the southern edge of `row - 1`).
    pub fn row_edge(&self, row: i64) -> f64 {
        self.origin_y - row as f64 * self.pixel_size
    }

    /// Bottom edge of the grid (`origin_y - n_rows * pixel_size`).
    pub fn bottom(&self) -> f64 {
        self.row_edge(self.n_rows as i64)
    }

    /// Right edge of the grid (`origin_x + n_cols * pixel_size`).
    pub fn right(&self) -> f64 {
        self.col_edge(self.n_cols as i64)
    }

    /// Axis-aligned box of `cell` as `(min_x, min_y, max_x, max_y)`.
    ///
    /// Edges are computed with [`col_edge`](Self::col_edge) and
    /// [`row_edge`](Self::row_edge), the same expressions `bin_point` tests
    /// against, so box containment and binning agree bit for bit.
    pub fn cell_box(&self, cell: CellIndex) -> (f64, f64, f64, f64) {
        let col = cell.col as i64;
        let row = cell.row as i64;
        (
            self.col_edge(col),
            self.row_edge(row + 1),
            self.col_edge(col + 1),
            self.row_edge(row),
        )
    }

    /// Cell containing the projected point `(x, y)`, or `None` when the point
    /// lies outside the grid extent (or is not finite).
    ///
    /// The index is `floor((x - origin_x) / pixel_size)` for columns and
    /// `floor((origin_y - y) / pixel_size)` for rows, corrected by one step when
    /// rounding in the division disagrees with the cell's edge coordinates.
    pub fn bin_point(&self, x: f64, y: f64) -> Option<CellIndex> {
        let col = axis_index((x - self.origin_x) / self.pixel_size, self.n_cols, |c| {
            // true when x falls west of column c's left edge
            x < self.col_edge(c)
        })?;
        let row = axis_index((self.origin_y - y) / self.pixel_size, self.n_rows, |r| {
            // true when y falls north of row r's top edge
            y > self.row_edge(r)
        })?;
        Some(CellIndex { row, col })
    }
}

/// `before_start(i)` reports whether the coordinate precedes the leading edge
/// of cell `i` along the axis.
fn axis_index(scaled: f64, n: usize, before_start: impl Fn(i64) -> bool) -> Option<usize> {
    if !scaled.is_finite() || scaled < -1.0 || scaled >= n as f64 + 1.0 {
        return None;
    }
    let mut i = scaled.floor() as i64;
    if before_start(i) {
        i -= 1;
    } else if !before_start(i + 1) {
        i += 1;
    }
    if i < 0 || i >= n as i64 {
        None
    } else {
        Some(i as usize)
    }
}

/// Row/column position of a cell; row 0 is the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Partial per-cell aggregate: fix count, valid-speed count, speed sum and
/// speed maximum. Forms a commutative monoid under [`AggCell::merge`] with
/// [`AggCell::identity`] as the neutral element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggCell {
    count: u64,
    valid: u64,
    sum: i128,
    max: f64,
}

impl Default for AggCell {
    fn default() -> Self {
        Self::identity()
    }
}

impl AggCell {
    pub const fn identity() -> Self {
        Self {
            count: 0,
            valid: 0,
            sum: 0,
            max: f64::NEG_INFINITY,
        }
    }

    /// Number of fixes inserted, with or without a speed.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Number of fixes that carried a speed.
    pub fn valid_count(&self) -> u64 {
        self.valid
    }

    /// Sum of the valid speeds, correctly rounded to f64.
    pub fn speed_sum(&self) -> f64 {
        self.sum as f64 / SUM_SCALE
    }

    pub fn speed_max(&self) -> Option<f64> {
        (self.valid > 0).then_some(self.max)
    }

    pub fn speed_mean(&self) -> Option<f64> {
        (self.valid > 0).then(|| self.speed_sum() / self.valid as f64)
    }

    /// Records one fix. `None` marks a fix without a usable speed: it is
    /// counted but does not contribute to the sum, mean or maximum.
    pub fn insert(&mut self, speed: Option<f64>) -> Result<(), AggError> {
        if let Some(s) = speed {
            if !is_valid_speed(speed) {
                return Err(AggError::InvalidSpeed(s));
            }
            self.sum = self.sum.saturating_add((s * SUM_SCALE).round() as i128);
            self.max = self.max.max(s);
            self.valid += 1;
        }
        self.count += 1;
        Ok(())
    }

    /// Value-returning form of [`insert`](Self::insert).
    pub fn with(mut self, speed: Option<f64>) -> Result<Self, AggError> {
        self.insert(speed)?;
        Ok(self)
    }

    pub fn merge(self, other: AggCell) -> AggCell {
        AggCell {
            count: self.count + other.count,
            valid: self.valid + other.valid,
            sum: self.sum.saturating_add(other.sum),
            max: self.max.max(other.max),
        }
    }

    pub fn merge_from(&mut self, other: &AggCell) {
        *self = self.merge(*other);
    }
}

/// Sparse accumulator used by the engines before densification.
pub type CellMap = FxHashMap<CellIndex, AggCell>;

/// Merges two sparse maps, folding the smaller one into the larger.
pub fn merge_maps(a: CellMap, b: CellMap) -> CellMap {
    let (mut big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    for (cell, agg) in small {
        big.entry(cell).or_default().merge_from(&agg);
    }
    big
}

/// One of the three output bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Count,
    Mean,
    Max,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Count, Band::Mean, Band::Max];

    /// File-name suffix used when writing the band to disk.
    pub fn suffix(self) -> &'static str {
        match self {
            Band::Count => "_count",
            Band::Mean => "_speed_avg",
            Band::Max => "_speed_max",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Count => "count",
            Band::Mean => "speed_avg",
            Band::Max => "speed_max",
        }
    }
}

/// Dense output: fix count, mean speed and max speed per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRaster {
    spec: GridSpec,
    count: Array2<u64>,
    mean: Array2<f64>,
    max: Array2<f64>,
}

impl AggregateRaster {
    /// Raster with every cell empty.
    pub fn empty(spec: GridSpec) -> Self {
        let shape = (spec.n_rows, spec.n_cols);
        Self {
            spec,
            count: Array2::zeros(shape),
            mean: Array2::from_elem(shape, NODATA),
            max: Array2::from_elem(shape, NODATA),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn count_band(&self) -> &Array2<u64> {
        &self.count
    }

    pub fn mean_band(&self) -> &Array2<f64> {
        &self.mean
    }

    pub fn max_band(&self) -> &Array2<f64> {
        &self.max
    }

    pub fn nodata(&self) -> f64 {
        NODATA
    }

    /// The requested band as reals (counts converted exactly below 2^53).
    pub fn band_values(&self, band: Band) -> Array2<f64> {
        match band {
            Band::Count => self.count.mapv(|c| c as f64),
            Band::Mean => self.mean.clone(),
            Band::Max => self.max.clone(),
        }
    }
}

/// Densifies a sparse cell map into an [`AggregateRaster`].
pub fn finalize<I>(cells: I, spec: GridSpec) -> Result<AggregateRaster, GridError>
where
    I: IntoIterator<Item = (CellIndex, AggCell)>,
{
    let mut raster = AggregateRaster::empty(spec);
    for (cell, agg) in cells {
        if cell.row >= spec.n_rows || cell.col >= spec.n_cols {
            return Err(GridError::CellOutOfBounds {
                row: cell.row,
                col: cell.col,
                n_rows: spec.n_rows,
                n_cols: spec.n_cols,
            });
        }
        let at = (cell.row, cell.col);
        raster.count[at] = agg.count();
        if let (Some(mean), Some(max)) = (agg.speed_mean(), agg.speed_max()) {
            raster.mean[at] = mean;
            raster.max[at] = max;
        }
    }
    Ok(raster)
}
