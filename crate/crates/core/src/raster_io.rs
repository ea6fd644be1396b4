//! ESRI ASCII grid output, input and cell-wise raster differencing.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use crate::grid::{AggregateRaster, Band, GridSpec, NODATA};

#[derive(Debug, Error)]
pub enum RasterIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed grid header: {0}")]
    MalformedHeader(String),
    #[error("cannot parse cell value '{0}'")]
    BadValue(String),
    #[error("expected {expected} cell values, found {found}")]
    ValueCount { expected: usize, found: usize },
    #[error("raster dimensions differ: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    DimensionMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
}

/// The six-line header of an ASCII grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsciiHeader {
    pub n_cols: usize,
    pub n_rows: usize,
    pub xll_corner: f64,
    pub yll_corner: f64,
    pub cell_size: f64,
    pub nodata: f64,
}

impl AsciiHeader {
    pub fn for_spec(spec: &GridSpec) -> Self {
        Self {
            n_cols: spec.n_cols(),
            n_rows: spec.n_rows(),
            xll_corner: spec.origin_x(),
            yll_corner: spec.bottom(),
            cell_size: spec.pixel_size(),
            nodata: NODATA,
        }
    }

    /// Grid with the header's top-left corner; the top edge is recomputed
    /// from the lower-left corner and may differ from the writer's origin by
    /// rounding.
    pub fn grid_spec(&self) -> Result<GridSpec, crate::grid::GridError> {
        GridSpec::new(
            self.xll_corner,
            self.yll_corner + self.n_rows as f64 * self.cell_size,
            self.cell_size,
            self.n_cols,
            self.n_rows,
        )
    }
}

/// A band read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGrid {
    pub header: AsciiHeader,
    pub values: Array2<f64>,
}

pub fn write_ascii_grid<W: Write>(raster: &AggregateRaster, band: Band, sink: W) -> io::Result<()> {
    let mut out = BufWriter::new(sink);
    let h = AsciiHeader::for_spec(raster.spec());
    write!(
        out,
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        h.n_cols, h.n_rows, h.xll_corner, h.yll_corner, h.cell_size, h.nodata
    )?;
    let mut line = String::new();
    match band {
        Band::Count => {
            for row in raster.count_band().rows() {
                render_row(&mut line, row.iter());
                out.write_all(line.as_bytes())?;
            }
        }
        Band::Mean | Band::Max => {
            let values = if band == Band::Mean {
                raster.mean_band()
            } else {
                raster.max_band()
            };
            for row in values.rows() {
                render_row(&mut line, row.iter());
                out.write_all(line.as_bytes())?;
            }
        }
    }
    out.flush()
}

fn render_row<T: std::fmt::Display>(line: &mut String, values: impl Iterator<Item = T>) {
    line.clear();
    for (i, v) in values.enumerate() {
        if i > 0 {
            line.push(' ');
        }
        // Display for f64 is the shortest string that parses back exactly
        write!(line, "{v}").expect("writing to a String cannot fail");
    }
    line.push('\n');
}

pub fn read_ascii_grid<R: BufRead>(source: R) -> Result<AsciiGrid, RasterIoError> {
    let mut lines = source.lines();
    let mut n_cols = None;
    let mut n_rows = None;
    let mut xll = None;
    let mut yll = None;
    let mut center = (false, false);
    let mut cell_size = None;
    let mut nodata = None;
    for _ in 0..6 {
        let line = lines
            .next()
            .ok_or_else(|| RasterIoError::MalformedHeader("header has fewer than six lines".into()))??;
        let mut parts = line.split_whitespace();
        let (Some(key), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(RasterIoError::MalformedHeader(format!("bad header line '{line}'")));
        };
        let bad = || RasterIoError::MalformedHeader(format!("bad value in '{line}'"));
        match key.to_ascii_lowercase().as_str() {
            "ncols" => n_cols = Some(value.parse::<usize>().map_err(|_| bad())?),
            "nrows" => n_rows = Some(value.parse::<usize>().map_err(|_| bad())?),
            "xllcorner" | "xllcenter" => {
                center.0 = key.eq_ignore_ascii_case("xllcenter");
                xll = Some(value.parse::<f64>().map_err(|_| bad())?);
            }
            "yllcorner" | "yllcenter" => {
                center.1 = key.eq_ignore_ascii_case("yllcenter");
                yll = Some(value.parse::<f64>().map_err(|_| bad())?);
            }
            "cellsize" => cell_size = Some(value.parse::<f64>().map_err(|_| bad())?),
            "nodata_value" => nodata = Some(value.parse::<f64>().map_err(|_| bad())?),
            other => {
                return Err(RasterIoError::MalformedHeader(format!("unknown key '{other}'")));
            }
        }
    }
    let missing = |name: &str| RasterIoError::MalformedHeader(format!("missing {name}"));
    let n_cols = n_cols.ok_or_else(|| missing("ncols"))?;
    let n_rows = n_rows.ok_or_else(|| missing("nrows"))?;
    let cell_size = cell_size.ok_or_else(|| missing("cellsize"))?;
    let mut xll = xll.ok_or_else(|| missing("xllcorner"))?;
    let mut yll = yll.ok_or_else(|| missing("yllcorner"))?;
    if center.0 {
        xll -= cell_size / 2.0;
    }
    if center.1 {
        yll -= cell_size / 2.0;
    }
    let header = AsciiHeader {
        n_cols,
        n_rows,
        xll_corner: xll,
        yll_corner: yll,
        cell_size,
        nodata: nodata.unwrap_or(NODATA),
    };

    let expected = n_cols
        .checked_mul(n_rows)
        .ok_or_else(|| RasterIoError::MalformedHeader("grid size overflows".into()))?;
    let mut data = Vec::with_capacity(expected);
    for line in lines {
        for token in line?.split_whitespace() {
            let v: f64 = token
                .parse()
                .map_err(|_| RasterIoError::BadValue(token.to_string()))?;
            data.push(v);
        }
    }
    if data.len() != expected {
        return Err(RasterIoError::ValueCount {
            expected,
            found: data.len(),
        });
    }
    let values = Array2::from_shape_vec((n_rows, n_cols), data).expect("length checked above");
    Ok(AsciiGrid { header, values })
}

/// Path of one band file: `<prefix>_count.asc` etc.
pub fn band_path(prefix: &Path, band: Band) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(band.suffix());
    name.push(".asc");
    PathBuf::from(name)
}

/// Writes all three bands next to `prefix`.
pub fn write_raster(raster: &AggregateRaster, prefix: &Path) -> io::Result<()> {
    for band in Band::ALL {
        write_ascii_grid(raster, band, File::create(band_path(prefix, band))?)?;
    }
    Ok(())
}

pub fn read_band(prefix: &Path, band: Band) -> Result<AsciiGrid, RasterIoError> {
    read_ascii_grid(BufReader::new(File::open(band_path(prefix, band))?))
}

/// Outcome of subtracting one raster from another.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffReport {
    pub n_differing_cells: usize,
    /// Largest absolute difference; infinite when a cell is nodata in only
    /// one of the rasters.
    pub max_abs_diff: f64,
}

impl DiffReport {
    pub fn is_identical(&self) -> bool {
        self.n_differing_cells == 0
    }
}

pub fn raster_diff(
    a: &Array2<f64>,
    b: &Array2<f64>,
    nodata: f64,
) -> Result<DiffReport, RasterIoError> {
    if a.dim() != b.dim() {
        return Err(RasterIoError::DimensionMismatch {
            a_rows: a.nrows(),
            a_cols: a.ncols(),
            b_rows: b.nrows(),
            b_cols: b.ncols(),
        });
    }
    let mut report = DiffReport {
        n_differing_cells: 0,
        max_abs_diff: 0.0,
    };
    for (&x, &y) in a.iter().zip(b.iter()) {
        let diff = match (x == nodata, y == nodata) {
            (true, true) => continue,
            (true, false) | (false, true) => f64::INFINITY,
            (false, false) if x == y => continue,
            (false, false) => (x - y).abs(),
        };
        report.n_differing_cells += 1;
        // NaN compares unequal to everything; count it as an infinite gap
        report.max_abs_diff = report.max_abs_diff.max(if diff.is_nan() { f64::INFINITY } else { diff });
    }
    Ok(report)
}
