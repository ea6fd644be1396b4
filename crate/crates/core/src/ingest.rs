//! Trajectory CSV ingestion and per-fix speed derivation.
//!
//! Input files carry `id,timestamp,latitude,longitude` plus an optional
//! `speed` column (header names are case-insensitive, extra columns are
//! ignored). Timestamps are epoch seconds, integer or decimal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::geo::{self, GeoCoord};
use crate::grid::{GridSpec, MAX_SPEED};

/// Rows held in memory before [`SpeedDeriver`] spills sorted runs to disk.
pub const DEFAULT_MAX_IN_MEMORY: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is missing required column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("failed to read input: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One GPS fix as read from the input.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFix {
    pub trajectory_id: Arc<str>,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: f64,
    pub coord: GeoCoord,
    /// Speed supplied by the input file, used instead of a derived one.
    pub reported_speed: Option<f64>,
}

/// A fix with its speed in m/s (`None` when no speed could be derived).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub fix: RawFix,
    pub speed: Option<f64>,
}

impl TrajectoryPoint {
    pub fn coord(&self) -> GeoCoord {
        self.fix.coord
    }
}

struct Columns {
    id: usize,
    timestamp: usize,
    lat: usize,
    lon: usize,
    speed: Option<usize>,
}

/// Streaming reader yielding valid fixes in file order. Malformed rows are
/// skipped and tallied in [`skipped`](Self::skipped).
pub struct CsvFixReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    columns: Columns,
    skipped: usize,
    last_id: Option<Arc<str>>,
    error: Option<csv::Error>,
}

impl<R: Read> CsvFixReader<R> {
    pub fn new(source: R) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
            .collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let required = ["id", "timestamp", "latitude", "longitude"];
        let missing: Vec<String> = required
            .iter()
            .filter(|n| find(n).is_none())
            .map(|n| n.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(IngestError::MissingColumns(missing));
        }
        let columns = Columns {
            id: find("id").unwrap(),
            timestamp: find("timestamp").unwrap(),
            lat: find("latitude").unwrap(),
            lon: find("longitude").unwrap(),
            speed: find("speed"),
        };
        Ok(Self {
            records: reader.into_records(),
            columns,
            skipped: 0,
            last_id: None,
            error: None,
        })
    }

    /// Rows rejected so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Takes the stream error that ended iteration, if any.
    pub fn take_error(&mut self) -> Option<csv::Error> {
        self.error.take()
    }

    fn parse_row(&mut self, row: &csv::StringRecord) -> Option<RawFix> {
        let c = &self.columns;
        let id = row.get(c.id).filter(|s| !s.is_empty())?;
        let timestamp: f64 = row.get(c.timestamp)?.parse().ok()?;
        let lat: f64 = row.get(c.lat)?.parse().ok()?;
        let lon: f64 = row.get(c.lon)?.parse().ok()?;
        if !timestamp.is_finite() {
            return None;
        }
        let coord = GeoCoord::new(lat, lon).ok()?;
        let reported_speed = match c.speed.and_then(|i| row.get(i)) {
            None | Some("") => None,
            Some(s) => {
                let v: f64 = s.parse().ok()?;
                if !(v.is_finite() && (0.0..=MAX_SPEED).contains(&v)) {
                    return None;
                }
                Some(v)
            }
        };
        let trajectory_id = match &self.last_id {
            Some(prev) if &**prev == id => prev.clone(),
            _ => {
                let fresh: Arc<str> = Arc::from(id);
                self.last_id = Some(fresh.clone());
                fresh
            }
        };
        Some(RawFix {
            trajectory_id,
            timestamp,
            coord,
            reported_speed,
        })
    }
}

impl<R: Read> Iterator for CsvFixReader<R> {
    type Item = RawFix;

    fn next(&mut self) -> Option<RawFix> {
        loop {
            match self.records.next()? {
                Ok(row) => match self.parse_row(&row) {
                    Some(fix) => return Some(fix),
                    None => self.skipped += 1,
                },
                Err(e) if e.is_io_error() => {
                    self.error = Some(e);
                    return None;
                }
                // undecodable or otherwise broken row
                Err(_) => self.skipped += 1,
            }
        }
    }
}

/// All fixes of a CSV stream plus the number of rejected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFixes {
    pub fixes: Vec<RawFix>,
    pub skipped: usize,
}

pub fn parse_csv<R: Read>(source: R) -> Result<ParsedFixes, IngestError> {
    let mut reader = CsvFixReader::new(source)?;
    let fixes: Vec<RawFix> = reader.by_ref().collect();
    if let Some(e) = reader.take_error() {
        return Err(e.into());
    }
    Ok(ParsedFixes {
        fixes,
        skipped: reader.skipped(),
    })
}

/// Groups fixes by trajectory, orders each group by timestamp and derives
/// speeds from consecutive fixes. Groups come out in id order; ties keep
/// input order.
pub fn derive_speeds(fixes: Vec<RawFix>) -> Vec<TrajectoryPoint> {
    let mut keyed: Vec<Keyed> = fixes
        .into_iter()
        .enumerate()
        .map(|(seq, fix)| Keyed { seq: seq as u64, fix })
        .collect();
    keyed.sort_unstable_by(Keyed::cmp_key);
    let mut out = Vec::with_capacity(keyed.len());
    let mut state = SpeedState::default();
    for k in keyed {
        out.push(state.next(k.fix));
    }
    out
}

/// Memory-bounded variant of [`derive_speeds`]: when the input exceeds
/// `max_in_memory` rows, sorted runs are spilled to temporary files and
/// merged back. Output order is identical to the in-memory path.
#[derive(Debug, Clone, Copy)]
pub struct SpeedDeriver {
    max_in_memory: usize,
}

impl Default for SpeedDeriver {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_IN_MEMORY)
    }
}

impl SpeedDeriver {
    pub fn new(max_in_memory: usize) -> Self {
        Self {
            max_in_memory: max_in_memory.max(1),
        }
    }

    /// Feeds every derived point to `sink`; returns the number emitted.
    pub fn derive<I, F>(&self, fixes: I, mut sink: F) -> io::Result<usize>
    where
        I: IntoIterator<Item = RawFix>,
        F: FnMut(TrajectoryPoint),
    {
        let mut buffer: Vec<Keyed> = Vec::new();
        let mut runs: Vec<File> = Vec::new();
        for (seq, fix) in fixes.into_iter().enumerate() {
            buffer.push(Keyed { seq: seq as u64, fix });
            if buffer.len() >= self.max_in_memory {
                runs.push(spill_run(&mut buffer)?);
            }
        }
        let mut state = SpeedState::default();
        let mut emitted = 0;
        if runs.is_empty() {
            buffer.sort_unstable_by(Keyed::cmp_key);
            for k in buffer {
                sink(state.next(k.fix));
                emitted += 1;
            }
            return Ok(emitted);
        }
        if !buffer.is_empty() {
            runs.push(spill_run(&mut buffer)?);
        }
        let mut readers: Vec<RunReader> = runs.into_iter().map(RunReader::new).collect();
        let mut heap = BinaryHeap::with_capacity(readers.len());
        for (run, reader) in readers.iter_mut().enumerate() {
            if let Some(head) = reader.next_record()? {
                heap.push(HeapEntry { head, run });
            }
        }
        while let Some(HeapEntry { head, run }) = heap.pop() {
            if let Some(next) = readers[run].next_record()? {
                heap.push(HeapEntry { head: next, run });
            }
            sink(state.next(head.fix));
            emitted += 1;
        }
        Ok(emitted)
    }
}

/// Keeps the points whose projected position bins inside `spec`.
pub fn filter_bbox<I>(points: I, spec: &GridSpec) -> Vec<TrajectoryPoint>
where
    I: IntoIterator<Item = TrajectoryPoint>,
{
    points.into_iter().filter(|p| in_grid(p, spec)).collect()
}

pub fn in_grid(point: &TrajectoryPoint, spec: &GridSpec) -> bool {
    geo::project_forward(point.coord())
        .ok()
        .and_then(|p| spec.bin_point(p.x, p.y))
        .is_some()
}

#[derive(Default)]
struct SpeedState {
    prev: Option<RawFix>,
}

impl SpeedState {
    fn next(&mut self, fix: RawFix) -> TrajectoryPoint {
        let speed = match (&self.prev, fix.reported_speed) {
            (_, Some(reported)) => Some(reported),
            (Some(prev), None) if prev.trajectory_id == fix.trajectory_id => {
                let dt = fix.timestamp - prev.timestamp;
                if dt > 0.0 {
                    let v = geo::geodesic_distance(prev.coord, fix.coord) / dt;
                    // sub-nanosecond deltas can overflow the aggregate's range
                    (v.is_finite() && v <= MAX_SPEED).then_some(v)
                } else {
                    None
                }
            }
            _ => None,
        };
        self.prev = Some(fix.clone());
        TrajectoryPoint { fix, speed }
    }
}

struct Keyed {
    seq: u64,
    fix: RawFix,
}

impl Keyed {
    fn cmp_key(a: &Keyed, b: &Keyed) -> Ordering {
        a.fix
            .trajectory_id
            .cmp(&b.fix.trajectory_id)
            .then(a.fix.timestamp.total_cmp(&b.fix.timestamp))
            .then(a.seq.cmp(&b.seq))
    }
}

struct HeapEntry {
    head: Keyed,
    run: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        Keyed::cmp_key(&other.head, &self.head)
    }
}

fn spill_run(buffer: &mut Vec<Keyed>) -> io::Result<File> {
    buffer.sort_unstable_by(Keyed::cmp_key);
    let mut out = BufWriter::new(tempfile::tempfile()?);
    for k in buffer.drain(..) {
        let id = k.fix.trajectory_id.as_bytes();
        out.write_all(&(id.len() as u32).to_le_bytes())?;
        out.write_all(id)?;
        out.write_all(&k.seq.to_le_bytes())?;
        out.write_all(&k.fix.timestamp.to_le_bytes())?;
        out.write_all(&k.fix.coord.lat().to_le_bytes())?;
        out.write_all(&k.fix.coord.lon().to_le_bytes())?;
        match k.fix.reported_speed {
            Some(s) => {
                out.write_all(&[1])?;
                out.write_all(&s.to_le_bytes())?;
            }
            None => out.write_all(&[0])?,
        }
    }
    let mut file = out.into_inner().map_err(|e| e.into_error())?;
    file.seek(SeekFrom::Start(0))?;
    Ok(file)
}

struct RunReader {
    input: BufReader<File>,
    last_id: Option<Arc<str>>,
}

impl RunReader {
    fn new(file: File) -> Self {
        Self {
            input: BufReader::new(file),
            last_id: None,
        }
    }

    fn next_record(&mut self) -> io::Result<Option<Keyed>> {
        let mut len = [0u8; 4];
        match self.input.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e),
        }
        let mut id = vec![0u8; u32::from_le_bytes(len) as usize];
        self.input.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let seq = u64::from_le_bytes(self.read_array()?);
        let timestamp = f64::from_le_bytes(self.read_array()?);
        let lat = f64::from_le_bytes(self.read_array()?);
        let lon = f64::from_le_bytes(self.read_array()?);
        let mut flag = [0u8; 1];
        self.input.read_exact(&mut flag)?;
        let reported_speed = if flag[0] == 1 {
            Some(f64::from_le_bytes(self.read_array()?))
        } else {
            None
        };
        let trajectory_id = match &self.last_id {
            Some(prev) if **prev == *id => prev.clone(),
            _ => {
                let fresh: Arc<str> = Arc::from(id);
                self.last_id = Some(fresh.clone());
                fresh
            }
        };
        let coord = GeoCoord::new(lat, lon)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(Some(Keyed {
            seq,
            fix: RawFix {
                trajectory_id,
                timestamp,
                coord,
                reported_speed,
            },
        }))
    }

    fn read_array(&mut self) -> io::Result<[u8; 8]> {
        let mut buf = [0u8; 8];
        self.input.read_exact(&mut buf)?;
        Ok(buf)
    }
}
