//! Round-robin metric history: fixed-step buckets consolidated into
//! circular archives, persisted in a small binary format.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::time::Timestamp;

const MAGIC: &[u8; 4] = b"GWTS";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Consolidation {
    Average,
    Min,
    Max,
}

impl Consolidation {
    pub fn as_str(self) -> &'static str {
        match self {
            Consolidation::Average => "AVERAGE",
            Consolidation::Min => "MIN",
            Consolidation::Max => "MAX",
        }
    }

    fn code(self) -> u8 {
        match self {
            Consolidation::Average => 0,
            Consolidation::Min => 1,
            Consolidation::Max => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Consolidation::Average),
            1 => Some(Consolidation::Min),
            2 => Some(Consolidation::Max),
            _ => None,
        }
    }
}

impl fmt::Display for Consolidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Consolidation {
    type Err = TimeseriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AVERAGE" => Ok(Consolidation::Average),
            "MIN" => Ok(Consolidation::Min),
            "MAX" => Ok(Consolidation::Max),
            _ => Err(TimeseriesError::InvalidSpec(format!("unknown consolidation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchiveSpec {
    pub consolidation: Consolidation,
    pub steps_per_row: u32,
    pub rows: u32,
}

impl ArchiveSpec {
    pub fn new(consolidation: Consolidation, steps_per_row: u32, rows: u32) -> Self {
        ArchiveSpec {
            consolidation,
            steps_per_row,
            rows,
        }
    }

    /// The default set for a 10 s step: 1 h at 10 s, 4 h at 60 s and 24 h
    /// at 300 s, all AVERAGE.
    pub fn defaults() -> Vec<ArchiveSpec> {
        vec![
            ArchiveSpec::new(Consolidation::Average, 1, 360),
            ArchiveSpec::new(Consolidation::Average, 6, 240),
            ArchiveSpec::new(Consolidation::Average, 30, 288),
        ]
    }
}

impl fmt::Display for ArchiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.consolidation, self.steps_per_row, self.rows)
    }
}

impl FromStr for ArchiveSpec {
    type Err = TimeseriesError;

    /// `CF:STEPS_PER_ROW:ROWS`, e.g. `AVERAGE:6:240`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TimeseriesError::InvalidSpec(format!("expected CF:STEPS:ROWS, got {s:?}"));
        let mut parts = s.split(':');
        let (Some(cf), Some(spr), Some(rows), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        Ok(ArchiveSpec::new(
            cf.parse()?,
            spr.trim().parse().map_err(|_| bad())?,
            rows.trim().parse().map_err(|_| bad())?,
        ))
    }
}

#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("invalid archive spec: {0}")]
    InvalidSpec(String),
    #[error("no archive overlaps the requested window")]
    EmptyWindow,
    #[error("invalid window: start must be before end")]
    InvalidWindow,
    #[error("bad magic")]
    BadMagic,
    #[error("truncated file")]
    TruncatedFile,
    #[error("unsupported file version {0}")]
    VersionMismatch(u16),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Rejected {
    #[error("out-of-order")]
    OutOfOrder,
    #[error("non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
struct Accumulator<F> {
    fed: u32,
    sum: F,
    nongap: u32,
    min: F,
    max: F,
}

impl<F: Scalar> Accumulator<F> {
    fn empty() -> Self {
        Accumulator {
            fed: 0,
            sum: F::zero(),
            nongap: 0,
            min: F::infinity(),
            max: F::neg_infinity(),
        }
    }

    fn push(&mut self, v: Option<F>) {
        self.fed += 1;
        if let Some(v) = v {
            self.nongap += 1;
            self.sum = self.sum + v;
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
    }

    fn value(&self, cf: Consolidation) -> F {
        if self.nongap == 0 {
            return F::nan();
        }
        match cf {
            Consolidation::Average => self.sum / F::of_usize(self.nongap as usize),
            Consolidation::Min => self.min,
            Consolidation::Max => self.max,
        }
    }

    fn same(&self, other: &Self) -> bool {
        self.fed == other.fed
            && self.nongap == other.nongap
            && same_bits(self.sum, other.sum)
            && same_bits(self.min, other.min)
            && same_bits(self.max, other.max)
    }
}

fn same_bits<F: Scalar>(a: F, b: F) -> bool {
    (a.is_nan() && b.is_nan()) || a.as_f64().to_bits() == b.as_f64().to_bits()
}

#[derive(Debug, Clone)]
pub struct Archive<F> {
    spec: ArchiveSpec,
    /// NaN marks a gap row.
    rows: Vec<F>,
    cursor: usize,
    rows_emitted: u64,
    pending: Accumulator<F>,
}

impl<F: Scalar> Archive<F> {
    fn new(spec: ArchiveSpec) -> Self {
        Archive {
            spec,
            rows: vec![F::nan(); spec.rows as usize],
            cursor: 0,
            rows_emitted: 0,
            pending: Accumulator::empty(),
        }
    }

    pub fn spec(&self) -> ArchiveSpec {
        self.spec
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn rows_emitted(&self) -> u64 {
        self.rows_emitted
    }

    /// Stored rows, oldest first, as `(row index since origin, value)`.
    pub fn rows(&self) -> Vec<(u64, Option<F>)> {
        let n = self.rows.len() as u64;
        let first = self.rows_emitted.saturating_sub(n);
        (first..self.rows_emitted)
            .map(|g| {
                let v = self.rows[(g % n) as usize];
                (g, (!v.is_nan()).then_some(v))
            })
            .collect()
    }

    fn emit(&mut self, v: F) {
        self.rows[self.cursor] = v;
        self.cursor = (self.cursor + 1) % self.rows.len();
        self.rows_emitted += 1;
    }

    fn feed(&mut self, v: Option<F>) {
        self.pending.push(v);
        if self.pending.fed == self.spec.steps_per_row {
            let row = self.pending.value(self.spec.consolidation);
            self.emit(row);
            self.pending = Accumulator::empty();
        }
    }

    fn feed_gaps(&mut self, mut n: u64) {
        let spr = self.spec.steps_per_row as u64;
        while n > 0 && self.pending.fed > 0 {
            self.feed(None);
            n -= 1;
        }
        let full = n / spr;
        let written = full.min(self.rows.len() as u64);
        for _ in 0..written {
            self.emit(F::nan());
        }
        let skipped = full - written;
        self.rows_emitted += skipped;
        self.cursor = ((self.cursor as u64 + skipped) % self.rows.len() as u64) as usize;
        for _ in 0..n % spr {
            self.feed(None);
        }
    }

    fn same(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.cursor == other.cursor
            && self.rows_emitted == other.rows_emitted
            && self.pending.same(&other.pending)
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| same_bits(*a, *b))
    }
}

/// Multi-resolution history of one metric.
///
/// Samples land wholly in the bucket `floor(t / step) * step` and are
/// averaged within it. A bucket is consolidated once an update arrives in a
/// later bucket. Archive rows are counted from the first bucket, so row `g`
/// of an archive with `k` steps per row covers buckets `[g*k, (g+1)*k)`.
#[derive(Debug, Clone)]
pub struct SeriesDb<F> {
    step_s: u64,
    origin_t: Option<Timestamp>,
    last_t: Option<Timestamp>,
    current: Option<(i64, F, u32)>,
    archives: Vec<Archive<F>>,
}

impl<F: Scalar> PartialEq for SeriesDb<F> {
    fn eq(&self, other: &Self) -> bool {
        let cur = match (&self.current, &other.current) {
            (None, None) => true,
            (Some((a, s, n)), Some((b, t, m))) => a == b && n == m && same_bits(*s, *t),
            _ => false,
        };
        self.step_s == other.step_s
            && self.origin_t == other.origin_t
            && self.last_t == other.last_t
            && cur
            && self.archives.len() == other.archives.len()
            && self.archives.iter().zip(&other.archives).all(|(a, b)| a.same(b))
    }
}

impl<F: Scalar> SeriesDb<F> {
    pub fn create(step_s: u64, specs: &[ArchiveSpec]) -> Result<Self, TimeseriesError> {
        if step_s == 0 {
            return Err(TimeseriesError::InvalidSpec("step must be >= 1s".into()));
        }
        if specs.is_empty() {
            return Err(TimeseriesError::InvalidSpec("no archives".into()));
        }
        for s in specs {
            if s.steps_per_row == 0 || s.rows == 0 {
                return Err(TimeseriesError::InvalidSpec(format!(
                    "{s}: steps_per_row and rows must be >= 1"
                )));
            }
        }
        Ok(SeriesDb {
            step_s,
            origin_t: None,
            last_t: None,
            current: None,
            archives: specs.iter().map(|s| Archive::new(*s)).collect(),
        })
    }

    pub fn step_s(&self) -> u64 {
        self.step_s
    }

    pub fn origin_t(&self) -> Option<Timestamp> {
        self.origin_t
    }

    pub fn last_t(&self) -> Option<Timestamp> {
        self.last_t
    }

    pub fn archives(&self) -> &[Archive<F>] {
        &self.archives
    }

    fn step_ms(&self) -> i64 {
        self.step_s as i64 * 1000
    }

    fn bucket_of(&self, t: Timestamp) -> i64 {
        t.millis().div_euclid(self.step_ms()) * self.step_ms()
    }

    fn origin_bucket(&self) -> Option<i64> {
        self.origin_t.map(|t| self.bucket_of(t))
    }

    pub fn update(&mut self, t: Timestamp, value: F) -> Result<(), Rejected> {
        if !value.is_finite() {
            return Err(Rejected::NonFinite);
        }
        let bucket = self.bucket_of(t);
        match self.current {
            None => {
                self.origin_t = Some(t);
                self.current = Some((bucket, value, 1));
            }
            Some((cur, _, _)) if bucket < cur => return Err(Rejected::OutOfOrder),
            Some((cur, sum, n)) if bucket == cur => {
                self.current = Some((cur, sum + value, n + 1));
            }
            Some((cur, sum, n)) => {
                let avg = sum / F::of_usize(n as usize);
                let skipped = ((bucket - cur) / self.step_ms() - 1) as u64;
                for a in &mut self.archives {
                    a.feed(Some(avg));
                    a.feed_gaps(skipped);
                }
                self.current = Some((bucket, value, 1));
            }
        }
        self.last_t = Some(t);
        Ok(())
    }

    /// Row interval `[start, end)` of row `g` in archive `a`.
    fn row_span(&self, a: &Archive<F>, g: u64) -> (Timestamp, Timestamp) {
        let b0 = self.origin_bucket().unwrap_or(0);
        let res = self.step_ms() * a.spec.steps_per_row as i64;
        (Timestamp(b0 + g as i64 * res), Timestamp(b0 + (g as i64 + 1) * res))
    }

    fn coverage(&self, a: &Archive<F>) -> Option<(Timestamp, Timestamp)> {
        if a.rows_emitted == 0 {
            return None;
        }
        let first = a.rows_emitted.saturating_sub(a.rows.len() as u64);
        Some((self.row_span(a, first).0, self.row_span(a, a.rows_emitted - 1).1))
    }

    /// Points for `[start, end)` from the finest archive with resolution
    /// `>= want_resolution_s` that covers `start`; failing that, the coarsest
    /// archive overlapping the window. Timestamps are row-end times.
    pub fn fetch(
        &self,
        start: Timestamp,
        end: Timestamp,
        want_resolution_s: u64,
    ) -> Result<Vec<(Timestamp, Option<F>)>, TimeseriesError> {
        if start >= end {
            return Err(TimeseriesError::InvalidWindow);
        }
        let mut order: Vec<usize> = (0..self.archives.len()).collect();
        order.sort_by_key(|&i| (self.archives[i].spec.steps_per_row, i));
        let overlapping: Vec<usize> = order
            .into_iter()
            .filter(|&i| {
                self.coverage(&self.archives[i])
                    .is_some_and(|(lo, hi)| lo < end && hi > start)
            })
            .collect();
        let want_ms = want_resolution_s as i64 * 1000;
        let chosen = overlapping
            .iter()
            .copied()
            .find(|&i| {
                let a = &self.archives[i];
                let res = self.step_ms() * a.spec.steps_per_row as i64;
                res >= want_ms && self.coverage(a).is_some_and(|(lo, _)| lo <= start)
            })
            .or_else(|| overlapping.last().copied())
            .ok_or(TimeseriesError::EmptyWindow)?;
        let a = &self.archives[chosen];
        Ok(a.rows()
            .into_iter()
            .filter_map(|(g, v)| {
                let (lo, hi) = self.row_span(a, g);
                (lo < end && hi > start).then_some((hi, v))
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        w.extend_from_slice(&self.step_s.to_le_bytes());
        w.push(self.origin_t.is_some() as u8);
        w.extend_from_slice(&self.origin_t.map_or(0, |t| t.millis()).to_le_bytes());
        w.extend_from_slice(&self.last_t.map_or(0, |t| t.millis()).to_le_bytes());
        let (cur, sum, n) = self.current.unwrap_or((0, F::zero(), 0));
        w.extend_from_slice(&cur.to_le_bytes());
        w.extend_from_slice(&sum.as_f64().to_le_bytes());
        w.extend_from_slice(&n.to_le_bytes());
        w.extend_from_slice(&(self.archives.len() as u32).to_le_bytes());
        for a in &self.archives {
            w.push(a.spec.consolidation.code());
            w.extend_from_slice(&a.spec.steps_per_row.to_le_bytes());
            w.extend_from_slice(&a.spec.rows.to_le_bytes());
            w.extend_from_slice(&(a.cursor as u32).to_le_bytes());
            w.extend_from_slice(&a.rows_emitted.to_le_bytes());
            w.extend_from_slice(&a.pending.fed.to_le_bytes());
            w.extend_from_slice(&a.pending.sum.as_f64().to_le_bytes());
            w.extend_from_slice(&a.pending.nongap.to_le_bytes());
            w.extend_from_slice(&a.pending.min.as_f64().to_le_bytes());
            w.extend_from_slice(&a.pending.max.as_f64().to_le_bytes());
            for v in &a.rows {
                w.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TimeseriesError> {
        let mut r = Reader(bytes);
        if r.take(4)? != MAGIC {
            return Err(TimeseriesError::BadMagic);
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(TimeseriesError::VersionMismatch(version));
        }
        let step_s = r.u64()?;
        let started = r.u8()? != 0;
        let origin = r.i64()?;
        let last = r.i64()?;
        let cur = r.i64()?;
        let sum = r.f64()?;
        let n = r.u32()?;
        let count = r.u32()? as usize;
        let mut specs = Vec::with_capacity(count.min(64));
        let mut archives = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let cf = Consolidation::from_code(r.u8()?)
                .ok_or_else(|| TimeseriesError::Corrupt("unknown consolidation".into()))?;
            let spec = ArchiveSpec::new(cf, r.u32()?, r.u32()?);
            let cursor = r.u32()? as usize;
            let rows_emitted = r.u64()?;
            let pending = Accumulator {
                fed: r.u32()?,
                sum: F::of_f64(r.f64()?),
                nongap: r.u32()?,
                min: F::of_f64(r.f64()?),
                max: F::of_f64(r.f64()?),
            };
            if spec.rows == 0 || spec.steps_per_row == 0 || cursor >= spec.rows as usize {
                return Err(TimeseriesError::Corrupt(format!("archive {spec} cursor {cursor}")));
            }
            if r.0.len() < spec.rows as usize * 8 {
                return Err(TimeseriesError::TruncatedFile);
            }
            let rows = (0..spec.rows).map(|_| r.f64().map(F::of_f64)).collect::<Result<_, _>>()?;
            specs.push(spec);
            archives.push(Archive {
                spec,
                rows,
                cursor,
                rows_emitted,
                pending,
            });
        }
        if !r.0.is_empty() {
            return Err(TimeseriesError::Corrupt("trailing bytes".into()));
        }
        let mut db = SeriesDb::create(step_s, &specs)?;
        db.archives = archives;
        if started {
            db.origin_t = Some(Timestamp(origin));
            db.last_t = Some(Timestamp(last));
            db.current = Some((cur, F::of_f64(sum), n));
        }
        Ok(db)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TimeseriesError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TimeseriesError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TimeseriesError> {
        if self.0.len() < n {
            return Err(TimeseriesError::TruncatedFile);
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TimeseriesError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, TimeseriesError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TimeseriesError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, TimeseriesError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, TimeseriesError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64, TimeseriesError> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, TimeseriesError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

/// Identifies one series: a perfdata label of one service.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub host: String,
    pub service: String,
    pub label: String,
}

impl SeriesKey {
    pub fn new(host: &str, service: &str, label: &str) -> Self {
        SeriesKey {
            host: host.into(),
            service: service.into(),
            label: label.into(),
        }
    }

    /// `host/service/label.gwts` with unsafe bytes percent-encoded.
    pub fn relative_path(&self) -> PathBuf {
        let mut p = PathBuf::from(encode_component(&self.host));
        p.push(encode_component(&self.service));
        p.push(format!("{}.gwts", encode_component(&self.label)));
        p
    }
}

fn encode_component(s: &str) -> String {
    let mut out = String::new();
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && !out.is_empty()) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.is_empty() {
        out.push_str("%00");
    }
    out
}

/// All series of a monitor, one file per series when backed by a directory.
#[derive(Debug, Clone)]
pub struct SeriesStore<F> {
    step_s: u64,
    specs: Vec<ArchiveSpec>,
    dir: Option<PathBuf>,
    series: BTreeMap<SeriesKey, SeriesDb<F>>,
}

impl<F: Scalar> SeriesStore<F> {
    pub fn new(step_s: u64, specs: Vec<ArchiveSpec>, dir: Option<PathBuf>) -> Result<Self, TimeseriesError> {
        SeriesDb::<F>::create(step_s, &specs)?;
        Ok(SeriesStore {
            step_s,
            specs,
            dir,
            series: BTreeMap::new(),
        })
    }

    pub fn in_memory() -> Self {
        Self::new(10, ArchiveSpec::defaults(), None).expect("default specs are valid")
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn open(&self, key: &SeriesKey) -> SeriesDb<F> {
        if let Some(dir) = &self.dir {
            let path = dir.join(key.relative_path());
            if path.exists() {
                match SeriesDb::load(&path) {
                    Ok(db) => return db,
                    Err(e) => log::warn!("discarding {}: {e}", path.display()),
                }
            }
        }
        SeriesDb::create(self.step_s, &self.specs).expect("validated in new")
    }

    pub fn update(&mut self, key: &SeriesKey, t: Timestamp, value: F) -> Result<(), Rejected> {
        if !self.series.contains_key(key) {
            let db = self.open(key);
            self.series.insert(key.clone(), db);
        }
        self.series.get_mut(key).expect("inserted above").update(t, value)
    }

    pub fn get(&self, key: &SeriesKey) -> Option<&SeriesDb<F>> {
        self.series.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.series.keys()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Writes every series to its file. A no-op without a directory.
    pub fn save_all(&self) -> Result<(), TimeseriesError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        for (key, db) in &self.series {
            let path = dir.join(key.relative_path());
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            db.save(&path)?;
        }
        Ok(())
    }
}
