//! Event data model and file I/O.
//!
//! Everything downstream operates on [`EventPacket`]: a time-sorted batch of
//! polarity events plus the sensor geometry and the packet time span. Packets
//! are immutable after construction and safe to share across threads.
//!
//! Two interchange formats are supported:
//!
//! * CSV — header `t,x,y,p`, one record per line, timestamps in seconds with
//!   nine decimal digits. Geometry travels in a leading comment line
//!   `# width=W height=H` (or is supplied by the caller).
//! * Binary — 16-byte header (`EVS1` magic, width u16 LE, height u16 LE,
//!   count u64 LE) followed by 13-byte records: t as f64 LE, x u16 LE,
//!   y u16 LE, polarity i8.
//!
//! Ground-truth and predicted labels live in a sidecar file with one integer
//! per line: -1 for noise, otherwise a 1-based object/cluster id.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

/// Magic bytes opening the binary event format.
pub const BINARY_MAGIC: &[u8; 4] = b"EVS1";

/// Span assigned to a non-empty packet whose events all share one timestamp,
/// so that the packet time span stays strictly positive.
const MIN_DERIVED_SPAN: f64 = 1e-9;

/// A single brightness-change event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Timestamp in seconds.
    pub t: f64,
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    /// Direction of the intensity change, exactly -1 or +1.
    pub polarity: i8,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, polarity: i8) -> Self {
        debug_assert!(polarity == -1 || polarity == 1);
        Self { t, x, y, polarity }
    }
}

/// A time-sorted batch of events with its sensor geometry and time span.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPacket {
    events: Vec<Event>,
    width: u16,
    height: u16,
    t0: f64,
    t1: f64,
}

/// Violation of a packet invariant at construction time.
#[derive(Debug, Error)]
pub enum PacketError {
    #[error("event {index} at ({x},{y}) outside {width}x{height} sensor")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("event {index} polarity {polarity} is not -1/+1")]
    BadPolarity { index: usize, polarity: i8 },
    #[error("event {index} timestamp {t} outside packet span [{t0}, {t1}]")]
    TimestampOutsideSpan {
        index: usize,
        t: f64,
        t0: f64,
        t1: f64,
    },
    #[error("invalid interval: start {a} must be below end {b}")]
    InvalidInterval { a: f64, b: f64 },
    #[error("timestamp at event {index} is not finite")]
    NonFiniteTimestamp { index: usize },
}

impl EventPacket {
    /// Builds a packet with an explicit time span. Events are stably sorted
    /// by timestamp; coordinates, polarities, and the span are validated.
    pub fn new(
        mut events: Vec<Event>,
        width: u16,
        height: u16,
        t0: f64,
        t1: f64,
    ) -> Result<Self, PacketError> {
        if !(t0 <= t1) || (!events.is_empty() && !(t0 < t1)) {
            return Err(PacketError::InvalidInterval { a: t0, b: t1 });
        }
        for (index, e) in events.iter().enumerate() {
            if !e.t.is_finite() {
                return Err(PacketError::NonFiniteTimestamp { index });
            }
            if e.x >= width || e.y >= height {
                return Err(PacketError::OutOfBounds {
                    index,
                    x: e.x,
                    y: e.y,
                    width,
                    height,
                });
            }
            if e.polarity != -1 && e.polarity != 1 {
                return Err(PacketError::BadPolarity {
                    index,
                    polarity: e.polarity,
                });
            }
            if e.t < t0 || e.t > t1 {
                return Err(PacketError::TimestampOutsideSpan {
                    index,
                    t: e.t,
                    t0,
                    t1,
                });
            }
        }
        events.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite timestamps"));
        Ok(Self {
            events,
            width,
            height,
            t0,
            t1,
        })
    }

    /// Builds a packet whose span is derived from the events themselves:
    /// t0 = min t, t1 = max t. A non-empty packet with a single distinct
    /// timestamp gets a nanosecond span so the span stays positive.
    pub fn from_events(events: Vec<Event>, width: u16, height: u16) -> Result<Self, PacketError> {
        let (t0, t1) = if events.is_empty() {
            (0.0, 0.0)
        } else {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (index, e) in events.iter().enumerate() {
                if !e.t.is_finite() {
                    return Err(PacketError::NonFiniteTimestamp { index });
                }
                lo = lo.min(e.t);
                hi = hi.max(e.t);
            }
            (lo, hi.max(lo + MIN_DERIVED_SPAN))
        };
        Self::new(events, width, height, t0, t1)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn time_span(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Events with `a <= t < b` as a new packet spanning exactly `[a, b]`.
    /// Geometry is preserved.
    pub fn slice(&self, a: f64, b: f64) -> Result<EventPacket, PacketError> {
        if !(a < b) {
            return Err(PacketError::InvalidInterval { a, b });
        }
        let lo = self.events.partition_point(|e| e.t < a);
        let hi = self.events.partition_point(|e| e.t < b);
        Ok(EventPacket {
            events: self.events[lo..hi].to_vec(),
            width: self.width,
            height: self.height,
            t0: a,
            t1: b,
        })
    }

    /// The leading packet of at most `max_events` events, spanning from this
    /// packet's start up to the last included timestamp, plus the remainder.
    pub fn split_at_count(&self, max_events: usize) -> (EventPacket, Option<EventPacket>) {
        if self.events.len() <= max_events {
            return (self.clone(), None);
        }
        let head: Vec<Event> = self.events[..max_events].to_vec();
        let tail: Vec<Event> = self.events[max_events..].to_vec();
        let cut = head.last().expect("max_events > 0").t;
        let head = EventPacket {
            events: head,
            width: self.width,
            height: self.height,
            t0: self.t0,
            t1: cut.max(self.t0 + MIN_DERIVED_SPAN),
        };
        let tail_t0 = tail.first().expect("non-empty tail").t;
        let tail = EventPacket {
            events: tail,
            width: self.width,
            height: self.height,
            t0: tail_t0,
            t1: self.t1.max(tail_t0 + MIN_DERIVED_SPAN),
        };
        (head, Some(tail))
    }
}

/// Ground-truth or predicted tag for one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Noise,
    /// 1-based object or cluster id.
    Object(u32),
}

impl Label {
    /// Sidecar encoding: -1 for noise, the id otherwise.
    pub fn to_code(self) -> i32 {
        match self {
            Label::Noise => -1,
            Label::Object(id) => id as i32,
        }
    }

    pub fn from_code(code: i32) -> Option<Label> {
        match code {
            -1 => Some(Label::Noise),
            id if id >= 1 => Some(Label::Object(id as u32)),
            _ => None,
        }
    }

    pub fn is_noise(self) -> bool {
        matches!(self, Label::Noise)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_code())
    }
}

/// An event packet with one ground-truth label per event.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEvents {
    pub packet: EventPacket,
    pub labels: Vec<Label>,
}

impl LabeledEvents {
    pub fn new(packet: EventPacket, labels: Vec<Label>) -> Result<Self, EventIoError> {
        if packet.len() != labels.len() {
            return Err(EventIoError::LabelLengthMismatch {
                events: packet.len(),
                labels: labels.len(),
            });
        }
        Ok(Self { packet, labels })
    }

    /// Distinct object ids present in the ground truth, ascending.
    pub fn object_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .labels
            .iter()
            .filter_map(|l| match l {
                Label::Object(id) => Some(*id),
                Label::Noise => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_noise()).count()
    }
}

/// On-disk event format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Binary,
}

impl FileFormat {
    /// Picks the format from a file extension; `.csv` is CSV, anything else
    /// is treated as binary.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

/// Event file I/O failure.
#[derive(Debug, Error)]
pub enum EventIoError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("empty file")]
    EmptyFile,
    #[error("malformed record at {location}: {detail}")]
    MalformedRecord { location: String, detail: String },
    #[error("record at {location}: event ({x},{y}) outside {width}x{height} sensor")]
    OutOfBounds {
        location: String,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("no sensor geometry: pass it explicitly or add a '# width=W height=H' line")]
    MissingGeometry,
    #[error("label sidecar holds {labels} labels for {events} events")]
    LabelLengthMismatch { events: usize, labels: usize },
    #[error(transparent)]
    Packet(#[from] PacketError),
}

/// Loads an event file, sorting near-sorted streams by timestamp (stable).
///
/// `geometry` overrides whatever the file declares; CSV files without a
/// geometry comment require it.
pub fn load_events(
    path: &Path,
    format: FileFormat,
    geometry: Option<(u16, u16)>,
) -> Result<EventPacket, EventIoError> {
    match format {
        FileFormat::Csv => load_csv(path, geometry),
        FileFormat::Binary => load_binary(path),
    }
}

/// Writes an event file in the requested format.
pub fn save_events(
    packet: &EventPacket,
    path: &Path,
    format: FileFormat,
) -> Result<(), EventIoError> {
    match format {
        FileFormat::Csv => save_csv(packet, path),
        FileFormat::Binary => save_binary(packet, path),
    }
}

fn load_csv(path: &Path, geometry: Option<(u16, u16)>) -> Result<EventPacket, EventIoError> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    let mut line_no = 0usize;
    let mut file_geometry: Option<(u16, u16)> = None;
    let mut events = Vec::new();
    let mut saw_header = false;

    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if file_geometry.is_none() {
                file_geometry = parse_geometry_comment(comment);
            }
            continue;
        }
        if !saw_header {
            if trimmed != "t,x,y,p" {
                return Err(EventIoError::MalformedRecord {
                    location: format!("line {line_no}"),
                    detail: format!("expected header 't,x,y,p', found '{trimmed}'"),
                });
            }
            saw_header = true;
            continue;
        }
        events.push(parse_csv_record(trimmed, line_no)?);
    }

    if !saw_header {
        return Err(EventIoError::EmptyFile);
    }
    let (width, height) = geometry
        .or(file_geometry)
        .ok_or(EventIoError::MissingGeometry)?;
    check_bounds(&events, width, height)?;
    Ok(EventPacket::from_events(events, width, height)?)
}

fn parse_geometry_comment(comment: &str) -> Option<(u16, u16)> {
    let mut width = None;
    let mut height = None;
    for token in comment.split_whitespace() {
        if let Some(v) = token.strip_prefix("width=") {
            width = v.parse::<u16>().ok();
        } else if let Some(v) = token.strip_prefix("height=") {
            height = v.parse::<u16>().ok();
        }
    }
    Some((width?, height?))
}

fn parse_csv_record(line: &str, line_no: usize) -> Result<Event, EventIoError> {
    let malformed = |detail: String| EventIoError::MalformedRecord {
        location: format!("line {line_no}"),
        detail,
    };
    let mut fields = line.split(',');
    let mut next = |name: &str| {
        fields
            .next()
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .ok_or_else(|| malformed(format!("missing field '{name}'")))
    };
    let t: f64 = next("t")?
        .parse()
        .map_err(|e| malformed(format!("bad t: {e}")))?;
    let x: u16 = next("x")?
        .parse()
        .map_err(|e| malformed(format!("bad x: {e}")))?;
    let y: u16 = next("y")?
        .parse()
        .map_err(|e| malformed(format!("bad y: {e}")))?;
    let p: i8 = next("p")?
        .parse()
        .map_err(|e| malformed(format!("bad p: {e}")))?;
    if fields.next().is_some() {
        return Err(malformed("trailing fields".into()));
    }
    if p != -1 && p != 1 {
        return Err(malformed(format!("polarity must be -1 or 1, found {p}")));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(malformed(format!("timestamp must be finite and >= 0, found {t}")));
    }
    Ok(Event::new(t, x, y, p))
}

fn check_bounds(events: &[Event], width: u16, height: u16) -> Result<(), EventIoError> {
    for (i, e) in events.iter().enumerate() {
        if e.x >= width || e.y >= height {
            return Err(EventIoError::OutOfBounds {
                // header + geometry comment offsets are format-dependent, so
                // report the record index instead of a raw line number
                location: format!("record {i}"),
                x: e.x,
                y: e.y,
                width,
                height,
            });
        }
    }
    Ok(())
}

fn save_csv(packet: &EventPacket, path: &Path) -> Result<(), EventIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# width={} height={}", packet.width(), packet.height())?;
    writeln!(w, "t,x,y,p")?;
    for e in packet.events() {
        writeln!(w, "{:.9},{},{},{}", e.t, e.x, e.y, e.polarity)?;
    }
    w.flush()?;
    Ok(())
}

fn load_binary(path: &Path) -> Result<EventPacket, EventIoError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    if let Err(e) = reader.read_exact(&mut header) {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            return Err(EventIoError::EmptyFile);
        }
        return Err(e.into());
    }
    if &header[0..4] != BINARY_MAGIC {
        return Err(EventIoError::MalformedRecord {
            location: "byte 0".into(),
            detail: format!("bad magic {:?}, expected {:?}", &header[0..4], BINARY_MAGIC),
        });
    }
    let width = u16::from_le_bytes([header[4], header[5]]);
    let height = u16::from_le_bytes([header[6], header[7]]);
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;

    let mut events = Vec::with_capacity(count);
    let mut record = [0u8; 13];
    for i in 0..count {
        reader.read_exact(&mut record).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                EventIoError::MalformedRecord {
                    location: format!("byte {}", 16 + i * 13),
                    detail: format!("truncated: expected {count} records, got {i}"),
                }
            } else {
                EventIoError::Io(e)
            }
        })?;
        let t = f64::from_le_bytes(record[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([record[8], record[9]]);
        let y = u16::from_le_bytes([record[10], record[11]]);
        let p = record[12] as i8;
        if p != -1 && p != 1 {
            return Err(EventIoError::MalformedRecord {
                location: format!("byte {}", 16 + i * 13 + 12),
                detail: format!("polarity must be -1 or 1, found {p}"),
            });
        }
        if !t.is_finite() {
            return Err(EventIoError::MalformedRecord {
                location: format!("byte {}", 16 + i * 13),
                detail: "non-finite timestamp".into(),
            });
        }
        if x >= width || y >= height {
            return Err(EventIoError::OutOfBounds {
                location: format!("byte {}", 16 + i * 13),
                x,
                y,
                width,
                height,
            });
        }
        events.push(Event::new(t, x, y, p));
    }
    Ok(EventPacket::from_events(events, width, height)?)
}

fn save_binary(packet: &EventPacket, path: &Path) -> Result<(), EventIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&packet.width().to_le_bytes())?;
    w.write_all(&packet.height().to_le_bytes())?;
    w.write_all(&(packet.len() as u64).to_le_bytes())?;
    for e in packet.events() {
        w.write_all(&e.t.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        w.write_all(&(e.polarity as u8).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a label sidecar: one integer per line, -1 for noise.
pub fn load_labels(path: &Path) -> Result<Vec<Label>, EventIoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let code: i32 = trimmed.parse().map_err(|e| EventIoError::MalformedRecord {
            location: format!("line {}", i + 1),
            detail: format!("bad label: {e}"),
        })?;
        let label = Label::from_code(code).ok_or_else(|| EventIoError::MalformedRecord {
            location: format!("line {}", i + 1),
            detail: format!("label must be -1 or >= 1, found {code}"),
        })?;
        labels.push(label);
    }
    Ok(labels)
}

/// Writes a label sidecar aligned with event order.
pub fn save_labels(labels: &[Label], path: &Path) -> Result<(), EventIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for label in labels {
        writeln!(w, "{}", label.to_code())?;
    }
    w.flush()?;
    Ok(())
}
