//! Event records, packet slicing, and per-polarity frame accumulation.
//!
//! Timestamps are integer microseconds. The default accumulation window of
//! 8.333 ms is represented as [`DEFAULT_INTERVAL_US`] = 8333 µs; the missing
//! third of a microsecond per frame is accepted.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INTERVAL_US: u64 = 8333;
pub const DEFAULT_COUNT_CAP: u32 = 8;
pub const EVT1_MAGIC: &[u8; 4] = b"EVT1";
const EVT1_HEADER_LEN: u64 = 16;
const EVT1_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn from_sign(sign: i64) -> Option<Polarity> {
        match sign {
            -1 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }

    /// Histogram channel: 0 for negative, 1 for positive.
    pub fn channel(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }
}

/// One brightness change at pixel `(u, v)` (column, row).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub u: u16,
    pub v: u16,
    pub t: u64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(u: u16, v: u16, t: u64, polarity: Polarity) -> Self {
        Event { u, v, t, polarity }
    }

    /// Continuous position of the pixel center.
    pub fn to_point(self) -> PointEvent {
        PointEvent {
            x: f64::from(self.u) + 0.5,
            y: f64::from(self.v) + 0.5,
            t: self.t,
            polarity: self.polarity,
        }
    }
}

/// An event with a continuous position, used while geometric augmentation is
/// applied and before events are snapped back onto the pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEvent {
    pub x: f64,
    pub y: f64,
    pub t: u64,
    pub polarity: Polarity,
}

impl PointEvent {
    /// The pixel containing this point, or `None` outside `width × height`.
    pub fn snap(&self, width: u16, height: u16) -> Option<Event> {
        let (fx, fy) = (self.x.floor(), self.y.floor());
        if fx < 0.0 || fy < 0.0 || fx >= f64::from(width) || fy >= f64::from(height) {
            return None;
        }
        Some(Event::new(fx as u16, fy as u16, self.t, self.polarity))
    }
}

/// Snaps points to pixels, dropping anything outside the sensor. Order is kept.
pub fn snap_points(points: &[PointEvent], width: u16, height: u16) -> Vec<Event> {
    points.iter().filter_map(|p| p.snap(width, height)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, rejecting out-of-bounds or unsorted events.
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        let stream = EventStream {
            width,
            height,
            events,
        };
        stream.validate()?;
        Ok(stream)
    }

    pub fn empty(width: u16, height: u16) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            if e.u >= self.width || e.v >= self.height {
                return Err(Error::input(format!(
                    "event {i} at ({}, {}) outside {}x{} sensor",
                    e.u, e.v, self.width, self.height
                )));
            }
            if i > 0 && self.events[i - 1].t > e.t {
                return Err(Error::input(format!(
                    "event {i} has timestamp {} before its predecessor {}",
                    e.t,
                    self.events[i - 1].t
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Events of one accumulation window `[t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet<'a> {
    pub index: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub events: &'a [Event],
}

/// Splits a sorted stream into consecutive windows of `interval` µs starting
/// at `t0`. Event `e` lands in packet `(e.t - t0) / interval`; empty windows
/// between occupied ones are kept. When `t_end` is given, packets are emitted
/// at least up to it (exclusive), which is how an empty stream yields empty
/// packets.
pub fn slice_packets(
    stream: &EventStream,
    interval: u64,
    t0: u64,
    t_end: Option<u64>,
) -> Result<Vec<Packet<'_>>> {
    if interval == 0 {
        return Err(Error::arg("packet interval must be positive"));
    }
    let events = &stream.events;
    if let Some(i) = events.windows(2).position(|w| w[0].t > w[1].t) {
        return Err(Error::input(format!(
            "stream is not sorted by timestamp at event {}",
            i + 1
        )));
    }
    if let Some(first) = events.first() {
        if first.t < t0 {
            return Err(Error::arg(format!(
                "t0 = {t0} is after the first event timestamp {}",
                first.t
            )));
        }
    }
    let from_events = events
        .last()
        .map_or(0, |last| ((last.t - t0) / interval) as usize + 1);
    let from_span = t_end.map_or(0, |end| end.saturating_sub(t0).div_ceil(interval) as usize);
    let count = from_events.max(from_span);

    let mut packets = Vec::with_capacity(count);
    let mut cursor = 0;
    for index in 0..count {
        let t_start = t0 + index as u64 * interval;
        let t_stop = t_start + interval;
        let begin = cursor;
        while cursor < events.len() && events[cursor].t < t_stop {
            cursor += 1;
        }
        packets.push(Packet {
            index,
            t_start,
            t_end: t_stop,
            events: &events[begin..cursor],
        });
    }
    Ok(packets)
}

/// Number of packets covering `[t0, t_last]` inclusive: `ceil(span / interval)`
/// with `span = t_last - t0 + 1`.
pub fn packet_count(t0: u64, t_last: u64, interval: u64) -> usize {
    (t_last - t0 + 1).div_ceil(interval) as usize
}

/// Two-channel event histogram. `grid` is channel-major: `[channel][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFrame {
    pub width: usize,
    pub height: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub grid: Vec<f32>,
}

impl EventFrame {
    pub fn zeros(width: usize, height: usize, t_start: u64, t_end: u64) -> Self {
        EventFrame {
            width,
            height,
            t_start,
            t_end,
            grid: vec![0.0; 2 * width * height],
        }
    }

    #[inline]
    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.grid[self.index(channel, row, col)]
    }

    pub fn total(&self) -> f64 {
        self.grid.iter().map(|&v| f64::from(v)).sum()
    }
}

/// Per-polarity pixel histogram of a packet.
pub fn accumulate_frame(
    events: &[Event],
    width: usize,
    height: usize,
    t_start: u64,
    t_end: u64,
) -> Result<EventFrame> {
    if t_end <= t_start {
        return Err(Error::arg(format!(
            "frame window [{t_start}, {t_end}) is empty"
        )));
    }
    let mut frame = EventFrame::zeros(width, height, t_start, t_end);
    for (i, e) in events.iter().enumerate() {
        let (u, v) = (usize::from(e.u), usize::from(e.v));
        if u >= width || v >= height {
            return Err(Error::input(format!(
                "event {i} at ({u}, {v}) outside {width}x{height} frame"
            )));
        }
        let idx = frame.index(e.polarity.channel(), v, u);
        frame.grid[idx] += 1.0;
    }
    Ok(frame)
}

/// Maps raw counts to `min(count, cap) / cap`.
pub fn normalize_frame(frame: &EventFrame, count_cap: u32) -> Result<EventFrame> {
    if count_cap < 1 {
        return Err(Error::arg("count cap must be at least 1"));
    }
    let cap = count_cap as f32;
    let mut out = frame.clone();
    for v in &mut out.grid {
        *v = v.min(cap) / cap;
    }
    Ok(out)
}

/// Integer translation that places `center` at `(size / 2, size / 2)` of a
/// `size × size` window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropTransform {
    pub offset_x: i64,
    pub offset_y: i64,
    pub size: usize,
}

impl CropTransform {
    pub fn centered(center: (i64, i64), size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::arg("crop size must be positive"));
        }
        let half = (size / 2) as i64;
        Ok(CropTransform {
            offset_x: center.0 - half,
            offset_y: center.1 - half,
            size,
        })
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (x - self.offset_x as f64, y - self.offset_y as f64)
    }

    pub fn invert(&self, x: f64, y: f64) -> (f64, f64) {
        (x + self.offset_x as f64, y + self.offset_y as f64)
    }

    pub fn apply_pose(&self, pose: &crate::pose::Pose) -> crate::pose::Pose {
        pose.translated(-self.offset_x as f64, -self.offset_y as f64)
    }

    pub fn invert_pose(&self, pose: &crate::pose::Pose) -> crate::pose::Pose {
        pose.translated(self.offset_x as f64, self.offset_y as f64)
    }

    /// Shifts events into crop coordinates, dropping those outside the window.
    pub fn apply_events(&self, events: &[Event]) -> Vec<Event> {
        let size = self.size as i64;
        events
            .iter()
            .filter_map(|e| {
                let x = i64::from(e.u) - self.offset_x;
                let y = i64::from(e.v) - self.offset_y;
                ((0..size).contains(&x) && (0..size).contains(&y) && size <= i64::from(u16::MAX))
                    .then(|| Event::new(x as u16, y as u16, e.t, e.polarity))
            })
            .collect()
    }
}

/// `size × size` window around `center`, zero-padded where it overhangs.
pub fn crop_frame(frame: &EventFrame, center: (i64, i64), size: usize) -> Result<EventFrame> {
    let tf = CropTransform::centered(center, size)?;
    Ok(crop_with(frame, &tf))
}

pub fn crop_with(frame: &EventFrame, tf: &CropTransform) -> EventFrame {
    let size = tf.size;
    let mut out = EventFrame::zeros(size, size, frame.t_start, frame.t_end);
    for c in 0..2 {
        for oy in 0..size {
            let sy = oy as i64 + tf.offset_y;
            if sy < 0 || sy >= frame.height as i64 {
                continue;
            }
            for ox in 0..size {
                let sx = ox as i64 + tf.offset_x;
                if sx < 0 || sx >= frame.width as i64 {
                    continue;
                }
                let dst = out.index(c, oy, ox);
                out.grid[dst] = frame.at(c, sy as usize, sx as usize);
            }
        }
    }
    out
}

fn round_centroid(sx: f64, sy: f64, n: f64) -> (i64, i64) {
    ((sx / n).round() as i64, (sy / n).round() as i64)
}

/// Mean event position, or the sensor center when there are no events.
pub fn event_centroid(events: &[Event], width: usize, height: usize) -> (i64, i64) {
    if events.is_empty() {
        return ((width / 2) as i64, (height / 2) as i64);
    }
    let (sx, sy) = events.iter().fold((0.0, 0.0), |(sx, sy), e| {
        (sx + f64::from(e.u), sy + f64::from(e.v))
    });
    round_centroid(sx, sy, events.len() as f64)
}

/// Count-weighted mean pixel of a frame (both channels), or its center.
pub fn frame_centroid(frame: &EventFrame) -> (i64, i64) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for c in 0..2 {
        for y in 0..frame.height {
            for x in 0..frame.width {
                let w = f64::from(frame.at(c, y, x));
                sx += w * x as f64;
                sy += w * y as f64;
                n += w;
            }
        }
    }
    if n == 0.0 {
        return ((frame.width / 2) as i64, (frame.height / 2) as i64);
    }
    round_centroid(sx, sy, n)
}

/// Ordered event frames with optional pose labels.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<EventFrame>,
    pub poses: Option<Vec<crate::pose::Pose>>,
    pub frame_interval: u64,
}

impl FrameSequence {
    pub fn new(
        frames: Vec<EventFrame>,
        poses: Option<Vec<crate::pose::Pose>>,
        frame_interval: u64,
    ) -> Result<Self> {
        if let Some(w) = frames.windows(2).position(|w| w[0].t_end != w[1].t_start) {
            return Err(Error::input(format!(
                "frames {w} and {} do not tile time",
                w + 1
            )));
        }
        if let Some(p) = &poses {
            if p.len() != frames.len() {
                return Err(Error::input(format!(
                    "{} frames but {} poses",
                    frames.len(),
                    p.len()
                )));
            }
        }
        Ok(FrameSequence {
            frames,
            poses,
            frame_interval,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Slices and accumulates a whole stream into raw-count frames.
pub fn stream_to_frames(
    stream: &EventStream,
    interval: u64,
    t0: u64,
    t_end: Option<u64>,
) -> Result<FrameSequence> {
    let packets = slice_packets(stream, interval, t0, t_end)?;
    let frames = packets
        .iter()
        .map(|p| {
            accumulate_frame(
                p.events,
                usize::from(stream.width),
                usize::from(stream.height),
                p.t_start,
                p.t_end,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, None, interval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    /// `EVT1` little-endian binary.
    Binary,
    /// Header line `{"width":W,"height":H}` then one `{"u","v","t","p"}` object per line.
    Text,
}

#[derive(Serialize, Deserialize)]
struct TextHeader {
    width: u16,
    height: u16,
}

#[derive(Serialize, Deserialize)]
struct TextEvent {
    u: u16,
    v: u16,
    t: u64,
    p: i8,
}

pub fn encode_evt1(stream: &EventStream) -> Vec<u8> {
    let mut buf = Vec::with_capacity(EVT1_HEADER_LEN as usize + stream.len() * EVT1_RECORD_LEN);
    buf.extend_from_slice(EVT1_MAGIC);
    buf.extend_from_slice(&stream.width.to_le_bytes());
    buf.extend_from_slice(&stream.height.to_le_bytes());
    buf.extend_from_slice(&(stream.events.len() as u64).to_le_bytes());
    for e in &stream.events {
        buf.extend_from_slice(&e.u.to_le_bytes());
        buf.extend_from_slice(&e.v.to_le_bytes());
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.push(e.polarity.sign() as u8);
    }
    buf
}

pub fn decode_evt1(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 4 || &bytes[..4] != EVT1_MAGIC {
        return Err(Error::format_at_offset(0, "bad magic, expected \"EVT1\""));
    }
    if bytes.len() < EVT1_HEADER_LEN as usize {
        return Err(Error::format_at_offset(4, "truncated header"));
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[EVT1_HEADER_LEN as usize..];
    let expected = count
        .checked_mul(EVT1_RECORD_LEN as u64)
        .ok_or_else(|| Error::format_at_offset(8, "event count overflows"))?;
    if (body.len() as u64) < expected {
        let whole = body.len() / EVT1_RECORD_LEN;
        let offset = EVT1_HEADER_LEN + (whole * EVT1_RECORD_LEN) as u64;
        return Err(Error::format_at_offset(
            offset,
            format!("truncated record {whole} of {count}"),
        ));
    }
    if (body.len() as u64) > expected {
        return Err(Error::format_at_offset(
            EVT1_HEADER_LEN + expected,
            "trailing bytes after last record",
        ));
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut last_t = 0u64;
    for (i, rec) in body.chunks_exact(EVT1_RECORD_LEN).enumerate() {
        let offset = EVT1_HEADER_LEN + (i * EVT1_RECORD_LEN) as u64;
        let u = u16::from_le_bytes([rec[0], rec[1]]);
        let v = u16::from_le_bytes([rec[2], rec[3]]);
        let t = u64::from_le_bytes(rec[4..12].try_into().expect("8 bytes"));
        let polarity = Polarity::from_sign(i64::from(rec[12] as i8)).ok_or_else(|| {
            Error::format_at_offset(offset + 12, format!("polarity byte {} is not ±1", rec[12] as i8))
        })?;
        if u >= width || v >= height {
            return Err(Error::format_at_offset(
                offset,
                format!("event ({u}, {v}) outside {width}x{height} sensor"),
            ));
        }
        if t < last_t {
            return Err(Error::format_at_offset(
                offset,
                format!("timestamp {t} precedes {last_t}"),
            ));
        }
        last_t = t;
        events.push(Event::new(u, v, t, polarity));
    }
    Ok(EventStream {
        width,
        height,
        events,
    })
}

fn encode_text(stream: &EventStream, w: &mut impl Write) -> std::io::Result<()> {
    let header = TextHeader {
        width: stream.width,
        height: stream.height,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for e in &stream.events {
        let rec = TextEvent {
            u: e.u,
            v: e.v,
            t: e.t,
            p: e.polarity.sign(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("event serializes"))?;
    }
    Ok(())
}

/// Parses one text-format event line.
pub fn parse_text_event(line: &str, line_no: usize) -> Result<Event> {
    let rec: TextEvent = serde_json::from_str(line)
        .map_err(|e| Error::format_at_line(line_no, format!("bad event record: {e}")))?;
    let polarity = Polarity::from_sign(i64::from(rec.p))
        .ok_or_else(|| Error::format_at_line(line_no, format!("polarity {} is not ±1", rec.p)))?;
    Ok(Event::new(rec.u, rec.v, rec.t, polarity))
}

fn decode_text(reader: impl BufRead) -> Result<EventStream> {
    let mut lines = reader.lines().enumerate();
    let header: TextHeader = loop {
        match lines.next() {
            None => return Err(Error::format_at_line(1, "missing header line")),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::format_at_line(i + 1, e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| {
                    Error::format_at_line(i + 1, format!("bad header: {e}"))
                })?;
            }
        }
    };
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::format_at_line(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e = parse_text_event(&line, i + 1)?;
        if e.u >= header.width || e.v >= header.height {
            return Err(Error::format_at_line(
                i + 1,
                format!(
                    "event ({}, {}) outside {}x{} sensor",
                    e.u, e.v, header.width, header.height
                ),
            ));
        }
        if events.last().is_some_and(|p: &Event| p.t > e.t) {
            return Err(Error::format_at_line(i + 1, "unsorted timestamp"));
        }
        events.push(e);
    }
    Ok(EventStream {
        width: header.width,
        height: header.height,
        events,
    })
}

/// Reads either format, chosen by the leading bytes.
pub fn read_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let first = bytes.iter().position(|b| !b.is_ascii_whitespace());
    match first.map(|i| bytes[i]) {
        Some(b'{') => decode_text(BufReader::new(&bytes[..])),
        _ => decode_evt1(&bytes),
    }
}

pub fn write_events(stream: &EventStream, path: impl AsRef<Path>, format: EventFormat) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        EventFormat::Binary => w.write_all(&encode_evt1(stream)),
        EventFormat::Text => encode_text(stream, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(u: u16, v: u16, t: u64, p: i64) -> Event {
        Event::new(u, v, t, Polarity::from_sign(p).unwrap())
    }

    #[test]
    fn empty_stream_with_span_gives_empty_packets() {
        let s = EventStream::empty(4, 4);
        let packets = slice_packets(&s, 8333, 0, Some(3 * 8333)).unwrap();
        assert_eq!(packets.len(), 3);
        assert!(packets.iter().all(|p| p.events.is_empty()));
    }

    #[test]
    fn boundary_events_split_at_interval() {
        let s = EventStream::new(
            4,
            4,
            vec![ev(0, 0, 0, 1), ev(0, 0, 8332, 1), ev(0, 0, 8333, 1), ev(0, 0, 16665, 1)],
        )
        .unwrap();
        let packets = slice_packets(&s, DEFAULT_INTERVAL_US, 0, None).unwrap();
        assert_eq!(packets.len(), 2);
        let times = |i: usize| packets[i].events.iter().map(|e| e.t).collect::<Vec<_>>();
        assert_eq!(times(0), vec![0, 8332]);
        assert_eq!(times(1), vec![8333, 16665]);
        assert_eq!(packet_count(0, 16665, 8333), 2);
    }

    #[test]
    fn slicing_rejects_bad_arguments() {
        let s = EventStream::empty(2, 2);
        assert!(matches!(slice_packets(&s, 0, 0, None), Err(Error::InvalidArgument(_))));
        let unsorted = EventStream {
            width: 2,
            height: 2,
            events: vec![ev(0, 0, 10, 1), ev(0, 0, 5, 1)],
        };
        assert!(matches!(
            slice_packets(&unsorted, 5, 0, None),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn accumulation_counts_per_polarity() {
        let f = accumulate_frame(&[], 8, 8, 0, 1).unwrap();
        assert!(f.grid.iter().all(|&v| v == 0.0));

        let f = accumulate_frame(&[ev(5, 7, 0, 1); 3], 8, 8, 0, 1).unwrap();
        assert_eq!(f.at(1, 7, 5), 3.0);
        assert_eq!(f.total(), 3.0);

        let f = accumulate_frame(&[ev(0, 0, 0, -1), ev(0, 0, 1, 1)], 8, 8, 0, 2).unwrap();
        assert_eq!(f.at(0, 0, 0), 1.0);
        assert_eq!(f.at(1, 0, 0), 1.0);
    }

    #[test]
    fn accumulation_names_out_of_bounds_event() {
        let err = accumulate_frame(&[ev(0, 0, 0, 1), ev(9, 0, 0, 1)], 8, 8, 0, 1).unwrap_err();
        assert!(err.to_string().contains("event 1"), "{err}");
    }

    #[test]
    fn normalization_clips_and_scales() {
        let mut f = EventFrame::zeros(2, 1, 0, 1);
        assert_eq!(normalize_frame(&f, 4).unwrap(), f);
        f.grid[0] = 3.0;
        f.grid[1] = 1.0;
        assert_eq!(normalize_frame(&f, 2).unwrap().grid[0], 1.0);
        assert_eq!(normalize_frame(&f, 4).unwrap().grid[1], 0.25);
        assert!(normalize_frame(&f, 0).is_err());
    }

    #[test]
    fn crop_identity_and_offset() {
        let mut f = EventFrame::zeros(4, 4, 0, 1);
        for (i, v) in f.grid.iter_mut().enumerate() {
            *v = i as f32;
        }
        assert_eq!(crop_frame(&f, (2, 2), 4).unwrap(), f);

        let mut g = EventFrame::zeros(20, 20, 0, 1);
        let idx = g.index(1, 10, 10);
        g.grid[idx] = 1.0;
        let c = crop_frame(&g, (10, 10), 4).unwrap();
        assert_eq!(c.at(1, 2, 2), 1.0);
        assert_eq!(c.total(), 1.0);
        assert!(crop_frame(&g, (0, 0), 0).is_err());
    }

    #[test]
    fn crop_pads_overhang_with_zeros() {
        let mut f = EventFrame::zeros(2, 2, 0, 1);
        f.grid.iter_mut().for_each(|v| *v = 1.0);
        let c = crop_frame(&f, (0, 0), 4).unwrap();
        assert_eq!(c.total(), 8.0);
        assert_eq!(c.at(0, 0, 0), 0.0);
        assert_eq!(c.at(0, 2, 2), 1.0);
    }

    #[test]
    fn centroid_cases() {
        assert_eq!(event_centroid(&[ev(3, 9, 0, 1)], 16, 16), (3, 9));
        assert_eq!(event_centroid(&[ev(0, 0, 0, 1), ev(10, 0, 0, -1)], 16, 16), (5, 0));
        assert_eq!(frame_centroid(&EventFrame::zeros(8, 8, 0, 1)), (4, 4));
        let f = accumulate_frame(&[ev(0, 0, 0, 1), ev(10, 0, 0, -1)], 16, 16, 0, 1).unwrap();
        assert_eq!(frame_centroid(&f), (5, 0));
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let err = decode_evt1(b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0").unwrap_err();
        assert!(err.to_string().contains("byte offset 0"), "{err}");
    }

    #[test]
    fn truncated_record_reports_its_offset() {
        let s = EventStream::new(8, 8, vec![ev(1, 1, 1, 1), ev(2, 2, 2, -1)]).unwrap();
        let mut bytes = encode_evt1(&s);
        bytes.pop();
        let err = decode_evt1(&bytes).unwrap_err();
        assert!(err.to_string().contains("byte offset 29"), "{err}");
    }

    #[test]
    fn unsorted_binary_is_rejected() {
        let s = EventStream {
            width: 8,
            height: 8,
            events: vec![ev(1, 1, 9, 1), ev(2, 2, 2, -1)],
        };
        let err = decode_evt1(&encode_evt1(&s)).unwrap_err();
        assert!(err.to_string().contains("byte offset 29"), "{err}");
    }

    #[test]
    fn text_line_parses_field_by_field() {
        let e = parse_text_event(r#"{"u":5,"v":7,"t":8333,"p":1}"#, 1).unwrap();
        assert_eq!(e, ev(5, 7, 8333, 1));
        assert!(parse_text_event(r#"{"u":5,"v":7,"t":8333,"p":0}"#, 3)
            .unwrap_err()
            .to_string()
            .contains("line 3"));
    }

    #[test]
    fn text_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.txt");
        let s = EventStream::new(8, 8, vec![ev(1, 2, 3, 1), ev(7, 7, 3, -1)]).unwrap();
        write_events(&s, &path, EventFormat::Text).unwrap();
        assert_eq!(read_events(&path).unwrap(), s);
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..40, 1u16..40).prop_flat_map(|(w, h)| {
            prop::collection::vec((0..w, 0..h, 0u64..100_000, prop::bool::ANY), 0..300).prop_map(
                move |raw| {
                    let mut events: Vec<Event> = raw
                        .into_iter()
                        .map(|(u, v, t, p)| ev(u, v, t, if p { 1 } else { -1 }))
                        .collect();
                    events.sort_by_key(|e| e.t);
                    EventStream::new(w, h, events).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_exact(s in arb_stream()) {
            let bytes = encode_evt1(&s);
            let back = decode_evt1(&bytes).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(encode_evt1(&back), bytes);
        }

        #[test]
        fn packets_partition_the_stream(s in arb_stream(), interval in 1u64..20_000) {
            let packets = slice_packets(&s, interval, 0, None).unwrap();
            let joined: Vec<Event> = packets.iter().flat_map(|p| p.events.iter().copied()).collect();
            prop_assert_eq!(&joined, &s.events);
            for p in &packets {
                for e in p.events {
                    prop_assert_eq!((e.t / interval) as usize, p.index);
                }
            }
        }

        #[test]
        fn histogram_conserves_events(s in arb_stream()) {
            let f = accumulate_frame(&s.events, s.width.into(), s.height.into(), 0, 1).unwrap();
            prop_assert_eq!(f.total() as usize, s.len());
        }

        #[test]
        fn interior_crop_commutes_with_accumulation(
            s in arb_stream(), cx in 0i64..40, cy in 0i64..40, size in 1usize..24,
        ) {
            let (w, h) = (usize::from(s.width), usize::from(s.height));
            let full = accumulate_frame(&s.events, w, h, 0, 1).unwrap();
            let tf = CropTransform::centered((cx, cy), size).unwrap();
            let a = crop_with(&full, &tf);
            let b = accumulate_frame(&tf.apply_events(&s.events), size, size, 0, 1).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn normalization_is_bounded_and_monotone(a in 0u32..50, b in 0u32..50, cap in 1u32..16) {
            let mut f = EventFrame::zeros(2, 1, 0, 1);
            f.grid[0] = a as f32;
            f.grid[1] = b as f32;
            let n = normalize_frame(&f, cap).unwrap();
            prop_assert!(n.grid.iter().all(|v| (0.0..=1.0).contains(v)));
            if a <= b {
                prop_assert!(n.grid[0] <= n.grid[1]);
            }
        }
    }
}
