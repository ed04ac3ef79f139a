//! Timestamp files: a fixed-record little-endian binary format and a
//! line-oriented text format for debugging and interchange.
//!
//! Binary layout:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 8 | magic `BLTTAG01` |
//! | 8  | 4 | version, u32 = 1 |
//! | 12 | 8 | resolution in picoseconds, u64 ≥ 1 |
//! | 20 | 2 | channel count, u16 |
//! | 22 | 6 | reserved, zero |
//! | 28 | 4 | CRC-32 of bytes 0..28 |
//!
//! followed by 16-byte records `time: u64, channel: u8, flags: u8, 6 × 0`,
//! with `time` in units of the resolution. Records are in global time order,
//! ties broken by ascending channel. Flag bit 0 is set when the time was
//! rounded to the resolution; all other flag bits are zero.
//!
//! Text layout: a `# resolution_ps=N` line, optional `# channels=N` and
//! `# quantization=rounded` lines, then one `ticks_ps,channel` line per event.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::photonsim::{EventStream, Origin};
use crate::quantities::{Seconds, Tick};

pub const MAGIC: &[u8; 8] = b"BLTTAG01";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 16;

const CHECKSUM_OFFSET: usize = 28;
const FLAG_ROUNDED: u8 = 1;

/// How event times are mapped onto the file resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantization {
    /// Every time must be a multiple of the resolution.
    #[default]
    Exact,
    /// Times are rounded to the nearest multiple, halves rounding up.
    Rounded,
}

impl Quantization {
    fn flags(self) -> u8 {
        match self {
            Quantization::Exact => 0,
            Quantization::Rounded => FLAG_ROUNDED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagFileHeader {
    pub version: u32,
    pub resolution_ps: u64,
    pub channel_count: u16,
}

impl TagFileHeader {
    pub fn new(resolution_ps: u64, channel_count: u16) -> Result<Self> {
        if resolution_ps == 0 {
            return Err(Error::Precondition("resolution_ps must be >= 1".into()));
        }
        Ok(TagFileHeader {
            version: VERSION,
            resolution_ps,
            channel_count,
        })
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..8].copy_from_slice(MAGIC);
        h[8..12].copy_from_slice(&self.version.to_le_bytes());
        h[12..20].copy_from_slice(&self.resolution_ps.to_le_bytes());
        h[20..22].copy_from_slice(&self.channel_count.to_le_bytes());
        let crc = crc32fast::hash(&h[..CHECKSUM_OFFSET]);
        h[CHECKSUM_OFFSET..].copy_from_slice(&crc.to_le_bytes());
        h
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("truncated header", bytes.len() as u64));
        }
        if &bytes[0..8] != MAGIC {
            return Err(Error::format("bad magic", 0));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(format!("unsupported version {version}"), 8));
        }
        if let Some(i) = bytes[22..CHECKSUM_OFFSET].iter().position(|&b| b != 0) {
            return Err(Error::format("nonzero reserved byte", (22 + i) as u64));
        }
        let stored = u32::from_le_bytes(bytes[CHECKSUM_OFFSET..HEADER_LEN].try_into().unwrap());
        if stored != crc32fast::hash(&bytes[..CHECKSUM_OFFSET]) {
            return Err(Error::format("header checksum mismatch", CHECKSUM_OFFSET as u64));
        }
        let resolution_ps = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if resolution_ps == 0 {
            return Err(Error::format("zero resolution", 12));
        }
        Ok(TagFileHeader {
            version,
            resolution_ps,
            channel_count: u16::from_le_bytes(bytes[20..22].try_into().unwrap()),
        })
    }
}

/// Contents of a tag file: one stream per channel, indexed by channel id.
#[derive(Debug, Clone, PartialEq)]
pub struct TagFile {
    pub header: TagFileHeader,
    pub quantization: Quantization,
    pub streams: Vec<EventStream>,
}

impl TagFile {
    pub fn total_events(&self) -> usize {
        self.streams.iter().map(EventStream::len).sum()
    }
}

/// Maps a picosecond time to resolution units.
fn to_units(t: Tick, resolution_ps: u64, mode: Quantization) -> Result<u64> {
    if t < Tick::ZERO {
        return Err(Error::Precondition(format!("negative time {t}")));
    }
    let ps = t.0 as u64;
    match mode {
        Quantization::Exact if ps % resolution_ps != 0 => Err(Error::Precondition(format!(
            "time {ps} ps is not a multiple of the {resolution_ps} ps resolution"
        ))),
        Quantization::Exact => Ok(ps / resolution_ps),
        Quantization::Rounded => Ok(ps / resolution_ps + u64::from(ps % resolution_ps >= resolution_ps - resolution_ps / 2)),
    }
}

fn to_ticks(units: u64, resolution_ps: u64) -> Option<Tick> {
    units
        .checked_mul(resolution_ps)
        .filter(|&ps| ps <= i64::MAX as u64)
        .map(|ps| Tick(ps as i64))
}

/// Snaps a stream onto the `resolution_ps` grid, as a write/read cycle would.
pub fn quantize_stream(stream: &EventStream, resolution_ps: u64, mode: Quantization) -> Result<EventStream> {
    if resolution_ps == 0 {
        return Err(Error::Precondition("resolution_ps must be >= 1".into()));
    }
    let times = stream
        .times()
        .iter()
        .map(|&t| to_ticks(to_units(t, resolution_ps, mode)?, resolution_ps).ok_or(Error::Overflow))
        .collect::<Result<Vec<_>>>()?;
    let end = times.last().copied().unwrap_or(Tick::ZERO).to_seconds();
    let duration = Seconds(stream.duration().0.max(end));
    EventStream::new(stream.channel, times, duration, stream.origin)
}

/// Quantized events of all streams in file order, plus the channel count.
fn file_order(streams: &[EventStream], resolution_ps: u64, mode: Quantization) -> Result<(Vec<(u64, u8)>, u16)> {
    if resolution_ps == 0 {
        return Err(Error::Precondition("resolution_ps must be >= 1".into()));
    }
    let mut seen = [false; 256];
    for s in streams {
        if std::mem::replace(&mut seen[s.channel as usize], true) {
            return Err(Error::Precondition(format!("channel {} given twice", s.channel)));
        }
    }
    let channel_count = streams.iter().map(|s| s.channel as u16 + 1).max().unwrap_or(0);
    let mut events = Vec::with_capacity(streams.iter().map(EventStream::len).sum());
    for s in streams {
        for &t in s.times() {
            events.push((to_units(t, resolution_ps, mode)?, s.channel));
        }
    }
    events.sort_unstable();
    Ok((events, channel_count))
}

/// Builds per-channel streams from events already in file order.
fn assemble(header: TagFileHeader, quantization: Quantization, events: Vec<(Tick, u8)>) -> Result<TagFile> {
    let n = header.channel_count as usize;
    let mut per_channel: Vec<Vec<Tick>> = vec![Vec::new(); n];
    let mut last = Tick::ZERO;
    for (t, ch) in events {
        per_channel[ch as usize].push(t);
        last = last.max(t);
    }
    let duration = Seconds::from(last);
    let streams = per_channel
        .into_iter()
        .enumerate()
        .map(|(ch, times)| EventStream::new(ch as u8, times, duration, Origin::Loaded))
        .collect::<Result<Vec<_>>>()?;
    Ok(TagFile {
        header,
        quantization,
        streams,
    })
}

/// Serializes streams into the binary format.
pub fn encode_tags(streams: &[EventStream], resolution_ps: u64, mode: Quantization) -> Result<Vec<u8>> {
    let (events, channel_count) = file_order(streams, resolution_ps, mode)?;
    let header = TagFileHeader::new(resolution_ps, channel_count)?;
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * events.len());
    out.extend_from_slice(&header.encode());
    let flags = mode.flags();
    for (units, ch) in events {
        let mut rec = [0u8; RECORD_LEN];
        rec[0..8].copy_from_slice(&units.to_le_bytes());
        rec[8] = ch;
        rec[9] = flags;
        out.extend_from_slice(&rec);
    }
    Ok(out)
}

/// Parses and validates a binary tag file image.
pub fn decode_tags(bytes: &[u8]) -> Result<TagFile> {
    let header = TagFileHeader::decode(bytes)?;
    let body = &bytes[HEADER_LEN..];
    let tail = body.len() % RECORD_LEN;
    if tail != 0 {
        return Err(Error::format("truncated record", (bytes.len() - tail) as u64));
    }
    let mut events = Vec::with_capacity(body.len() / RECORD_LEN);
    let mut rounded = None;
    let mut prev: Option<(u64, u8)> = None;
    for (i, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        let offset = (HEADER_LEN + i * RECORD_LEN) as u64;
        let units = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let ch = rec[8];
        let flags = rec[9];
        if ch as u16 >= header.channel_count {
            return Err(Error::format(format!("channel {ch} out of range"), offset + 8));
        }
        if flags & !FLAG_ROUNDED != 0 {
            return Err(Error::format(format!("unknown flags {flags:#04x}"), offset + 9));
        }
        let this_rounded = flags & FLAG_ROUNDED != 0;
        if *rounded.get_or_insert(this_rounded) != this_rounded {
            return Err(Error::format("mixed quantization flags", offset + 9));
        }
        if let Some(j) = rec[10..].iter().position(|&b| b != 0) {
            return Err(Error::format("nonzero padding", offset + 10 + j as u64));
        }
        if prev.is_some_and(|p| (units, ch) < p) {
            return Err(Error::format("time regression", offset));
        }
        prev = Some((units, ch));
        let t = to_ticks(units, header.resolution_ps)
            .ok_or_else(|| Error::format("time overflows picosecond range", offset))?;
        events.push((t, ch));
    }
    let quantization = if rounded == Some(true) {
        Quantization::Rounded
    } else {
        Quantization::Exact
    };
    assemble(header, quantization, events)
}

/// Writes streams as a binary tag file.
pub fn write_tags(streams: &[EventStream], resolution_ps: u64, mode: Quantization, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tags(streams, resolution_ps, mode)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a binary tag file. Loaded streams span up to the last event in the file.
pub fn read_tags(path: impl AsRef<Path>) -> Result<TagFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tags(&bytes)
}

/// Writes streams in the text format.
pub fn write_text_tags_to(
    streams: &[EventStream],
    resolution_ps: u64,
    mode: Quantization,
    mut out: impl Write,
) -> Result<()> {
    let (events, channel_count) = file_order(streams, resolution_ps, mode)?;
    let io = |e| Error::io("<text output>", e);
    writeln!(out, "# resolution_ps={resolution_ps}").map_err(io)?;
    writeln!(out, "# channels={channel_count}").map_err(io)?;
    if mode == Quantization::Rounded {
        writeln!(out, "# quantization=rounded").map_err(io)?;
    }
    for (units, ch) in events {
        writeln!(out, "{},{ch}", units * resolution_ps).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn write_text_tags(
    streams: &[EventStream],
    resolution_ps: u64,
    mode: Quantization,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_text_tags_to(streams, resolution_ps, mode, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses the text format. Times must be multiples of the resolution and in
/// global file order.
pub fn parse_text_tags(reader: impl BufRead) -> Result<TagFile> {
    let mut resolution = None;
    let mut channels = None;
    let mut quantization = Quantization::Exact;
    let mut events = Vec::new();
    let mut prev: Option<(u64, u8)> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            what: e.to_string(),
        })?;
        let err = |what: String| Error::Parse { line: line_no, what };
        let line = line.trim();
        if let Some(meta) = line.strip_prefix('#') {
            let (key, value) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| err(format!("expected `# key=value`, got `{line}`")))?;
            match (key.trim(), value.trim()) {
                ("resolution_ps", v) => {
                    let r: u64 = v.parse().map_err(|_| err(format!("bad resolution `{v}`")))?;
                    if r == 0 {
                        return Err(err("resolution_ps must be >= 1".into()));
                    }
                    resolution = Some(r);
                }
                ("channels", v) => channels = Some(v.parse::<u16>().map_err(|_| err(format!("bad channel count `{v}`")))?),
                ("quantization", "rounded") => quantization = Quantization::Rounded,
                ("quantization", "exact") => quantization = Quantization::Exact,
                (k, v) => return Err(err(format!("unknown header `{k}={v}`"))),
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let res = resolution.ok_or_else(|| err("event before `# resolution_ps=` header".into()))?;
        let (t, ch) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected `ticks_ps,channel`, got `{line}`")))?;
        let t: u64 = t.trim().parse().map_err(|_| err(format!("bad time `{t}`")))?;
        let ch: u8 = ch.trim().parse().map_err(|_| err(format!("bad channel `{ch}`")))?;
        if t % res != 0 {
            return Err(err(format!("time {t} is not a multiple of resolution {res}")));
        }
        if t > i64::MAX as u64 {
            return Err(err(format!("time {t} out of range")));
        }
        if channels.is_some_and(|n| ch as u16 >= n) {
            return Err(err(format!("channel {ch} out of range")));
        }
        if prev.is_some_and(|p| (t, ch) < p) {
            return Err(err("time regression".into()));
        }
        prev = Some((t, ch));
        events.push((Tick(t as i64), ch));
    }
    let resolution = resolution.ok_or(Error::Parse {
        line: 1,
        what: "missing `# resolution_ps=` header".into(),
    })?;
    let inferred = events.iter().map(|&(_, ch)| ch as u16 + 1).max().unwrap_or(0);
    let header = TagFileHeader::new(resolution, channels.unwrap_or(inferred))?;
    assemble(header, quantization, events)
}

pub fn read_text_tags(path: impl AsRef<Path>) -> Result<TagFile> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_text_tags(BufReader::new(file))
}
