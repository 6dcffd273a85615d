//! MRtrix-style `.tck` (streamline geometry) and `.tsf` (per-point scalar)
//! track files.
//!
//! Both share one layout: a text header of `key: value` lines opened by a
//! magic line and closed by `END`, followed (at the byte offset named by
//! `file: . <offset>`) by a stream of 32-bit floats. Each record is a tuple
//! of `width` floats (3 for points, 1 for scalars). An all-NaN record closes
//! a streamline and an all-Inf record closes the stream.

use crate::error::{Error, Result};
use crate::io::{Point3, Streamline};

pub const TCK_MAGIC: &str = "mrtrix tracks";
pub const TSF_MAGIC: &str = "mrtrix track scalars";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug)]
struct Header {
    endian: Endian,
    offset: usize,
}

fn parse_header(bytes: &[u8], magic: &str) -> Result<Header> {
    let mut pos = 0usize;
    let mut next_line = || -> Option<&[u8]> {
        if pos >= bytes.len() {
            return None;
        }
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        pos += end + 1;
        Some(&rest[..end])
    };

    let first = next_line().ok_or_else(|| Error::MalformedHeader("missing magic line".into()))?;
    let first = String::from_utf8_lossy(first);
    if first.trim_end_matches('\r') != magic {
        return Err(Error::MalformedHeader(format!(
            "expected magic `{magic}`, found `{}`",
            first.trim_end()
        )));
    }

    let mut datatype = None;
    let mut offset = None;
    let mut saw_end = false;
    while let Some(line) = next_line() {
        let line = std::str::from_utf8(line)
            .map_err(|_| Error::MalformedHeader("header is not valid UTF-8".into()))?
            .trim_end_matches('\r');
        if line == "END" {
            saw_end = true;
            break;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(Error::MalformedHeader(format!("line `{line}` is not `key: value`")));
        };
        let value = value.trim();
        match key.trim() {
            "datatype" => datatype = Some(value.to_string()),
            "file" => {
                let mut parts = value.split_whitespace();
                if parts.next() != Some(".") {
                    return Err(Error::MalformedHeader(format!(
                        "only in-file data (`file: . <offset>`) is supported, got `{value}`"
                    )));
                }
                let off = parts
                    .next()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| Error::MalformedHeader(format!("bad data offset in `{value}`")))?;
                offset = Some(off);
            }
            _ => {}
        }
    }
    if !saw_end {
        return Err(Error::MalformedHeader("header is not terminated by `END`".into()));
    }
    let datatype = datatype.ok_or_else(|| Error::MalformedHeader("missing `datatype`".into()))?;
    let offset = offset.ok_or_else(|| Error::MalformedHeader("missing `file` offset".into()))?;
    let endian = match datatype.as_str() {
        "Float32LE" => Endian::Little,
        "Float32BE" => Endian::Big,
        other => return Err(Error::UnsupportedFormat(format!("datatype `{other}`"))),
    };
    if offset < pos {
        return Err(Error::MalformedHeader(format!(
            "data offset {offset} points inside the header (header ends at byte {pos})"
        )));
    }
    Ok(Header { endian, offset })
}

fn parse_records(bytes: &[u8], magic: &str, width: usize) -> Result<Vec<Vec<f32>>> {
    let header = parse_header(bytes, magic)?;
    if header.offset > bytes.len() {
        return Err(Error::Truncated(format!(
            "data offset {} beyond end of file ({} bytes)",
            header.offset,
            bytes.len()
        )));
    }
    let data = &bytes[header.offset..];
    let record_bytes = 4 * width;
    let read = |chunk: &[u8]| -> f32 {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        match header.endian {
            Endian::Little => f32::from_le_bytes(raw),
            Endian::Big => f32::from_be_bytes(raw),
        }
    };

    let mut tracks = Vec::new();
    let mut current: Vec<f32> = Vec::new();
    let mut record = vec![0f32; width];
    for (index, chunk) in data.chunks(record_bytes).enumerate() {
        if chunk.len() < record_bytes {
            return Err(Error::Truncated(format!(
                "partial record of {} bytes at record {index}",
                chunk.len()
            )));
        }
        for (slot, raw) in record.iter_mut().zip(chunk.chunks_exact(4)) {
            *slot = read(raw);
        }
        if record.iter().all(|v| v.is_nan()) {
            if current.is_empty() {
                return Err(Error::CorruptData(format!(
                    "empty streamline terminated at record {index}"
                )));
            }
            tracks.push(std::mem::take(&mut current));
        } else if record.iter().all(|v| v.is_infinite()) {
            // Points not followed by a NaN separator still form the final track.
            if !current.is_empty() {
                tracks.push(current);
            }
            return Ok(tracks);
        } else if record.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptData(format!(
                "non-finite value {record:?} at record {index}"
            )));
        } else {
            current.extend_from_slice(&record);
        }
    }
    Err(Error::Truncated("stream ends without an Inf terminator".into()))
}

fn write_records<'a>(
    magic: &str,
    count: usize,
    width: usize,
    tracks: impl Iterator<Item = &'a [f32]>,
) -> Vec<u8> {
    // The offset's own digit count changes the header length, so iterate to a fixed point.
    let mut offset = 0usize;
    let header = loop {
        let text = format!(
            "{magic}\ndatatype: Float32LE\ncount: {count}\nfile: . {offset}\nEND\n"
        );
        if text.len() == offset {
            break text;
        }
        offset = text.len();
    };
    let mut out = header.into_bytes();
    for track in tracks {
        for v in track {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for _ in 0..width {
            out.extend_from_slice(&f32::NAN.to_le_bytes());
        }
    }
    for _ in 0..width {
        out.extend_from_slice(&f32::INFINITY.to_le_bytes());
    }
    out
}

/// Parses a `.tck` byte stream into streamlines, in file order.
pub fn parse_tck(bytes: &[u8]) -> Result<Vec<Streamline>> {
    parse_records(bytes, TCK_MAGIC, 3)?
        .into_iter()
        .map(|flat| {
            let points: Vec<Point3> = flat
                .chunks_exact(3)
                .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
                .collect();
            Streamline::new(points)
        })
        .collect()
}

/// Serializes streamlines as Float32LE `.tck`. Coordinates are rounded to f32.
pub fn write_tck(streamlines: &[Streamline]) -> Result<Vec<u8>> {
    let mut flat = Vec::with_capacity(streamlines.len());
    for (i, s) in streamlines.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::InvalidInput(format!("streamline {i} is empty")));
        }
        let mut coords = Vec::with_capacity(3 * s.len());
        for p in s.points() {
            if p.iter().any(|v| !v.is_finite() || !(*v as f32).is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "streamline {i} has non-finite point {p:?}"
                )));
            }
            coords.extend(p.iter().map(|&v| v as f32));
        }
        flat.push(coords);
    }
    Ok(write_records(TCK_MAGIC, flat.len(), 3, flat.iter().map(Vec::as_slice)))
}

/// Parses a `.tsf` byte stream into per-streamline value lists.
pub fn parse_tsf(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    Ok(parse_records(bytes, TSF_MAGIC, 1)?
        .into_iter()
        .map(|t| t.into_iter().map(f64::from).collect())
        .collect())
}

/// Serializes per-streamline scalar lists as Float32LE `.tsf`.
pub fn write_tsf(values: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut flat = Vec::with_capacity(values.len());
    for (i, track) in values.iter().enumerate() {
        if track.is_empty() {
            return Err(Error::InvalidInput(format!("scalar track {i} is empty")));
        }
        if track.iter().any(|v| !v.is_finite() || !(*v as f32).is_finite()) {
            return Err(Error::InvalidInput(format!("scalar track {i} has a non-finite value")));
        }
        flat.push(track.iter().map(|&v| v as f32).collect::<Vec<_>>());
    }
    Ok(write_records(TSF_MAGIC, flat.len(), 1, flat.iter().map(Vec::as_slice)))
}
