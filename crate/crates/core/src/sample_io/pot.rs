//! POT container: concatenated online trajectory records.
//!
//! Record layout (little-endian):
//! `[sample_size: u16] [tag: 4 bytes] [stroke_count: u16]` followed by
//! `(x: i16, y: i16)` pairs. `(-1, 0)` terminates a stroke, `(-1, -1)`
//! terminates the character (after the last stroke's `(-1, 0)`).
//! `sample_size` counts the whole record in bytes.

use super::OnlineSample;
use crate::error::{Error, Result};

const HEADER_LEN: usize = 8;

fn read_i16(buf: &[u8], pos: usize) -> i16 {
    i16::from_le_bytes([buf[pos], buf[pos + 1]])
}

/// Parse one record starting at `offset`. Returns the sample and the offset of
/// the next record.
pub fn parse_pot_record_at(bytes: &[u8], offset: u64) -> Result<(OnlineSample, u64)> {
    let start = offset as usize;
    if bytes.len() - start < HEADER_LEN {
        return Err(Error::parse(offset, "truncated record header"));
    }
    let sample_size = u16::from_le_bytes([bytes[start], bytes[start + 1]]) as usize;
    let tag = [
        bytes[start + 2],
        bytes[start + 3],
        bytes[start + 4],
        bytes[start + 5],
    ];
    let declared_strokes = u16::from_le_bytes([bytes[start + 6], bytes[start + 7]]) as usize;
    let end = start + sample_size;
    if sample_size < HEADER_LEN + 4 || end > bytes.len() {
        return Err(Error::parse(
            offset,
            format!("sample_size {sample_size} exceeds stream or is too small"),
        ));
    }
    if (sample_size - HEADER_LEN) % 4 != 0 {
        return Err(Error::parse(
            offset,
            "point block length is not a multiple of 4",
        ));
    }

    let mut strokes: Vec<Vec<(i16, i16)>> = Vec::with_capacity(declared_strokes);
    let mut current: Vec<(i16, i16)> = Vec::new();
    let mut pos = start + HEADER_LEN;
    let mut terminated = false;
    while pos + 4 <= end {
        let x = read_i16(bytes, pos);
        let y = read_i16(bytes, pos + 2);
        pos += 4;
        match (x, y) {
            (-1, 0) => {
                if current.is_empty() {
                    return Err(Error::parse(pos as u64 - 4, "empty stroke"));
                }
                strokes.push(std::mem::take(&mut current));
            }
            (-1, -1) => {
                if !current.is_empty() {
                    return Err(Error::parse(
                        pos as u64 - 4,
                        "character terminator inside an unterminated stroke",
                    ));
                }
                terminated = true;
                break;
            }
            _ => current.push((x, y)),
        }
    }
    if !terminated {
        return Err(Error::parse(offset, "record missing (-1,-1) terminator"));
    }
    if pos != end {
        return Err(Error::parse(
            pos as u64,
            format!("sample_size {sample_size} does not match record content"),
        ));
    }
    if strokes.len() != declared_strokes {
        return Err(Error::parse(
            offset,
            format!(
                "declared {declared_strokes} strokes but found {}",
                strokes.len()
            ),
        ));
    }
    Ok((
        OnlineSample {
            strokes,
            tag,
            class: None,
            writer: 0,
        },
        end as u64,
    ))
}

/// Parse a whole stream, returning each sample with its record offset.
pub fn parse_pot_with_offsets(bytes: &[u8]) -> Result<Vec<(u64, OnlineSample)>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    while (offset as usize) < bytes.len() {
        let (sample, next) = parse_pot_record_at(bytes, offset)?;
        out.push((offset, sample));
        offset = next;
    }
    Ok(out)
}

/// Parse a concatenation of POT records.
pub fn parse_pot(bytes: &[u8]) -> Result<Vec<OnlineSample>> {
    Ok(parse_pot_with_offsets(bytes)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

/// Serialize samples into the POT layout. Inverse of [`parse_pot`] for valid
/// streams, byte for byte.
pub fn serialize_pot(samples: &[OnlineSample]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in samples {
        let points: usize = s.strokes.iter().map(|st| st.len()).sum();
        // points + one (-1,0) per stroke + the final (-1,-1)
        let sample_size = HEADER_LEN + 4 * (points + s.strokes.len() + 1);
        out.extend_from_slice(&(sample_size as u16).to_le_bytes());
        out.extend_from_slice(&s.tag);
        out.extend_from_slice(&(s.strokes.len() as u16).to_le_bytes());
        for stroke in &s.strokes {
            for &(x, y) in stroke {
                out.extend_from_slice(&x.to_le_bytes());
                out.extend_from_slice(&y.to_le_bytes());
            }
            out.extend_from_slice(&(-1i16).to_le_bytes());
            out.extend_from_slice(&0i16.to_le_bytes());
        }
        out.extend_from_slice(&(-1i16).to_le_bytes());
        out.extend_from_slice(&(-1i16).to_le_bytes());
    }
    out
}
