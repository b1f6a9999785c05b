//! GNT container: concatenated offline character records.
//!
//! Record layout (little-endian):
//! `[record_size: u32] [tag: 2 bytes] [width: u16] [height: u16] [width*height gray bytes]`
//! where `record_size` counts the whole record, i.e. `10 + width*height`.

use super::OfflineSample;
use crate::error::{Error, Result};

const HEADER_LEN: u64 = 10;

fn read_u16(buf: &[u8], pos: usize) -> u16 {
    u16::from_le_bytes([buf[pos], buf[pos + 1]])
}

fn read_u32(buf: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes([buf[pos], buf[pos + 1], buf[pos + 2], buf[pos + 3]])
}

/// Parse one record starting at `offset`. Returns the sample and the offset of
/// the next record.
pub fn parse_gnt_record_at(bytes: &[u8], offset: u64) -> Result<(OfflineSample, u64)> {
    let start = offset as usize;
    if bytes.len() - start < HEADER_LEN as usize {
        return Err(Error::parse(offset, "truncated record header"));
    }
    let record_size = read_u32(bytes, start) as u64;
    let tag = [bytes[start + 4], bytes[start + 5]];
    let width = read_u16(bytes, start + 6) as usize;
    let height = read_u16(bytes, start + 8) as usize;
    if width == 0 || height == 0 {
        return Err(Error::parse(
            offset,
            format!("zero image extent ({width}x{height})"),
        ));
    }
    let pixels = width * height;
    if record_size != HEADER_LEN + pixels as u64 {
        return Err(Error::parse(
            offset,
            format!(
                "record_size {record_size} does not match 10 + {width}*{height} = {}",
                HEADER_LEN + pixels as u64
            ),
        ));
    }
    let data_start = start + HEADER_LEN as usize;
    if bytes.len() < data_start + pixels {
        return Err(Error::parse(
            (data_start + pixels) as u64,
            "stream ends inside pixel block",
        ));
    }
    let gray = bytes[data_start..data_start + pixels].to_vec();
    Ok((
        OfflineSample {
            width,
            height,
            gray,
            tag,
            class: None,
            writer: 0,
        },
        offset + record_size,
    ))
}

/// Parse a whole stream, returning each sample with the byte offset of its
/// record.
pub fn parse_gnt_with_offsets(bytes: &[u8]) -> Result<Vec<(u64, OfflineSample)>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    while (offset as usize) < bytes.len() {
        let (sample, next) = parse_gnt_record_at(bytes, offset)?;
        out.push((offset, sample));
        offset = next;
    }
    Ok(out)
}

/// Parse a concatenation of GNT records.
pub fn parse_gnt(bytes: &[u8]) -> Result<Vec<OfflineSample>> {
    Ok(parse_gnt_with_offsets(bytes)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

/// Serialize samples into the GNT layout. Inverse of [`parse_gnt`] for valid
/// streams, byte for byte.
pub fn serialize_gnt(samples: &[OfflineSample]) -> Vec<u8> {
    let total: usize = samples
        .iter()
        .map(|s| HEADER_LEN as usize + s.gray.len())
        .sum();
    let mut out = Vec::with_capacity(total);
    for s in samples {
        debug_assert_eq!(s.gray.len(), s.width * s.height);
        let record_size = (HEADER_LEN as usize + s.gray.len()) as u32;
        out.extend_from_slice(&record_size.to_le_bytes());
        out.extend_from_slice(&s.tag);
        out.extend_from_slice(&(s.width as u16).to_le_bytes());
        out.extend_from_slice(&(s.height as u16).to_le_bytes());
        out.extend_from_slice(&s.gray);
    }
    out
}
