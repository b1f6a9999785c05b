//! Sparse on-disk container for direction feature maps.
//!
//! Layout (little-endian):
//!
//! ```text
//! "DMAP"  magic
//! u8      version (1)
//! u8      planes
//! u8      plane size n
//! u8      modality (0 offline, 1 online)
//! u32     label code (0xffffffff when unlabeled)
//! u32     writer id
//! u32     cell count
//! then per nonzero cell: u8 plane, u8 row, u8 col, f32 value
//! ```
//!
//! Cells are sorted strictly increasing by (plane, row, col) and carry only
//! nonzero finite values, which makes the encoding canonical: equal maps
//! serialize to identical bytes.

use super::{DirectMap, Modality};
use crate::error::{Error, Result};
use ndarray::Array3;

const MAGIC: &[u8; 4] = b"DMAP";
const VERSION: u8 = 1;
const UNLABELED: u32 = u32::MAX;

pub fn serialize_dmap(map: &DirectMap) -> Vec<u8> {
    let (d, rows, cols) = map.data.dim();
    debug_assert_eq!(rows, cols);
    debug_assert!(d <= u8::MAX as usize && rows <= u8::MAX as usize);

    let mut cells = Vec::new();
    for ((plane, row, col), &v) in map.data.indexed_iter() {
        if v != 0.0 {
            cells.push((plane as u8, row as u8, col as u8, v));
        }
    }

    let mut out = Vec::with_capacity(20 + cells.len() * 7);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(d as u8);
    out.push(rows as u8);
    out.push(match map.modality {
        Modality::Offline => 0,
        Modality::Online => 1,
    });
    out.extend_from_slice(&map.class.unwrap_or(UNLABELED).to_le_bytes());
    out.extend_from_slice(&map.writer.to_le_bytes());
    out.extend_from_slice(&(cells.len() as u32).to_le_bytes());
    for (plane, row, col, v) in cells {
        out.push(plane);
        out.push(row);
        out.push(col);
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_dmap(bytes: &[u8]) -> Result<DirectMap> {
    if bytes.len() < 20 {
        return Err(Error::parse(0, "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::parse(0, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::parse(4, format!("unsupported version {}", bytes[4])));
    }
    let d = bytes[5] as usize;
    let n = bytes[6] as usize;
    if d == 0 || n == 0 {
        return Err(Error::parse(5, "zero plane count or size"));
    }
    let modality = match bytes[7] {
        0 => Modality::Offline,
        1 => Modality::Online,
        m => return Err(Error::parse(7, format!("unknown modality {m}"))),
    };
    let label = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let writer = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let cell_count = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let expected = 20 + cell_count * 7;
    if bytes.len() != expected {
        return Err(Error::parse(
            20,
            format!("expected {expected} bytes for {cell_count} cells, got {}", bytes.len()),
        ));
    }

    let mut data = Array3::<f32>::zeros((d, n, n));
    let mut prev: Option<(u8, u8, u8)> = None;
    for i in 0..cell_count {
        let off = 20 + i * 7;
        let (plane, row, col) = (bytes[off], bytes[off + 1], bytes[off + 2]);
        let key = (plane, row, col);
        if plane as usize >= d || row as usize >= n || col as usize >= n {
            return Err(Error::parse(
                off as u64,
                format!("cell ({plane}, {row}, {col}) out of range"),
            ));
        }
        if let Some(p) = prev {
            if key <= p {
                return Err(Error::parse(off as u64, "cells out of order"));
            }
        }
        prev = Some(key);
        let v = f32::from_le_bytes(bytes[off + 3..off + 7].try_into().unwrap());
        if !v.is_finite() || v == 0.0 {
            return Err(Error::parse(
                off as u64 + 3,
                format!("invalid cell value {v}"),
            ));
        }
        data[[plane as usize, row as usize, col as usize]] = v;
    }

    Ok(DirectMap {
        data,
        modality,
        class: if label == UNLABELED { None } else { Some(label) },
        writer,
    })
}
