//! Image and raw-array serialization.
//!
//! Two formats are written:
//!
//! * QTPF raw float dumps. A 16-byte header, then `rows·cols` little-endian
//!   `f32` samples in row-major order.
//!
//!   | bytes | content |
//!   |-------|---------|
//!   | 0..4  | magic `QTPF` |
//!   | 4..8  | rows, `u32` LE |
//!   | 8..12 | cols, `u32` LE |
//!   | 12..16| pitch in meters, `f32` LE |
//!
//! * 16-bit binary PGM (P5, big-endian samples as the format requires) with a
//!   text sidecar `<file>.txt` holding `key = value` lines. The sidecar
//!   records `max_value`, so a pixel `p` stands for `p / 65535 · max_value`.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::{Grid, IntensityMap};

const MAGIC: &[u8; 4] = b"QTPF";
const PGM_MAX: u16 = u16::MAX;

/// Array and pitch read back from a QTPF stream.
#[derive(Clone, Debug, PartialEq)]
pub struct RawArray {
    pub values: Array2<f32>,
    pub pitch: f32,
}

pub fn write_qtpf<W: Write>(out: W, values: &Array2<f64>, pitch: f64) -> Result<()> {
    let (rows, cols) = values.dim();
    let dim = |n: usize| u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")));
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    w.write_all(&dim(rows)?.to_le_bytes())?;
    w.write_all(&dim(cols)?.to_le_bytes())?;
    w.write_all(&(pitch as f32).to_le_bytes())?;
    for v in values.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_qtpf<R: Read>(mut input: R) -> Result<RawArray> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(|e| Error::Format(format!("QTPF header: {e}")))?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("missing QTPF magic".into()));
    }
    let word = |i: usize| [header[i], header[i + 1], header[i + 2], header[i + 3]];
    let rows = u32::from_le_bytes(word(4)) as usize;
    let cols = u32::from_le_bytes(word(8)) as usize;
    let pitch = f32::from_le_bytes(word(12));
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != 4 * rows * cols {
        return Err(Error::Format(format!(
            "QTPF body has {} bytes, header promises {}x{} samples",
            body.len(),
            rows,
            cols
        )));
    }
    let data: Vec<f32> = body.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let values = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))?;
    Ok(RawArray { values, pitch })
}

pub fn save_qtpf(path: &Path, values: &Array2<f64>, pitch: f64) -> Result<()> {
    write_qtpf(fs::File::create(path)?, values, pitch)
}

pub fn load_qtpf(path: &Path) -> Result<RawArray> {
    read_qtpf(fs::File::open(path)?)
}

/// Path of the text sidecar that accompanies `path`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Writes `key = value` lines, one per entry, in the given order.
pub fn write_sidecar(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::Format(format!("sidecar entry {k:?} cannot be written on one line")));
        }
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(sidecar_path(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l.split_once('=').ok_or_else(|| Error::Format(format!("sidecar line {l:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Encodes `map` as 16-bit P5 bytes and returns them with the scale maximum.
pub fn encode_pgm(map: &IntensityMap) -> (Vec<u8>, f64) {
    let g = map.grid();
    let max = map.values().iter().copied().fold(0.0, f64::max);
    let mut bytes = format!("P5\n{} {}\n{}\n", g.cols, g.rows, PGM_MAX).into_bytes();
    bytes.reserve(2 * g.len());
    for v in map.values().iter() {
        let p = if max > 0.0 { (v / max * PGM_MAX as f64).round() as u16 } else { 0 };
        bytes.extend_from_slice(&p.to_be_bytes());
    }
    (bytes, max)
}

/// Writes the PGM and its sidecar. Returns the recorded `max_value`.
pub fn save_pgm(path: &Path, map: &IntensityMap) -> Result<f64> {
    let (bytes, max) = encode_pgm(map);
    fs::write(path, bytes)?;
    let g = map.grid();
    write_sidecar(
        path,
        &[
            ("format", "pgm16".into()),
            ("rows", g.rows.to_string()),
            ("cols", g.cols.to_string()),
            ("pitch_m", format!("{:?}", g.pitch)),
            ("origin_x_m", format!("{:?}", g.origin.0)),
            ("origin_y_m", format!("{:?}", g.origin.1)),
            ("max_value", format!("{max:?}")),
            ("pixel_max", PGM_MAX.to_string()),
            ("label", map.label().replace('\n', " ")),
        ],
    )?;
    Ok(max)
}

/// Reads a PGM written by [`save_pgm`], restoring physical units from the
/// sidecar.
pub fn load_pgm(path: &Path) -> Result<IntensityMap> {
    let bytes = fs::read(path)?;
    let meta = read_sidecar(path)?;
    let get = |key: &str| {
        meta.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format(format!("sidecar lacks {key}")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?.parse().map_err(|_| Error::Format(format!("sidecar {key} is not a number")))
    };
    // Header: P5, width, height, maxval, one whitespace byte.
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    i += 1;
    if fields[0] != "P5" || fields[3] != PGM_MAX.to_string() {
        return Err(Error::Format(format!("expected a 16-bit P5 image, got {} / {}", fields[0], fields[3])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("PGM size {s:?}")));
    let (cols, rows) = (parse(&fields[1])?, parse(&fields[2])?);
    let body = bytes.get(i..).unwrap_or_default();
    if body.len() != 2 * rows * cols {
        return Err(Error::Format(format!("PGM body has {} bytes for {rows}x{cols}", body.len())));
    }
    let max = num("max_value")?;
    let data: Vec<f64> = body
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / PGM_MAX as f64 * max)
        .collect();
    let grid = Grid::new(rows, cols, num("pitch_m")?, (num("origin_x_m")?, num("origin_y_m")?))?;
    let values = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))?;
    IntensityMap::new(grid, values, get("label")?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qtpf_header_layout() {
        let a = Array2::from_shape_fn((2, 3), |(r, c)| (r * 3 + c) as f64 * 0.5);
        let mut buf = Vec::new();
        write_qtpf(&mut buf, &a, 1.5e-6).unwrap();
        assert_eq!(buf.len(), 16 + 4 * 6);
        assert_eq!(&buf[0..4], b"QTPF");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(&buf[12..16], &1.5e-6f32.to_le_bytes());
        assert_eq!(&buf[16 + 4 * 5..], &2.5f32.to_le_bytes());
        let back = read_qtpf(buf.as_slice()).unwrap();
        assert_eq!(back.values, a.mapv(|v| v as f32));
        assert_eq!(back.pitch, 1.5e-6f32);
    }

    #[test]
    fn qtpf_rejects_bad_input() {
        assert!(read_qtpf(&b"QTPX\0\0\0\0\0\0\0\0\0\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        write_qtpf(&mut buf, &Array2::zeros((2, 2)), 1.0).unwrap();
        buf.pop();
        assert!(read_qtpf(buf.as_slice()).is_err());
    }

    #[test]
    fn pgm_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let g = Grid::new(5, 7, 2e-6, (1e-6, 0.0)).unwrap();
        let values = Array2::from_shape_fn((5, 7), |(r, c)| ((r * 7 + c) as f64).sin().abs() * 3e-4);
        let map = IntensityMap::new(g, values, "test map").unwrap();
        let max = save_pgm(&path, &map).unwrap();
        let back = load_pgm(&path).unwrap();
        assert_eq!(back.grid(), map.grid());
        assert_eq!(back.label(), "test map");
        for (a, b) in back.values().iter().zip(map.values()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 * max * (1.0 + 1e-12));
        }
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n7 5\n65535\n"));
    }
}
