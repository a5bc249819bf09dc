//! On-disk cache of solved mode bases, keyed by a content hash of the fiber,
//! wavelength and grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::Grid;

use super::{solve_modes, FiberMode, FiberSpec, IndexProfile, ModeBasis, Parity};

const MAGIC: &[u8; 4] = b"QTPM";
const VERSION: u32 = 1;

fn key_bytes(fiber: &FiberSpec, wavelength: f64, grid: &Grid) -> Vec<u8> {
    let mut b = Vec::with_capacity(96);
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    for v in [fiber.core_radius, fiber.numerical_aperture, fiber.cladding_index, fiber.length] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.push(profile_tag(fiber.profile));
    b.extend_from_slice(&wavelength.to_le_bytes());
    b.extend_from_slice(&(grid.rows as u64).to_le_bytes());
    b.extend_from_slice(&(grid.cols as u64).to_le_bytes());
    for v in [grid.pitch, grid.origin.0, grid.origin.1] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

fn profile_tag(p: IndexProfile) -> u8 {
    match p {
        IndexProfile::Step => 0,
        IndexProfile::Graded => 1,
    }
}

/// Hex SHA-256 identifying a basis solve.
pub fn cache_key(fiber: &FiberSpec, wavelength: f64, grid: &Grid) -> String {
    let digest = Sha256::digest(key_bytes(fiber, wavelength, grid));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_path(dir: &Path, fiber: &FiberSpec, wavelength: f64, grid: &Grid) -> PathBuf {
    dir.join(format!("{}.qtpm", cache_key(fiber, wavelength, grid)))
}

pub fn save_basis(path: &Path, basis: &ModeBasis) -> Result<()> {
    let tmp = path.with_extension("qtpm.partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&key_bytes(basis.fiber(), basis.wavelength(), basis.grid()))?;
        w.write_all(&(basis.len() as u64).to_le_bytes())?;
        for m in basis.modes() {
            w.write_all(&m.l.to_le_bytes())?;
            w.write_all(&m.p.to_le_bytes())?;
            w.write_all(&[match m.parity {
                Parity::Cos => 0,
                Parity::Sin => 1,
            }])?;
            w.write_all(&m.beta.to_le_bytes())?;
            w.write_all(&m.mu.to_le_bytes())?;
        }
        for v in basis.profiles().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Load a basis written by [`save_basis`], checking that it was solved for
/// exactly this fiber, wavelength and grid.
pub fn load_basis(path: &Path, fiber: &FiberSpec, wavelength: f64, grid: &Grid) -> Result<ModeBasis> {
    let mut r = BufReader::new(File::open(path)?);
    let expected = key_bytes(fiber, wavelength, grid);
    let mut header = vec![0u8; expected.len()];
    r.read_exact(&mut header)?;
    if header != expected {
        return Err(Error::Format(format!("{} was solved for different inputs", path.display())));
    }
    let n = read_u64(&mut r)? as usize;
    let mut modes = Vec::with_capacity(n);
    for _ in 0..n {
        let l = read_u32(&mut r)?;
        let p = read_u32(&mut r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let parity = match tag[0] {
            0 => Parity::Cos,
            1 => Parity::Sin,
            t => return Err(Error::Format(format!("bad parity tag {t}"))),
        };
        let beta = read_f64(&mut r)?;
        let mu = read_f64(&mut r)?;
        modes.push(FiberMode { l, p, parity, beta, mu });
    }
    let npix = grid.len();
    let mut raw = vec![0u8; n * npix * 8];
    r.read_exact(&mut raw)?;
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format(format!("{} has trailing bytes", path.display())));
    }
    let profiles = Array2::from_shape_vec((n, npix), data).map_err(|e| Error::Format(e.to_string()))?;
    Ok(ModeBasis::from_parts(*fiber, wavelength, *grid, modes, profiles))
}

/// Solve, or load from `dir` when a cached solve exists. Returns the basis
/// and whether it came from the cache.
pub fn solve_modes_cached(
    fiber: &FiberSpec,
    wavelength: f64,
    grid: &Grid,
    dir: Option<&Path>,
) -> Result<(ModeBasis, bool)> {
    let Some(dir) = dir else {
        return Ok((solve_modes(fiber, wavelength, grid)?, false));
    };
    let path = cache_path(dir, fiber, wavelength, grid);
    if path.exists() {
        if let Ok(b) = load_basis(&path, fiber, wavelength, grid) {
            return Ok((b, true));
        }
    }
    let basis = solve_modes(fiber, wavelength, grid)?;
    std::fs::create_dir_all(dir)?;
    save_basis(&path, &basis)?;
    Ok((basis, false))
}
