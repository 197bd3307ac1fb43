//! Binary cache for the sensitivity matrix.
//!
//! Layout, all little-endian: the magic `GSDJ1`; `u32` source, detector, bin and
//! pixel counts; `f64` bin width, grid resolution, domain radius, `μa`, `μs'` and
//! refractive index; the matrix as row-major `f32` (one row per measurement, one
//! column per active pixel); and a trailing `u64` FNV-1a hash of everything before it.

use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{CacheError, Error, Result};
use crate::forward::{OpticalProperties, SensitivityMatrix};

pub const MAGIC: &[u8; 5] = b"GSDJ1";
const HEADER_LEN: usize = 5 + 4 * 4 + 6 * 8;

/// Shape and physics recorded in a cache header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheHeader {
    pub n_sources: u32,
    pub n_detectors: u32,
    pub n_bins: u32,
    pub n_pixels: u32,
    pub dt_ns: f64,
    pub resolution_cm: f64,
    pub radius_cm: f64,
    pub mu_a: f64,
    pub mu_s_prime: f64,
    pub refractive_index: f64,
}

impl CacheHeader {
    pub fn of(j: &SensitivityMatrix) -> Self {
        Self {
            n_sources: j.n_sources as u32,
            n_detectors: j.n_detectors as u32,
            n_bins: j.n_bins as u32,
            n_pixels: j.n_pixels as u32,
            dt_ns: j.dt_ns,
            resolution_cm: j.resolution_cm,
            radius_cm: j.radius_cm,
            mu_a: j.props.mu_a,
            mu_s_prime: j.props.mu_s_prime,
            refractive_index: j.props.refractive_index,
        }
    }

    fn n_rows(&self) -> usize {
        self.n_sources as usize * self.n_detectors as usize * self.n_bins as usize
    }

    /// Body size in bytes; wide enough that a corrupted header cannot overflow it.
    fn body_len(&self) -> u128 {
        [self.n_sources, self.n_detectors, self.n_bins, self.n_pixels]
            .iter()
            .map(|&v| v as u128)
            .product::<u128>()
            * 4
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(MAGIC);
        for v in [self.n_sources, self.n_detectors, self.n_bins, self.n_pixels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [
            self.dt_ns,
            self.resolution_cm,
            self.radius_cm,
            self.mu_a,
            self.mu_s_prime,
            self.refractive_index,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn decode(bytes: &[u8; HEADER_LEN]) -> Self {
        let u = |i: usize| {
            let o = 5 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"))
        };
        let f = |i: usize| {
            let o = 21 + 8 * i;
            f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"))
        };
        Self {
            n_sources: u(0),
            n_detectors: u(1),
            n_bins: u(2),
            n_pixels: u(3),
            dt_ns: f(0),
            resolution_cm: f(1),
            radius_cm: f(2),
            mu_a: f(3),
            mu_s_prime: f(4),
            refractive_index: f(5),
        }
    }

    /// First field that differs from `expected`, as `(name, cached, expected)`.
    pub fn first_mismatch(&self, expected: &CacheHeader) -> Option<(&'static str, String, String)> {
        let ints = [
            ("n_sources", self.n_sources, expected.n_sources),
            ("n_detectors", self.n_detectors, expected.n_detectors),
            ("n_bins", self.n_bins, expected.n_bins),
            ("n_pixels", self.n_pixels, expected.n_pixels),
        ];
        for (name, a, b) in ints {
            if a != b {
                return Some((name, a.to_string(), b.to_string()));
            }
        }
        let floats = [
            ("dt_ns", self.dt_ns, expected.dt_ns),
            ("resolution_cm", self.resolution_cm, expected.resolution_cm),
            ("radius_cm", self.radius_cm, expected.radius_cm),
            ("mu_a", self.mu_a, expected.mu_a),
            ("mu_s_prime", self.mu_s_prime, expected.mu_s_prime),
            ("refractive_index", self.refractive_index, expected.refractive_index),
        ];
        for (name, a, b) in floats {
            if a.to_bits() != b.to_bits() {
                return Some((name, a.to_string(), b.to_string()));
            }
        }
        None
    }
}

struct HashingWriter<W> {
    inner: W,
    hasher: FnvHasher,
}

impl<W: Write> HashingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.hasher.write(bytes);
        self.inner.write_all(bytes)
    }
}

pub fn save_jacobian(j: &SensitivityMatrix, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write to a sibling file first so an interrupted save never leaves a
    // plausible-looking partial cache behind.
    let tmp = path.with_extension("partial");
    let io = |e| Error::io(&tmp, e);
    let file = File::create(&tmp).map_err(io)?;
    let mut w = HashingWriter {
        inner: BufWriter::with_capacity(1 << 20, file),
        hasher: FnvHasher::default(),
    };
    w.put(&CacheHeader::of(j).encode()).map_err(io)?;

    let (n_rows, n_pixels) = (j.n_rows(), j.n_pixels);
    let data = j.as_column_major();
    let mut row = vec![0u8; n_pixels * 4];
    for r in 0..n_rows {
        for p in 0..n_pixels {
            row[4 * p..4 * p + 4].copy_from_slice(&data[p * n_rows + r].to_le_bytes());
        }
        w.put(&row).map_err(io)?;
    }
    let digest = w.hasher.finish();
    let mut inner = w.inner;
    inner.write_all(&digest.to_le_bytes()).map_err(io)?;
    inner.flush().map_err(io)?;
    drop(inner);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a cache, checking magic, length and checksum.
pub fn load_jacobian(path: &Path) -> Result<SensitivityMatrix> {
    read(path, None)
}

/// Like [`load_jacobian`], but also rejects a header that disagrees with `expected`.
pub fn load_jacobian_checked(path: &Path, expected: &CacheHeader) -> Result<SensitivityMatrix> {
    read(path, Some(expected))
}

/// Reads only the header after checking the magic bytes.
pub fn read_header(path: &Path) -> Result<CacheHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    read_header_from(&mut r, path)
}

fn read_header_from(r: &mut impl Read, path: &Path) -> Result<CacheHeader> {
    let mut bytes = [0u8; HEADER_LEN];
    let got = read_up_to(r, &mut bytes).map_err(|e| Error::io(path, e))?;
    if got < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CacheError::BadMagic(path.to_path_buf()).into());
    }
    if got < HEADER_LEN {
        return Err(CacheError::Truncated(path.to_path_buf()).into());
    }
    Ok(CacheHeader::decode(&bytes))
}

fn read(path: &Path, expected: Option<&CacheHeader>) -> Result<SensitivityMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::with_capacity(1 << 20, file);
    let header = read_header_from(&mut r, path)?;
    if let Some(want) = expected {
        if let Some((field, cached, expected)) = header.first_mismatch(want) {
            return Err(CacheError::HeaderMismatch {
                path: path.to_path_buf(),
                field,
                cached,
                expected,
            }
            .into());
        }
    }
    let total = HEADER_LEN as u128 + header.body_len() + 8;
    let file_len = file_len as u128;
    if file_len < total {
        return Err(CacheError::Truncated(path.to_path_buf()).into());
    }
    if file_len > total {
        return Err(CacheError::TrailingBytes(path.to_path_buf()).into());
    }

    let mut hasher = FnvHasher::default();
    hasher.write(&header.encode());
    let (n_rows, n_pixels) = (header.n_rows(), header.n_pixels as usize);
    let mut data = vec![0.0f32; n_rows * n_pixels];
    let mut row = vec![0u8; n_pixels * 4];
    let io = |e: std::io::Error| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CacheError::Truncated(path.to_path_buf()).into(),
        _ => Error::io(path, e),
    };
    for rr in 0..n_rows {
        r.read_exact(&mut row).map_err(io)?;
        hasher.write(&row);
        for (p, chunk) in row.chunks_exact(4).enumerate() {
            data[p * n_rows + rr] = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    let mut trailer = [0u8; 8];
    r.read_exact(&mut trailer).map_err(io)?;
    let stored = u64::from_le_bytes(trailer);
    let computed = hasher.finish();
    if stored != computed {
        return Err(CacheError::ChecksumMismatch {
            path: path.to_path_buf(),
            stored,
            computed,
        }
        .into());
    }
    let props = OpticalProperties::new(header.mu_a, header.mu_s_prime, header.refractive_index)
        .map_err(|e| Error::Config(format!("jacobian cache {}: {e}", path.display())))?;
    SensitivityMatrix::from_columns(
        header.n_sources as usize,
        header.n_detectors as usize,
        header.n_bins as usize,
        n_pixels,
        header.dt_ns,
        header.resolution_cm,
        header.radius_cm,
        props,
        data,
    )
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..])? {
            0 => break,
            n => got += n,
        }
    }
    Ok(got)
}
