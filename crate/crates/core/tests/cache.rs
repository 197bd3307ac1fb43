mod common;

use std::path::Path;

use gsdot_core::error::{CacheError, Error};
use gsdot_core::forward::SensitivityMatrix;
use gsdot_core::io::{load_jacobian, load_jacobian_checked, read_header, save_jacobian, CacheHeader};

fn same(a: &SensitivityMatrix, b: &SensitivityMatrix) -> bool {
    CacheHeader::of(a) == CacheHeader::of(b)
        && a.as_column_major().len() == b.as_column_major().len()
        && a
            .as_column_major()
            .iter()
            .zip(b.as_column_major())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

fn saved(dir: &Path) -> (common::Small, std::path::PathBuf) {
    let s = common::small();
    let path = dir.join("j.gsdj");
    save_jacobian(&s.j, &path).unwrap();
    (s, path)
}

fn cache_err(r: gsdot_core::Result<SensitivityMatrix>) -> CacheError {
    match r {
        Err(Error::Cache(e)) => e,
        Err(e) => panic!("expected a cache error, got {e}"),
        Ok(_) => panic!("expected a cache error, got a matrix"),
    }
}

#[test]
fn round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (s, path) = saved(dir.path());
    let back = load_jacobian(&path).unwrap();
    assert!(same(&s.j, &back));
    assert_eq!(read_header(&path).unwrap(), CacheHeader::of(&s.j));
    let expected_len = 5 + 16 + 48 + s.j.n_rows() * s.j.n_pixels * 4 + 8;
    assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, expected_len);
    assert!(!path.with_extension("partial").exists());
}

#[test]
fn bad_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved(dir.path());
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(cache_err(load_jacobian(&path)), CacheError::BadMagic(_)));

    std::fs::write(&path, b"GS").unwrap();
    assert!(matches!(cache_err(load_jacobian(&path)), CacheError::BadMagic(_)));
}

#[test]
fn truncation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved(dir.path());
    let bytes = std::fs::read(&path).unwrap();
    for cut in [10, 69, 70, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(
            matches!(cache_err(load_jacobian(&path)), CacheError::Truncated(_)),
            "cut at {cut}"
        );
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved(dir.path());
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.push(0);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(cache_err(load_jacobian(&path)), CacheError::TrailingBytes(_)));
}

#[test]
fn flipped_body_bit_fails_the_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved(dir.path());
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        cache_err(load_jacobian(&path)),
        CacheError::ChecksumMismatch { .. }
    ));
}

#[test]
fn header_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let (s, path) = saved(dir.path());
    let good = CacheHeader::of(&s.j);
    assert!(same(&s.j, &load_jacobian_checked(&path, &good).unwrap()));

    let other_dt = CacheHeader {
        dt_ns: good.dt_ns / 2.0,
        ..good
    };
    match cache_err(load_jacobian_checked(&path, &other_dt)) {
        CacheError::HeaderMismatch { field, .. } => assert_eq!(field, "dt_ns"),
        e => panic!("unexpected {e}"),
    }
    let other_pixels = CacheHeader {
        n_pixels: good.n_pixels + 1,
        ..good
    };
    match cache_err(load_jacobian_checked(&path, &other_pixels)) {
        CacheError::HeaderMismatch { field, .. } => assert_eq!(field, "n_pixels"),
        e => panic!("unexpected {e}"),
    }
}
