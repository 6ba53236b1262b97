//! ZIP archives of `.npy` members (the `.npz` convention).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;

use super::npy::{decode_tensor, encode_tensor, Tensor};
use crate::error::{Error, Result};

fn zip_err(path: &Path, e: zip::result::ZipError) -> Error {
    match e {
        zip::result::ZipError::Io(io) => Error::io(path, io),
        other => Error::Format {
            offset: 0,
            reason: format!("{}: {other}", path.display()),
        },
    }
}

/// Reads every member; keys are member names with any `.npy` suffix removed.
pub fn read_archive(path: impl AsRef<Path>) -> Result<BTreeMap<String, Tensor>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut zip = zip::ZipArchive::new(file).map_err(|e| zip_err(path, e))?;
    let mut out = BTreeMap::new();
    for i in 0..zip.len() {
        let mut member = zip.by_index(i).map_err(|e| zip_err(path, e))?;
        if member.is_dir() {
            continue;
        }
        let name = member.name().trim_end_matches(".npy").to_string();
        let mut bytes = Vec::with_capacity(member.size() as usize);
        member.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let tensor = decode_tensor(&bytes).map_err(|e| match e {
            Error::Format { offset, reason } => Error::Format {
                offset,
                reason: format!("member {name}: {reason}"),
            },
            other => other,
        })?;
        out.insert(name, tensor);
    }
    Ok(out)
}

/// Writes members uncompressed, in the given order, named `<role>.npy`.
pub fn write_archive(path: impl AsRef<Path>, members: &[(&str, &Tensor)]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut zip = zip::ZipWriter::new(file);
    // fixed timestamp keeps archives byte-stable
    let options = SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Stored)
        .last_modified_time(zip::DateTime::default());
    for (name, tensor) in members {
        zip.start_file(format!("{name}.npy"), options)
            .map_err(|e| zip_err(path, e))?;
        zip.write_all(&encode_tensor(tensor))
            .map_err(|e| Error::io(path, e))?;
    }
    zip.finish().map_err(|e| zip_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.npz");
        let a = Tensor::new(vec![2, 3], (0..6).map(|v| v as f64 * 0.25).collect()).unwrap();
        let b = Tensor::new(vec![2], vec![-1.0, 1.0]).unwrap();
        write_archive(&path, &[("W1", &a), ("b1", &b)]).unwrap();
        let back = read_archive(&path).unwrap();
        assert_eq!(back["W1"], a);
        assert_eq!(back["b1"], b);
        let first = std::fs::read(&path).unwrap();
        write_archive(&path, &[("W1", &a), ("b1", &b)]).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn garbage_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.npz");
        std::fs::write(&path, b"definitely not a zip").unwrap();
        assert!(matches!(read_archive(&path), Err(Error::Format { .. })));
    }
}
