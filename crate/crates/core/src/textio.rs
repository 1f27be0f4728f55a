//! Shared helpers for the CSV and text formats.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{KvcError, Result};

pub(crate) fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| KvcError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let found = reader
        .headers()
        .map_err(|e| KvcError::format(path, 1, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(KvcError::format(
            path,
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found),
        ));
    }
    Ok(reader)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| KvcError::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| KvcError::io(path, e))?;
    Ok(BufWriter::new(file))
}
