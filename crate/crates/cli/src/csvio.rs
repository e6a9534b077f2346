use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Write one report table: header row, then rows in the order given.
/// Quoting is applied only where required, so output bytes are a pure
/// function of the data.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    R: Serialize,
    I: IntoIterator<Item = R>,
{
    let file = File::create(path).map_err(|e| {
        CliError::Internal(format!("cannot create {}: {e}", path.display()))
    })?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let fail = |e: csv::Error| CliError::Internal(format!("writing {}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.flush()
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Read a table written by an earlier stage. Failures are data errors: the
/// file is an input here, whatever produced it.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row.map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?);
    }
    Ok(out)
}

/// Size and SHA-256 of a file, streamed.
pub fn file_digest(path: &Path) -> Result<(u64, String), CliError> {
    let mut file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((total, format!("{:x}", hasher.finalize())))
}
