use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nirvar::dgp::PanelTensor;
use nirvar::{NirvarError, Result};
use serde::Serialize;

pub fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| NirvarError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

pub fn read_panel(path: Option<&Path>) -> Result<PanelTensor> {
    let path = path.ok_or_else(|| NirvarError::Config("no input panel given (set `input` or --input)".into()))?;
    PanelTensor::read_csv(open(path)?)
}

/// Convert a 1-based feature index from a config into a 0-based one.
pub fn feature_index(one_based: usize, q: usize) -> Result<usize> {
    if one_based == 0 || one_based > q {
        return Err(NirvarError::Config(format!("target feature {one_based} not in 1..={q}")));
    }
    Ok(one_based - 1)
}
