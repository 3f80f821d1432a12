use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VEExample;
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "snli-ve";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Writes a header line followed by one JSON object per example.
pub fn write_examples_to<W: Write>(mut w: W, examples: &[VEExample]) -> std::io::Result<()> {
    let header = Header { format: FORMAT_NAME.into(), version: FORMAT_VERSION };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_examples(path: &Path, examples: &[VEExample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_examples_to(BufWriter::new(file), examples).map_err(|e| Error::io(path, e))
}

/// Reads a dataset file. A zero-byte input is an empty dataset. `source`
/// names the input in error locations.
pub fn read_examples_from<R: Read>(r: R, source: &str) -> Result<Vec<VEExample>> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let at = |i: usize| format!("{source}:{}", i + 1);
    let Some((i, first)) = lines.next() else {
        return Ok(Vec::new());
    };
    let first = first.map_err(|e| Error::io(source, e))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::format(at(i), format!("bad header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(Error::format(at(i), format!("format {:?}, expected {FORMAT_NAME:?}", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::format(at(i), format!("version {}, this build reads {FORMAT_VERSION}", header.version)));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: VEExample = serde_json::from_str(&line).map_err(|e| Error::format(at(i), e.to_string()))?;
        ex.validate().map_err(|e| Error::format(at(i), e.to_string()))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn read_examples(path: &Path) -> Result<Vec<VEExample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_examples_from(file, &path.display().to_string())
}
