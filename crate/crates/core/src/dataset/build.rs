use std::path::{Path, PathBuf};

use super::{convert_records, parse_snli, partition_by_image, write_examples, DatasetStats, MalformedLine, Partition, SplitSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SourceReport {
    pub path: PathBuf,
    pub records: usize,
    pub malformed: Vec<MalformedLine>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Build {
    pub partition: Partition,
    pub stats: DatasetStats,
    pub sources: Vec<SourceReport>,
    /// Records without a consensus label.
    pub skipped: usize,
    /// Pair ids whose hypothesis tokenizes to nothing.
    pub empty_hypotheses: Vec<String>,
}

/// SNLI files in, SNLI-VE splits out: parse, convert, route by image.
pub fn build_dataset(snli_files: &[PathBuf], spec: &SplitSpec, strict: bool) -> Result<Build> {
    spec.validate()?;
    let mut examples = Vec::new();
    let mut sources = Vec::new();
    let mut skipped = 0;
    let mut empty_hypotheses = Vec::new();
    for path in snli_files {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed = parse_snli(std::io::BufReader::new(file), strict).map_err(|e| match e {
            Error::Format { location, detail } => Error::format(format!("{}: {location}", path.display()), detail),
            other => other,
        })?;
        let conversion = convert_records(&parsed.records)?;
        sources.push(SourceReport { path: path.clone(), records: parsed.records.len(), malformed: parsed.malformed });
        skipped += conversion.skipped;
        empty_hypotheses.extend(conversion.empty_hypotheses);
        examples.extend(conversion.examples);
    }
    let partition = partition_by_image(examples, spec)?;
    let stats = DatasetStats::from_partition(&partition);
    Ok(Build { partition, stats, sources, skipped, empty_hypotheses })
}

/// Writes `train.jsonl`, `val.jsonl` and `test.jsonl` under `dir`.
pub fn write_partition(dir: &Path, partition: &Partition) -> Result<[PathBuf; 3]> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ["train", "val", "test"].map(|s| dir.join(format!("{s}.jsonl")));
    for ((_, split), path) in partition.splits().iter().zip(&paths) {
        write_examples(path, split)?;
    }
    Ok(paths)
}
