//! Line-delimited JSON dataset files: one [`ClipRecord`] per line.
//!
//! Feature values are stored as 32-bit floats printed with the shortest
//! round-trip representation (at most 9 significant digits), so writing a
//! file that was just read reproduces it byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::record::{ClipRecord, Dataset};
use crate::graph::EntityKind;
use crate::{Error, Result};

/// Reads and validates a dataset file; the result is grouped by video and
/// sorted by timestamp.
pub fn read_clips(path: impl AsRef<Path>) -> Result<Vec<ClipRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records = parse_clips(BufReader::new(file), &path.display().to_string())?;
    Ok(Dataset::from_records(records)?.into_records())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_records(read_clips(path)?)
}

/// Parses line-delimited records from any reader; `origin` names the source in errors.
pub fn parse_clips<R: Read>(reader: BufReader<R>, origin: &str) -> Result<Vec<ClipRecord>> {
    let mut records = Vec::new();
    let mut widths: [Option<(usize, usize)>; 2] = [None, None];
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse { path: origin.into(), line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ClipRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { path: origin.into(), line: lineno, msg: e.to_string() })?;
        validate(&record, origin, lineno, &mut widths)?;
        records.push(record);
    }
    Ok(records)
}

fn validate(record: &ClipRecord, origin: &str, line: usize, widths: &mut [Option<(usize, usize)>; 2]) -> Result<()> {
    let invalid = |field: &'static str, msg: String| Error::Invalid { path: origin.into(), line, field, msg };
    if record.video_id.is_empty() {
        return Err(invalid("video_id", "must not be empty".into()));
    }
    for (i, e) in record.entities.iter().enumerate() {
        if !(0.0..=1.0).contains(&e.score) {
            return Err(invalid("score", format!("entity {i}: {} is outside [0, 1]", e.score)));
        }
        if e.feature.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature", format!("entity {i}: non-finite value")));
        }
        if e.kind == EntityKind::Object && e.labels.is_some() {
            return Err(invalid("labels", format!("entity {i}: only actors carry labels")));
        }
        let slot = match e.kind {
            EntityKind::Actor => 0,
            EntityKind::Object => 1,
        };
        match widths[slot] {
            None => widths[slot] = Some((e.feature.len(), line)),
            Some((w, _)) if w != e.feature.len() => {
                return Err(Error::WidthMismatch { kind: e.kind.as_str(), expected: w, found: e.feature.len(), line });
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Writes records in canonical form, one per line, in the given order.
pub fn write_clips(path: impl AsRef<Path>, records: &[ClipRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_clips_to(&mut w, records).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_clips_to<W: Write>(w: &mut W, records: &[ClipRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}
