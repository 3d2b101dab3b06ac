//! Dataset records, the line-delimited file format, and the synthetic
//! spatio-temporal interaction generator.

mod jsonl;
mod record;
pub mod synth;

pub use jsonl::{parse_clips, read_clips, read_dataset, write_clips, write_clips_to};
pub use record::{ClipRecord, Dataset, EntityDetection, Video};
