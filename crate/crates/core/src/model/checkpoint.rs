//! Binary checkpoint container.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic        8 bytes  "STAGECKP"
//! version      u32      1
//! config_len   u64
//! config       config_len bytes of JSON (StageConfig)
//! n_blocks     u64
//! per block:
//!   name_len   u64
//!   name       name_len bytes of UTF-8
//!   rows       u64
//!   cols       u64
//!   data       rows*cols f64, row-major
//! ```
//!
//! Blocks appear in parameter declaration order; loading rebuilds the layout
//! from the config and requires every name and shape to match.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::StageConfig;
use super::params::ParameterSet;
use crate::numcore::Matrix;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"STAGECKP";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(w: &mut W, params: &ParameterSet) -> Result<()> {
    let io = |e| Error::io("<checkpoint>", e);
    let config = serde_json::to_vec(&params.config)?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(config.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&config).map_err(io)?;
    let blocks = params.store.blocks();
    w.write_all(&(blocks.len() as u64).to_le_bytes()).map_err(io)?;
    for b in blocks {
        w.write_all(&(b.name.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(b.name.as_bytes()).map_err(io)?;
        w.write_all(&(b.value.rows() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(b.value.cols() as u64).to_le_bytes()).map_err(io)?;
        for v in b.value.as_slice() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_bytes<R: Read>(r: &mut R, len: u64, what: &str) -> Result<Vec<u8>> {
    if len > 1 << 32 {
        return Err(Error::Checkpoint(format!("{what} length {len} is implausible")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated {what}: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<ParameterSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version).map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = read_u64(r)?;
    let config: StageConfig = serde_json::from_slice(&read_bytes(r, len, "config")?)?;
    let mut params = ParameterSet::init(&config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let n_blocks = read_u64(r)? as usize;
    if n_blocks != params.store.len() {
        return Err(Error::Checkpoint(format!("config defines {} blocks, file has {n_blocks}", params.store.len())));
    }
    for block in params.store.blocks_mut() {
        let len = read_u64(r)?;
        let name = String::from_utf8(read_bytes(r, len, "block name")?).map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
        if name != block.name {
            return Err(Error::Checkpoint(format!("expected block `{}`, found `{name}`", block.name)));
        }
        let (rows, cols) = (read_u64(r)? as usize, read_u64(r)? as usize);
        if (rows, cols) != block.value.shape() {
            return Err(Error::Checkpoint(format!(
                "block `{name}` is {rows}x{cols}, config expects {}x{}",
                block.value.rows(),
                block.value.cols()
            )));
        }
        let bytes = read_bytes(r, (rows * cols * 8) as u64, "block data")?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        block.value = Matrix::from_vec(rows, cols, data)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::Checkpoint(e.to_string()))? != 0 {
        return Err(Error::Checkpoint("trailing bytes after the last block".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParameterSet) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_checkpoint(&mut w, params)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParameterSet> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    read_checkpoint(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ParameterSet {
        let cfg = StageConfig { n_heads: 2, n_layers: 2, actor_width: 5, object_width: 9, n_classes: 3, ..StageConfig::default() };
        ParameterSet::init(&cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = small();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        let q = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(q.config, p.config);
        let bits = |p: &ParameterSet| p.store.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        let mut again = Vec::new();
        write_checkpoint(&mut again, &q).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = small();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).unwrap_err().to_string().contains("magic"));
        let truncated = &buf[..buf.len() - 3];
        assert!(read_checkpoint(&mut &truncated[..]).is_err());
        let mut longer = buf.clone();
        longer.push(0);
        assert!(read_checkpoint(&mut longer.as_slice()).is_err());
    }
}
