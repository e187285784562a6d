//! Binary parameter checkpoints.
//!
//! Layout, all little-endian: 8 magic bytes, then `hash_dim`, `embed_dim`,
//! `ngram_size`, `max_seq_len` as u64, then the projection as row-major f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"CRLMENC1";

pub fn write_checkpoint<W: Write>(mut w: W, params: &EncoderParams, config: &EncoderConfig) -> std::io::Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    for v in [params.hash_dim(), params.embed_dim(), config.ngram_size, config.max_seq_len] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in params.projection().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads parameters and the featurization settings they were trained with.
/// The returned config carries seed 0; the seed only matters for init.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(EncoderParams, EncoderConfig)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut fields = [0usize; 4];
    for f in &mut fields {
        *f = usize::try_from(read_u64(&mut r)?).map_err(|_| Error::Checkpoint("header value overflows".into()))?;
    }
    let [hash_dim, embed_dim, ngram_size, max_seq_len] = fields;
    let config = EncoderConfig { max_seq_len, ngram_size, hash_dim, embed_dim, seed: 0 };
    config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

    let n = hash_dim * embed_dim;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(|e| Error::Checkpoint(format!("truncated payload: {e}")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::Checkpoint(e.to_string()))? != 0 {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let projection = Array2::from_shape_vec((hash_dim, embed_dim), values).expect("length checked above");
    let params = EncoderParams::from_projection(projection).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((params, config))
}

pub fn save_checkpoint(path: &Path, params: &EncoderParams, config: &EncoderConfig) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), params, config).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderParams, EncoderConfig)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;

    #[test]
    fn round_trip_and_layout() {
        let cfg = EncoderConfig { hash_dim: 16, embed_dim: 4, seed: 3, max_seq_len: 12, ngram_size: 2 };
        let p = init_params(&cfg);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p, &cfg).unwrap();
        assert_eq!(buf.len(), 8 + 4 * 8 + 16 * 4 * 8);
        assert_eq!(&buf[..8], b"CRLMENC1");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 16);
        assert_eq!(f64::from_le_bytes(buf[40..48].try_into().unwrap()), p.projection()[[0, 0]]);
        assert_eq!(f64::from_le_bytes(buf[48..56].try_into().unwrap()), p.projection()[[0, 1]]);

        let (q, qc) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(q, p);
        assert_eq!(qc, EncoderConfig { seed: 0, ..cfg });
    }

    #[test]
    fn rejects_corruption() {
        let cfg = EncoderConfig { hash_dim: 8, embed_dim: 2, ..EncoderConfig::default() };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &init_params(&cfg), &cfg).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
    }
}
