//! Versioned little-endian checkpoint of a trained model.
//!
//! Layout: magic `ASAPCKPT`, `u32` version, `u32`-length-prefixed config
//! text, `u32` input width, `u32` class count, `u32` tensor count, then per
//! tensor a `u32`-length-prefixed name, `u32` rows, `u32` cols and the
//! row-major `f64` data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::TrainConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::Model;

pub const MAGIC: &[u8; 8] = b"ASAPCKPT";
pub const VERSION: u32 = 1;

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > 1 << 24 {
        return Err(Error::Checkpoint(format!("string length {len} is implausible")));
    }
    let mut buf = vec![0; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &TrainConfig, model: &Model) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    write_str(&mut w, &config.to_text())?;
    w.write_u32::<LittleEndian>(model.config.in_dim as u32)?;
    w.write_u32::<LittleEndian>(model.config.n_classes as u32)?;
    let named = model.params.named();
    w.write_u32::<LittleEndian>(named.len() as u32)?;
    for (name, t) in named {
        write_str(&mut w, &name)?;
        w.write_u32::<LittleEndian>(t.rows() as u32)?;
        w.write_u32::<LittleEndian>(t.cols() as u32)?;
        for &v in t.data() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(TrainConfig, Model)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let config = TrainConfig::parse(&read_str(&mut r)?)?;
    let in_dim = r.read_u32::<LittleEndian>()? as usize;
    let n_classes = r.read_u32::<LittleEndian>()? as usize;
    let mut model = Model::new(config.model_config(in_dim, n_classes), 0)?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let expected: Vec<(String, (usize, usize))> =
        model.params.named().into_iter().map(|(n, t)| (n, t.shape())).collect();
    if count != expected.len() {
        return Err(Error::Checkpoint(format!("{count} tensors stored, model has {}", expected.len())));
    }
    let mut loaded = Vec::with_capacity(count);
    for (name, shape) in &expected {
        let stored = read_str(&mut r)?;
        let rows = r.read_u32::<LittleEndian>()? as usize;
        let cols = r.read_u32::<LittleEndian>()? as usize;
        if &stored != name || (rows, cols) != *shape {
            return Err(Error::Checkpoint(format!(
                "expected {name} {}x{}, found {stored} {rows}x{cols}",
                shape.0, shape.1
            )));
        }
        let mut data = vec![0.0; rows * cols];
        r.read_f64_into::<LittleEndian>(&mut data)?;
        loaded.push(Tensor::from_vec(rows, cols, data)?);
    }
    for (slot, t) in model.params.tensors_mut().into_iter().zip(loaded) {
        *slot = t;
    }
    Ok((config, model))
}
