//! Checkpoint format: a small binary container holding the architecture
//! description as JSON, every named parameter tensor, and auxiliary named
//! vectors such as the standardization statistics. All numbers are
//! little-endian; tensor data is f64.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamSet, TfdnetModel};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 7] = b"TFDNET1";
pub const VERSION: u32 = 1;

/// Sanity ceiling on counts and lengths read from a file, to fail fast on
/// corrupt headers instead of attempting huge allocations.
const MAX_REASONABLE: u64 = 1 << 33;
const MAX_NAME: u64 = 4096;

/// Everything stored in a checkpoint file.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamSet,
    /// Named auxiliary vectors, e.g. `norm.mean` and `norm.std`.
    pub extras: IndexMap<String, Vec<f64>>,
}

fn corrupt(path: &Path, message: impl Into<String>) -> Error {
    Error::CorruptCheckpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(s.len() as u64)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R, path: &Path, what: &str) -> Result<String> {
    let len = r
        .read_u64::<LittleEndian>()
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    if len > MAX_NAME {
        return Err(corrupt(path, format!("{what} length {len} is implausible")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    String::from_utf8(buf).map_err(|_| corrupt(path, format!("{what} is not valid UTF-8")))
}

fn read_f64s<R: Read>(r: &mut R, count: usize, path: &Path) -> Result<Vec<f64>> {
    let mut data = vec![0.0f64; count];
    r.read_f64_into::<LittleEndian>(&mut data)
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    Ok(data)
}

/// Save a model's architecture and parameters plus auxiliary vectors.
pub fn save(
    path: &Path,
    config: &ModelConfig,
    params: &ParamSet,
    extras: &[(String, Vec<f64>)],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let ctx = || format!("write {}", path.display());
    w.write_all(MAGIC).map_err(|e| Error::io(ctx(), e))?;
    w.write_u32::<LittleEndian>(VERSION).map_err(|e| Error::io(ctx(), e))?;
    let config_json = serde_json::to_string(config)
        .map_err(|e| Error::json(format!("encode architecture for {}", path.display()), e))?;
    write_str(&mut w, &config_json).map_err(|e| Error::io(ctx(), e))?;
    w.write_u64::<LittleEndian>(params.len() as u64)
        .map_err(|e| Error::io(ctx(), e))?;
    for (name, p) in params.iter() {
        write_str(&mut w, name).map_err(|e| Error::io(ctx(), e))?;
        w.write_u32::<LittleEndian>(p.shape.len() as u32)
            .map_err(|e| Error::io(ctx(), e))?;
        for &d in &p.shape {
            w.write_u64::<LittleEndian>(d as u64).map_err(|e| Error::io(ctx(), e))?;
        }
        for &v in &p.data {
            w.write_f64::<LittleEndian>(v).map_err(|e| Error::io(ctx(), e))?;
        }
    }
    w.write_u64::<LittleEndian>(extras.len() as u64)
        .map_err(|e| Error::io(ctx(), e))?;
    for (name, data) in extras {
        write_str(&mut w, name).map_err(|e| Error::io(ctx(), e))?;
        w.write_u64::<LittleEndian>(data.len() as u64)
            .map_err(|e| Error::io(ctx(), e))?;
        for &v in data {
            w.write_f64::<LittleEndian>(v).map_err(|e| Error::io(ctx(), e))?;
        }
    }
    w.flush().map_err(|e| Error::io(ctx(), e))?;
    Ok(())
}

/// Read a checkpoint file without validating it against an architecture.
pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    if &magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported version {version}, expected {VERSION}")));
    }
    let config_json = read_str(&mut r, path, "architecture block")?;
    let config: ModelConfig = serde_json::from_str(&config_json)
        .map_err(|e| corrupt(path, format!("architecture block is not valid: {e}")))?;
    let param_count = r
        .read_u64::<LittleEndian>()
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    if param_count > MAX_REASONABLE {
        return Err(corrupt(path, format!("parameter count {param_count} is implausible")));
    }
    let mut params = ParamSet::new();
    for _ in 0..param_count {
        let name = read_str(&mut r, path, "parameter name")?;
        let rank = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if rank > 8 {
            return Err(corrupt(path, format!("parameter {name} has implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut count: u64 = 1;
        for _ in 0..rank {
            let d = r
                .read_u64::<LittleEndian>()
                .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
            count = count.saturating_mul(d);
            shape.push(d as usize);
        }
        if count > MAX_REASONABLE {
            return Err(corrupt(path, format!("parameter {name} has implausible size {count}")));
        }
        let data = read_f64s(&mut r, count as usize, path)?;
        params.insert(name, data, shape);
    }
    let extra_count = r
        .read_u64::<LittleEndian>()
        .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    if extra_count > MAX_REASONABLE {
        return Err(corrupt(path, format!("auxiliary count {extra_count} is implausible")));
    }
    let mut extras = IndexMap::new();
    for _ in 0..extra_count {
        let name = read_str(&mut r, path, "auxiliary name")?;
        let len = r
            .read_u64::<LittleEndian>()
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if len > MAX_REASONABLE {
            return Err(corrupt(path, format!("auxiliary {name} has implausible size {len}")));
        }
        let data = read_f64s(&mut r, len as usize, path)?;
        extras.insert(name, data);
    }
    Ok(Checkpoint { config, params, extras })
}

/// Load a checkpoint and rebuild the model, validating every parameter
/// against the stored architecture.
pub fn load_model(path: &Path) -> Result<(TfdnetModel, IndexMap<String, Vec<f64>>)> {
    let ckpt = load(path)?;
    let model = TfdnetModel::from_parts(ckpt.config, ckpt.params)?;
    Ok((model, ckpt.extras))
}
