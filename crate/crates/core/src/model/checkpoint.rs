//! Binary checkpoint: `"GIST"`, version (u32), arch (u8), layer count L
//! (u32), L+1 dims (u32 each), then every weight row-major as f32. All
//! integers and floats are little-endian.

use std::io::{Read, Write};

use super::{Arch, GcnModel};
use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GIST";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar>(model: &GcnModel<T>, mut w: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * model.dims.len() + 4 * model.num_params());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(match model.arch {
        Arch::Gcn => 0,
        Arch::SageMean => 1,
    });
    buf.extend_from_slice(&(model.num_layers() as u32).to_le_bytes());
    for &d in &model.dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for weight in &model.weights {
        for v in weight.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("truncated file".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_checkpoint<T: Scalar>(mut r: impl Read) -> Result<GcnModel<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut arch = [0u8; 1];
    r.read_exact(&mut arch).map_err(truncated)?;
    let arch = match arch[0] {
        0 => Arch::Gcn,
        1 => Arch::SageMean,
        a => return Err(Error::Checkpoint(format!("unknown arch tag {a}"))),
    };
    let layers = read_u32(&mut r)? as usize;
    if layers == 0 || layers > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let dims = (0..=layers)
        .map(|_| read_u32(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(layers);
    for l in 0..layers {
        let (rows, cols) = (arch.row_multiplier() * dims[l], dims[l + 1]);
        let mut bytes = vec![0u8; 4 * rows * cols];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        weights.push(DenseMatrix::new(rows, cols, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after weights".into()));
    }
    GcnModel::from_weights(arch, dims, weights).map_err(|e| Error::Checkpoint(e.to_string()))
}
