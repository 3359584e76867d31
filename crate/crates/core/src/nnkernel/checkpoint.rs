//! Binary container of named tensors.
//!
//! Records are written in name order, each as: name byte length (`u64` LE),
//! UTF-8 name, rank (`u64` LE), each dimension (`u64` LE), then the values
//! (`f64` LE).

use std::io::{self, Read, Write};

use super::{ParamSet, Tensor};
use crate::{Error, Result};

pub fn write_checkpoint<W: Write>(params: &ParamSet, mut w: W) -> Result<()> {
    for id in params.sorted_ids() {
        let p = params.get(id);
        w.write_all(&(p.name.len() as u64).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        let shape = p.tensor.shape();
        w.write_all(&(shape.len() as u64).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<Option<u64>> {
    let mut buf = [0u8; 8];
    let mut got = 0;
    while got < 8 {
        match r.read(&mut buf[got..])? {
            0 if got == 0 => return Ok(None),
            0 => return Err(io::ErrorKind::UnexpectedEof.into()),
            n => got += n,
        }
    }
    Ok(Some(u64::from_le_bytes(buf)))
}

fn need<R: Read>(r: &mut R) -> Result<u64> {
    read_u64(r)?.ok_or_else(|| Error::Checkpoint("truncated record".into()))
}

/// Reads every record in file order.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut out = Vec::new();
    while let Some(name_len) = read_u64(&mut r)? {
        if name_len > 1 << 20 {
            return Err(Error::Checkpoint(format!("implausible name length {name_len}")));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let rank = need(&mut r)?;
        if rank > 16 {
            return Err(Error::Checkpoint(format!("implausible rank {rank} for {name}")));
        }
        let shape = (0..rank).map(|_| need(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

/// Overwrites parameter values from a checkpoint; names and shapes must match exactly.
pub fn load_into(params: &mut ParamSet, records: Vec<(String, Tensor)>) -> Result<()> {
    if records.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model has {}",
            records.len(),
            params.len()
        )));
    }
    for (name, tensor) in records {
        let id = params
            .id(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let p = params.get_mut(id);
        if p.tensor.shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?} in checkpoint, {:?} in model",
                tensor.shape(),
                p.tensor.shape()
            )));
        }
        p.tensor = tensor;
    }
    Ok(())
}
