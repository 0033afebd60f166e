//! Binary parameter checkpoints: every named tensor with its shape and the
//! exact bit pattern of each value.

use std::io::{self, Read, Write};
use std::path::Path;

use tkat_core::params::ParamStore;
use tkat_core::Tensor;

use crate::binio::{expect_magic, get_f64s, get_len, get_str, put_f64s, put_str, put_u64};
use crate::error::{BenchError, Result};

const MAGIC: &[u8; 8] = b"TKATCKP1";

pub fn write_checkpoint(w: &mut impl Write, store: &ParamStore) -> io::Result<()> {
    w.write_all(MAGIC)?;
    put_u64(w, store.len() as u64)?;
    for (name, t) in store.iter() {
        put_str(w, name)?;
        put_u64(w, t.shape().len() as u64)?;
        for &d in t.shape() {
            put_u64(w, d as u64)?;
        }
        put_f64s(w, t.data())?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> io::Result<ParamStore> {
    let invalid = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    expect_magic(r, MAGIC)?;
    let count = get_len(r, 1 << 20)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = get_str(r)?;
        let rank = get_len(r, 16)?;
        let shape = (0..rank).map(|_| get_len(r, 1 << 32)).collect::<io::Result<Vec<_>>>()?;
        let data = get_f64s(r)?;
        let t = Tensor::new(&shape, data).map_err(|e| invalid(format!("tensor `{name}`: {e}")))?;
        store.insert(name, t).map_err(|e| invalid(e.to_string()))?;
    }
    Ok(store)
}

pub fn save(path: &Path, store: &ParamStore) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, store).map_err(|e| BenchError::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| BenchError::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
    read_checkpoint(&mut &bytes[..]).map_err(|e| BenchError::io(path, e))
}

/// Copies a checkpoint into `store`, requiring identical names and shapes.
pub fn restore_into(store: &mut ParamStore, saved: &ParamStore) -> Result<()> {
    let mismatch = |m: String| BenchError::Config(format!("checkpoint does not match the model: {m}"));
    if store.len() != saved.len() {
        return Err(mismatch(format!("{} tensors vs {}", saved.len(), store.len())));
    }
    for ((name, t), (sname, st)) in store.iter().zip(saved.iter()) {
        if name != sname || t.shape() != st.shape() {
            return Err(mismatch(format!(
                "`{sname}` {:?} vs `{name}` {:?}",
                st.shape(),
                t.shape()
            )));
        }
    }
    store.load_tensors(saved.tensors().to_vec())?;
    Ok(())
}
