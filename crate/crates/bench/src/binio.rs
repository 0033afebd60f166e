//! Little-endian primitives shared by the checkpoint and cache formats.

use std::io::{self, Read, Write};

pub fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn put_f64s(w: &mut impl Write, values: &[f64]) -> io::Result<()> {
    put_u64(w, values.len() as u64)?;
    for v in values {
        w.write_all(&v.to_bits().to_le_bytes())?;
    }
    Ok(())
}

pub fn put_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    put_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes())
}

pub fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// A length read from the stream, bounded to reject corrupt headers early.
pub fn get_len(r: &mut impl Read, limit: u64) -> io::Result<usize> {
    let n = get_u64(r)?;
    if n > limit {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("length {n} exceeds {limit}"),
        ));
    }
    Ok(n as usize)
}

pub fn get_f64s(r: &mut impl Read) -> io::Result<Vec<f64>> {
    let n = get_len(r, 1 << 32)?;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_bits(u64::from_le_bytes(b)));
    }
    Ok(out)
}

pub fn get_str(r: &mut impl Read) -> io::Result<String> {
    let n = get_len(r, 1 << 16)?;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn expect_magic(r: &mut impl Read, magic: &[u8; 8]) -> io::Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "unrecognised file header"));
    }
    Ok(())
}
