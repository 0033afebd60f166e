//! On-disk cache of windowed sample sets keyed by a content hash of the
//! series bytes and the window parameters.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tkat_core::data::{prepare_dataset, MinMaxScaler, PreparedData, RawSeriesTable, WindowSample, WindowSpec};

use crate::binio::{expect_magic, get_f64s, get_len, get_u64, put_f64s, put_u64};
use crate::error::{BenchError, Result};

const MAGIC: &[u8; 8] = b"TKATSMP1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of `(series bytes, past_len, horizon, median_window)`.
pub fn cache_key(series_sha256: &str, spec: &WindowSpec) -> String {
    let mut h = Sha256::new();
    h.update(series_sha256.as_bytes());
    for v in [spec.past_len, spec.horizon, spec.median_window] {
        h.update((v as u64).to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

fn write_samples(w: &mut impl Write, samples: &[WindowSample]) -> io::Result<()> {
    put_u64(w, samples.len() as u64)?;
    for s in samples {
        put_u64(w, s.anchor as u64)?;
        put_f64s(w, &s.past)?;
        put_f64s(w, &s.future_known)?;
        put_f64s(w, &s.target)?;
    }
    Ok(())
}

fn read_samples(r: &mut impl Read) -> io::Result<Vec<WindowSample>> {
    let n = get_len(r, 1 << 32)?;
    (0..n)
        .map(|_| {
            Ok(WindowSample {
                anchor: get_len(r, 1 << 48)?,
                past: get_f64s(r)?,
                future_known: get_f64s(r)?,
                target: get_f64s(r)?,
            })
        })
        .collect()
}

pub fn write_prepared(w: &mut impl Write, data: &PreparedData) -> io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [
        data.spec.past_len,
        data.spec.horizon,
        data.spec.median_window,
        data.n_assets,
        data.undefined_rows,
        data.zero_median_rows,
    ] {
        put_u64(w, v as u64)?;
    }
    put_f64s(w, &data.scaler.max)?;
    for set in [&data.train, &data.val, &data.test] {
        write_samples(w, set)?;
    }
    Ok(())
}

pub fn read_prepared(r: &mut impl Read) -> io::Result<PreparedData> {
    expect_magic(r, MAGIC)?;
    let mut header = [0usize; 6];
    for h in &mut header {
        *h = get_u64(r)? as usize;
    }
    let [past_len, horizon, median_window, n_assets, undefined_rows, zero_median_rows] = header;
    let max = get_f64s(r)?;
    let train = read_samples(r)?;
    let val = read_samples(r)?;
    let test = read_samples(r)?;
    Ok(PreparedData {
        train,
        val,
        test,
        scaler: MinMaxScaler { max },
        spec: WindowSpec {
            past_len,
            horizon,
            median_window,
        },
        n_assets,
        undefined_rows,
        zero_median_rows,
    })
}

/// Loads the cached sample set or builds and stores it. Unreadable or
/// mismatching cache files are rebuilt.
pub fn prepare_cached(
    raw: &RawSeriesTable,
    series_sha256: &str,
    spec: &WindowSpec,
    dir: Option<&Path>,
) -> Result<PreparedData> {
    let Some(dir) = dir else {
        return Ok(prepare_dataset(raw, spec)?);
    };
    let path: PathBuf = dir.join(format!("{}.samples", cache_key(series_sha256, spec)));
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(data) = read_prepared(&mut &bytes[..]) {
            if data.spec == *spec && data.n_assets == raw.columns.len() {
                return Ok(data);
            }
        }
    }
    let data = prepare_dataset(raw, spec)?;
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut buf = Vec::new();
    write_prepared(&mut buf, &data).map_err(|e| BenchError::io(&path, e))?;
    // write then rename so concurrent readers never see a partial file
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| BenchError::io(dir, e))?;
    std::fs::write(tmp.path(), &buf).map_err(|e| BenchError::io(tmp.path(), e))?;
    tmp.persist(&path).map_err(|e| BenchError::io(&path, e.error))?;
    Ok(data)
}
