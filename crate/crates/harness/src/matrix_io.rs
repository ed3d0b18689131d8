//! Dense matrix files.
//!
//! * Text: a header line `d n`, then `d·n` whitespace-separated values in
//!   column-major order.
//! * Binary: a 16-byte header holding `d` and `n` as little-endian `u64`,
//!   then `d·n` little-endian `f64` values in column-major order.
//!
//! Row and column indices are 0-based wherever they appear.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Text,
    Binary,
}

impl MatrixFormat {
    /// `.bin` selects the binary format; anything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Self::Binary,
            _ => Self::Text,
        }
    }
}

pub fn write_text<W: Write>(mut w: W, a: &DMatrix<f64>) -> Result<()> {
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for col in a.column_iter() {
        let line: Vec<String> = col.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_text<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut tokens = text.split_whitespace();
    let mut dim = |name: &str| -> Result<usize> {
        tokens.next().with_context(|| format!("missing {name} in header"))?.parse().with_context(|| format!("bad {name}"))
    };
    let (d, n) = (dim("d")?, dim("n")?);
    let values = tokens.map(|t| t.parse::<f64>().with_context(|| format!("bad value `{t}`"))).collect::<Result<Vec<_>>>()?;
    if values.len() != d * n {
        bail!("expected {} values for a {d} x {n} matrix, found {}", d * n, values.len());
    }
    Ok(DMatrix::from_vec(d, n, values))
}

pub fn write_binary<W: Write>(mut w: W, a: &DMatrix<f64>) -> Result<()> {
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for v in a.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).context("truncated header")?;
    let d = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = d.checked_mul(n).and_then(|k| k.checked_mul(8)).context("dimensions overflow")?;
    if bytes.len() != expected {
        bail!("expected {expected} bytes of data for a {d} x {n} matrix, found {}", bytes.len());
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DMatrix::from_vec(d, n, values))
}

pub fn save(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?);
    match MatrixFormat::from_path(path) {
        MatrixFormat::Text => write_text(&mut w, a)?,
        MatrixFormat::Binary => write_binary(&mut w, a)?,
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DMatrix<f64>> {
    let r = BufReader::new(File::open(path).with_context(|| format!("cannot read {}", path.display()))?);
    match MatrixFormat::from_path(path) {
        MatrixFormat::Text => read_text(r),
        MatrixFormat::Binary => read_binary(r),
    }
}
