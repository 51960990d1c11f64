//! Binary dumps of operators and phase-space fields, and CSV helpers.
//!
//! Operator files: a 64-byte ASCII header `SCLAB-OP d=.. n=.. L=.. hbar=..`
//! padded with spaces and ending in `\n`, then the matrix (not the kernel)
//! as little-endian f64 (re, im) pairs, row-major.
//!
//! Phase-space files: a 64-byte header `SCLAB-PSF nx=.. nxi=..`, then four
//! little-endian f64 (L, hbar, ξ_0, dξ), one f64 signed flag, then the values
//! in the in-memory order (x major).

use crate::error::{Error, Result};
use crate::grid::{GridSpec, OperatorMatrix};
use crate::phase::PhaseSpaceField;
use faer::Mat;
use num_complex::Complex64 as C;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

pub const HEADER_LEN: usize = 64;

fn pad_header(text: &str) -> Result<[u8; HEADER_LEN]> {
    if text.len() >= HEADER_LEN {
        return Err(Error::Format(format!("header `{text}` does not fit in {HEADER_LEN} bytes")));
    }
    let mut buf = [b' '; HEADER_LEN];
    buf[..text.len()].copy_from_slice(text.as_bytes());
    buf[HEADER_LEN - 1] = b'\n';
    Ok(buf)
}

fn parse_header(buf: &[u8], magic: &str) -> Result<HashMap<String, String>> {
    let text = std::str::from_utf8(buf).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let mut parts = text.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::Format(format!("expected `{magic}` header")));
    }
    parts
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Format(format!("bad header field `{kv}`")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(h: &HashMap<String, String>, key: &str) -> Result<T> {
    h.get(key)
        .ok_or_else(|| Error::Format(format!("header lacks `{key}`")))?
        .parse()
        .map_err(|_| Error::Format(format!("header field `{key}` does not parse")))
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
}

pub fn write_operator(w: &mut impl Write, op: &OperatorMatrix) -> Result<()> {
    let g = op.grid;
    w.write_all(&pad_header(&format!("SCLAB-OP d={} n={} L={} hbar={}", g.d, g.n, g.l, g.hbar))?)?;
    let dim = g.dim();
    let mut bytes = Vec::with_capacity(dim * dim * 16);
    for i in 0..dim {
        for j in 0..dim {
            let z = op.matrix[(i, j)];
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_operator(r: &mut impl Read) -> Result<OperatorMatrix> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let h = parse_header(&head, "SCLAB-OP")?;
    let grid = GridSpec::new(field(&h, "d")?, field(&h, "n")?, field(&h, "L")?, field(&h, "hbar")?)?;
    let dim = grid.dim();
    let v = read_f64s(r, 2 * dim * dim)?;
    let m = Mat::from_fn(dim, dim, |i, j| {
        let k = 2 * (i * dim + j);
        C::new(v[k], v[k + 1])
    });
    OperatorMatrix::new(grid, m)
}

pub fn save_operator(path: &Path, op: &OperatorMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_operator(&mut f, op)?;
    f.flush()?;
    Ok(())
}

pub fn load_operator(path: &Path) -> Result<OperatorMatrix> {
    read_operator(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_field(w: &mut impl Write, f: &PhaseSpaceField) -> Result<()> {
    w.write_all(&pad_header(&format!("SCLAB-PSF nx={} nxi={}", f.grid.n, f.n_xi()))?)?;
    let mut bytes = Vec::with_capacity(8 * (5 + f.values.len()));
    let signed = if f.signed { 1.0 } else { 0.0 };
    for v in [f.grid.l, f.grid.hbar, f.xi[0], f.dxi(), signed].iter().chain(&f.values) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<PhaseSpaceField> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let h = parse_header(&head, "SCLAB-PSF")?;
    let nx: usize = field(&h, "nx")?;
    let nxi: usize = field(&h, "nxi")?;
    let meta = read_f64s(r, 5)?;
    let grid = GridSpec::line(nx, meta[0], meta[1])?;
    let xi: Vec<f64> = (0..nxi).map(|k| meta[2] + k as f64 * meta[3]).collect();
    let values = read_f64s(r, nx * nxi)?;
    PhaseSpaceField::new(grid, xi, values, meta[4] != 0.0)
}

pub fn save_field(path: &Path, f: &PhaseSpaceField) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_field(&mut out, f)?;
    out.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<PhaseSpaceField> {
    read_field(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Header line plus rows, `,` separated, `\n` terminated.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormRow {
    pub name: String,
    pub p: f64,
    /// None for unweighted norms.
    pub weight_n: Option<u32>,
    pub value: f64,
}

pub fn norm_table_csv(rows: &[NormRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                fmt_f64(r.p),
                r.weight_n.map(|n| n.to_string()).unwrap_or_default(),
                fmt_f64(r.value),
            ]
        })
        .collect();
    csv(&["name", "p", "weight_n", "value"], &body)
}
