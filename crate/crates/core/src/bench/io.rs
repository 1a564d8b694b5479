//! Binary tensor and mask files.
//!
//! ```text
//! TNS3: b"TNS3" | version u8 (=1) | N1 N2 N3 as u64 LE | N1*N2*N3 f64 LE
//! MSK3: b"MSK3" | version u8 (=1) | N1 N2 N3 as u64 LE | N1*N2*N3 bytes (0 or 1)
//! ```
//!
//! Entries are in row-major order (last index fastest). Factor sets are
//! stored as JSON: `{"factors": [F_0, F_1, F_2]}` with each `F_d` a list of
//! rows.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::tensor::{Dims, FactorSet, Mask, Tensor3};

pub const TENSOR_MAGIC: &[u8; 4] = b"TNS3";
pub const MASK_MAGIC: &[u8; 4] = b"MSK3";
pub const FORMAT_VERSION: u8 = 1;

fn format_error(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}

fn write_header<W: Write>(out: &mut W, magic: &[u8; 4], dims: Dims) -> Result<()> {
    out.write_all(magic)?;
    out.write_all(&[FORMAT_VERSION])?;
    for n in dims {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_header<R: Read>(input: &mut R, magic: &[u8; 4], format: &'static str) -> Result<Dims> {
    let mut head = [0u8; 5];
    input
        .read_exact(&mut head)
        .map_err(|_| format_error(format, "truncated header"))?;
    if &head[..4] != magic {
        return Err(format_error(format, format!("bad magic {:?}", &head[..4])));
    }
    if head[4] != FORMAT_VERSION {
        return Err(format_error(format, format!("unsupported version {}", head[4])));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut word = [0u8; 8];
        input
            .read_exact(&mut word)
            .map_err(|_| format_error(format, "truncated header"))?;
        *d = usize::try_from(u64::from_le_bytes(word))
            .map_err(|_| format_error(format, "dimension overflows usize"))?;
    }
    Ok(dims)
}

fn read_payload<R: Read>(input: &mut R, len: usize, format: &'static str) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != len {
        return Err(format_error(
            format,
            format!("expected {len} payload bytes, found {}", payload.len()),
        ));
    }
    Ok(payload)
}

fn entry_count(dims: Dims, width: usize, format: &'static str) -> Result<usize> {
    dims.iter()
        .try_fold(width, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| format_error(format, "dimensions overflow"))
}

pub fn write_tensor<W: Write>(mut out: W, t: &Tensor3) -> Result<()> {
    write_header(&mut out, TENSOR_MAGIC, t.dims())?;
    let mut buf = Vec::with_capacity(t.len() * 8);
    for x in t.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut input: R) -> Result<Tensor3> {
    let dims = read_header(&mut input, TENSOR_MAGIC, "TNS3")?;
    let len = entry_count(dims, 8, "TNS3")?;
    let payload = read_payload(&mut input, len, "TNS3")?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor3::from_vec(dims, data)
}

pub fn write_mask<W: Write>(mut out: W, m: &Mask) -> Result<()> {
    write_header(&mut out, MASK_MAGIC, m.dims())?;
    let bytes: Vec<u8> = m.as_slice().iter().map(|&k| u8::from(k)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_mask<R: Read>(mut input: R) -> Result<Mask> {
    let dims = read_header(&mut input, MASK_MAGIC, "MSK3")?;
    let len = entry_count(dims, 1, "MSK3")?;
    let payload = read_payload(&mut input, len, "MSK3")?;
    let keep = payload
        .into_iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format_error("MSK3", format!("entry byte {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    Mask::from_vec(dims, keep)
}

pub fn save_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    write_tensor(std::io::BufWriter::new(std::fs::File::create(path)?), t)
}

pub fn load_tensor(path: &Path) -> Result<Tensor3> {
    read_tensor(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_mask(path: &Path, m: &Mask) -> Result<()> {
    write_mask(std::io::BufWriter::new(std::fs::File::create(path)?), m)
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    read_mask(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FactorsFile {
    factors: [Vec<Vec<f64>>; 3],
}

pub fn factors_to_json(f: &FactorSet) -> Result<String> {
    let file = FactorsFile {
        factors: f
            .factors()
            .clone()
            .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect()),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn factors_from_json(text: &str) -> Result<FactorSet> {
    let file: FactorsFile = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(3);
    for rows in file.factors {
        let r = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != r) {
            return Err(format_error("factors", "ragged factor matrix"));
        }
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        out.push(Array2::from_shape_vec((n, r), flat).expect("row lengths checked"));
    }
    let factors: [Array2<f64>; 3] = out.try_into().expect("three factors");
    FactorSet::new(factors)
}

pub fn save_factors(path: &Path, f: &FactorSet) -> Result<()> {
    std::fs::write(path, factors_to_json(f)?)?;
    Ok(())
}

pub fn load_factors(path: &Path) -> Result<FactorSet> {
    factors_from_json(&std::fs::read_to_string(path)?)
}
