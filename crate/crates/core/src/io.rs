//! Field containers and CSV exports.
//!
//! The binary container is a little-endian `u64` header length, a JSON
//! header `{"dim", "N", "L", "domain"}`, then the samples as interleaved
//! little-endian `f64` real and imaginary parts in row-major order.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridSpec, SampledField};
use crate::stft::TFMatrix;

/// Headers longer than this are rejected as corrupt.
const MAX_HEADER: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    #[serde(rename = "L")]
    pub extent: f64,
    pub domain: Domain,
}

impl FieldHeader {
    pub fn of(f: &SampledField) -> Self {
        FieldHeader {
            dim: f.grid().dim(),
            samples: f.grid().samples(),
            extent: f.grid().extent(),
            domain: f.domain(),
        }
    }
}

pub fn write_field<W: Write>(f: &SampledField, mut out: W) -> Result<()> {
    let header = serde_json::to_vec(&FieldHeader::of(f))?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for z in f.values() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(mut input: R) -> Result<SampledField> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let len = u64::from_le_bytes(word);
    if len > MAX_HEADER {
        return Err(Error::Format(format!("header length {len} exceeds {MAX_HEADER}")));
    }
    let mut header = vec![0u8; len as usize];
    input.read_exact(&mut header)?;
    let header: FieldHeader = serde_json::from_slice(&header)?;
    let grid = GridSpec::new(header.dim, header.samples, header.extent)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        input.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        input.read_exact(&mut word)?;
        values.push(Complex64::new(re, f64::from_le_bytes(word)));
    }
    if input.read(&mut word)? != 0 {
        return Err(Error::Format("trailing bytes after the last sample".into()));
    }
    SampledField::new(grid, header.domain, values)
}

pub fn save_field(f: &SampledField, path: &Path) -> Result<()> {
    write_field(f, BufWriter::new(File::create(path)?))
}

pub fn load_field(path: &Path) -> Result<SampledField> {
    read_field(BufReader::new(File::open(path)?))
}

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (0..dim).map(|a| format!("{prefix}{a}")).collect()
    }
}

/// One row per sample: `index, x, re, im` (`x0, x1, …` above one dimension).
pub fn field_csv(f: &SampledField) -> String {
    let dim = f.grid().dim();
    let coord = if f.domain() == Domain::Space { "x" } else { "w" };
    let mut out = format!("index,{},re,im\n", axis_names(coord, dim).join(","));
    for (k, z) in f.values().iter().enumerate() {
        let c = f.coords(k);
        let coords: Vec<String> = c[..dim].iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{k},{},{},{}", coords.join(","), z.re, z.im);
    }
    out
}

/// One row per lattice pair: `w, x, |V|` (`w0, …, x0, …` above one dimension).
pub fn tf_magnitude_csv(tf: &TFMatrix) -> String {
    let grid = tf.grid();
    let dim = grid.dim();
    let mut out = format!(
        "{},{},abs\n",
        axis_names("w", dim).join(","),
        axis_names("x", dim).join(",")
    );
    for (j, row) in tf.rows().enumerate() {
        let w = grid.coords(Domain::Frequency, j);
        let w: Vec<String> = w[..dim].iter().map(f64::to_string).collect();
        for (k, z) in row.iter().enumerate() {
            let x = grid.coords(Domain::Space, k);
            let x: Vec<String> = x[..dim].iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{},{},{}", w.join(","), x.join(","), z.norm());
        }
    }
    out
}
