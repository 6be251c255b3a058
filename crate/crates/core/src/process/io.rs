use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{PathMeta, SamplePath};
use crate::error::{Error, Result};

/// Leading bytes of the binary path format.
pub const MAGIC: &[u8; 8] = b"HLPATH\0\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    t0: f64,
    dt: f64,
    meta: PathMeta,
}

impl SamplePath {
    /// `time,value` rows with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 16);
        out.push_str("time,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.time(i), v);
        }
        out
    }

    /// Layout: magic, u32 version, u32 header length, JSON header, u64 count, f64 values.
    /// All integers and floats little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            t0: self.t0,
            dt: self.dt,
            meta: self.meta.clone(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

pub fn read_binary<R: Read>(mut r: R) -> Result<SamplePath> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a hermite-lab path file"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported path format version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let mut header = vec![0u8; u32::from_le_bytes(u32buf) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let n = u64::from_le_bytes(u64buf) as usize;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut u64buf)?;
        values.push(f64::from_le_bytes(u64buf));
    }
    Ok(SamplePath {
        t0: header.t0,
        dt: header.dt,
        values,
        meta: header.meta,
    })
}

/// Reads `time,value` rows back; the grid must be uniform. Metadata is not stored in CSV.
pub fn read_csv(text: &str, meta: PathMeta) -> Result<SamplePath> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| Error::invalid(format!("line {}: expected two columns", lineno + 1)))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("line {}: bad number {s:?}", lineno + 1)))
        };
        times.push(parse(t)?);
        values.push(parse(v)?);
    }
    if values.len() < 2 {
        return Err(Error::invalid("path needs at least two rows"));
    }
    let dt = times[1] - times[0];
    Ok(SamplePath { t0: times[0], dt, values, meta })
}
