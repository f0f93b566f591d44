//! Binary checkpoints.
//!
//! All integers and floats are little-endian:
//!
//! | field         | type            |
//! |---------------|-----------------|
//! | magic         | 8 bytes `MHDPINN\0` |
//! | version       | u32             |
//! | case digest   | 32 bytes SHA-256 of the case text |
//! | iteration     | u64             |
//! | stage         | u8 (0 AdamW, 1 BFGS) |
//! | loss          | f64             |
//! | width         | u64             |
//! | modes         | u64             |
//! | n_params      | u64             |
//! | params        | n_params x f64  |
//! | case length   | u64             |
//! | case text     | UTF-8 bytes     |
//!
//! The case text is the canonical [`write_case`] output, so a checkpoint is
//! self-contained and reloading it reproduces the run configuration exactly.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::case::{parse_case_str, write_case, Case};
use crate::error::{Error, Result};
use crate::netfield::{NetLayout, NetParams};
use crate::solver::Stage;

pub const MAGIC: &[u8; 8] = b"MHDPINN\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointData {
    pub case: Case,
    pub iteration: u64,
    pub stage: Stage,
    pub loss: f64,
    pub params: NetParams,
}

pub fn encode(data: &CheckpointData) -> Vec<u8> {
    let text = write_case(&data.case);
    let layout = data.params.layout;
    let mut out = Vec::with_capacity(128 + 8 * data.params.values.len() + text.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&Sha256::digest(text.as_bytes()));
    out.extend_from_slice(&data.iteration.to_le_bytes());
    out.push(match data.stage {
        Stage::Adamw => 0,
        Stage::Bfgs => 1,
    });
    out.extend_from_slice(&data.loss.to_le_bytes());
    out.extend_from_slice(&(layout.width as u64).to_le_bytes());
    out.extend_from_slice(&(layout.modes as u64).to_le_bytes());
    out.extend_from_slice(&(data.params.values.len() as u64).to_le_bytes());
    for v in &data.params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end =
            end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size field overflows".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<CheckpointData> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(
            "not a checkpoint file (bad magic)".into(),
        ));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let digest = r.take(32)?.to_vec();
    let iteration = r.u64()?;
    let stage = match r.take(1)?[0] {
        0 => Stage::Adamw,
        1 => Stage::Bfgs,
        s => return Err(Error::Checkpoint(format!("unknown stage tag {s}"))),
    };
    let loss = r.f64()?;
    let width = r.usize()?;
    let modes = r.usize()?;
    let n = r.usize()?;
    if n.checked_mul(8).is_none_or(|b| b > bytes.len()) {
        return Err(Error::Checkpoint(format!(
            "implausible parameter count {n}"
        )));
    }
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let len = r.usize()?;
    let text = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::Checkpoint("embedded case is not UTF-8".into()))?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    if Sha256::digest(text.as_bytes()).as_slice() != digest.as_slice() {
        return Err(Error::Checkpoint("case digest mismatch".into()));
    }
    let case = parse_case_str(text, "<checkpoint>")?;
    let layout = NetLayout { width, modes };
    if modes != case.input.mode_count() || width != case.solver.width {
        return Err(Error::Checkpoint(format!(
            "layout (width {width}, modes {modes}) disagrees with embedded case"
        )));
    }
    let params =
        NetParams::from_values(layout, values).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(CheckpointData {
        case,
        iteration,
        stage,
        loss,
        params,
    })
}

pub fn write_checkpoint(path: &Path, data: &CheckpointData) -> Result<()> {
    std::fs::write(path, encode(data)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
