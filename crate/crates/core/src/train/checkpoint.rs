//! `MSDC` checkpoint container.
//!
//! Little-endian layout: `"MSDC"`, version `u32`, config block (`u32` byte
//! length + UTF-8 text), then records until end of file, each
//! `name_len u32, name, rank u32, dims u32 x rank, f32 payload`.
//!
//! The config block is the run configuration in `key = value` form followed
//! by `@`-prefixed run-state lines (`@epoch`, `@adam_step`, `@history`).
//! Records hold every model parameter under its own name and the Adam
//! moments under `adam.m.<name>` / `adam.v.<name>`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{AdamState, Checkpoint};
use crate::config::{ConfigError, RunConfig};
use crate::model::MsdNet;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MSDC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"MSDC\"")]
    BadMagic([u8; 4]),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated checkpoint while reading {0}")]
    Truncated(&'static str),
    #[error("unknown parameter record `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` appears twice")]
    DuplicateParameter(String),
    #[error("parameter `{0}` missing from checkpoint")]
    MissingParameter(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("config block: {0}")]
    Config(#[from] ConfigError),
    #[error("run state: {0}")]
    State(String),
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn config_block(ckpt: &Checkpoint) -> String {
    let mut text = ckpt.config.to_text();
    text.push_str(&format!("@epoch = {}\n", ckpt.epoch));
    text.push_str(&format!("@adam_step = {}\n", ckpt.adam.t));
    let hist: Vec<String> = ckpt.history.iter().map(|v| format!("{v:?}")).collect();
    text.push_str(&format!("@history = {}\n", hist.join(",")));
    text
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    let block = config_block(ckpt);
    put_u32(&mut buf, block.len() as u32);
    buf.extend_from_slice(block.as_bytes());
    let params = &ckpt.model.params;
    for (name, t) in params.iter() {
        put_record(&mut buf, name, t.shape(), t.data());
    }
    for (k, (name, t)) in params.iter().enumerate() {
        put_record(&mut buf, &format!("adam.m.{name}"), t.shape(), &ckpt.adam.m[k]);
        put_record(&mut buf, &format!("adam.v.{name}"), t.shape(), &ckpt.adam.v[k]);
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(ckpt, BufWriter::new(File::create(path)?))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn parse_state(lines: &[&str]) -> Result<(usize, u64, Vec<f64>)> {
    let mut epoch = None;
    let mut step = None;
    let mut history = None;
    for line in lines {
        let (k, v) = line
            .trim_start_matches('@')
            .split_once('=')
            .ok_or_else(|| CheckpointError::State(format!("malformed line `{line}`")))?;
        let v = v.trim();
        let bad = || CheckpointError::State(format!("bad value in `{line}`"));
        match k.trim() {
            "epoch" => epoch = Some(v.parse().map_err(|_| bad())?),
            "adam_step" => step = Some(v.parse().map_err(|_| bad())?),
            "history" => {
                history = Some(if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?
                })
            }
            other => return Err(CheckpointError::State(format!("unknown state key `{other}`"))),
        }
    }
    match (epoch, step, history) {
        (Some(e), Some(s), Some(h)) => Ok((e, s, h)),
        _ => Err(CheckpointError::State("missing @epoch, @adam_step or @history".into())),
    }
}

/// Parses a whole checkpoint; nothing is returned unless every record is
/// accounted for.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().expect("4 bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let len = cur.u32("config length")? as usize;
    let text = std::str::from_utf8(cur.take(len, "config block")?)
        .map_err(|_| CheckpointError::State("config block is not UTF-8".into()))?;
    let (state_lines, config_lines): (Vec<&str>, Vec<&str>) =
        text.lines().partition(|l| l.trim_start().starts_with('@'));
    let config = RunConfig::parse(&config_lines.join("\n"))?;
    let (epoch, t, history) = parse_state(&state_lines)?;

    let mut model = MsdNet::zeroed(config.model.clone());
    let mut adam = AdamState::new(&model.params);
    adam.t = t;
    let n = model.params.len();
    // slot k: parameter k, then m, then v
    let mut filled = vec![false; 3 * n];
    while !cur.done() {
        let name_len = cur.u32("record name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "record name")?)
            .map_err(|_| CheckpointError::State("record name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32("record rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(cur.u32("record dims")? as usize);
        }
        let (slot, base) = if let Some(p) = name.strip_prefix("adam.m.") {
            (1, p)
        } else if let Some(p) = name.strip_prefix("adam.v.") {
            (2, p)
        } else {
            (0, name.as_str())
        };
        let id = model
            .params
            .find(base)
            .ok_or_else(|| CheckpointError::UnknownParameter(name.clone()))?;
        let expected = model.params.get(id).shape().to_vec();
        if shape != expected {
            return Err(CheckpointError::ShapeMismatch {
                name,
                expected,
                found: shape,
            });
        }
        let numel: usize = expected.iter().product();
        let payload = cur.take(numel * 4, "record payload")?;
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        let k = slot * n + id.index();
        if filled[k] {
            return Err(CheckpointError::DuplicateParameter(name));
        }
        filled[k] = true;
        match slot {
            0 => *model.params.get_mut(id) = Tensor::new(expected, values).expect("shape checked"),
            1 => adam.m[id.index()] = values,
            _ => adam.v[id.index()] = values,
        }
    }
    if let Some(k) = filled.iter().position(|f| !f) {
        let id = model.params.ids().nth(k % n).expect("slot in range");
        let base = model.params.name(id);
        let name = match k / n {
            0 => base.to_string(),
            1 => format!("adam.m.{base}"),
            _ => format!("adam.v.{base}"),
        };
        return Err(CheckpointError::MissingParameter(name));
    }
    Ok(Checkpoint {
        config,
        model,
        adam,
        epoch,
        history,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&std::fs::read(path)?)
}
