//! Checkpoint files: a short text header followed by raw tensors.
//!
//! ```text
//! SYMMATCH-CKPT 1
//! k 20
//! point_widths 64 64 128 1024
//! head_widths 512 256
//! tensors 16
//! adam_step 1200          (or `adam none`)
//!
//! ```
//!
//! The blank line ends the header. Parameter tensors follow in layout order,
//! then, when Adam state is present, every first moment and every second
//! moment. Each tensor is `u64 rows, u64 cols, f64 data`, little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{ArchConfig, EncoderParams};
use crate::train::AdamState;

pub const MAGIC: &str = "SYMMATCH-CKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub adam: Option<AdamState>,
}

fn widths(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_checkpoint(w: &mut impl Write, params: &EncoderParams, adam: Option<&AdamState>) -> std::io::Result<()> {
    let arch = params.arch();
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "k {}", arch.k)?;
    writeln!(w, "point_widths {}", widths(&arch.point_widths))?;
    writeln!(w, "head_widths {}", widths(&arch.head_widths))?;
    writeln!(w, "tensors {}", params.tensors().len())?;
    match adam {
        Some(s) => writeln!(w, "adam_step {}", s.step)?,
        None => writeln!(w, "adam none")?,
    }
    writeln!(w)?;
    for t in params.tensors() {
        t.write_to(w)?;
    }
    if let Some(s) = adam {
        for t in s.m.iter().chain(&s.v) {
            t.write_to(w)?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_list(value: &str, key: &str) -> Result<Vec<usize>> {
    value
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| bad(format!("bad {key} entry '{v}'"))))
        .collect()
}

pub fn read_checkpoint(r: &mut impl BufRead) -> Result<Checkpoint> {
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        let n = r.read_line(&mut line).map_err(|e| bad(format!("reading header: {e}")))?;
        if n == 0 {
            return Err(bad("header is not terminated"));
        }
        let line = line.trim_end().to_string();
        if line.is_empty() {
            break;
        }
        lines.push(line);
        if lines.len() > 32 {
            return Err(bad("header is too long"));
        }
    }
    let first = lines.first().ok_or_else(|| bad("empty header"))?;
    match first.split_once(' ') {
        Some((m, v)) if m == MAGIC => {
            if v.trim() != VERSION.to_string() {
                return Err(bad(format!("unsupported checkpoint version {v}")));
            }
        }
        _ => return Err(bad("not a checkpoint file")),
    }

    let mut arch = ArchConfig {
        k: 0,
        point_widths: vec![],
        head_widths: vec![],
    };
    let mut count = None;
    let mut adam_step = None;
    for line in &lines[1..] {
        let (key, value) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        match key {
            "k" => arch.k = value.trim().parse().map_err(|_| bad("bad k"))?,
            "point_widths" => arch.point_widths = parse_list(value, key)?,
            "head_widths" => arch.head_widths = parse_list(value, key)?,
            "tensors" => count = Some(value.trim().parse::<usize>().map_err(|_| bad("bad tensor count"))?),
            "adam_step" => adam_step = Some(value.trim().parse::<u64>().map_err(|_| bad("bad adam step"))?),
            "adam" if value.trim() == "none" => {}
            _ => return Err(bad(format!("unknown header line '{line}'"))),
        }
    }
    let count = count.ok_or_else(|| bad("missing tensor count"))?;
    let mut read_n = |n: usize| -> Result<Vec<Tensor>> {
        (0..n)
            .map(|_| Tensor::read_from(r).map_err(|e| bad(format!("truncated tensor data: {e}"))))
            .collect()
    };
    let tensors = read_n(count)?;
    let params = EncoderParams::from_tensors(&arch, tensors)?;
    let adam = match adam_step {
        Some(step) => {
            let m = read_n(count)?;
            let v = read_n(count)?;
            let s = AdamState { m, v, step };
            s.check_matches(&params)?;
            Some(s)
        }
        None => None,
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok(Checkpoint { params, adam })
}

/// Writes through a temporary sibling file and renames it into place.
pub fn save(path: &Path, params: &EncoderParams, adam: Option<&AdamState>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_checkpoint(&mut w, params, adam)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(f)).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
