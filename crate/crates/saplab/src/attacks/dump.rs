//! Binary sample-block codec shared by adversarial-example dumps and dataset
//! files.
//!
//! Layout, all little-endian: magic `SAPX`, version u32, count u32, dim u32,
//! count x dim f64 sample values, count u32 true labels, count u32 target
//! labels with `0xFFFFFFFF` marking "untargeted".

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gradcore::Tensor;

pub const DUMP_VERSION: u32 = 1;
pub const UNTARGETED: u32 = 0xFFFF_FFFF;

const MAGIC: &[u8; 4] = b"SAPX";

/// Decoded sample block.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpBlock {
    pub samples: Vec<Tensor>,
    pub true_labels: Vec<usize>,
    pub targets: Vec<Option<usize>>,
}

fn format_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        reason: reason.into(),
    }
}

/// Write one sample block. `path` only labels error messages.
pub fn write_block<W: Write>(
    w: &mut W,
    samples: &[Tensor],
    true_labels: &[usize],
    targets: &[Option<usize>],
    path: &str,
) -> Result<()> {
    if samples.is_empty() {
        return Err(format_err(path, "a sample block cannot be empty"));
    }
    if samples.len() != true_labels.len() || samples.len() != targets.len() {
        return Err(format_err(
            path,
            format!(
                "{} samples, {} labels, {} targets",
                samples.len(),
                true_labels.len(),
                targets.len()
            ),
        ));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.shape() != [dim]) {
        return Err(format_err(path, "samples must share one vector shape"));
    }
    let count = u32::try_from(samples.len())
        .map_err(|_| format_err(path, "sample count exceeds u32"))?;
    let dim32 = u32::try_from(dim).map_err(|_| format_err(path, "dimension exceeds u32"))?;

    w.write_all(MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&dim32.to_le_bytes())?;
    for s in samples {
        for v in s.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for &label in true_labels {
        let l = u32::try_from(label).map_err(|_| format_err(path, "label exceeds u32"))?;
        if l == UNTARGETED {
            return Err(format_err(path, "label collides with the untargeted marker"));
        }
        w.write_all(&l.to_le_bytes())?;
    }
    for &target in targets {
        let t = match target {
            None => UNTARGETED,
            Some(t) => {
                let t = u32::try_from(t).map_err(|_| format_err(path, "target exceeds u32"))?;
                if t == UNTARGETED {
                    return Err(format_err(path, "target collides with the untargeted marker"));
                }
                t
            }
        };
        w.write_all(&t.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| format_err(path, format!("truncated while reading {what}: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

/// Read one sample block. `path` only labels error messages.
pub fn read_block<R: Read>(r: &mut R, path: &str) -> Result<DumpBlock> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| format_err(path, format!("truncated while reading magic: {e}")))?;
    if &magic != MAGIC {
        return Err(format_err(path, "bad magic, not a sample block"));
    }
    let version = read_u32(r, path, "version")?;
    if version != DUMP_VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let count = read_u32(r, path, "count")? as usize;
    let dim = read_u32(r, path, "dim")? as usize;
    if count == 0 || dim == 0 {
        return Err(format_err(path, "empty sample block"));
    }

    let mut samples = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        let mut data = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut buf)
                .map_err(|e| format_err(path, format!("truncated in sample data: {e}")))?;
            data.push(f64::from_le_bytes(buf));
        }
        samples.push(Tensor::vector(data));
    }
    let mut true_labels = Vec::with_capacity(count);
    for _ in 0..count {
        true_labels.push(read_u32(r, path, "true label")? as usize);
    }
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let t = read_u32(r, path, "target label")?;
        targets.push(if t == UNTARGETED {
            None
        } else {
            Some(t as usize)
        });
    }
    Ok(DumpBlock {
        samples,
        true_labels,
        targets,
    })
}

/// Write a standalone dump file containing exactly one sample block.
pub fn save_dump(
    path: &Path,
    samples: &[Tensor],
    true_labels: &[usize],
    targets: &[Option<usize>],
) -> Result<()> {
    let label = path.display().to_string();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?);
    write_block(&mut w, samples, true_labels, targets, &label)?;
    w.flush()?;
    Ok(())
}

/// Read a standalone dump file written by `save_dump`.
pub fn load_dump(path: &Path) -> Result<DumpBlock> {
    let label = path.display().to_string();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::file(path, e))?);
    let block = read_block(&mut r, &label)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format_err(&label, "trailing bytes after the sample block"));
    }
    Ok(block)
}
