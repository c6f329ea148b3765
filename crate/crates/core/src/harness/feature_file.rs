//! Binary feature files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CLPF"
//! 4       4     version (u32 LE, currently 1)
//! 8       4     d (u32 LE)
//! 12      4     count (u32 LE)
//! 16      4     normalized flag (u32 LE, 0 or 1)
//! 20      ...   count records: label (i32 LE, -1 = unlabeled), d x f32 LE
//! ```
//!
//! Records are grouped into clips of `frames_per_clip` consecutive frames;
//! the frames of one clip must share a label.

use std::io::{Read, Write};

use super::{Clip, ClipSource, Sample};
use crate::error::{Error, Result};
use crate::vector::{l2_normalize, Label};

pub const FEATURE_FILE_MAGIC: [u8; 4] = *b"CLPF";
pub const FEATURE_FILE_VERSION: u32 = 1;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Writes every frame of `source`: raw values, or normalized features when
/// `normalized` is set.
pub fn write_feature_file(mut w: impl Write, source: &ClipSource, normalized: bool) -> Result<()> {
    let count: usize = source.clips().iter().map(|c| c.samples.len()).sum();
    let count = u32::try_from(count).map_err(|_| Error::Format("too many records".into()))?;
    let dim = u32::try_from(source.dim()).map_err(|_| Error::Format("dimension too large".into()))?;
    w.write_all(&FEATURE_FILE_MAGIC)?;
    for v in [FEATURE_FILE_VERSION, dim, count, normalized as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(4 + 4 * source.dim());
    for s in source.clips().iter().flat_map(|c| &c.samples) {
        buf.clear();
        let label = s.label.map_or(-1, |l| l as i32);
        buf.extend_from_slice(&label.to_le_bytes());
        let values = if normalized { s.features.values() } else { &s.raw };
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_feature_file(mut r: impl Read, frames_per_clip: usize) -> Result<ClipSource> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != FEATURE_FILE_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FEATURE_FILE_VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    let flag = read_u32(&mut r)?;
    if flag > 1 {
        return Err(Error::Format(format!("normalized flag {flag} is not 0 or 1")));
    }
    if dim == 0 {
        return Err(Error::Format("zero dimension".into()));
    }
    if frames_per_clip == 0 || !count.is_multiple_of(frames_per_clip) {
        return Err(Error::Format(format!("{count} records do not split into clips of {frames_per_clip}")));
    }

    let mut record = vec![0u8; 4 + 4 * dim];
    let mut clips: Vec<Clip> = Vec::with_capacity(count / frames_per_clip);
    for id in 0..count {
        r.read_exact(&mut record).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated at record {id}")),
            _ => e.into(),
        })?;
        let raw_label = i32::from_le_bytes(record[..4].try_into().expect("4 bytes"));
        if raw_label < -1 {
            return Err(Error::Format(format!("record {id}: label {raw_label}")));
        }
        let label = (raw_label >= 0).then_some(raw_label as Label);
        let raw: Vec<f64> = record[4..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("record {id}: non-finite value")));
        }
        let features = l2_normalize(&raw)
            .map_err(|_| Error::Format(format!("record {id}: zero vector")))?
            .with_label(label);
        let Some(label) = label else {
            return Err(Error::Format(format!("record {id}: unlabeled frames cannot form clips")));
        };
        if id % frames_per_clip == 0 {
            clips.push(Clip { label, samples: Vec::with_capacity(frames_per_clip) });
        }
        let clip = clips.last_mut().expect("pushed above");
        if clip.label != label {
            return Err(Error::Format(format!("record {id}: label {label} inside a clip of class {}", clip.label)));
        }
        clip.samples.push(Sample { id: id as u64, label: Some(label), raw, features });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    ClipSource::new(dim, clips)
}
