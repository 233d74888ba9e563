//! LSV1 volume container and CSV reports.
//!
//! An LSV1 file is a 19-byte header followed by the payload, everything
//! little-endian:
//!
//! | offset | size | field                                             |
//! |--------|------|---------------------------------------------------|
//! | 0      | 4    | magic `LSV1`                                      |
//! | 4      | 1    | kind: 0 label-set map, 1 probabilities, 2 features |
//! | 5      | 12   | dims x, y, z as `u32`                             |
//! | 17     | 2    | channels as `u16`                                 |
//!
//! Label-set maps store one `u64` bitmask per voxel. Probability and feature
//! maps store `f32` values voxel-major then channel, so 64-bit values are
//! rounded to the nearest `f32` on write.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labelspace::{Dims, LabelSetMap, ProbMap, MAX_LABELS};
use crate::phantom::FeatureMap;

pub const MAGIC: [u8; 4] = *b"LSV1";
pub const HEADER_LEN: usize = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum VolumeKind {
    LabelSets = 0,
    Probabilities = 1,
    Features = 2,
}

impl TryFrom<u8> for VolumeKind {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        match b {
            0 => Ok(VolumeKind::LabelSets),
            1 => Ok(VolumeKind::Probabilities),
            2 => Ok(VolumeKind::Features),
            other => Err(Error::UnknownKind(other)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VolumeHeader {
    pub kind: VolumeKind,
    pub dims: Dims,
    pub channels: u16,
}

impl VolumeHeader {
    pub fn payload_len(&self) -> usize {
        match self.kind {
            VolumeKind::LabelSets => self.dims.len() * 8,
            _ => self.dims.len() * self.channels as usize * 4,
        }
    }

    fn encode(&self, out: &mut Vec<u8>) -> Result<()> {
        out.extend_from_slice(&MAGIC);
        out.push(self.kind as u8);
        for n in [self.dims.x, self.dims.y, self.dims.z] {
            let n = u32::try_from(n)
                .map_err(|_| Error::ConfigInvalid(format!("dimension {n} exceeds u32")))?;
            out.extend_from_slice(&n.to_le_bytes());
        }
        out.extend_from_slice(&self.channels.to_le_bytes());
        Ok(())
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFile { expected: HEADER_LEN, found: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let kind = VolumeKind::try_from(bytes[4])?;
        let dim = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let dims = Dims::new(dim(5), dim(9), dim(13));
        let channels = u16::from_le_bytes([bytes[17], bytes[18]]);
        if dims.is_empty() {
            return Err(Error::EmptyVolume);
        }
        if channels == 0 {
            return Err(Error::ShapeMismatch { expected: 1, found: 0 });
        }
        Ok(Self { kind, dims, channels })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    LabelSets(LabelSetMap),
    Probabilities(ProbMap),
    Features(FeatureMap),
}

impl Volume {
    pub fn header(&self) -> Result<VolumeHeader> {
        let (kind, dims, channels) = match self {
            Volume::LabelSets(g) => (VolumeKind::LabelSets, g.dims(), g.num_labels()),
            Volume::Probabilities(p) => (VolumeKind::Probabilities, p.dims(), p.num_labels()),
            Volume::Features(f) => (VolumeKind::Features, f.dims(), f.channels()),
        };
        let channels = u16::try_from(channels)
            .map_err(|_| Error::ConfigInvalid(format!("{channels} channels exceed u16")))?;
        Ok(VolumeHeader { kind, dims, channels })
    }

    pub fn into_label_sets(self) -> Result<LabelSetMap> {
        match self {
            Volume::LabelSets(g) => Ok(g),
            _ => Err(Error::MissingData("expected a label-set volume".into())),
        }
    }

    pub fn into_probabilities(self) -> Result<ProbMap> {
        match self {
            Volume::Probabilities(p) => Ok(p),
            _ => Err(Error::MissingData("expected a probability volume".into())),
        }
    }

    pub fn into_features(self) -> Result<FeatureMap> {
        match self {
            Volume::Features(f) => Ok(f),
            _ => Err(Error::MissingData("expected a feature volume".into())),
        }
    }
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) -> Result<()> {
    for (idx, &v) in values.iter().enumerate() {
        let v = v as f32;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(idx));
        }
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn read_f32s(payload: &[u8]) -> Result<Vec<f64>> {
    payload
        .chunks_exact(4)
        .enumerate()
        .map(|(idx, b)| {
            let v = f32::from_le_bytes(b.try_into().unwrap());
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::NonFiniteValue(idx))
            }
        })
        .collect()
}

pub fn encode(volume: &Volume) -> Result<Vec<u8>> {
    let header = volume.header()?;
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
    header.encode(&mut out)?;
    match volume {
        Volume::LabelSets(g) => {
            for set in g.voxels() {
                out.extend_from_slice(&set.mask().to_le_bytes());
            }
        }
        Volume::Probabilities(p) => push_f32s(&mut out, p.values())?,
        Volume::Features(f) => push_f32s(&mut out, f.values())?,
    }
    Ok(out)
}

/// Decodes an LSV1 buffer. Label-set masks are validated against the channel
/// count; probability maps are checked for shape and finiteness only, since
/// the `f32` rounding can move row sums slightly.
pub fn decode(bytes: &[u8]) -> Result<Volume> {
    let header = VolumeHeader::decode(bytes)?;
    let expected = HEADER_LEN + header.payload_len();
    if bytes.len() < expected {
        return Err(Error::TruncatedFile { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::ShapeMismatch { expected, found: bytes.len() });
    }
    let payload = &bytes[HEADER_LEN..];
    let channels = header.channels as usize;
    match header.kind {
        VolumeKind::LabelSets => {
            if !(2..=MAX_LABELS).contains(&channels) {
                return Err(Error::InvalidLabelSpace(format!("{channels} labels")));
            }
            let masks: Vec<u64> = payload
                .chunks_exact(8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            for (voxel, &mask) in masks.iter().enumerate() {
                if mask == 0 || (channels < MAX_LABELS && mask >> channels != 0) {
                    return Err(Error::InvalidBitmask { voxel, mask, channels });
                }
            }
            Ok(Volume::LabelSets(LabelSetMap::from_masks(header.dims, channels, &masks)?))
        }
        VolumeKind::Probabilities => Ok(Volume::Probabilities(ProbMap::new_unchecked(
            header.dims,
            channels,
            read_f32s(payload)?,
        )?)),
        VolumeKind::Features => {
            Ok(Volume::Features(FeatureMap::new(header.dims, channels, read_f32s(payload)?)?))
        }
    }
}

pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(volume)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// One row of the per-case metrics report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub case_id: String,
    pub class_name: String,
    pub dsc: f64,
    /// `None` when either mask is empty; written as an empty cell.
    pub hd95_vox: Option<f64>,
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Writes `case_id,class_name,dsc,hd95_vox` with six decimals.
pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["case_id", "class_name", "dsc", "hd95_vox"])?;
    for row in rows {
        let hd = row.hd95_vox.map(|v| format!("{v:.6}")).unwrap_or_default();
        out.write_record([&row.case_id, &row.class_name, &format!("{:.6}", row.dsc), &hd])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes `epoch,split,loss` rows.
pub fn write_training_log<W: Write>(w: W, log: &[crate::trainer::EpochLog]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["epoch", "split", "loss"])?;
    for entry in log {
        for (split, loss) in [("train", entry.train_loss), ("val", entry.val_loss)] {
            out.write_record([entry.epoch.to_string(), split.to_string(), format!("{loss:.9}")])?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_file_with<F>(path: impl AsRef<Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let path = path.as_ref();
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
