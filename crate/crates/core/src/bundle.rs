//! The compressed artifact that leaves the simulation: seed, sizes and samples.
//!
//! Binary layout, little-endian: `"MCSB"`, `u32` version, `u32` name length,
//! UTF-8 name, `u32` rank id, `u64` N, `u64` M, `u64` seed, then M `f64`
//! samples. Several bundles may be concatenated in one stream.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::sampler::{partition_seed, sample_field, BernoulliSpec};

pub const BUNDLE_MAGIC: [u8; 4] = *b"MCSB";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBundle {
    pub field_name: String,
    pub rank_id: u32,
    pub points: usize,
    /// Seed of this bundle's sampling matrix (already rank-mixed).
    pub seed: u64,
    pub samples: Vec<f64>,
}

impl SampleBundle {
    pub fn spec(&self) -> Result<BernoulliSpec> {
        BernoulliSpec::new(self.seed, self.samples.len(), self.points)
    }

    /// Compression ratio `N / M`.
    pub fn ratio(&self) -> f64 {
        self.points as f64 / self.samples.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() || self.samples.len() > self.points {
            return Err(Error::NotCompressive {
                samples: self.samples.len(),
                points: self.points,
            });
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bundle samples"));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let name = self.field_name.as_bytes();
        out.write_all(&BUNDLE_MAGIC)?;
        out.write_all(&BUNDLE_VERSION.to_le_bytes())?;
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&self.rank_id.to_le_bytes())?;
        out.write_all(&(self.points as u64).to_le_bytes())?;
        out.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in &self.samples {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads one bundle; `Ok(None)` at a clean end of stream.
    pub fn read_from<R: Read>(input: &mut R) -> Result<Option<Self>> {
        let mut magic = [0u8; 4];
        match read_exact_or_eof(input, &mut magic)? {
            false => return Ok(None),
            true if magic != BUNDLE_MAGIC => {
                return Err(Error::Format(format!("bad bundle magic {magic:?}")))
            }
            true => {}
        }
        let version = read_u32(input)?;
        if version != BUNDLE_VERSION {
            return Err(Error::Format(format!(
                "unsupported bundle version {version}"
            )));
        }
        let name_len = read_u32(input)? as usize;
        let mut name = vec![0u8; name_len];
        read_body(input, &mut name)?;
        let field_name =
            String::from_utf8(name).map_err(|_| Error::Format("field name is not UTF-8".into()))?;
        let rank_id = read_u32(input)?;
        let points = read_u64(input)? as usize;
        let m = read_u64(input)? as usize;
        let seed = read_u64(input)?;
        if m == 0 || m > points {
            return Err(Error::Format(format!(
                "sample count {m} invalid for {points} points"
            )));
        }
        let mut raw = vec![0u8; m * 8];
        read_body(input, &mut raw)?;
        let samples = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bundle = SampleBundle {
            field_name,
            rank_id,
            points,
            seed,
            samples,
        };
        bundle.validate()?;
        Ok(Some(bundle))
    }

    pub fn read_all<R: Read>(mut input: R) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        while let Some(b) = Self::read_from(&mut input)? {
            out.push(b);
        }
        Ok(out)
    }
}

/// Compresses one rank's share of a field, using the rank-mixed seed.
pub fn compress_field(
    field_name: &str,
    field: &[f64],
    rank_id: u32,
    run_seed: u64,
    samples: usize,
) -> Result<SampleBundle> {
    let seed = partition_seed(run_seed, rank_id);
    let spec = BernoulliSpec::new(seed, samples, field.len())?;
    Ok(SampleBundle {
        field_name: field_name.to_owned(),
        rank_id,
        points: field.len(),
        seed,
        samples: sample_field(field, &spec)?,
    })
}

/// Sample count for a target ratio `R = N / M`, at least one sample.
pub fn samples_for_ratio(points: usize, ratio: f64) -> Result<usize> {
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "compression ratio {ratio} must be ≥ 1"
        )));
    }
    Ok(((points as f64 / ratio).round() as usize).clamp(1, points))
}

fn read_exact_or_eof<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::Format("truncated bundle header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

fn read_body<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format("truncated bundle".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_body(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_body(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
