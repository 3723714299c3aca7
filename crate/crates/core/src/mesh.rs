//! Point clouds, contiguous rank partitions and the ASCII mesh format.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::Range;

use crate::error::{Error, Result};

const MESH_MAGIC: &str = "meshcs-points";
const MESH_VERSION: &str = "v1";

/// Cell connectivity carried only for export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cells {
    pub arity: usize,
    /// Flat `count * arity` point indices.
    pub indices: Vec<usize>,
}

impl Cells {
    pub fn len(&self) -> usize {
        if self.arity == 0 {
            0
        } else {
            self.indices.len() / self.arity
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, i: usize) -> &[usize] {
        &self.indices[i * self.arity..(i + 1) * self.arity]
    }
}

/// Ordered points in 1, 2 or 3 dimensions. Point order is the index order of
/// every field vector defined on the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    cells: Option<Cells>,
    pub field_names: Vec<String>,
}

impl PointCloud {
    /// Builds a cloud from flat row-major coordinates (`len = N * dim`).
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidCloud(format!("dimension {dim} not in 1..=3")));
        }
        if coords.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidCloud(format!(
                "{} coordinates is not a multiple of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point coordinates"));
        }
        Ok(Self {
            dim,
            coords,
            cells: None,
            field_names: Vec::new(),
        })
    }

    pub fn from_points<const D: usize>(points: &[[f64; D]]) -> Result<Self> {
        Self::new(D, points.iter().flatten().copied().collect())
    }

    pub fn with_cells(mut self, cells: Cells) -> Result<Self> {
        if cells.arity == 0 || !cells.indices.len().is_multiple_of(cells.arity) {
            return Err(Error::InvalidCloud("malformed cell block".into()));
        }
        if let Some(&bad) = cells.indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidCloud(format!(
                "cell index {bad} out of range for {} points",
                self.len()
            )));
        }
        self.cells = Some(cells);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn cells(&self) -> Option<&Cells> {
        self.cells.as_ref()
    }

    /// Sub-cloud over a contiguous index range. Cells are dropped.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "range {range:?} invalid for {} points",
                self.len()
            )));
        }
        Self::new(
            self.dim,
            self.coords[range.start * self.dim..range.end * self.dim].to_vec(),
        )
    }

    /// Per-axis (min, max) over a subset of points.
    pub fn bounding_box(&self, indices: &[usize]) -> Vec<(f64, f64)> {
        let mut bbox = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for &i in indices {
            for (b, &x) in bbox.iter_mut().zip(self.point(i)) {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        bbox
    }

    /// Writes the `meshcs-points v1` ASCII format.
    pub fn write_ascii<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{MESH_MAGIC} {MESH_VERSION} {} {}",
            self.dim,
            self.len()
        )?;
        let mut line = String::new();
        for p in self.points() {
            line.clear();
            for (a, x) in p.iter().enumerate() {
                if a > 0 {
                    line.push(' ');
                }
                write!(line, "{x:.17e}").unwrap();
            }
            writeln!(out, "{line}")?;
        }
        if let Some(cells) = &self.cells {
            writeln!(out, "cells {} {}", cells.len(), cells.arity)?;
            for c in cells.indices.chunks_exact(cells.arity) {
                let row: Vec<String> = c.iter().map(usize::to_string).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    /// Parses the `meshcs-points v1` ASCII format, rejecting count mismatches.
    pub fn read_ascii<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .map(|l| l.map_err(Error::from))
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("missing mesh header".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != MESH_MAGIC || fields[1] != MESH_VERSION {
            return Err(Error::Format(format!("bad mesh header `{header}`")));
        }
        let dim = parse_usize(fields[2])?;
        let n = parse_usize(fields[3])?;
        if !(1..=3).contains(&dim) {
            return Err(Error::Format(format!("dimension {dim} not in 1..=3")));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for row in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("expected {n} points, found {row}")))??;
            let before = coords.len();
            for tok in line.split_whitespace() {
                coords.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad coordinate `{tok}`")))?,
                );
            }
            if coords.len() - before != dim {
                return Err(Error::Format(format!(
                    "point {row} has {} coordinates, expected {dim}",
                    coords.len() - before
                )));
            }
        }
        let mut cloud = PointCloud::new(dim, coords)?;
        if let Some(line) = lines.next() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 || f[0] != "cells" {
                return Err(Error::Format(format!(
                    "unexpected line after points: `{line}`"
                )));
            }
            let count = parse_usize(f[1])?;
            let arity = parse_usize(f[2])?;
            let mut indices = Vec::with_capacity(count * arity);
            for row in 0..count {
                let line = lines.next().ok_or_else(|| {
                    Error::Format(format!("expected {count} cells, found {row}"))
                })??;
                let before = indices.len();
                for tok in line.split_whitespace() {
                    indices.push(parse_usize(tok)?);
                }
                if indices.len() - before != arity {
                    return Err(Error::Format(format!("cell {row} has wrong arity")));
                }
            }
            if lines.next().is_some() {
                return Err(Error::Format("trailing data after cells".into()));
            }
            cloud = cloud.with_cells(Cells { arity, indices })?;
        }
        Ok(cloud)
    }
}

fn parse_usize(tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::Format(format!("expected non-negative integer, got `{tok}`")))
}

/// A contiguous block of point indices owned by one rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub rank_id: u32,
    pub indices: Range<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Splits `0..n` into `ranks` contiguous blocks whose sizes differ by at most
/// one; the larger blocks come first.
pub fn partition_indices(n: usize, ranks: usize) -> Result<Vec<Partition>> {
    if ranks == 0 || ranks > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} points over {ranks} ranks"
        )));
    }
    let base = n / ranks;
    let extra = n % ranks;
    let mut start = 0;
    Ok((0..ranks)
        .map(|r| {
            let len = base + usize::from(r < extra);
            let p = Partition {
                rank_id: r as u32,
                indices: start..start + len,
            };
            start += len;
            p
        })
        .collect())
}

pub fn partition_cloud(cloud: &PointCloud, ranks: usize) -> Result<Vec<Partition>> {
    partition_indices(cloud.len(), ranks)
}
