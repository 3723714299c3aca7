//! Field files and legacy ASCII VTK export.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::mesh::{Cells, PointCloud};

const FIELD_MAGIC: &str = "meshcs-field";
const FIELD_VERSION: &str = "v1";

/// A named scalar field with one value per point.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedField {
    pub name: String,
    pub values: Vec<f64>,
}

impl NamedField {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "field name `{name}` must be non-empty without whitespace"
            )));
        }
        Ok(Self { name, values })
    }

    /// `meshcs-field v1 <N> <name>` followed by one value per line.
    pub fn write_ascii<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{FIELD_MAGIC} {FIELD_VERSION} {} {}",
            self.values.len(),
            self.name
        )?;
        for v in &self.values {
            writeln!(out, "{v:.16e}")?;
        }
        Ok(())
    }

    pub fn read_ascii<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("missing field header".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != FIELD_MAGIC || h[1] != FIELD_VERSION {
            return Err(Error::Format(format!("bad field header `{header}`")));
        }
        let n: usize = h[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad field length `{}`", h[2])))?;
        let mut values = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            let tok = line.trim();
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Format(format!("bad field value `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite("field values"));
            }
            values.push(v);
        }
        if values.len() != n {
            return Err(Error::Format(format!(
                "expected {n} field values, found {}",
                values.len()
            )));
        }
        Self::new(h[3], values)
    }
}

fn vtk_cell_type(arity: usize, dim: usize) -> u8 {
    match (arity, dim) {
        (1, _) => 1,
        (2, _) => 3,
        (3, _) => 5,
        (4, 3) => 10,
        (4, _) => 9,
        (8, 3) => 12,
        _ => 7,
    }
}

/// Legacy ASCII VTK: `POLYDATA` with one vertex per point, or
/// `UNSTRUCTURED_GRID` when the cloud carries cells. Every field becomes a
/// `POINT_DATA` scalar array.
pub fn write_vtk<W: Write>(cloud: &PointCloud, fields: &[NamedField], mut out: W) -> Result<()> {
    let n = cloud.len();
    for f in fields {
        if f.values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: f.values.len(),
            });
        }
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "meshcs export")?;
    writeln!(out, "ASCII")?;
    let cells = cloud.cells();
    match cells {
        None => writeln!(out, "DATASET POLYDATA")?,
        Some(_) => writeln!(out, "DATASET UNSTRUCTURED_GRID")?,
    }
    writeln!(out, "POINTS {n} double")?;
    for p in cloud.points() {
        let c = |a: usize| p.get(a).copied().unwrap_or(0.0);
        writeln!(out, "{:.16e} {:.16e} {:.16e}", c(0), c(1), c(2))?;
    }
    match cells {
        None => {
            writeln!(out, "VERTICES {n} {}", 2 * n)?;
            for i in 0..n {
                writeln!(out, "1 {i}")?;
            }
        }
        Some(cells) => {
            let count = cells.len();
            writeln!(out, "CELLS {count} {}", count * (cells.arity + 1))?;
            for c in cells.indices.chunks_exact(cells.arity) {
                let ids: Vec<String> = c.iter().map(usize::to_string).collect();
                writeln!(out, "{} {}", cells.arity, ids.join(" "))?;
            }
            writeln!(out, "CELL_TYPES {count}")?;
            let t = vtk_cell_type(cells.arity, cloud.dim());
            for _ in 0..count {
                writeln!(out, "{t}")?;
            }
        }
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {n}")?;
        for f in fields {
            writeln!(out, "SCALARS {} double 1", f.name)?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in &f.values {
                writeln!(out, "{v:.16e}")?;
            }
        }
    }
    Ok(())
}

/// Contents of a VTK file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Option<Cells>,
    pub fields: Vec<NamedField>,
}

/// Reads the subset of legacy ASCII VTK that [`write_vtk`] produces.
pub fn read_vtk<R: Read>(mut input: R) -> Result<VtkData> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let version = lines.next().unwrap_or_default();
    if !version.starts_with("# vtk DataFile Version") {
        return Err(Error::Format("missing VTK version line".into()));
    }
    lines.next();
    if lines.next().map(str::trim) != Some("ASCII") {
        return Err(Error::Format("only ASCII VTK is supported".into()));
    }
    let mut tok = lines.flat_map(str::split_whitespace);
    let mut next = || {
        tok.next()
            .ok_or_else(|| Error::Format("unexpected end of VTK file".into()))
    };

    let expect = |got: &str, want: &str| {
        if got == want {
            Ok(())
        } else {
            Err(Error::Format(format!("expected `{want}`, found `{got}`")))
        }
    };
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Format(format!("bad integer `{s}`")))
    };
    let real = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("bad number `{s}`")))
    };

    expect(next()?, "DATASET")?;
    let kind = next()?;
    if kind != "POLYDATA" && kind != "UNSTRUCTURED_GRID" {
        return Err(Error::Format(format!("unsupported dataset `{kind}`")));
    }
    expect(next()?, "POINTS")?;
    let n = num(next()?)?;
    next()?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push([real(next()?)?, real(next()?)?, real(next()?)?]);
    }

    let mut cells = None;
    let mut fields = Vec::new();
    let mut current = next().ok();
    while let Some(key) = current {
        match key {
            "VERTICES" | "CELLS" => {
                let count = num(next()?)?;
                let size = num(next()?)?;
                let mut indices = Vec::new();
                let mut arity = 0;
                let mut read = 0;
                for _ in 0..count {
                    let k = num(next()?)?;
                    arity = k;
                    for _ in 0..k {
                        indices.push(num(next()?)?);
                    }
                    read += k + 1;
                }
                if read != size {
                    return Err(Error::Format(format!(
                        "{key} size {size} does not match {read}"
                    )));
                }
                if key == "CELLS" {
                    cells = Some(Cells { arity, indices });
                }
            }
            "CELL_TYPES" => {
                let count = num(next()?)?;
                for _ in 0..count {
                    next()?;
                }
            }
            "POINT_DATA" => {
                if num(next()?)? != n {
                    return Err(Error::Format("POINT_DATA count differs from POINTS".into()));
                }
            }
            "SCALARS" => {
                let name = next()?.to_owned();
                next()?;
                if let Some(c) = tok_peek_components(&mut next)? {
                    if c != 1 {
                        return Err(Error::Format(
                            "only single-component scalars are supported".into(),
                        ));
                    }
                }
                let values = (0..n).map(|_| real(next()?)).collect::<Result<Vec<_>>>()?;
                fields.push(NamedField { name, values });
            }
            other => return Err(Error::Format(format!("unexpected VTK keyword `{other}`"))),
        }
        current = next().ok();
    }
    Ok(VtkData {
        points,
        cells,
        fields,
    })
}

/// Consumes `<components> LOOKUP_TABLE <name>` after a SCALARS type.
fn tok_peek_components<'a>(next: &mut impl FnMut() -> Result<&'a str>) -> Result<Option<usize>> {
    let t = next()?;
    let components = if t == "LOOKUP_TABLE" {
        None
    } else {
        let c = t
            .parse()
            .map_err(|_| Error::Format(format!("bad component count `{t}`")))?;
        if next()? != "LOOKUP_TABLE" {
            return Err(Error::Format("expected LOOKUP_TABLE".into()));
        }
        Some(c)
    };
    next()?;
    Ok(components)
}
