//! GridField files.
//!
//! CSV: `#` comment lines, one of which reads
//! `# boundary=periodic extents=1,1 points=64,64`, then one value per line in
//! row-major order.
//!
//! Binary: a 16-byte header (`GFLD`, `u16` version, `u16` dimension, `u32`
//! points on each axis, little-endian, `m2 = 1` in 1-D) followed by the values
//! as little-endian `f64`. Extents and boundary mode are not stored, so the
//! reader is given the domain and checks it against the header.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Boundary, DomainSpec, GridField};

const MAGIC: &[u8; 4] = b"GFLD";
const VERSION: u16 = 1;

fn boundary_name(b: Boundary) -> &'static str {
    match b {
        Boundary::Periodic => "periodic",
        Boundary::Neumann => "neumann",
        Boundary::Dirichlet => "dirichlet",
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

pub fn domain_header(domain: &DomainSpec) -> String {
    format!(
        "# boundary={} extents={} points={}",
        boundary_name(domain.boundary()),
        join(domain.extents()),
        join(domain.point_counts())
    )
}

/// Writes the CSV form; `comments` are emitted first, each prefixed by `# `.
pub fn write_csv(field: &GridField, comments: &[String], mut w: impl Write) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{}", domain_header(field.domain()))?;
    for v in field.values() {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

fn parse_domain(line: &str) -> Result<Option<DomainSpec>> {
    let mut boundary = None;
    let mut extents = None;
    let mut points = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        let Some((k, v)) = tok.split_once('=') else {
            continue;
        };
        match k {
            "boundary" => {
                boundary = Some(match v {
                    "periodic" => Boundary::Periodic,
                    "neumann" => Boundary::Neumann,
                    "dirichlet" => Boundary::Dirichlet,
                    other => return Err(Error::Parse(format!("unknown boundary {other:?}"))),
                })
            }
            "extents" => {
                extents = Some(
                    v.split(',')
                        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("extent {t:?}: {e}"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "points" => {
                points = Some(
                    v.split(',')
                        .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("points {t:?}: {e}"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => {}
        }
    }
    match (boundary, extents, points) {
        (Some(b), Some(e), Some(p)) => Ok(Some(DomainSpec::new(b, &e, &p)?)),
        (None, None, None) => Ok(None),
        _ => Err(Error::Parse(format!("incomplete domain header {line:?}"))),
    }
}

/// Reads the CSV form. The domain comes from the header line; `expected`
/// is used when the file has none and must match it when both are present.
pub fn read_csv(r: impl BufRead, expected: Option<&DomainSpec>) -> Result<GridField> {
    let mut domain = None;
    let mut values = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if domain.is_none() {
                domain = parse_domain(t)?;
            }
            continue;
        }
        let v: f64 = t
            .split(',')
            .next()
            .unwrap_or(t)
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        values.push(v);
    }
    let domain = match (domain, expected) {
        (Some(d), Some(e)) if !d.same_grid(e) || d.boundary() != e.boundary() => {
            return Err(Error::Parse(format!(
                "file domain {d:?} differs from the expected {e:?}"
            )))
        }
        (Some(d), _) => d,
        (None, Some(e)) => *e,
        (None, None) => return Err(Error::Parse("field file has no domain header".into())),
    };
    GridField::new(domain, values)
}

pub fn write_binary(field: &GridField, mut w: impl Write) -> Result<()> {
    let d = field.domain();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(d.dim() as u16).to_le_bytes())?;
    w.write_all(&(d.points(0) as u32).to_le_bytes())?;
    let m2 = if d.dim() == 2 { d.points(1) } else { 1 };
    w.write_all(&(m2 as u32).to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary(mut r: impl Read, domain: &DomainSpec) -> Result<GridField> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Parse("not a GFLD file".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported GFLD version {version}")));
    }
    let dim = u16::from_le_bytes([header[6], header[7]]) as usize;
    let m1 = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let m2 = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let want_m2 = if domain.dim() == 2 { domain.points(1) } else { 1 };
    if dim != domain.dim() || m1 != domain.points(0) || m2 != want_m2 {
        return Err(Error::Parse(format!(
            "file holds a {dim}-D {m1}x{m2} grid, expected {:?}",
            domain.point_counts()
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * domain.len() {
        return Err(Error::Parse(format!(
            "expected {} values, found {} bytes",
            domain.len(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GridField::new(*domain, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridField {
        let d = DomainSpec::new(Boundary::Neumann, &[2.0, 1.5], &[5, 4]).unwrap();
        GridField::from_fn(d, |x| (x[0] * 3.1).sin() + x[1] / 7.0).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        write_csv(&f, &["made by a test".into()], &mut buf).unwrap();
        let g = read_csv(&buf[..], None).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn binary_round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 20);
        assert_eq!(read_binary(&buf[..], f.domain()).unwrap(), f);
        let other = DomainSpec::new(Boundary::Neumann, &[2.0, 1.5], &[4, 5]).unwrap();
        assert!(read_binary(&buf[..], &other).is_err());
    }
}
