//! Plain-text field snapshots.
//!
//! ```text
//! # pnp-field 1
//! # name p
//! # t 0.04
//! # dim 2
//! # n 128 128
//! # lower -2 -2
//! # upper 2 2
//! # bc neumann
//! 1.25e-1
//! ...
//! ```
//!
//! One value per line in the grid's index order (axis 0 fastest), written
//! with the shortest representation that round-trips exactly.

use std::io::{BufRead, Write};

use super::{Boundary, Field, Grid};
use crate::error::{PnpError, Result};

const MAGIC: &str = "# pnp-field 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub name: String,
    pub t: f64,
    pub field: Field,
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_snapshot<W: Write>(mut w: W, name: &str, t: f64, field: &Field) -> Result<()> {
    let g = field.grid();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "# name {name}")?;
    writeln!(w, "# t {t}")?;
    writeln!(w, "# dim {}", g.dim())?;
    writeln!(w, "# n {}", join(g.shape()))?;
    writeln!(w, "# lower {}", join(g.lower()))?;
    writeln!(w, "# upper {}", join(g.upper()))?;
    writeln!(w, "# bc {}", g.bc().name())?;
    for v in field.values() {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

fn header<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| PnpError::Snapshot(format!("missing `{key}` header")))?;
    line.strip_prefix("# ")
        .and_then(|rest| rest.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| PnpError::Snapshot(format!("expected `{key}` header, found `{line}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| PnpError::Snapshot(format!("bad `{key}` entry `{tok}`")))
        })
        .collect()
}

pub fn read_snapshot<R: BufRead>(r: R) -> Result<Snapshot> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let mut it = lines.iter().map(String::as_str);
    if it.next() != Some(MAGIC) {
        return Err(PnpError::Snapshot("missing magic line".into()));
    }
    let name = header(it.next(), "name")?.to_string();
    let t: f64 = parse_list(header(it.next(), "t")?, "t")?
        .first()
        .copied()
        .ok_or_else(|| PnpError::Snapshot("empty `t`".into()))?;
    let dim: usize = parse_list(header(it.next(), "dim")?, "dim")?
        .first()
        .copied()
        .ok_or_else(|| PnpError::Snapshot("empty `dim`".into()))?;
    let n: Vec<usize> = parse_list(header(it.next(), "n")?, "n")?;
    let lower: Vec<f64> = parse_list(header(it.next(), "lower")?, "lower")?;
    let upper: Vec<f64> = parse_list(header(it.next(), "upper")?, "upper")?;
    let bc_name = header(it.next(), "bc")?;
    let bc = Boundary::from_name(bc_name).ok_or_else(|| PnpError::Snapshot(format!("unknown boundary `{bc_name}`")))?;
    if n.len() != dim {
        return Err(PnpError::Snapshot(format!("dim {dim} but {} node counts", n.len())));
    }
    let grid = Grid::new(&lower, &upper, &n, bc)?;
    let values = it
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| PnpError::Snapshot(format!("bad value `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let field = Field::from_values(&grid, values)?;
    Ok(Snapshot { name, t, field })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new(&[-2.0, -2.0], &[2.0, 2.0], &[3, 4], Boundary::Neumann).unwrap();
        let f = Field::from_fn(&g, |x| (x[0] * 1.7).sin() + x[1] / 3.0);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, "p", 0.04, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# pnp-field 1\n# name p\n# t 0.04\n# dim 2\n# n 3 4\n"));
        let s = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(s.name, "p");
        assert_eq!(s.t, 0.04);
        assert_eq!(s.field, f);
    }

    #[test]
    fn rejects_truncated_payload() {
        let g = Grid::cube(1, 0.0, 1.0, 4, Boundary::Periodic).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, "phi", 0.0, &Field::constant(&g, 1.0)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_snapshot(cut.as_bytes()),
            Err(PnpError::LengthMismatch { expected: 4, got: 2 })
        ));
        assert!(read_snapshot("garbage\n".as_bytes()).is_err());
    }
}
