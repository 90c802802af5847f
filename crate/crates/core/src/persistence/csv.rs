//! Diagram CSV: `dim,birth,death,birth_x,birth_y,death_x,death_y`.
//!
//! An uncapped essential class is written with death `inf` and empty death
//! coordinates. Values use the shortest representation that parses back to
//! the same `f64`, so a written diagram reads back bit-identical.

use std::io::{BufRead, Write};

use super::{FiltrationKind, PersistenceDiagram, PersistencePoint};
use crate::error::{Error, Result};
use crate::grid::Pixel;

pub const HEADER: &str = "dim,birth,death,birth_x,birth_y,death_x,death_y";

pub fn write_diagram_csv<W: Write>(diagram: &PersistenceDiagram, mut out: W) -> std::io::Result<()> {
    let mut sorted = diagram.clone();
    sorted.sort_points();
    writeln!(out, "{HEADER}")?;
    for p in &sorted.points {
        let death = if p.is_infinite() {
            "inf".to_string()
        } else {
            p.death.to_string()
        };
        let (dx, dy) = match p.death_pixel {
            Some(px) => (px.x.to_string(), px.y.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.dim, p.birth, death, p.birth_pixel.x, p.birth_pixel.y, dx, dy
        )?;
    }
    Ok(())
}

/// Parses a diagram written by [`write_diagram_csv`].
///
/// The CSV does not record the filtration, so the caller supplies it. When
/// no row is infinite, the essential class is recovered as the dim-0 point
/// whose birth pixel comes first in the sweep, and the cap is read from its
/// death.
pub fn read_diagram_csv<R: BufRead>(input: R, filtration: FiltrationKind) -> Result<PersistenceDiagram> {
    let mut points = Vec::new();
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == HEADER => {}
        Some((_, Ok(h))) => return Err(csv_err(1, format!("unexpected header '{h}'"))),
        Some((_, Err(e))) => return Err(csv_err(1, e.to_string())),
        None => return Err(csv_err(1, "missing header")),
    }
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| csv_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 7 {
            return Err(csv_err(lineno, format!("expected 7 columns, found {}", cols.len())));
        }
        let dim: u8 = parse(cols[0], lineno)?;
        if dim > 1 {
            return Err(csv_err(lineno, format!("dimension {dim} out of range")));
        }
        let birth: f64 = parse(cols[1], lineno)?;
        let birth_pixel = Pixel::new(parse(cols[3], lineno)?, parse(cols[4], lineno)?);
        let (death, death_pixel, essential) = if cols[2] == "inf" {
            if !cols[5].is_empty() || !cols[6].is_empty() {
                return Err(csv_err(lineno, "infinite death with a death pixel"));
            }
            (f64::INFINITY, None, true)
        } else {
            let d: f64 = parse(cols[2], lineno)?;
            (d, Some(Pixel::new(parse(cols[5], lineno)?, parse(cols[6], lineno)?)), false)
        };
        points.push(PersistencePoint {
            dim,
            birth,
            death,
            birth_pixel,
            death_pixel,
            essential,
        });
    }

    let mut essential_cap = None;
    if !points.iter().any(|p| p.essential) {
        let first = points
            .iter_mut()
            .filter(|p| p.dim == 0)
            .min_by(|a, b| {
                filtration
                    .order_key(a.birth)
                    .total_cmp(&filtration.order_key(b.birth))
                    .then((a.birth_pixel.y, a.birth_pixel.x).cmp(&(b.birth_pixel.y, b.birth_pixel.x)))
            });
        if let Some(p) = first {
            p.essential = true;
            essential_cap = Some(match filtration {
                FiltrationKind::Sublevel => p.death,
                FiltrationKind::Superlevel => 1.0 - p.death,
            });
        }
    }
    let mut diagram = PersistenceDiagram {
        points,
        filtration,
        essential_cap,
    };
    diagram.sort_points();
    Ok(diagram)
}

fn parse<T: std::str::FromStr>(s: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e: T::Err| csv_err(line, format!("'{s}': {e}")))
}

fn csv_err(line: usize, message: impl Into<String>) -> Error {
    Error::DiagramCsv {
        line,
        message: message.into(),
    }
}
