//! CSV and JSON encodings of lattice fields and controls.
//!
//! CSV layout: a header row `t,x_0,...,x_nx` followed by one row per time
//! node whose first cell is the time coordinate. Floats are written with the
//! shortest representation that round-trips exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Control, Grid, SpaceTimeField};

const COORD_TOL: f64 = 1e-9;

#[derive(Serialize)]
struct FieldJsonRef<'a> {
    grid: Grid,
    frames: Vec<&'a [f64]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldJson {
    grid: Grid,
    frames: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct ControlJsonRef<'a> {
    grid: Grid,
    rows: Vec<&'a [f64]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlJson {
    grid: Grid,
    rows: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(FieldJsonRef {
            grid: *self.grid(),
            frames: self.frames().collect(),
        })
        .expect("field serialization is infallible")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&FieldJsonRef {
            grid: *self.grid(),
            frames: self.frames().collect(),
        })
        .expect("field serialization is infallible")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: FieldJson = serde_json::from_str(s)?;
        SpaceTimeField::from_frames(&parsed.grid, parsed.frames)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let g = *self.grid();
        let rows = self.frames().enumerate().map(|(k, f)| (g.t(k), f));
        write_rows(out, &g, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads a field, reconstructing the grid from the coordinate header and column.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let (xs, ts, rows) = read_rows(input)?;
        let nx = xs.len() - 1;
        let nt = ts.len().checked_sub(1).filter(|&n| n > 0).ok_or_else(|| {
            Error::Parse("field CSV needs at least two time rows".into())
        })?;
        let grid = Grid::new(nx, nt, ts[nt])?;
        check_coords(&xs, |j| grid.x(j), "x")?;
        check_coords(&ts, |k| grid.t(k), "t")?;
        SpaceTimeField::from_frames(&grid, rows)
    }
}

impl Control {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ControlJsonRef {
            grid: *self.grid(),
            rows: self.rows().collect(),
        })
        .expect("control serialization is infallible")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: ControlJson = serde_json::from_str(s)?;
        let n = parsed.grid.n_nodes();
        let mut values = Vec::with_capacity(parsed.rows.len() * n);
        for row in parsed.rows {
            crate::error::check_len(n, row.len())?;
            values.extend(row);
        }
        Control::from_values(&parsed.grid, values)
    }

    /// Same layout as fields; rows are the left endpoints `t_0 .. t_{nt-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let g = *self.grid();
        let rows = self.rows().enumerate().map(|(k, r)| (g.t(k), r));
        write_rows(out, &g, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads a control written by [`Control::write_csv`]; the grid must be supplied
    /// since the rows stop one step short of the horizon.
    pub fn read_csv<R: Read>(input: R, grid: &Grid) -> Result<Self> {
        let (xs, ts, rows) = read_rows(input)?;
        check_coords(&xs, |j| grid.x(j), "x")?;
        if ts.len() != grid.nt() {
            return Err(Error::Dimension {
                expected: grid.nt(),
                found: ts.len(),
            });
        }
        check_coords(&ts, |k| grid.t(k), "t")?;
        Control::from_values(grid, rows.into_iter().flatten().collect())
    }
}

fn write_rows<'a, W: Write>(
    out: W,
    grid: &Grid,
    rows: impl Iterator<Item = (f64, &'a [f64])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..grid.n_nodes()).map(|j| grid.x(j).to_string()));
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(grid.n_nodes() + 1);
    for (t, row) in rows {
        record.clear();
        record.push(t.to_string());
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

type Rows = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn read_rows<R: Read>(input: R) -> Result<Rows> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::Parse("CSV header must start with `t`".into()));
    }
    let xs = header
        .iter()
        .skip(1)
        .map(|s| parse_f64(s, 1))
        .collect::<Result<Vec<_>>>()?;
    if xs.len() < 5 {
        return Err(Error::Parse(format!(
            "CSV header lists {} spatial nodes, need at least 5",
            xs.len()
        )));
    }
    let mut ts = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != xs.len() + 1 {
            return Err(Error::Parse(format!(
                "line {line}: expected {} cells, found {}",
                xs.len() + 1,
                record.len()
            )));
        }
        ts.push(parse_f64(&record[0], line)?);
        rows.push(
            record
                .iter()
                .skip(1)
                .map(|s| parse_f64(s, line))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((xs, ts, rows))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: `{s}` is not a number")))
}

fn check_coords(found: &[f64], expected: impl Fn(usize) -> f64, axis: &str) -> Result<()> {
    for (i, &c) in found.iter().enumerate() {
        let e = expected(i);
        if (c - e).abs() > COORD_TOL * (1.0 + e.abs()) {
            return Err(Error::Parse(format!(
                "{axis}-coordinate {i} is {c}, expected uniform node {e}"
            )));
        }
    }
    Ok(())
}
