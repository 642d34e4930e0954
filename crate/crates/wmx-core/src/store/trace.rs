//! Hidden-state trace and action CSV files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nets::ActionTriple;

pub const TRACE_HEADER: [&str; 6] = ["frame", "cell", "hidden_value", "a0", "a1", "a2"];
pub const ACTIONS_HEADER: [&str; 4] = ["frame", "a0", "a1", "a2"];

/// Contents of a trace file: `frames × cells` hidden values plus per-frame actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub frames: usize,
    pub cells: usize,
    /// Row-major `frames × cells`.
    pub values: Vec<f64>,
    pub actions: Vec<ActionTriple>,
}

fn num(v: f64) -> String {
    // Avoid emitting "-0".
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &'static str, line: usize) -> Result<T> {
    field
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::format(what, format!("bad or missing field on record {line}")))
}

fn check_header(reader: &mut csv::Reader<std::fs::File>, expected: &[&str], what: &'static str) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::format(what, format!("header must be `{}`", expected.join(","))));
    }
    Ok(())
}

pub fn write_trace_csv(table: &TraceTable, path: impl AsRef<Path>) -> Result<()> {
    if table.values.len() != table.frames * table.cells || table.actions.len() != table.frames {
        return Err(Error::shape("trace table dimensions"));
    }
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for t in 0..table.frames {
        let a = table.actions[t];
        let (a0, a1, a2) = (num(a.a0), num(a.a1), num(a.a2));
        for c in 0..table.cells {
            let hv = table.values[t * table.cells + c];
            w.write_record([
                t.to_string(),
                c.to_string(),
                num(hv),
                a0.clone(),
                a1.clone(),
                a2.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<TraceTable> {
    const WHAT: &str = "trace csv";
    let mut r = csv::Reader::from_path(path.as_ref())?;
    check_header(&mut r, &TRACE_HEADER, WHAT)?;
    let mut rows: Vec<(usize, usize, f64, ActionTriple)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let frame = parse(rec.get(0), WHAT, line)?;
        let cell = parse(rec.get(1), WHAT, line)?;
        let hv: f64 = parse(rec.get(2), WHAT, line)?;
        if !(hv > 0.0 && hv < 1.0) {
            return Err(Error::format(
                WHAT,
                format!("hidden value {hv} outside (0, 1) on record {line}"),
            ));
        }
        let a = ActionTriple::new(
            parse(rec.get(3), WHAT, line)?,
            parse(rec.get(4), WHAT, line)?,
            parse(rec.get(5), WHAT, line)?,
        );
        rows.push((frame, cell, hv, a));
    }
    let frames = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let cells = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if frames == 0 || rows.len() != frames * cells {
        return Err(Error::format(
            WHAT,
            "frames and cells must be contiguous from 0 with one row each",
        ));
    }
    let mut values = vec![f64::NAN; frames * cells];
    let mut actions: Vec<Option<ActionTriple>> = vec![None; frames];
    for (t, c, hv, a) in rows {
        let slot = &mut values[t * cells + c];
        if !slot.is_nan() {
            return Err(Error::format(WHAT, format!("duplicate row for frame {t}, cell {c}")));
        }
        *slot = hv;
        match actions[t] {
            Some(prev) if prev != a => {
                return Err(Error::format(WHAT, format!("inconsistent actions within frame {t}")));
            }
            _ => actions[t] = Some(a),
        }
    }
    Ok(TraceTable {
        frames,
        cells,
        values,
        actions: actions.into_iter().map(|a| a.expect("every frame has rows")).collect(),
    })
}

pub fn write_actions_csv(actions: &[ActionTriple], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ACTIONS_HEADER)?;
    for (t, a) in actions.iter().enumerate() {
        w.write_record([t.to_string(), num(a.a0), num(a.a1), num(a.a2)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_actions_csv(path: impl AsRef<Path>) -> Result<Vec<ActionTriple>> {
    const WHAT: &str = "actions csv";
    let mut r = csv::Reader::from_path(path.as_ref())?;
    check_header(&mut r, &ACTIONS_HEADER, WHAT)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let frame: usize = parse(rec.get(0), WHAT, line)?;
        if frame != line {
            return Err(Error::format(
                WHAT,
                format!("frame index {frame} on record {line}; indices must be contiguous"),
            ));
        }
        out.push(ActionTriple::new(
            parse(rec.get(1), WHAT, line)?,
            parse(rec.get(2), WHAT, line)?,
            parse(rec.get(3), WHAT, line)?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = TraceTable {
            frames: 2,
            cells: 3,
            values: vec![0.5, 0.25, 0.75, 0.1, 0.2, 0.3],
            actions: vec![ActionTriple::new(1.0, 180.0, 0.0), ActionTriple::new(0.0, 182.5, -1.25)],
        };
        write_trace_csv(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("frame,cell,hidden_value,a0,a1,a2\n0,0,0.5,1,180,0\n"));
        assert_eq!(read_trace_csv(&path).unwrap(), table);
    }

    #[test]
    fn trace_rejects_out_of_range_and_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "frame,cell,hidden_value,a0,a1,a2\n0,0,1.0,1,180,0\n").unwrap();
        assert!(read_trace_csv(&path).is_err());
        std::fs::write(&path, "frame,cell,hidden_value,a0,a1,a2\n1,0,0.5,1,180,0\n").unwrap();
        assert!(read_trace_csv(&path).is_err());
        std::fs::write(&path, "frame,cell,value\n0,0,0.5\n").unwrap();
        assert!(read_trace_csv(&path).is_err());
    }

    #[test]
    fn actions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let acts = vec![
            ActionTriple::new(1.0, 180.0, 0.0),
            ActionTriple::new(0.0, 270.0, -24.645),
        ];
        write_actions_csv(&acts, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1), Some("0,1,180,0"));
        assert_eq!(read_actions_csv(&path).unwrap(), acts);
    }
}
