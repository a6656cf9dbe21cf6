use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::network::{TimeGrid, Trajectory};

/// Reads a record file with header `t,<name>,...`. Rows are numbered from 1
/// after the header.
pub fn load_records(path: impl AsRef<Path>) -> Result<Trajectory> {
    read_records(File::open(path)?)
}

pub fn read_records(reader: impl Read) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(0, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.first().map(String::as_str) != Some("t") {
        return Err(Error::BadRecord {
            row: 0,
            column: headers.first().cloned().unwrap_or_default(),
            reason: "the first column must be `t`".into(),
        });
    }
    for (i, h) in headers.iter().enumerate() {
        if h.is_empty() {
            return Err(Error::BadRecord {
                row: 0,
                column: format!("#{}", i + 1),
                reason: "empty column name".into(),
            });
        }
        if headers[..i].contains(h) {
            return Err(Error::BadRecord {
                row: 0,
                column: h.clone(),
                reason: "duplicate column".into(),
            });
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_error(row, e))?;
        for (c, name) in headers.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let bad = |reason: String| Error::BadRecord {
                row,
                column: name.clone(),
                reason,
            };
            if cell.is_empty() {
                return Err(bad("missing value".into()));
            }
            let v: f64 = cell.parse().map_err(|_| bad(format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("`{cell}` is not a finite number")));
            }
            columns[c].push(v);
        }
        if row > 1 && columns[0][row - 1] <= columns[0][row - 2] {
            return Err(Error::BadRecord {
                row,
                column: "t".into(),
                reason: "t is not strictly ascending".into(),
            });
        }
    }
    let mut columns = columns.into_iter();
    let grid = TimeGrid::new(columns.next().unwrap_or_default())?;
    let mut traj = Trajectory::new(grid);
    for (name, values) in headers[1..].iter().zip(columns) {
        traj.insert(NodeId::new(name.as_str()), values)?;
    }
    Ok(traj)
}

fn csv_error(row: usize, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::BadRecord {
            row,
            column: String::new(),
            reason: format!("expected {expected_len} fields, found {len}"),
        },
        other => Error::BadRecord {
            row,
            column: String::new(),
            reason: format!("{other:?}"),
        },
    }
}

/// Checks that the record columns are exactly the observed parameters.
pub fn check_observed_columns(graph: &Graph, records: &Trajectory) -> Result<()> {
    for p in graph.parameters.iter().filter(|p| p.observed) {
        if records.get(&p.node).is_none() {
            return Err(Error::BadRecord {
                row: 0,
                column: p.node.to_string(),
                reason: "observed parameter has no column".into(),
            });
        }
    }
    check_known_columns(graph, records, true)
}

/// Checks that every record column names a parameter (an observed one when
/// `observed_only`).
pub fn check_known_columns(graph: &Graph, records: &Trajectory, observed_only: bool) -> Result<()> {
    for name in records.names() {
        match graph.parameter(name) {
            Some(p) if p.observed || !observed_only => {}
            Some(_) => {
                return Err(Error::BadRecord {
                    row: 0,
                    column: name.to_string(),
                    reason: "latent parameters have no records".into(),
                })
            }
            None => {
                return Err(Error::BadRecord {
                    row: 0,
                    column: name.to_string(),
                    reason: "no such parameter".into(),
                })
            }
        }
    }
    Ok(())
}

/// Writes `t` and the named columns, plus optional extra columns, with
/// shortest round-trip number formatting.
pub fn write_records(
    writer: impl Write,
    trajectory: &Trajectory,
    names: &[NodeId],
    extra: &[(&str, Vec<String>)],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().map(ToString::to_string));
    header.extend(extra.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header).map_err(|e| csv_error(0, e))?;
    let series: Vec<&[f64]> = names
        .iter()
        .map(|n| trajectory.get(n).ok_or_else(|| Error::UnresolvedNode(n.to_string())))
        .collect::<Result<_>>()?;
    for (j, t) in trajectory.grid.points().iter().enumerate() {
        let mut row = vec![format!("{t:?}")];
        row.extend(series.iter().map(|s| format!("{:?}", s[j])));
        row.extend(extra.iter().map(|(_, v)| v[j].clone()));
        w.write_record(&row).map_err(|e| csv_error(j + 1, e))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<Trajectory> {
        read_records(s.as_bytes())
    }

    #[test]
    fn valid_file() {
        let t = read("t,a\n0,1.5\n1,2\n2,2.5\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.get(&"a".into()).unwrap(), &[1.5, 2.0, 2.5]);
        assert_eq!(read("t,a\r\n0,1\r\n1,2\r\n").unwrap().len(), 2);
    }

    #[test]
    fn repeated_time_names_row() {
        let e = read("t,a\n1,0\n1,0\n2,0\n").unwrap_err();
        assert!(matches!(e, Error::BadRecord { row: 2, ref column, .. } if column == "t"), "{e}");
    }

    #[test]
    fn nan_cell_is_located() {
        let e = read("t,a,b\n0,1,2\n1,3,NaN\n").unwrap_err();
        assert!(matches!(e, Error::BadRecord { row: 2, ref column, .. } if column == "b"), "{e}");
        let e = read("t,a\n0,1,5\n").unwrap_err();
        assert!(matches!(e, Error::BadRecord { row: 1, .. }), "{e}");
        let e = read("t,a\n0,abc\n").unwrap_err();
        assert!(e.to_string().contains("`abc` is not a number"));
        let e = read("t,a\n0,\n").unwrap_err();
        assert!(e.to_string().contains("missing value"));
    }

    #[test]
    fn header_must_start_with_t() {
        assert!(read("time,a\n0,1\n").is_err());
    }

    #[test]
    fn written_records_read_back_exactly() {
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.30000000000000004]).unwrap();
        let t = Trajectory::new(grid).with("a", vec![1.0 / 3.0, -2e-12, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &t, &["a".into()], &[]).unwrap();
        assert_eq!(read_records(buf.as_slice()).unwrap(), t);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn write_then_read_is_identity(
                steps in prop::collection::vec(1e-6f64..10.0, 1..20),
                seed in prop::collection::vec(-1e9f64..1e9, 20),
            ) {
                let mut t = vec![0.0];
                for s in &steps {
                    t.push(t.last().unwrap() + s);
                }
                let n = t.len();
                let traj = Trajectory::new(TimeGrid::new(t).unwrap()).with("x", seed[..n.min(20)].iter().copied().cycle().take(n).collect()).unwrap();
                let mut buf = Vec::new();
                write_records(&mut buf, &traj, &["x".into()], &[]).unwrap();
                let mut again = Vec::new();
                write_records(&mut again, &read_records(buf.as_slice()).unwrap(), &["x".into()], &[]).unwrap();
                prop_assert_eq!(buf, again);
            }
        }
    }
}
