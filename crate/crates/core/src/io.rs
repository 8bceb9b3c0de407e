//! CSV exchange of designs and measurements, and campaign files.

use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::campaign::{CampaignState, SimulationTrace, SCHEMA_VERSION};
use crate::data::{Observation, OutputColumn};
use crate::preference::Comparison;
use crate::error::{Error, Result, RowRejection};
use crate::space::{DesignSpace, Variable};

/// What to do with rows whose design values fall outside the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfBounds {
    #[default]
    Reject,
    /// Clamp into the box and log a warning.
    Clamp,
}

/// A numeric CSV table: a header and rows of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Rows restricted to `names`, in that order.
    pub fn select(&self, names: &[&str]) -> Result<Vec<Vec<f64>>> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>>>()?;
        Ok(self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect())
    }
}

fn parse_number(text: &str, row: usize, column: &str) -> Result<f64> {
    let t = text.trim();
    let v: f64 = t.parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("'{t}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("'{t}' is not finite"),
        });
    }
    Ok(v)
}

/// Reads a numeric table. Rows are numbered from 1 after the header.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(Error::Schema("header has empty column names".into()));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        rows.push(
            rec.iter()
                .zip(&headers)
                .map(|(f, h)| parse_number(f, row, h))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(Table { headers, rows })
}

pub fn load_table(path: impl AsRef<Path>) -> Result<Table> {
    read_table(fs::File::open(path)?)
}

/// Reads measured rows: every design variable and every output column must
/// be present by name; other columns are ignored.
pub fn read_observations<R: Read>(
    reader: R,
    space: &DesignSpace,
    columns: &[OutputColumn],
    policy: OutOfBounds,
) -> Result<Vec<Observation>> {
    let table = read_table(reader)?;
    let inputs = table.select(&space.names())?;
    let names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
    let outputs = table.select(&names)?;
    for extra in table
        .headers
        .iter()
        .filter(|h| !space.names().contains(&h.as_str()) && !names.contains(&h.as_str()))
    {
        log::warn!("ignoring unknown column '{extra}'");
    }
    let mut rejected = Vec::new();
    let mut rows = Vec::with_capacity(inputs.len());
    for (k, (x, y)) in inputs.into_iter().zip(outputs).enumerate() {
        let x = match (space.violation(&x), policy) {
            (None, _) => x,
            (Some(reason), OutOfBounds::Reject) => {
                rejected.push(RowRejection { row: k + 1, reason });
                continue;
            }
            (Some(reason), OutOfBounds::Clamp) => {
                log::warn!("row {}: {reason}; clamped into bounds", k + 1);
                space.clamp(&x)
            }
        };
        rows.push(Observation::new(x, y));
    }
    if !rejected.is_empty() {
        return Err(Error::RejectedRows(rejected));
    }
    Ok(rows)
}

pub fn load_csv(
    path: impl AsRef<Path>,
    space: &DesignSpace,
    columns: &[OutputColumn],
    policy: OutOfBounds,
) -> Result<Vec<Observation>> {
    read_observations(fs::File::open(path)?, space, columns, policy)
}

/// Writes a header and rows; numbers use the shortest round-trip form.
pub fn write_csv<W: Write>(writer: W, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(headers)?;
    for r in rows {
        if r.len() != headers.len() {
            return Err(Error::arg(format!("row has {} values for {} columns", r.len(), headers.len())));
        }
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Design points under the variable names, the format `ask` prints.
pub fn write_points<W: Write>(writer: W, space: &DesignSpace, points: &[Vec<f64>]) -> Result<()> {
    write_csv(writer, &space.names(), points)
}

/// Observed rows: design variables followed by outputs.
pub fn write_observations<W: Write>(writer: W, space: &DesignSpace, columns: &[OutputColumn], rows: &[Observation]) -> Result<()> {
    let mut headers = space.names();
    headers.extend(columns.iter().map(|c| c.name.as_str()));
    let body: Vec<Vec<f64>> = rows.iter().map(|o| o.point.iter().chain(&o.outputs).copied().collect()).collect();
    write_csv(writer, &headers, &body)
}

/// One line per evaluated point: iteration, slot, design, outputs and the
/// running best (empty until a feasible response exists).
pub fn write_trace<W: Write>(writer: W, space: &DesignSpace, columns: &[OutputColumn], trace: &SimulationTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut headers = vec!["iteration".to_string(), "slot".to_string()];
    headers.extend(space.names().into_iter().map(str::to_string));
    headers.extend(columns.iter().map(|c| c.name.clone()));
    headers.push("best_so_far".to_string());
    w.write_record(&headers)?;
    for step in &trace.steps {
        for (slot, (p, y)) in step.points.iter().zip(&step.outputs).enumerate() {
            let mut rec = vec![step.iteration.to_string(), slot.to_string()];
            rec.extend(p.iter().chain(y).map(|v| v.to_string()));
            rec.push(step.best_so_far.map(|b| b.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Problem definition file: design variables plus output columns with roles.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProblemSpec {
    pub variables: Vec<Variable>,
    #[serde(default)]
    pub outputs: Vec<OutputColumn>,
}

impl ProblemSpec {
    pub fn space(&self) -> Result<DesignSpace> {
        DesignSpace::new(self.variables.clone())
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Reads `winner_row_index,loser_row_index` lines; a non-numeric first line
/// is taken as a header.
pub fn read_preference_pairs<R: Read>(reader: R) -> Result<Vec<Comparison>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<usize>, _> = rec.iter().map(str::parse::<usize>).collect();
        match parsed {
            Ok(v) if v.len() == 2 => out.push(Comparison {
                winner: v[0],
                loser: v[1],
            }),
            _ if k == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    row: k,
                    column: String::new(),
                    message: "expected two row indices".into(),
                })
            }
        }
    }
    Ok(out)
}

const KNOWN_FIELDS: &[&str] = &[
    "schema_version",
    "id",
    "space",
    "data",
    "pending",
    "config",
    "seed",
    "revision",
    "history",
    "last_simulation",
];

/// Parses a campaign file. Unknown top-level fields are dropped with a
/// warning; a different schema version is refused.
pub fn campaign_from_json(text: &str) -> Result<CampaignState> {
    let mut value: Value = serde_json::from_str(text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Schema("campaign file is not a JSON object".into()))?;
    let found = obj
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Schema("missing schema_version".into()))?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(Error::Migration {
            found,
            expected: u64::from(SCHEMA_VERSION),
        });
    }
    let unknown: Vec<String> = obj.keys().filter(|k| !KNOWN_FIELDS.contains(&k.as_str())).cloned().collect();
    for k in unknown {
        log::warn!("ignoring unknown campaign field '{k}'");
        obj.remove(&k);
    }
    Ok(serde_json::from_value(value)?)
}

pub fn campaign_to_json(state: &CampaignState) -> Result<String> {
    Ok(serde_json::to_string_pretty(state)?)
}

pub fn load_campaign(path: impl AsRef<Path>) -> Result<CampaignState> {
    campaign_from_json(&fs::read_to_string(path)?)
}

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn acquire_lock(path: &Path) -> Result<LockGuard> {
    let mut lock = path.as_os_str().to_owned();
    lock.push(".lock");
    let lock = PathBuf::from(lock);
    for _ in 0..200 {
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => return Ok(LockGuard(lock)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                std::thread::sleep(std::time::Duration::from_millis(10));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::WouldBlock,
        format!("could not lock {}", lock.display()),
    )))
}

/// Atomically writes `state` to `path`.
///
/// With `expected_revision` set, the write only happens if the file on disk
/// still holds that revision, otherwise [`Error::Conflict`] reports the
/// revision found. Without it the file must not exist yet.
pub fn save_campaign(path: impl AsRef<Path>, state: &CampaignState, expected_revision: Option<u64>) -> Result<()> {
    let path = path.as_ref();
    let _guard = acquire_lock(path)?;
    match (expected_revision, path.exists()) {
        (None, true) => {
            return Err(Error::arg(format!("{} already exists", path.display())));
        }
        (Some(expected), true) => {
            let found = load_campaign(path)?.revision;
            if found != expected {
                return Err(Error::Conflict { expected, found });
            }
        }
        (Some(_), false) => {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} does not exist", path.display()),
            )));
        }
        (None, false) => {}
    }
    write_atomic(path, state)
}

/// Atomically writes `state` to `path`, replacing whatever is there.
pub fn save_campaign_unchecked(path: impl AsRef<Path>, state: &CampaignState) -> Result<()> {
    let path = path.as_ref();
    let _guard = acquire_lock(path)?;
    write_atomic(path, state)
}

fn write_atomic(path: &Path, state: &CampaignState) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(campaign_to_json(state)?.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{init_campaign, CampaignConfig};
    use crate::data::Sense;
    use crate::space::Variable;

    fn space() -> DesignSpace {
        DesignSpace::new(vec![Variable::new("a", 0.0, 1.0), Variable::new("b", 10.0, 20.0)]).unwrap()
    }

    fn cols() -> Vec<OutputColumn> {
        vec![OutputColumn::objective("y", Sense::Maximize)]
    }

    #[test]
    fn crlf_and_extra_columns() {
        let text = "b,a,note,y\r\n12.5,0.25,3,1e-3\r\n20,1,0,-2\r\n";
        let rows = read_observations(text.as_bytes(), &space(), &cols(), OutOfBounds::Reject).unwrap();
        assert_eq!(rows[0].point, vec![0.25, 12.5]);
        assert_eq!(rows[0].outputs, vec![1e-3]);
        assert_eq!(rows[1].point, vec![1.0, 20.0]);
    }

    #[test]
    fn bad_cells_name_row_and_column() {
        let text = "a,b,y\n0.5,15,1\n0.5,1x,2\n";
        match read_observations(text.as_bytes(), &space(), &cols(), OutOfBounds::Reject) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("{other:?}"),
        }
        let comma_decimal = "a,b,y\n\"0,5\",15,1\n";
        assert!(read_observations(comma_decimal.as_bytes(), &space(), &cols(), OutOfBounds::Reject).is_err());
    }

    #[test]
    fn out_of_bounds_policies() {
        let text = "a,b,y\n0.5,25,1\n";
        assert!(matches!(
            read_observations(text.as_bytes(), &space(), &cols(), OutOfBounds::Reject),
            Err(Error::RejectedRows(_))
        ));
        let rows = read_observations(text.as_bytes(), &space(), &cols(), OutOfBounds::Clamp).unwrap();
        assert_eq!(rows[0].point, vec![0.5, 20.0]);
    }

    #[test]
    fn written_numbers_round_trip() {
        let vals = vec![vec![0.1 + 0.2, 1.0 / 3.0, -1e-300]];
        let mut buf = Vec::new();
        write_csv(&mut buf, &["p", "q", "r"], &vals).unwrap();
        let t = read_table(buf.as_slice()).unwrap();
        assert_eq!(t.rows, vals);
    }

    #[test]
    fn campaign_file_versioning() {
        let s = init_campaign(space(), cols(), CampaignConfig::default(), 5).unwrap();
        let text = campaign_to_json(&s).unwrap();
        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["future_field"] = Value::from(3);
        assert_eq!(campaign_from_json(&v.to_string()).unwrap(), s);
        v["schema_version"] = Value::from(2);
        match campaign_from_json(&v.to_string()) {
            Err(Error::Migration { found, expected }) => assert_eq!((found, expected), (2, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn preference_pairs_with_and_without_header() {
        let a = read_preference_pairs("winner,loser\n0,1\n2,1\n".as_bytes()).unwrap();
        let b = read_preference_pairs("0,1\r\n2,1\r\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], Comparison { winner: 2, loser: 1 });
        assert!(read_preference_pairs("0,1\n2,x\n".as_bytes()).is_err());
    }

    #[test]
    fn compare_and_swap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let s = init_campaign(space(), cols(), CampaignConfig::default(), 5).unwrap();
        save_campaign(&path, &s, None).unwrap();
        assert!(save_campaign(&path, &s, None).is_err());
        assert!(matches!(save_campaign(&path, &s, Some(3)), Err(Error::Conflict { expected: 3, found: 0 })));
        save_campaign(&path, &s, Some(0)).unwrap();
        assert_eq!(load_campaign(&path).unwrap(), s);
    }
}
