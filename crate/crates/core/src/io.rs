//! Dataset, trajectory, table and model files.
//!
//! Tables are comma-separated with `#`-prefixed metadata lines followed by one
//! column-name line. Numbers are written in shortest round-trip form so every
//! file reads back bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, ModelError};
use crate::model::{Dataset, KernelPair, ThetaPair, TrainedLgp};
use crate::operators::{NormalizationSpec, OperatorMode, Triplet};
use crate::training::Trajectory;

pub const DATASET_SCHEMA: &str = "lgp-dataset v1";
pub const TRAJECTORY_SCHEMA: &str = "lgp-trajectory v1";
pub const MODEL_SCHEMA: &str = "lgp-model v1";

/// Serde adapter storing a `DVector<f64>` as a plain list.
pub mod dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// A parsed table: metadata key/values, column names and numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, columns: Vec<String>) -> Self {
        Table { schema: schema.to_string(), meta: Vec::new(), columns, rows: Vec::new() }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = format!("# {}\n", self.schema);
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k} {v}");
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, IoError> {
        let err = |line: usize, msg: String| IoError::Parse { path: origin.to_string(), line, msg };
        let mut schema = None;
        let mut meta = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if schema.is_none() && columns.is_none() && meta.is_empty() {
                    schema = Some(rest.to_string());
                } else if let Some((k, v)) = rest.split_once(char::is_whitespace) {
                    meta.push((k.to_string(), v.trim().to_string()));
                } else {
                    meta.push((rest.to_string(), String::new()));
                }
                continue;
            }
            let fields: Vec<String> = line.split([',', ' ', '\t']).filter(|f| !f.is_empty()).map(str::to_string).collect();
            match &columns {
                None => columns = Some(fields),
                Some(c) => {
                    if fields.len() != c.len() {
                        return Err(err(i + 1, format!("expected {} fields, found {}", c.len(), fields.len())));
                    }
                    rows.push(fields);
                }
            }
        }
        Ok(Table {
            schema: schema.ok_or_else(|| err(1, "missing schema line".into()))?,
            meta,
            columns: columns.ok_or_else(|| err(1, "missing column header".into()))?,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Table::parse(&fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(s: &str, origin: &str, line: usize) -> Result<f64, IoError> {
    s.parse::<f64>().map_err(|_| IoError::Parse { path: origin.to_string(), line, msg: format!("not a number: {s:?}") })
}

fn meta_num<T: std::str::FromStr>(t: &Table, key: &str) -> Result<T, IoError> {
    t.meta(key)
        .ok_or_else(|| IoError::Schema(format!("missing header field `{key}`")))?
        .parse()
        .map_err(|_| IoError::Schema(format!("bad value for `{key}`")))
}

fn columns_for(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn dataset_table(d: &Dataset) -> Table {
    let n = d.n_q;
    let mut cols = Vec::new();
    for p in ["q_prev", "q_curr", "q_next", "u_prev", "u_curr"] {
        cols.extend(columns_for(p, n));
    }
    let mut t = Table::new(DATASET_SCHEMA, cols);
    t.meta.push(("n_q".into(), n.to_string()));
    t.meta.push(("n_u".into(), n.to_string()));
    t.meta.push(("h".into(), fmt_f64(d.h_train)));
    if !d.provenance.is_empty() {
        t.meta.push(("provenance".into(), d.provenance.clone()));
    }
    for tr in &d.triplets {
        let row = [&tr.q_prev, &tr.q_curr, &tr.q_next, &tr.u_prev, &tr.u_curr]
            .iter()
            .flat_map(|v| v.iter().map(|x| fmt_f64(*x)))
            .collect();
        t.rows.push(row);
    }
    t
}

/// Reads a dataset table; `n_u` may be 0 for unforced data.
pub fn dataset_from_table(t: &Table, origin: &str) -> Result<Dataset, IoError> {
    if t.schema != DATASET_SCHEMA {
        return Err(IoError::Schema(format!("expected `{DATASET_SCHEMA}`, found `{}`", t.schema)));
    }
    let n: usize = meta_num(t, "n_q")?;
    let n_u: usize = meta_num(t, "n_u")?;
    let h: f64 = meta_num(t, "h")?;
    if n_u != n && n_u != 0 {
        return Err(IoError::Schema(format!("n_u must be 0 or n_q = {n}, got {n_u}")));
    }
    let mut idx = Vec::new();
    let mut groups: Vec<(&str, usize)> = vec![("q_prev", n), ("q_curr", n), ("q_next", n)];
    if n_u > 0 {
        groups.push(("u_prev", n));
        groups.push(("u_curr", n));
    }
    for (p, m) in groups {
        for c in columns_for(p, m) {
            idx.push(t.column(&c).ok_or_else(|| IoError::Schema(format!("missing column `{c}`")))?);
        }
    }
    let mut triplets = Vec::with_capacity(t.rows.len());
    for (r, row) in t.rows.iter().enumerate() {
        let vals: Vec<f64> = idx.iter().map(|&i| parse_f64(&row[i], origin, r + 1)).collect::<Result<_, _>>()?;
        let part = |k: usize| DVector::from_column_slice(&vals[k * n..(k + 1) * n]);
        let (up, uc) = if n_u > 0 { (part(3), part(4)) } else { (DVector::zeros(n), DVector::zeros(n)) };
        triplets.push(Triplet { q_prev: part(0), q_curr: part(1), q_next: part(2), u_prev: up, u_curr: uc });
    }
    let prov = t.meta("provenance").unwrap_or(origin).to_string();
    Ok(Dataset::new(triplets, h, prov)?)
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<(), IoError> {
    dataset_table(d).write(path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    dataset_from_table(&Table::read(path)?, &path.display().to_string())
}

/// A trajectory with optional per-point rollout diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory: Trajectory,
    /// Residual covariance trace; NaN where not applicable.
    pub uncertainty: Vec<f64>,
    pub converged: Vec<bool>,
}

impl TrajectoryRecord {
    pub fn plain(trajectory: Trajectory) -> Self {
        let n = trajectory.q.len();
        TrajectoryRecord { trajectory, uncertainty: vec![f64::NAN; n], converged: vec![true; n] }
    }
}

pub fn trajectory_table(rec: &TrajectoryRecord) -> Result<Table, IoError> {
    let tr = &rec.trajectory;
    let n = tr.q.first().map_or(0, |q| q.len());
    let len = tr.q.len();
    if tr.u.len() < len || rec.uncertainty.len() != len || rec.converged.len() != len {
        return Err(IoError::Schema("trajectory columns have different lengths".into()));
    }
    let mut cols = vec!["t".to_string()];
    cols.extend(columns_for("q", n));
    cols.extend(columns_for("u", n));
    cols.push("residual_trace".into());
    cols.push("converged".into());
    let mut t = Table::new(TRAJECTORY_SCHEMA, cols);
    t.meta.push(("n_q".into(), n.to_string()));
    t.meta.push(("h".into(), fmt_f64(tr.h)));
    for k in 0..len {
        let mut row = vec![fmt_f64(k as f64 * tr.h)];
        row.extend(tr.q[k].iter().map(|x| fmt_f64(*x)));
        row.extend(tr.u[k].iter().map(|x| fmt_f64(*x)));
        row.push(fmt_f64(rec.uncertainty[k]));
        row.push(u8::from(rec.converged[k]).to_string());
        t.rows.push(row);
    }
    Ok(t)
}

pub fn trajectory_from_table(t: &Table, origin: &str) -> Result<TrajectoryRecord, IoError> {
    if t.schema != TRAJECTORY_SCHEMA {
        return Err(IoError::Schema(format!("expected `{TRAJECTORY_SCHEMA}`, found `{}`", t.schema)));
    }
    let n: usize = meta_num(t, "n_q")?;
    let h: f64 = meta_num(t, "h")?;
    let col = |c: &str| t.column(c).ok_or_else(|| IoError::Schema(format!("missing column `{c}`")));
    let qi: Vec<usize> = columns_for("q", n).iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let ui: Vec<usize> = columns_for("u", n).iter().map(|c| col(c)).collect::<Result<_, _>>()?;
    let ri = col("residual_trace")?;
    let ci = col("converged")?;
    let mut rec = TrajectoryRecord { trajectory: Trajectory { h, q: Vec::new(), u: Vec::new() }, uncertainty: Vec::new(), converged: Vec::new() };
    for (r, row) in t.rows.iter().enumerate() {
        let get = |ix: &[usize]| -> Result<DVector<f64>, IoError> {
            let v: Vec<f64> = ix.iter().map(|&i| parse_f64(&row[i], origin, r + 1)).collect::<Result<_, _>>()?;
            Ok(DVector::from_vec(v))
        };
        rec.trajectory.q.push(get(&qi)?);
        rec.trajectory.u.push(get(&ui)?);
        rec.uncertainty.push(parse_f64(&row[ri], origin, r + 1)?);
        rec.converged.push(row[ci] != "0");
    }
    Ok(rec)
}

pub fn write_trajectory(path: &Path, rec: &TrajectoryRecord) -> Result<(), IoError> {
    trajectory_table(rec)?.write(path)
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryRecord, IoError> {
    trajectory_from_table(&Table::read(path)?, &path.display().to_string())
}

/// On-disk form of a trained model; the Gram system is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    pub mode: OperatorMode,
    pub kernels: KernelPair,
    pub thetas: ThetaPair,
    pub normalization: NormalizationSpec,
    pub slack: f64,
    pub dataset: Dataset,
}

impl ModelFile {
    pub fn from_model(m: &TrainedLgp) -> Self {
        ModelFile {
            schema: MODEL_SCHEMA.to_string(),
            mode: m.mode,
            kernels: m.kernels,
            thetas: m.thetas.clone(),
            normalization: m.normalization.clone(),
            slack: m.slack,
            dataset: m.dataset.clone(),
        }
    }

    pub fn into_model(self) -> Result<TrainedLgp, IoError> {
        if self.schema != MODEL_SCHEMA {
            return Err(IoError::Schema(format!("expected `{MODEL_SCHEMA}`, found `{}`", self.schema)));
        }
        self.thetas.lagrangian.check(&self.kernels.lagrangian).map_err(ModelError::from)?;
        self.thetas.force.check(&self.kernels.force).map_err(ModelError::from)?;
        Ok(TrainedLgp::new(self.dataset, self.kernels, self.thetas, self.normalization, self.slack, self.mode)?)
    }
}

pub fn write_model(path: &Path, m: &TrainedLgp) -> Result<(), IoError> {
    write_json(path, &ModelFile::from_model(m))
}

pub fn read_model(path: &Path) -> Result<TrainedLgp, IoError> {
    let f: ModelFile = read_json(path)?;
    f.into_model()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
