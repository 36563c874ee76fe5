//! CSV formats: trajectory datasets, policy blocks, model reports and
//! result tables.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use vlearn_core::data::{compute_utilities, Dataset, Trajectory, UtilitySpec};
use vlearn_core::evalkit::{ReplicationOutcome, ResultRow};
use vlearn_core::ggq::{GreedyPolicy, QModel};
use vlearn_core::policy::{Policy, SoftmaxPolicy};

use crate::error::CliError;

/// Column layout of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    /// State columns in order. `None` takes every `s_<k>` column sorted
    /// by `k`.
    pub state_columns: Option<Vec<String>>,
    pub patient_column: String,
    pub time_column: String,
    pub action_column: String,
    pub utility: UtilitySpec,
    /// `None` uses one more than the largest logged action (at least 2).
    pub action_count: Option<usize>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            state_columns: None,
            patient_column: "patient_id".into(),
            time_column: "t".into(),
            action_column: "action".into(),
            utility: UtilitySpec::Column,
            action_count: None,
        }
    }
}

pub const UTILITY_COLUMN: &str = "utility";
pub const FOLLOWUP_COLUMN: &str = "followup";
pub const PROPENSITY_COLUMN: &str = "propensity";

fn data_err(row: usize, message: impl Into<String>) -> CliError {
    CliError::Data {
        row,
        message: message.into(),
    }
}

fn parse_f64(field: &str, row: usize, column: &str) -> Result<f64, CliError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| data_err(row, format!("column {column}: '{field}' is not a number")))
}

fn parse_bool(field: &str, row: usize) -> Result<bool, CliError> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(data_err(row, format!("followup '{other}' is not a boolean"))),
    }
}

struct Columns {
    patient: usize,
    time: usize,
    states: Vec<usize>,
    action: usize,
    utility: Option<usize>,
    followup: Option<usize>,
    propensity: Option<usize>,
}

fn locate(headers: &csv::StringRecord, schema: &Schema) -> Result<Columns, CliError> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| find(name).ok_or_else(|| data_err(1, format!("missing column '{name}'")));
    let states = match &schema.state_columns {
        Some(names) => names.iter().map(|n| need(n)).collect::<Result<Vec<_>, _>>()?,
        None => {
            let mut found: Vec<(usize, usize)> = headers
                .iter()
                .enumerate()
                .filter_map(|(i, h)| h.trim().strip_prefix("s_")?.parse::<usize>().ok().map(|k| (k, i)))
                .collect();
            found.sort();
            found.into_iter().map(|(_, i)| i).collect()
        }
    };
    if states.is_empty() {
        return Err(data_err(1, "missing column 's_1' (no state columns)"));
    }
    let utility = find(UTILITY_COLUMN);
    if utility.is_none() && schema.utility == UtilitySpec::Column {
        return Err(data_err(1, format!("missing column '{UTILITY_COLUMN}'")));
    }
    Ok(Columns {
        patient: need(&schema.patient_column)?,
        time: need(&schema.time_column)?,
        states,
        action: need(&schema.action_column)?,
        utility,
        followup: find(FOLLOWUP_COLUMN),
        propensity: find(PROPENSITY_COLUMN),
    })
}

#[derive(Default)]
struct Pending {
    id: String,
    first_row: usize,
    last_t: i64,
    states: Vec<f64>,
    actions: Vec<usize>,
    utilities: Vec<f64>,
    followup: Vec<bool>,
    propensity: Vec<f64>,
    /// Row of the state that must be the last one (no action logged).
    closed_at: Option<usize>,
}

impl Pending {
    fn finish(self, p: usize, has_propensity: bool) -> Result<Trajectory, CliError> {
        if self.closed_at.is_none() {
            return Err(data_err(
                self.first_row,
                format!("patient {}: final row must leave action and utility empty", self.id),
            ));
        }
        let traj = Trajectory::new(self.id, p, self.states, self.actions, self.utilities, self.followup)
            .map_err(|e| data_err(self.first_row, e.to_string()))?;
        if has_propensity {
            let row = self.first_row;
            traj.with_behavior_probs(self.propensity).map_err(|e| data_err(row, e.to_string()))
        } else {
            Ok(traj)
        }
    }
}

/// Parses a dataset. Row numbers in errors count the header as row 1.
pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| data_err(1, e.to_string()))?.clone();
    let cols = locate(&headers, schema)?;
    let p = cols.states.len();
    let mut done: Vec<Trajectory> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut current: Option<Pending> = None;
    let mut max_action = 0usize;
    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| data_err(row, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(data_err(
                row,
                format!("ragged state dimension: {} fields, header has {}", record.len(), headers.len()),
            ));
        }
        let id = record[cols.patient].to_string();
        let t: i64 = record[cols.time]
            .parse()
            .map_err(|_| data_err(row, format!("time '{}' is not an integer", &record[cols.time])))?;
        let same = current.as_ref().is_some_and(|c| c.id == id);
        if !same {
            if let Some(prev) = current.take() {
                done.push(prev.finish(p, cols.propensity.is_some())?);
            }
            if !seen.insert(id.clone()) {
                return Err(data_err(row, format!("patient {id} rows are not contiguous")));
            }
            current = Some(Pending {
                id: id.clone(),
                first_row: row,
                last_t: t - 1,
                ..Pending::default()
            });
        }
        let cur = current.as_mut().expect("pending trajectory");
        if t != cur.last_t + 1 {
            return Err(data_err(
                row,
                format!("non-contiguous time for patient {id}: {} follows {}", t, cur.last_t),
            ));
        }
        cur.last_t = t;
        if let Some(closed) = cur.closed_at {
            return Err(data_err(closed, format!("patient {id}: only the final row may omit the action")));
        }
        for &c in &cols.states {
            cur.states.push(parse_f64(&record[c], row, &headers[c])?);
        }
        cur.followup.push(match cols.followup {
            Some(c) if !record[c].is_empty() => parse_bool(&record[c], row)?,
            _ => true,
        });
        let action_field = &record[cols.action];
        if action_field.is_empty() {
            cur.closed_at = Some(row);
            continue;
        }
        let action: usize = action_field
            .parse()
            .map_err(|_| data_err(row, format!("action '{action_field}' is not a non-negative integer")))?;
        if let Some(k) = schema.action_count {
            if action >= k {
                return Err(data_err(row, format!("action out of range: {action} with {k} actions")));
            }
        }
        max_action = max_action.max(action);
        cur.actions.push(action);
        let utility = match cols.utility {
            Some(c) if !record[c].is_empty() => parse_f64(&record[c], row, UTILITY_COLUMN)?,
            Some(_) if schema.utility == UtilitySpec::Column => {
                return Err(data_err(row, "utility is empty"));
            }
            _ => 0.0,
        };
        cur.utilities.push(utility);
        if let Some(c) = cols.propensity {
            cur.propensity.push(parse_f64(&record[c], row, PROPENSITY_COLUMN)?);
        }
    }
    if let Some(prev) = current.take() {
        done.push(prev.finish(p, cols.propensity.is_some())?);
    }
    let action_count = schema.action_count.unwrap_or((max_action + 1).max(2));
    let dataset = Dataset::new(done, action_count).map_err(|e| CliError::Validation(e.to_string()))?;
    compute_utilities(&dataset, &schema.utility).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(file, schema).map_err(|e| e.in_file(path))
}

/// Writes the dataset in the layout [`read_dataset`] accepts with the
/// default schema. `followup` and `propensity` columns appear only when
/// they carry information.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<(), CliError> {
    let p = dataset.state_dim();
    let trajectories = dataset.trajectories();
    let with_followup = trajectories.iter().any(|t| t.followup().iter().any(|f| !f));
    let with_propensity = trajectories.iter().all(|t| t.behavior_probs().is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["patient_id".to_string(), "t".to_string()];
    header.extend((1..=p).map(|k| format!("s_{k}")));
    header.push("action".into());
    header.push(UTILITY_COLUMN.into());
    if with_followup {
        header.push(FOLLOWUP_COLUMN.into());
    }
    if with_propensity {
        header.push(PROPENSITY_COLUMN.into());
    }
    w.write_record(&header)?;
    for traj in trajectories {
        let horizon = traj.horizon();
        for t in 0..=horizon {
            let mut rec: Vec<String> = vec![traj.patient_id().to_string(), t.to_string()];
            rec.extend(traj.state(t).iter().map(|x| x.to_string()));
            if t < horizon {
                rec.push(traj.actions()[t].to_string());
                rec.push(traj.utilities()[t].to_string());
            } else {
                rec.push(String::new());
                rec.push(String::new());
            }
            if with_followup {
                rec.push(if traj.followup()[t] { "1" } else { "0" }.into());
            }
            if with_propensity {
                rec.push(match traj.behavior_probs() {
                    Some(b) if t < horizon => b[t].to_string(),
                    _ => String::new(),
                });
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A stored policy: softmax coefficients or a greedy Q-model.
#[derive(Debug, Clone)]
pub enum StoredPolicy {
    Softmax(SoftmaxPolicy),
    Greedy(GreedyPolicy),
}

impl StoredPolicy {
    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            StoredPolicy::Softmax(p) => p,
            StoredPolicy::Greedy(p) => p,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            StoredPolicy::Softmax(p) => p.state_dim(),
            StoredPolicy::Greedy(p) => p.model().state_dim(),
        }
    }
}

/// Policy block: a `kind,K,p[,epsilon]` line, then coefficient rows.
///
/// `softmax` has `K − 1` rows of `p + 1` coefficients (intercept last,
/// the last action is the reference). `greedy` has one row holding `η`.
pub fn write_policy<W: Write>(policy: &StoredPolicy, mut w: W) -> Result<(), CliError> {
    let row = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    match policy {
        StoredPolicy::Softmax(p) => {
            writeln!(w, "softmax,{},{}", p.action_count(), p.state_dim())?;
            for chunk in p.beta().chunks(p.input_dim()) {
                writeln!(w, "{}", row(chunk))?;
            }
        }
        StoredPolicy::Greedy(g) => {
            let m = g.model();
            writeln!(w, "greedy,{},{},{}", m.action_count(), m.state_dim(), g.epsilon())?;
            writeln!(w, "{}", row(m.eta()))?;
        }
    }
    Ok(())
}

pub fn read_policy<R: Read>(mut r: R) -> Result<StoredPolicy, CliError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| data_err(1, "empty policy file"))?;
    let fields: Vec<&str> = head.split(',').map(str::trim).collect();
    let int = |i: usize| -> Result<usize, CliError> {
        fields
            .get(i)
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| data_err(1, format!("policy header '{head}' needs kind,K,p")))
    };
    let (k, p) = (int(1)?, int(2)?);
    let mut coef = Vec::new();
    for (i, line) in lines {
        for f in line.split(',') {
            coef.push(parse_f64(f, i + 1, "coefficient")?);
        }
    }
    let invalid = |e: vlearn_core::error::Error| CliError::Validation(format!("policy file: {e}"));
    match fields[0] {
        "softmax" => Ok(StoredPolicy::Softmax(SoftmaxPolicy::new(k, p, coef).map_err(invalid)?)),
        "greedy" => {
            let eps = match fields.get(3) {
                Some(f) => parse_f64(f, 1, "epsilon")?,
                None => 0.0,
            };
            let model = QModel::new(k, p, coef).map_err(invalid)?;
            Ok(StoredPolicy::Greedy(GreedyPolicy::with_epsilon(model, eps).map_err(invalid)?))
        }
        other => Err(data_err(1, format!("unknown policy kind '{other}'"))),
    }
}

/// Long-format `field,index,value` report.
#[derive(Debug, Clone, Default)]
pub struct Report {
    rows: Vec<(String, usize, f64)>,
}

impl Report {
    pub fn scalar(&mut self, field: &str, value: f64) {
        self.rows.push((field.into(), 0, value));
    }

    pub fn vector(&mut self, field: &str, values: &[f64]) {
        self.rows.extend(values.iter().enumerate().map(|(i, v)| (field.to_string(), i, *v)));
    }

    pub fn get(&self, field: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.0 == field).map(|r| r.2).collect()
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["field", "index", "value"])?;
        for (f, i, v) in &self.rows {
            w.write_record([f.as_str(), &i.to_string(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, CliError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| data_err(k + 2, e.to_string()))?;
            let index = rec[1].parse().map_err(|_| data_err(k + 2, "bad index"))?;
            rows.push((rec[0].to_string(), index, parse_f64(&rec[2], k + 2, "value")?));
        }
        Ok(Report { rows })
    }
}

pub const RESULT_HEADER: [&str; 8] = ["method", "n", "T", "gamma", "mean_value", "mc_sd", "mc_se", "replications"];

pub fn write_result_rows<W: Write>(rows: &[ResultRow], w: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.horizon.to_string(),
            r.gamma.to_string(),
            r.mean_value.to_string(),
            r.mc_sd.to_string(),
            r.mc_se.to_string(),
            r.replications.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_result_rows<R: Read>(r: R) -> Result<Vec<ResultRow>, CliError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| data_err(row, e.to_string()))?;
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| data_err(row, format!("bad integer '{}'", &rec[i])));
        out.push(ResultRow {
            method: rec[0].to_string(),
            n: int(1)?,
            horizon: int(2)?,
            gamma: parse_f64(&rec[3], row, "gamma")?,
            mean_value: parse_f64(&rec[4], row, "mean_value")?,
            mc_sd: parse_f64(&rec[5], row, "mc_sd")?,
            mc_se: parse_f64(&rec[6], row, "mc_se")?,
            replications: int(7)?,
        });
    }
    Ok(out)
}

/// One method's value in one replication of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationValue {
    pub method: String,
    pub n: usize,
    pub horizon: usize,
    pub replication: usize,
    /// `None` marks a failed fit.
    pub value: Option<f64>,
}

impl ReplicationValue {
    pub fn from_outcome(n: usize, horizon: usize, o: &ReplicationOutcome) -> Vec<Self> {
        o.values
            .iter()
            .map(|(m, v)| ReplicationValue {
                method: m.id(),
                n,
                horizon,
                replication: o.replication,
                value: *v,
            })
            .collect()
    }
}

/// `replication,method,n,T,value` with an empty value for a failed fit.
pub fn write_replications<W: Write>(values: &[ReplicationValue], w: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["replication", "method", "n", "T", "value"])?;
    for v in values {
        w.write_record([
            v.replication.to_string(),
            v.method.clone(),
            v.n.to_string(),
            v.horizon.to_string(),
            v.value.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replications<R: Read>(r: R) -> Result<Vec<ReplicationValue>, CliError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| data_err(row, e.to_string()))?;
        let int = |i: usize| rec[i].parse::<usize>().map_err(|_| data_err(row, format!("bad integer '{}'", &rec[i])));
        out.push(ReplicationValue {
            replication: int(0)?,
            method: rec[1].to_string(),
            n: int(2)?,
            horizon: int(3)?,
            value: if rec[4].is_empty() { None } else { Some(parse_f64(&rec[4], row, "value")?) },
        });
    }
    Ok(out)
}
