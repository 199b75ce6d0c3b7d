use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gaussian::Pattern;
use crate::metrics::EvalReport;

pub const METRICS: [&str; 4] = ["excess_misclassification", "mae_bayes", "mcb_delta", "coef_mse"];
const NA: &str = "NA";
const PATTERN_PREFIX: &str = "mae_pattern_";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Fit returned after exhausting its iteration budget; metrics are kept.
    NotConverged,
    Failed(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::NotConverged => f.write_str("not_converged"),
            Status::Failed(why) => write!(f, "failed: {}", why.replace(['\n', '\r'], " ")),
        }
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(Status::Ok),
            "not_converged" => Ok(Status::NotConverged),
            _ => s
                .strip_prefix("failed: ")
                .map(|w| Status::Failed(w.to_string()))
                .ok_or_else(|| Error::InvalidInput(format!("unknown status '{s}'"))),
        }
    }
}

impl Serialize for Status {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Status {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One grid cell: a method fitted on one replicate at one training size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub n: usize,
    pub replicate: usize,
    pub status: Status,
    pub excess_misclassification: Option<f64>,
    pub mae_bayes: Option<f64>,
    pub mcb_delta: Option<f64>,
    pub coef_mse: Option<f64>,
    pub mae_pattern: BTreeMap<Pattern, f64>,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

impl ResultRow {
    pub fn new(scenario: &str, method: &str, n: usize, replicate: usize) -> Self {
        ResultRow {
            scenario: scenario.into(),
            method: method.into(),
            n,
            replicate,
            status: Status::Ok,
            excess_misclassification: None,
            mae_bayes: None,
            mcb_delta: None,
            coef_mse: None,
            mae_pattern: BTreeMap::new(),
            fit_seconds: 0.0,
            predict_seconds: 0.0,
        }
    }

    pub fn fill_from(&mut self, rep: &EvalReport) {
        self.excess_misclassification = Some(rep.excess_misclassification);
        self.mae_bayes = Some(rep.mae_bayes);
        self.mcb_delta = Some(rep.mcb_delta);
        self.coef_mse = rep.coef_mse;
        self.mae_pattern = rep.per_pattern.iter().map(|(p, m)| (p.clone(), m.mae_bayes)).collect();
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "excess_misclassification" => self.excess_misclassification,
            "mae_bayes" => self.mae_bayes,
            "mcb_delta" => self.mcb_delta,
            "coef_mse" => self.coef_mse,
            _ => None,
        }
    }

    fn usable(&self) -> bool {
        !matches!(self.status, Status::Failed(_))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| NA.into())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == NA || s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::InvalidInput(format!("'{s}' is not a number")))
}

/// `results.csv`: identity columns, status, the four metrics and one MAE
/// column per missingness pattern seen anywhere in `rows`. Timings are kept
/// out so reruns compare byte for byte.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let patterns: BTreeSet<&Pattern> = rows.iter().flat_map(|r| r.mae_pattern.keys()).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["scenario", "method", "n", "replicate", "status"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(METRICS.iter().map(|s| s.to_string()));
    header.extend(patterns.iter().map(|p| format!("{PATTERN_PREFIX}{p}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.scenario.clone(),
            r.method.clone(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.status.to_string(),
        ];
        rec.extend(METRICS.iter().map(|m| fmt_opt(r.metric(m))));
        rec.extend(patterns.iter().map(|p| fmt_opt(r.mae_pattern.get(*p).copied())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "method", "n", "replicate", "fit_seconds", "predict_seconds"])?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.fit_seconds.to_string(),
            r.predict_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("results file lacks column '{name}'")))
    };
    let (c_scn, c_method, c_n, c_rep, c_status) =
        (col("scenario")?, col("method")?, col("n")?, col("replicate")?, col("status")?);
    let metric_cols: Vec<usize> = METRICS.iter().map(|m| col(m)).collect::<Result<_>>()?;
    let pattern_cols: Vec<(usize, Pattern)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(PATTERN_PREFIX).map(|bits| (i, bits)))
        .map(|(i, bits)| Pattern::parse(bits).map(|p| (i, p)))
        .collect::<Result<_>>()?;
    let seconds = (header.iter().position(|h| h == "fit_seconds"), header.iter().position(|h| h == "predict_seconds"));
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("'{s}' is not a count")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut row = ResultRow::new(&rec[c_scn], &rec[c_method], parse_usize(&rec[c_n])?, parse_usize(&rec[c_rep])?);
        row.status = rec[c_status].parse()?;
        let m: Vec<Option<f64>> = metric_cols.iter().map(|&c| parse_opt(&rec[c])).collect::<Result<_>>()?;
        row.excess_misclassification = m[0];
        row.mae_bayes = m[1];
        row.mcb_delta = m[2];
        row.coef_mse = m[3];
        for (c, p) in &pattern_cols {
            if let Some(v) = parse_opt(&rec[*c])? {
                row.mae_pattern.insert(p.clone(), v);
            }
        }
        if let (Some(f), Some(p)) = seconds {
            row.fit_seconds = parse_opt(&rec[f])?.unwrap_or(0.0);
            row.predict_seconds = parse_opt(&rec[p])?.unwrap_or(0.0);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupField {
    Scenario,
    Method,
    N,
    Replicate,
}

impl GroupField {
    pub fn name(self) -> &'static str {
        match self {
            GroupField::Scenario => "scenario",
            GroupField::Method => "method",
            GroupField::N => "n",
            GroupField::Replicate => "replicate",
        }
    }

    fn value(self, r: &ResultRow) -> String {
        match self {
            GroupField::Scenario => r.scenario.clone(),
            GroupField::Method => r.method.clone(),
            GroupField::N => r.n.to_string(),
            GroupField::Replicate => r.replicate.to_string(),
        }
    }

    /// Parse a comma-separated list such as `method,n`.
    pub fn parse_list(s: &str) -> Result<Vec<GroupField>> {
        s.split(',')
            .map(|f| match f.trim() {
                "scenario" => Ok(GroupField::Scenario),
                "method" => Ok(GroupField::Method),
                "n" => Ok(GroupField::N),
                "replicate" => Ok(GroupField::Replicate),
                other => Err(Error::Config(format!("cannot group by '{other}'"))),
            })
            .collect()
    }
}

/// Mean and standard error (`sd / sqrt(count)`, 0 for a single value).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

fn mean_se(values: &[f64]) -> Option<MeanSe> {
    let k = values.len();
    if k == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let se = if k > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanSe { mean, se, count: k })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub key: Vec<String>,
    pub rows: usize,
    pub usable: usize,
    /// One entry per name in [`METRICS`].
    pub metrics: Vec<Option<MeanSe>>,
}

impl SummaryRow {
    pub fn metric(&self, name: &str) -> Option<MeanSe> {
        METRICS.iter().position(|m| *m == name).and_then(|i| self.metrics[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSummaryRow {
    pub key: Vec<String>,
    pub pattern: Pattern,
    pub mae_bayes: MeanSe,
}

/// Group rows (keeping first-appearance order) and average each metric over
/// the rows that did not fail. Groups with no usable value are dropped.
pub fn summarize(rows: &[ResultRow], fields: &[GroupField]) -> Result<(Vec<SummaryRow>, Vec<PatternSummaryRow>)> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no result rows to summarize".into()));
    }
    let mut order: Vec<Vec<String>> = Vec::new();
    let mut groups: HashMap<Vec<String>, Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let key: Vec<String> = fields.iter().map(|f| f.value(r)).collect();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    let mut summary = Vec::new();
    let mut patterns = Vec::new();
    for key in order {
        let members = &groups[&key];
        let usable: Vec<&&ResultRow> = members.iter().filter(|r| r.usable()).collect();
        let metrics: Vec<Option<MeanSe>> = METRICS
            .iter()
            .map(|m| mean_se(&usable.iter().filter_map(|r| r.metric(m)).collect::<Vec<_>>()))
            .collect();
        if metrics.iter().all(Option::is_none) {
            log::warn!("group {} has no usable results; omitted", key.join("/"));
            continue;
        }
        let mut per: BTreeMap<&Pattern, Vec<f64>> = BTreeMap::new();
        for r in &usable {
            for (p, v) in &r.mae_pattern {
                per.entry(p).or_default().push(*v);
            }
        }
        for (p, vals) in per {
            patterns.push(PatternSummaryRow {
                key: key.clone(),
                pattern: p.clone(),
                mae_bayes: mean_se(&vals).expect("non-empty"),
            });
        }
        summary.push(SummaryRow {
            key,
            rows: members.len(),
            usable: usable.len(),
            metrics,
        });
    }
    Ok((summary, patterns))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], fields: &[GroupField], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = fields.iter().map(|f| f.name().to_string()).collect();
    header.push("rows".into());
    header.push("usable".into());
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_se"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = r.key.clone();
        rec.push(r.rows.to_string());
        rec.push(r.usable.to_string());
        for m in &r.metrics {
            rec.push(fmt_opt(m.map(|s| s.mean)));
            rec.push(fmt_opt(m.map(|s| s.se)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pattern_summary_csv<W: Write>(rows: &[PatternSummaryRow], fields: &[GroupField], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = fields.iter().map(|f| f.name().to_string()).collect();
    header.extend(["pattern", "count", "mae_bayes_mean", "mae_bayes_se"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = r.key.clone();
        rec.push(r.pattern.to_string());
        rec.push(r.mae_bayes.count.to_string());
        rec.push(r.mae_bayes.mean.to_string());
        rec.push(r.mae_bayes.se.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
