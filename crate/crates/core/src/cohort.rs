//! Observations of risk score and failure status, and their CSV ingestion.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::LogisticFit;

/// Viral-load threshold `v*` (copies/mL) above which a visit counts as a failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlThreshold(f64);

impl VlThreshold {
    pub fn new(v_star: f64) -> Result<Self> {
        if !(v_star >= 0.0) || !v_star.is_finite() {
            return Err(Error::Config(format!("VL threshold must be finite and nonnegative, got {v_star}")));
        }
        Ok(Self(v_star))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for VlThreshold {
    fn default() -> Self {
        Self(400.0)
    }
}

/// `1` iff `raw_vl` strictly exceeds the threshold.
pub fn dichotomize(raw_vl: f64, threshold: VlThreshold) -> Result<bool> {
    if raw_vl.is_nan() {
        return Err(Error::Config("raw VL is missing".into()));
    }
    if raw_vl < 0.0 {
        return Err(Error::Config(format!("raw VL must be nonnegative, got {raw_vl}")));
    }
    Ok(raw_vl > threshold.0)
}

/// A single visit: risk score (larger = riskier) and gold-standard status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub score: f64,
    #[serde(with = "status_serde")]
    pub status: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_vl: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub markers: BTreeMap<String, f64>,
}

mod status_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("status not binary: {other}"))),
        }
    }
}

impl Observation {
    pub fn new(score: f64, status: bool) -> Self {
        Self { score, status, raw_vl: None, markers: BTreeMap::new() }
    }
}

/// An immutable, non-empty sequence of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    observations: Vec<Observation>,
}

impl Cohort {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (i, o) in observations.iter().enumerate() {
            if !o.score.is_finite() {
                return Err(Error::Row { row: i + 1, message: format!("score {} is not finite", o.score) });
            }
            if let Some(v) = o.raw_vl {
                if !(v >= 0.0) {
                    return Err(Error::Row { row: i + 1, message: format!("raw VL {v} is negative") });
                }
            }
        }
        Ok(Self { observations })
    }

    pub fn from_scores(scores: &[f64], statuses: &[bool]) -> Result<Self> {
        if scores.len() != statuses.len() {
            return Err(Error::Config(format!(
                "{} scores but {} statuses",
                scores.len(),
                statuses.len()
            )));
        }
        Self::new(scores.iter().zip(statuses).map(|(&s, &z)| Observation::new(s, z)).collect())
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn scores(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.score).collect()
    }

    pub fn statuses(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.status).collect()
    }

    pub fn positives(&self) -> usize {
        self.observations.iter().filter(|o| o.status).count()
    }

    pub fn require_both_statuses(&self) -> Result<()> {
        let k = self.positives();
        if k == 0 || k == self.n() {
            Err(Error::SingleStatus)
        } else {
            Ok(())
        }
    }

    /// Cohort made of the observations at `indices` (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.observations[i].clone()).collect())
    }

    /// Replace every score, keeping statuses and markers.
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self> {
        if scores.len() != self.n() {
            return Err(Error::Config("score vector length does not match cohort".into()));
        }
        Self::new(
            self.observations
                .iter()
                .zip(scores)
                .map(|(o, &s)| Observation { score: s, ..o.clone() })
                .collect(),
        )
    }

    /// Write the cohort as CSV with columns `score,z[,vl][,markers...]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let has_vl = self.observations.iter().any(|o| o.raw_vl.is_some());
        let marker_names: Vec<String> = self
            .observations
            .first()
            .map(|o| o.markers.keys().cloned().collect())
            .unwrap_or_default();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["score".to_string(), "z".to_string()];
        if has_vl {
            header.push("vl".into());
        }
        header.extend(marker_names.iter().cloned());
        w.write_record(&header)?;
        for o in &self.observations {
            let mut rec = vec![fmt_f64(o.score), u8::from(o.status).to_string()];
            if has_vl {
                rec.push(o.raw_vl.map(fmt_f64).unwrap_or_default());
            }
            for m in &marker_names {
                rec.push(o.markers.get(m).map(|&v| fmt_f64(v)).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Where the risk score comes from in an input file.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreSource {
    /// A column holding the risk score itself.
    Column(String),
    /// The linear-logistic composite of the named marker columns.
    Composite(LogisticFit),
}

/// Column mapping for [`parse_cohort`].
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub score: ScoreSource,
    /// Negate the score column, for markers where smaller means riskier (e.g. CD4).
    pub negate: bool,
    /// Extra marker columns carried into each observation.
    pub markers: Vec<String>,
    pub status: Option<String>,
    pub vl: Option<String>,
    pub threshold: VlThreshold,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            score: ScoreSource::Column("score".into()),
            negate: false,
            markers: Vec::new(),
            status: Some("z".into()),
            vl: Some("vl".into()),
            threshold: VlThreshold::default(),
        }
    }
}

fn parse_number(row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Row {
        row,
        message: format!("non-numeric value {raw:?} in column `{column}`"),
    })
}

fn parse_status(row: usize, raw: &str) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::StatusNotBinary(format!("row {row}: {other:?}"))),
    }
}

/// Parse a delimited text stream with a header row into a [`Cohort`].
///
/// Status is read from the status column, derived from the VL column, or
/// both; rows where the two disagree are rejected.
pub fn parse_cohort<R: Read>(source: R, schema: &Schema) -> Result<Cohort> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput);
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let status_col = schema.status.as_deref().and_then(find);
    let vl_col = schema.vl.as_deref().and_then(find);
    if status_col.is_none() && vl_col.is_none() {
        return Err(Error::MissingColumn(schema.status.clone().unwrap_or_else(|| "z".into())));
    }

    let (score_col, composite_cols) = match &schema.score {
        ScoreSource::Column(name) => (Some(require(name)?), Vec::new()),
        ScoreSource::Composite(fit) => {
            let cols = fit
                .feature_names
                .iter()
                .map(|n| require(n).map(|i| (n.clone(), i)))
                .collect::<Result<Vec<_>>>()?;
            (None, cols)
        }
    };
    let marker_cols = schema
        .markers
        .iter()
        .map(|n| require(n).map(|i| (n.clone(), i)))
        .collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let field = |i: usize| rec.get(i).unwrap_or("");

        let raw_vl = match vl_col {
            Some(i) if !field(i).is_empty() => {
                let v = parse_number(row, "vl", field(i))?;
                if v < 0.0 {
                    return Err(Error::Row { row, message: format!("raw VL {v} is negative") });
                }
                Some(v)
            }
            _ => None,
        };
        let direct = match status_col {
            Some(i) if !field(i).is_empty() => Some(parse_status(row, field(i))?),
            _ => None,
        };
        let derived = raw_vl.map(|v| v > schema.threshold.value());
        let status = match (direct, derived) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Row {
                    row,
                    message: format!("status {} contradicts VL {}", u8::from(a), raw_vl.unwrap_or_default()),
                })
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::Row { row, message: "no status or VL value".into() }),
        };

        let mut markers = BTreeMap::new();
        for (name, i) in &marker_cols {
            if field(*i).is_empty() {
                return Err(Error::Row { row, message: format!("missing marker `{name}`") });
            }
            markers.insert(name.clone(), parse_number(row, name, field(*i))?);
        }

        let score = match (&schema.score, score_col) {
            (ScoreSource::Column(name), Some(i)) => {
                if field(i).is_empty() {
                    return Err(Error::Row { row, message: format!("missing value in `{name}`") });
                }
                parse_number(row, name, field(i))?
            }
            (ScoreSource::Composite(fit), _) => {
                let mut values = BTreeMap::new();
                for (name, i) in &composite_cols {
                    if field(*i).is_empty() {
                        return Err(Error::Row { row, message: format!("missing marker `{name}`") });
                    }
                    values.insert(name.clone(), parse_number(row, name, field(*i))?);
                }
                composite_score(&values, fit).map_err(|e| Error::Row { row, message: e.to_string() })?
            }
            _ => unreachable!("score column resolved above"),
        };
        let score = if schema.negate { -score } else { score };
        if !score.is_finite() {
            return Err(Error::Row { row, message: format!("score {score} is not finite") });
        }
        observations.push(Observation { score, status, raw_vl, markers });
    }
    Cohort::new(observations)
}

/// Markers and labels for fitting a composite score.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub status: Vec<bool>,
}

/// Read marker columns plus status for composite-score fitting.
pub fn parse_marker_table<R: Read>(source: R, names: &[String], schema: &Schema) -> Result<MarkerTable> {
    let with_markers = Schema {
        score: ScoreSource::Column(names.first().cloned().ok_or_else(|| Error::Config("no markers given".into()))?),
        negate: false,
        markers: names.to_vec(),
        ..schema.clone()
    };
    let cohort = parse_cohort(source, &with_markers)?;
    let rows = cohort
        .observations()
        .iter()
        .map(|o| names.iter().map(|n| o.markers[n]).collect())
        .collect();
    Ok(MarkerTable { names: names.to_vec(), rows, status: cohort.statuses() })
}

/// Inverse-logit of the fitted linear predictor at the given marker values.
pub fn composite_score(markers: &BTreeMap<String, f64>, fit: &LogisticFit) -> Result<f64> {
    let mut eta = fit.intercept;
    for (name, beta) in fit.feature_names.iter().zip(&fit.coefficients) {
        let x = markers.get(name).ok_or_else(|| Error::MissingMarker(name.clone()))?;
        eta += beta * x;
    }
    if !eta.is_finite() {
        return Err(Error::Numerical(format!("linear predictor is not finite ({eta})")));
    }
    Ok(crate::logistic::inv_logit(eta))
}
