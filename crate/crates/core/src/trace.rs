//! Per-iteration run records and their CSV form.
//!
//! Row `k` holds the iterate `x_k` with the schedule values at `k`; the
//! step-related columns describe the outgoing step `x_k → x_{k+1}` and are
//! empty on the last row. The header starts with the twelve summary
//! columns; the trailing columns carry the iterate and the certificate
//! vectors so a trace can be re-checked without re-solving.

use crate::convex::Vector;
use crate::error::{Error, Result};
use crate::inner::StepCertificate;
use std::io::{Read, Write};

pub const HEADER: [&str; 17] = [
    "k",
    "eps_k",
    "lambda_k",
    "eta_k",
    "f",
    "g_or_gap",
    "step_norm",
    "eta1",
    "eta2",
    "cert_residual",
    "dist_to_ref",
    "stop_flag",
    "x",
    "sub_witness",
    "sub_pieces",
    "normal_witness",
    "normal_pieces",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step_norm: f64,
    pub stop_flag: bool,
    /// Absent for penalty-path traces.
    pub certificate: Option<StepCertificate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Vector,
    pub eps_k: f64,
    pub lambda_k: f64,
    pub eta_k: f64,
    pub f: f64,
    pub g_or_gap: Option<f64>,
    pub dist_to_ref: Option<f64>,
    pub step: Option<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    MaxIter,
    Criterion,
    Failure(Error),
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::MaxIter => write!(f, "max-iter"),
            StopReason::Criterion => write!(f, "criterion"),
            StopReason::Failure(e) => write!(f, "failure: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn vec_field(v: &Vector) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn pieces_field(ps: &[Vector]) -> String {
    ps.iter().map(vec_field).collect::<Vec<_>>().join("|")
}

fn format_error(row: usize, column: &str, detail: impl std::fmt::Display) -> Error {
    Error::TraceFormat(format!("row {row}, column {column}: {detail}"))
}

fn parse_num(row: usize, column: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| format_error(row, column, e))
}

fn parse_opt(row: usize, column: &str, s: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_num(row, column, s).map(Some)
    }
}

fn parse_vec(row: usize, column: &str, s: &str) -> Result<Vector> {
    let coords = s
        .split(';')
        .map(|c| parse_num(row, column, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(Vector::from_vec(coords))
}

fn parse_pieces(row: usize, column: &str, s: &str) -> Result<Vec<Vector>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split('|').map(|p| parse_vec(row, column, p)).collect()
}

impl TraceRecord {
    fn fields(&self) -> Vec<String> {
        let step = self.step.as_ref();
        let cert = step.and_then(|s| s.certificate.as_ref());
        vec![
            self.k.to_string(),
            num(self.eps_k),
            num(self.lambda_k),
            num(self.eta_k),
            num(self.f),
            opt(self.g_or_gap),
            opt(step.map(|s| s.step_norm)),
            opt(cert.map(|c| c.eta1)),
            opt(cert.map(|c| c.eta2)),
            opt(cert.map(|c| c.residual_norm)),
            opt(self.dist_to_ref),
            step.map(|s| if s.stop_flag { "1" } else { "0" }.to_string()).unwrap_or_default(),
            vec_field(&self.x),
            cert.map(|c| vec_field(&c.sub_witness)).unwrap_or_default(),
            cert.map(|c| pieces_field(&c.sub_pieces)).unwrap_or_default(),
            cert.map(|c| vec_field(&c.normal_witness)).unwrap_or_default(),
            cert.map(|c| pieces_field(&c.normal_pieces)).unwrap_or_default(),
        ]
    }

    fn from_fields(row: usize, r: &csv::StringRecord) -> Result<Self> {
        if r.len() != HEADER.len() {
            return Err(format_error(row, "*", format!("expected {} fields, found {}", HEADER.len(), r.len())));
        }
        let col = |j: usize| &r[j];
        let k = col(0).trim().parse::<usize>().map_err(|e| format_error(row, "k", e))?;
        let step_norm = parse_opt(row, "step_norm", col(6))?;
        let eta1 = parse_opt(row, "eta1", col(7))?;
        let certificate = match eta1 {
            None => None,
            Some(eta1) => Some(StepCertificate {
                eta1,
                eta2: parse_num(row, "eta2", col(8))?,
                residual_norm: parse_num(row, "cert_residual", col(9))?,
                sub_witness: parse_vec(row, "sub_witness", col(13))?,
                sub_pieces: parse_pieces(row, "sub_pieces", col(14))?,
                normal_witness: parse_vec(row, "normal_witness", col(15))?,
                normal_pieces: parse_pieces(row, "normal_pieces", col(16))?,
                iterations: 0,
            }),
        };
        let step = match step_norm {
            None => None,
            Some(step_norm) => Some(StepRecord {
                step_norm,
                stop_flag: match col(11).trim() {
                    "1" => true,
                    "0" => false,
                    other => return Err(format_error(row, "stop_flag", format!("invalid flag {other:?}"))),
                },
                certificate,
            }),
        };
        Ok(TraceRecord {
            k,
            eps_k: parse_num(row, "eps_k", col(1))?,
            lambda_k: parse_num(row, "lambda_k", col(2))?,
            eta_k: parse_num(row, "eta_k", col(3))?,
            f: parse_num(row, "f", col(4))?,
            g_or_gap: parse_opt(row, "g_or_gap", col(5))?,
            dist_to_ref: parse_opt(row, "dist_to_ref", col(10))?,
            x: parse_vec(row, "x", col(12))?,
            step,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::TraceFormat(e.to_string())
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds its starting record")
    }

    /// Number of completed steps.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn final_dist(&self) -> Option<f64> {
        self.last().dist_to_ref
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records(&self.records, out)
    }
}

pub fn write_records<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record(r.fields()).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::TraceFormat(e.to_string()))
}

/// Parses a trace written by [`Trace::write_csv`]; row numbers in errors
/// count data rows from 0.
pub fn read_records<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers().map_err(csv_error)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::TraceFormat("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        out.push(TraceRecord::from_fields(row, &rec)?);
    }
    Ok(out)
}
