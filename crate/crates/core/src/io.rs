//! File formats: sample CSV (`index,y`) with a JSON sidecar, input CSV
//! (`x0,…,x{d-1}`), experiment report CSV, and preconditioner sweep CSV.
//!
//! Floats are written with 17 significant digits so they round-trip exactly.

use std::error::Error as StdError;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::FidelitySpec;
use crate::error::{invalid, Error, Result};
use crate::exact::{GpSample, Method};
use crate::kernel::{InputData, KernelParams};
use crate::precond::SweepRow;
use crate::rff::SampleSink;
use crate::stats::ExperimentReport;

pub const REPORT_HEADER: [&str; 9] = [
    "n",
    "fidelity",
    "rate",
    "ci_low",
    "ci_high",
    "repeats",
    "method",
    "rescaled_fidelity",
    "failures",
];

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Metadata written next to a sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub method: Method,
    pub n: usize,
    pub params: KernelParams,
    pub fidelity: FidelitySpec,
    pub seed: u64,
    /// Seed the inputs were drawn from, if they were generated.
    pub inputs_seed: Option<u64>,
}

impl SampleSidecar {
    pub fn from_sample(s: &GpSample, inputs_seed: Option<u64>) -> Self {
        Self {
            method: s.method,
            n: s.n(),
            params: s.params,
            fidelity: s.fidelity,
            seed: s.seed,
            inputs_seed,
        }
    }
}

pub fn write_sample_csv<W: Write>(w: W, y: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "y"])?;
    for (i, v) in y.iter().enumerate() {
        wr.write_record([i.to_string(), fmt_float(*v)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sample_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| invalid("sample csv", "missing column \"y\""))?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: f64 = rec
            .get(col)
            .ok_or_else(|| invalid("sample csv", "short row"))?
            .trim()
            .parse()
            .map_err(|e| invalid("sample csv", format!("row {}: {e}", out.len())))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_inputs_csv<W: Write>(w: W, x: &InputData) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record((0..x.dim()).map(|c| format!("x{c}")))?;
    for i in 0..x.n() {
        wr.write_record(x.points.row(i).iter().map(|v| fmt_float(*v)))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_inputs_csv<R: Read>(r: R) -> Result<InputData> {
    let mut rd = csv::Reader::from_reader(r);
    let dim = rd.headers()?.len();
    let mut vals = Vec::new();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: rec.len() });
        }
        for f in rec.iter() {
            vals.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid("inputs csv", format!("row {rows}: {e}")))?,
            );
        }
        rows += 1;
    }
    InputData::from_points(DMatrix::from_row_slice(rows, dim, &vals))
}

pub fn write_report_csv<W: Write>(w: W, report: &ExperimentReport) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(REPORT_HEADER)?;
    for c in &report.cells {
        wr.write_record([
            c.n.to_string(),
            fmt_float(c.fidelity),
            fmt_float(c.rate),
            fmt_float(c.ci_low),
            fmt_float(c.ci_high),
            c.repeats.to_string(),
            c.method.to_string(),
            fmt_float(c.rescaled_fidelity),
            c.failures.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["n", "lengthscale", "metric"])?;
    for r in rows {
        wr.write_record([r.n.to_string(), fmt_float(r.lengthscale), fmt_float(r.metric)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Streams `index,y` rows to a writer.
pub struct CsvSampleSink<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvSampleSink<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(["index", "y"])?;
        Ok(Self { inner })
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

impl<W: Write> SampleSink for CsvSampleSink<W> {
    fn emit(&mut self, index: usize, y: f64) -> std::result::Result<(), Box<dyn StdError + Send + Sync>> {
        self.inner.write_record([index.to_string(), fmt_float(y)])?;
        Ok(())
    }
}
