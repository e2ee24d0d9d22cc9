use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{FitResult, ModelKind};

/// Column order of fit tables.
pub const REPORT_COLUMNS: [&str; 13] = [
    "scale",
    "S_err",
    "gamma_hz",
    "gamma_err",
    "f0_hz",
    "f0_err",
    "tau_s",
    "tau_err",
    "tau_periods",
    "gamma_v_hz",
    "gamma_v_err",
    "area",
    "area_err",
];

/// One table row; delay and feedback columns are absent for thermal fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportRow {
    pub scale: f64,
    #[serde(rename = "S_err")]
    pub s_err: f64,
    pub gamma_hz: f64,
    pub gamma_err: f64,
    pub f0_hz: f64,
    pub f0_err: f64,
    pub tau_s: Option<f64>,
    pub tau_err: Option<f64>,
    pub tau_periods: Option<f64>,
    pub gamma_v_hz: Option<f64>,
    pub gamma_v_err: Option<f64>,
    pub area: f64,
    pub area_err: f64,
}

impl From<&FitResult> for FitReportRow {
    fn from(r: &FitResult) -> Self {
        let delayed = r.model == ModelKind::Delayed;
        let opt = |v: f64| delayed.then_some(v);
        Self {
            scale: r.params.scale,
            s_err: r.std_errors.scale,
            gamma_hz: r.params.gamma_hz,
            gamma_err: r.std_errors.gamma_hz,
            f0_hz: r.params.f0_hz,
            f0_err: r.std_errors.f0_hz,
            tau_s: opt(r.params.tau_s),
            tau_err: opt(r.std_errors.tau_s),
            tau_periods: opt(r.params.tau_periods()),
            gamma_v_hz: opt(r.params.gamma_v_hz),
            gamma_v_err: opt(r.std_errors.gamma_v_hz),
            area: r.area,
            area_err: r.area_err,
        }
    }
}

impl FitReportRow {
    /// Cell strings in [`REPORT_COLUMNS`] order; absent values are empty.
    pub fn cells(&self) -> Vec<String> {
        let n = |v: f64| format!("{v:?}");
        let o = |v: Option<f64>| v.map(n).unwrap_or_default();
        vec![
            n(self.scale),
            n(self.s_err),
            n(self.gamma_hz),
            n(self.gamma_err),
            n(self.f0_hz),
            n(self.f0_err),
            o(self.tau_s),
            o(self.tau_err),
            o(self.tau_periods),
            o(self.gamma_v_hz),
            o(self.gamma_v_err),
            n(self.area),
            n(self.area_err),
        ]
    }
}

/// Table rows for `results`, in order.
pub fn fit_report(results: &[FitResult]) -> Vec<FitReportRow> {
    results.iter().map(FitReportRow::from).collect()
}

pub fn write_report_csv<W: Write>(w: W, rows: &[FitReportRow]) -> Result<(), csv::Error> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(REPORT_COLUMNS)?;
    for row in rows {
        wr.write_record(row.cells())?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_report_csv<R: std::io::Read>(r: R) -> Result<Vec<FitReportRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

pub fn write_report_json<W: Write>(w: W, rows: &[FitReportRow]) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(w, rows)
}
