//! JSON report schema and CSV rows.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use hybrid_epr_core::io_maps::Warning;
use hybrid_epr_core::oracle::TrajectorySample;
use hybrid_epr_core::planner::FeasibilityReport;
use hybrid_epr_core::protocols::ShotEstimate;
use hybrid_epr_core::{EprReport, GaussianState, MeasurementRecord, ProtocolParams};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::scenario::{ProtocolKind, Resolved};

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level report. Everything except `metadata` is a pure function of the
/// scenario and seed.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolKind>,
    pub seed: u64,
    pub resolved: Resolved,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<ProtocolResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResult>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub generated_unix_ms: u128,
    pub tool: String,
}

impl Metadata {
    pub fn now() -> Self {
        let ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        Self {
            generated_unix_ms: ms,
            tool: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_owned(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolResult {
    Epr(EprResult),
    Verify(VerifyResult),
    Teleport(TeleportResult),
    OracleCompare(CompareResult),
}

#[derive(Debug, Clone, Serialize)]
pub struct EprResult {
    pub predicted: EprReport,
    /// Output of the pulse-level map before the loss budget.
    pub idealized: EprReport,
    /// After the loss budget.
    pub achieved: EprReport,
    pub records: [MeasurementRecord; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
    pub state: GaussianState,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyResult {
    pub predicted: EprReport,
    pub generated: EprResult,
    pub inferred: EprReport,
    /// Pair after the verification pulse.
    pub post: EprReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<ShotEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TeleportResult {
    pub predicted: EprReport,
    pub resource: EprReport,
    pub fidelity: f64,
    pub added_noise: (f64, f64),
    pub output_state: GaussianState,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareResult {
    pub delta_predicted: f64,
    pub delta_idealized: f64,
    pub delta_oracle: f64,
    pub rel_dev_idealized: f64,
    pub rel_dev_oracle: f64,
    pub oracle: EprReport,
    pub steps: usize,
    pub conservation_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub richardson_change: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<ExcessCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<ExcessCheck>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectorySample>,
}

/// Oracle excess over a reference oracle run against a closed-form penalty.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExcessCheck {
    /// Matching error or `γ_m τ`.
    pub parameter: f64,
    pub penalty: f64,
    pub excess: f64,
    /// `excess / penalty`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub seed: u64,
    pub params: ProtocolParams,
    pub row: Row,
    pub result: ProtocolResult,
}

/// Flat summary used for CSV output.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Row {
    pub delta_epr_predicted: f64,
    pub delta_epr_achieved: f64,
    pub entangled: bool,
    pub fidelity: Option<f64>,
}

impl ProtocolResult {
    pub fn row(&self) -> Row {
        let (p, a, e, f) = match self {
            ProtocolResult::Epr(r) => (r.predicted.delta_epr, r.achieved.delta_epr, r.achieved.entangled, None),
            ProtocolResult::Verify(r) => (r.predicted.delta_epr, r.inferred.delta_epr, r.inferred.entangled, None),
            ProtocolResult::Teleport(r) => (
                r.predicted.delta_epr,
                r.resource.delta_epr,
                r.resource.entangled,
                Some(r.fidelity),
            ),
            ProtocolResult::OracleCompare(r) => (r.delta_predicted, r.delta_oracle, r.oracle.entangled, None),
        };
        Row {
            delta_epr_predicted: p,
            delta_epr_achieved: a,
            entangled: e,
            fidelity: f,
        }
    }
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: "<output>".into(),
            source,
        },
        other => CliError::Numerical(format!("csv: {other:?}")),
    }
}

/// One row per point: swept value (or run index), predicted, achieved,
/// entangled, fidelity.
pub fn write_rows<W: Write>(out: W, first_column: &str, rows: &[(f64, Row)]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        first_column,
        "delta_epr_predicted",
        "delta_epr_achieved",
        "entangled",
        "fidelity",
    ])
    .map_err(csv_err)?;
    for (value, row) in rows {
        w.write_record([
            value.to_string(),
            row.delta_epr_predicted.to_string(),
            row.delta_epr_achieved.to_string(),
            row.entangled.to_string(),
            row.fidelity.map(|f| f.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: "<output>".into(),
        source,
    })
}

pub fn write_trajectory<W: Write>(out: W, samples: &[TrajectorySample]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "var_xsum", "var_pdiff", "var_y_pc", "var_y_ps"])
        .map_err(csv_err)?;
    for s in samples {
        w.write_record([
            s.t.to_string(),
            s.var_xsum.to_string(),
            s.var_pdiff.to_string(),
            s.var_y_pc.to_string(),
            s.var_y_ps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: "<output>".into(),
        source,
    })
}

impl Report {
    pub fn rows(&self) -> (String, Vec<(f64, Row)>) {
        match (&self.sweep, &self.result) {
            (Some(s), _) => (s.parameter.clone(), s.points.iter().map(|p| (p.value, p.row)).collect()),
            (None, Some(r)) => ("index".to_owned(), vec![(0.0, r.row())]),
            (None, None) => ("index".to_owned(), Vec::new()),
        }
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Numerical(format!("cannot encode report: {e}")))
    }
}
