//! Run manifests: everything needed to repeat a CLI run, plus provenance.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bessel::OracleForcing;
use crate::diffusive::{DEFAULT_N_XI, DEFAULT_XI_MAX, DEFAULT_XI_MIN};
use crate::error::Result;
use crate::model::ProblemSpec;
use crate::resolvent::Regime;

pub const TOOL_NAME: &str = "degschro";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub nx: usize,
    pub grade: f64,
    pub nxi: usize,
    pub xi_min: f64,
    pub xi_max: f64,
}

impl GridParams {
    pub fn with_nx(nx: usize, grade: f64) -> Self {
        Self {
            nx,
            grade,
            nxi: DEFAULT_N_XI,
            xi_min: DEFAULT_XI_MIN,
            xi_max: DEFAULT_XI_MAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    SmoothBump,
    LowestMode,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScanTarget {
    Operator { spec: ProblemSpec, grid: GridParams },
    /// `A = -I` of the given size.
    Stub { size: usize },
}

/// Fully resolved inputs of one run (flags, config file and defaults
/// already merged).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunInputs {
    Simulate {
        spec: ProblemSpec,
        grid: GridParams,
        t_final: f64,
        dt: f64,
        y0: InitialKind,
        fit_window: [f64; 2],
    },
    Scan {
        target: ScanTarget,
        lambda_min: f64,
        lambda_max: f64,
        points: usize,
        regime: Regime,
    },
    VerifyKernel {
        beta: f64,
        rho: f64,
        tau_min: f64,
        tau_max: f64,
        n_tau: usize,
        nxi: usize,
        xi_min: f64,
        xi_max: f64,
    },
    OracleCompare {
        spec: ProblemSpec,
        lambda: f64,
        nx_list: Vec<usize>,
        grade: f64,
        nxi: usize,
        xi_min: f64,
        xi_max: f64,
        forcing: OracleForcing,
    },
    ExportOperator {
        spec: ProblemSpec,
        grid: GridParams,
    },
}

impl RunInputs {
    pub fn command(&self) -> &'static str {
        match self {
            RunInputs::Simulate { .. } => "simulate",
            RunInputs::Scan { .. } => "scan",
            RunInputs::VerifyKernel { .. } => "verify-kernel",
            RunInputs::OracleCompare { .. } => "oracle-compare",
            RunInputs::ExportOperator { .. } => "export-operator",
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    /// Completed, but an acceptance threshold was missed.
    ThresholdFailed,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub inputs: RunInputs,
    pub input_hash: String,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
    pub outputs: Vec<String>,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn begin(inputs: RunInputs) -> Result<Self> {
        let input_hash = inputs.content_hash()?;
        let t = now_unix();
        Ok(Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            inputs,
            input_hash,
            started_at: t,
            finished_at: t,
            status: RunStatus::Ok,
            diagnostics: None,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}
