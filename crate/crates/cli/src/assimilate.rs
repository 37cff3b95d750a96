//! File-driven single analysis.

use std::path::{Path, PathBuf};

use eakf_core::{
    analyze, compare_cov, posterior_cov_direct, ComparisonReport, ForecastEnsemble, Matrix,
    ObservationModel, OrderingMode, Vector,
};
use serde::Serialize;
use thiserror::Error;

use crate::csvio::{read_matrix, write_matrix, write_vector, CsvError};

pub const ASSIMILATE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum InputError {
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("{path}: expected {expected}, got {found}")]
    Shape {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: eakf_core::Error,
    },
    #[error("analysis failed: {0}")]
    Analysis(#[from] eakf_core::Error),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct AssimilateArgs {
    pub ensemble: PathBuf,
    pub h: PathBuf,
    pub r: PathBuf,
    pub y: PathBuf,
    pub out_prefix: PathBuf,
    pub mode: OrderingMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssimilateReport {
    pub schema: u32,
    pub command: &'static str,
    pub mode: &'static str,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub rank_z: usize,
    pub analysis_mean: Vec<f64>,
    pub comparison: ComparisonReport,
    pub passed: bool,
}

/// Paths written by [`run`].
#[derive(Debug, Clone)]
pub struct Outputs {
    pub members: PathBuf,
    pub mean: PathBuf,
    pub report: PathBuf,
}

pub fn outputs(prefix: &Path) -> Outputs {
    let with = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    Outputs {
        members: with("_members.csv"),
        mean: with("_mean.csv"),
        report: with("_report.json"),
    }
}

fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}

fn expect_shape(path: &Path, m: &Matrix, rows: usize, cols: usize) -> Result<(), InputError> {
    if m.shape() != (rows, cols) {
        return Err(InputError::Shape {
            path: path.to_owned(),
            expected: shape(rows, cols),
            found: shape(m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// Reads and validates the four input files. `R` may be a full `p×p` matrix
/// or a `p×1` column of variances.
pub fn load(args: &AssimilateArgs) -> Result<(ForecastEnsemble, ObservationModel), InputError> {
    let members = read_matrix(&args.ensemble)?;
    let ensemble = ForecastEnsemble::new(members).map_err(|source| InputError::Invalid {
        path: args.ensemble.clone(),
        source,
    })?;
    let n = ensemble.state_dim();

    let h = read_matrix(&args.h)?;
    if h.ncols() != n {
        return Err(InputError::Shape {
            path: args.h.clone(),
            expected: format!("px{n}"),
            found: shape(h.nrows(), h.ncols()),
        });
    }
    let p = h.nrows();

    let r = read_matrix(&args.r)?;
    let r = if r.shape() == (p, 1) && p > 1 {
        Matrix::from_diagonal(&r.column(0).into_owned())
    } else {
        expect_shape(&args.r, &r, p, p).map_err(|e| match e {
            InputError::Shape { path, found, .. } => InputError::Shape {
                path,
                expected: format!("{} or {}", shape(p, p), shape(p, 1)),
                found,
            },
            other => other,
        })?;
        r
    };

    let y = read_matrix(&args.y)?;
    expect_shape(&args.y, &y, p, 1)?;
    let y = Vector::from_column_slice(y.as_slice());

    let obs = ObservationModel::new(h, r, y).map_err(|source| InputError::Invalid {
        path: args.r.clone(),
        source,
    })?;
    Ok((ensemble, obs))
}

pub fn run(args: &AssimilateArgs) -> Result<AssimilateReport, InputError> {
    let (ensemble, obs) = load(args)?;
    let result = analyze(&ensemble, &obs, args.mode)?;
    let oracle = posterior_cov_direct(&ensemble.perturbations().forecast_cov(), &obs)?;
    let comparison = compare_cov(&result.pa, &oracle, ASSIMILATE_TOLERANCE)?;
    let analysis = result.ensemble()?;

    let out = outputs(&args.out_prefix);
    write_matrix(&out.members, analysis.members())?;
    write_vector(&out.mean, &result.mean)?;
    let report = AssimilateReport {
        schema: 1,
        command: "assimilate",
        mode: match args.mode {
            OrderingMode::Correct => "correct",
            OrderingMode::Misordered { .. } => "misordered",
        },
        n: ensemble.state_dim(),
        m: ensemble.size(),
        p: obs.obs_dim(),
        rank_z: result.adjustment.svd.rank(),
        analysis_mean: result.mean.iter().copied().collect(),
        passed: comparison.passed,
        comparison,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&out.report, json + "\n").map_err(|source| InputError::Write {
        path: out.report.clone(),
        source,
    })?;
    Ok(report)
}
