//! Randomized sweep checking the adjustment update against the Kalman oracle.

use std::collections::BTreeMap;

use eakf_core::{
    analyze, compare_cov, posterior_cov_direct, posterior_cov_reduced, posterior_cov_woodbury,
    posterior_mean_direct, ComparisonReport, Matrix, OrderingMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::instance::{generate, Category, Range, Shapes};
use crate::ConfigError;

/// Relative bound on `Zᵃ` row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    pub n_range: Range,
    pub m_range: Range,
    pub p_range: Range,
    pub tolerance: f64,
    pub include_rank_deficient: bool,
    pub include_partial_obs: bool,
    pub include_zero_h: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0,
            n_range: Range::new(1, 20),
            m_range: Range::new(2, 12),
            p_range: Range::new(1, 20),
            tolerance: 1e-10,
            include_rank_deficient: true,
            include_partial_obs: true,
            include_zero_h: true,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError("trials must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(ConfigError("tolerance must be positive".into()));
        }
        for (name, r, lo) in [
            ("n", self.n_range, 1),
            ("m", self.m_range, 2),
            ("p", self.p_range, 1),
        ] {
            if r.min > r.max {
                return Err(ConfigError(format!(
                    "{name} range is empty: {}..{}",
                    r.min, r.max
                )));
            }
            if r.min < lo {
                return Err(ConfigError(format!("{name} must be at least {lo}")));
            }
        }
        Ok(())
    }

    fn categories(&self) -> Vec<Category> {
        let mut cats = vec![Category::Generic];
        if self.include_rank_deficient {
            cats.push(Category::RankDeficient);
            cats.push(Category::ZeroSpread);
        }
        if self.include_partial_obs {
            cats.push(Category::PartialObs);
        }
        if self.include_zero_h {
            cats.push(Category::ZeroH);
        }
        cats
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub index: usize,
    pub seed: u64,
    pub category: Category,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub rank_z: usize,
    pub rank_s: usize,
    pub consistency: ComparisonReport,
    pub reduced_rel_err: f64,
    pub woodbury_rel_err: f64,
    pub mean_rel_err: f64,
    pub row_sum_rel: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema: u32,
    pub command: &'static str,
    pub config: VerifyConfig,
    pub categories_run: BTreeMap<Category, usize>,
    pub rank_deficient_runs: usize,
    pub rank_s_below_rank_z_runs: usize,
    pub max_rel_err: f64,
    pub max_chain_rel_err: f64,
    pub max_mean_rel_err: f64,
    pub max_row_sum_rel: f64,
    pub failed_trials: Vec<usize>,
    pub passed: bool,
    pub trials: Vec<TrialReport>,
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(eakf_core::oracle::RELATIVE_FLOOR)
}

fn failed_trial(
    index: usize,
    seed: u64,
    category: Category,
    n: usize,
    m: usize,
    p: usize,
    err: String,
) -> TrialReport {
    TrialReport {
        index,
        seed,
        category,
        n,
        m,
        p,
        rank_z: 0,
        rank_s: 0,
        consistency: ComparisonReport {
            frobenius_abs: f64::NAN,
            frobenius_rel: f64::NAN,
            trace_lhs: f64::NAN,
            trace_rhs: f64::NAN,
            trace_deficit: f64::NAN,
            max_abs_entry_diff: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
        },
        reduced_rel_err: f64::NAN,
        woodbury_rel_err: f64::NAN,
        mean_rel_err: f64::NAN,
        row_sum_rel: f64::NAN,
        passed: false,
        error: Some(err),
    }
}

pub fn run_trial(cfg: &VerifyConfig, index: usize) -> TrialReport {
    let cats = cfg.categories();
    let seed = cfg.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = Shapes {
        n: cfg.n_range,
        m: cfg.m_range,
        p: cfg.p_range,
    };
    let inst = generate(cats[index % cats.len()], &shapes, &mut rng);
    let (ens, obs) = (&inst.ensemble, &inst.obs);
    let (n, m, p) = (ens.state_dim(), ens.size(), obs.obs_dim());

    let checked = || -> eakf_core::Result<TrialReport> {
        let z = ens.perturbations();
        let pf = z.forecast_cov();
        let res = analyze(ens, obs, OrderingMode::Correct)?;
        let direct = posterior_cov_direct(&pf, obs)?;
        let consistency = compare_cov(&res.pa, &direct, cfg.tolerance)?;
        let reduced_rel_err = rel(&posterior_cov_reduced(&z, obs)?, &direct);
        let woodbury_rel_err = rel(&posterior_cov_woodbury(&z, obs)?, &direct);
        let mean_oracle = posterior_mean_direct(ens.mean(), &pf, obs)?;
        let mean_scale = mean_oracle.norm().max(ens.mean().norm()).max(1e-300);
        let mean_rel_err = (&res.mean - &mean_oracle).norm() / mean_scale;
        let za_norm = res.za.norm();
        let row_sum_rel =
            res.za.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max) / za_norm.max(1e-300);
        let passed = consistency.passed
            && reduced_rel_err <= cfg.tolerance
            && woodbury_rel_err <= cfg.tolerance
            && mean_rel_err <= cfg.tolerance
            && row_sum_rel <= ROW_SUM_TOL;
        Ok(TrialReport {
            index,
            seed,
            category: inst.category,
            n,
            m,
            p,
            rank_z: res.adjustment.svd.rank(),
            rank_s: res.adjustment.eigen.effective_rank(),
            consistency,
            reduced_rel_err,
            woodbury_rel_err,
            mean_rel_err,
            row_sum_rel,
            passed,
            error: None,
        })
    };
    checked().unwrap_or_else(|e| failed_trial(index, seed, inst.category, n, m, p, e.to_string()))
}

pub fn run(cfg: &VerifyConfig) -> Result<VerifyReport, ConfigError> {
    cfg.validate()?;
    let trials: Vec<TrialReport> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, i))
        .collect();

    let mut categories_run = BTreeMap::new();
    for t in &trials {
        *categories_run.entry(t.category).or_insert(0) += 1;
    }
    let max = |f: fn(&TrialReport) -> f64| trials.iter().map(f).fold(0.0, f64::max);
    let failed_trials: Vec<usize> = trials
        .iter()
        .filter(|t| !t.passed)
        .map(|t| t.index)
        .collect();
    Ok(VerifyReport {
        schema: 1,
        command: "verify",
        config: cfg.clone(),
        categories_run,
        rank_deficient_runs: trials.iter().filter(|t| t.m - 1 < t.n).count(),
        rank_s_below_rank_z_runs: trials.iter().filter(|t| t.rank_s < t.rank_z).count(),
        max_rel_err: max(|t| t.consistency.frobenius_rel),
        max_chain_rel_err: max(|t| t.reduced_rel_err.max(t.woodbury_rel_err)),
        max_mean_rel_err: max(|t| t.mean_rel_err),
        max_row_sum_rel: max(|t| t.row_sum_rel),
        passed: failed_trials.is_empty(),
        failed_trials,
        trials,
    })
}
