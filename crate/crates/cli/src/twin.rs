//! Cycled twin experiment with linear-Gaussian dynamics `x ← decay·x + noise`
//! and full-state observations.

use eakf_core::{analyze, ForecastEnsemble, Matrix, ObservationModel, OrderingMode, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::instance::{normal_matrix, normal_vector};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwinConfig {
    pub steps: usize,
    pub n: usize,
    pub m: usize,
    pub dynamics_decay: f64,
    pub model_noise_var: f64,
    pub obs_every: usize,
    pub obs_noise_var: f64,
    pub seed: u64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            n: 3,
            m: 12,
            dynamics_decay: 0.95,
            model_noise_var: 0.1,
            obs_every: 1,
            obs_noise_var: 0.5,
            seed: 0,
        }
    }
}

impl TwinConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: &str| Err(ConfigError(msg.into()));
        if self.steps == 0 {
            return err("steps must be at least 1");
        }
        if self.n == 0 {
            return err("n must be at least 1");
        }
        if self.m < 2 {
            return err("m must be at least 2");
        }
        if !(self.dynamics_decay > 0.0 && self.dynamics_decay <= 1.0) {
            return err("decay must lie in (0, 1]");
        }
        if !(self.model_noise_var >= 0.0 && self.model_noise_var.is_finite()) {
            return err("model variance must be non-negative");
        }
        if !(self.obs_noise_var > 0.0 && self.obs_noise_var.is_finite()) {
            return err("observation variance must be positive");
        }
        if self.obs_every == 0 {
            return err("obs-every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub analyzed: bool,
    pub rmse: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwinMetrics {
    pub schema: u32,
    pub command: &'static str,
    pub config: TwinConfig,
    pub analyses: usize,
    pub all_finite: bool,
    pub mean_rmse_final_half: f64,
    pub mean_spread_final_half: f64,
    pub spread_rmse_ratio: f64,
    #[serde(skip)]
    pub series: Vec<StepRecord>,
}

fn rmse(a: &Vector, b: &Vector) -> f64 {
    ((a - b).norm_squared() / a.len() as f64).sqrt()
}

fn spread(ens: &ForecastEnsemble) -> f64 {
    let z = ens.perturbations();
    (z.matrix().norm_squared() / ens.state_dim() as f64).sqrt()
}

pub fn run(cfg: &TwinConfig) -> Result<TwinMetrics, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, m) = (cfg.n, cfg.m);
    let model_sd = cfg.model_noise_var.sqrt();
    let obs_sd = cfg.obs_noise_var.sqrt();

    let mut truth = normal_vector(&mut rng, n);
    let mut members = normal_matrix(&mut rng, n, m);
    let h = Matrix::identity(n, n);
    let r = Vector::from_element(n, cfg.obs_noise_var);

    let mut series = Vec::with_capacity(cfg.steps);
    let mut analyses = 0;
    for step in 1..=cfg.steps {
        truth = &truth * cfg.dynamics_decay + normal_vector(&mut rng, n) * model_sd;
        members = &members * cfg.dynamics_decay + normal_matrix(&mut rng, n, m) * model_sd;

        let forecast = ForecastEnsemble::new(members.clone())
            .map_err(|e| ConfigError(format!("step {step}: {e}")))?;
        let analyzed = step % cfg.obs_every == 0;
        let current = if analyzed {
            let y = &truth + normal_vector(&mut rng, n) * obs_sd;
            let obs = ObservationModel::with_diagonal_r(h.clone(), &r, y)
                .map_err(|e| ConfigError(e.to_string()))?;
            let res = analyze(&forecast, &obs, OrderingMode::Correct)
                .and_then(|res| res.ensemble())
                .map_err(|e| ConfigError(format!("step {step}: {e}")))?;
            analyses += 1;
            res
        } else {
            forecast
        };
        series.push(StepRecord {
            step,
            analyzed,
            rmse: rmse(current.mean(), &truth),
            spread: spread(&current),
        });
        members = current.members().clone();
    }

    let tail = &series[series.len() / 2..];
    let mean = |f: fn(&StepRecord) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
    let mean_rmse_final_half = mean(|s| s.rmse);
    let mean_spread_final_half = mean(|s| s.spread);
    Ok(TwinMetrics {
        schema: 1,
        command: "twin",
        config: cfg.clone(),
        analyses,
        all_finite: series
            .iter()
            .all(|s| s.rmse.is_finite() && s.spread.is_finite()),
        mean_rmse_final_half,
        mean_spread_final_half,
        spread_rmse_ratio: mean_spread_final_half / mean_rmse_final_half,
        series,
    })
}

/// `step,analyzed,rmse,spread` with a header line.
pub fn series_csv(metrics: &TwinMetrics) -> String {
    let mut out = String::from("step,analyzed,rmse,spread\n");
    for s in &metrics.series {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.step,
            u8::from(s.analyzed),
            crate::csvio::format_entry(s.rmse),
            crate::csvio::format_entry(s.spread)
        ));
    }
    out
}
