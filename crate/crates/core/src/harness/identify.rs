//! Model fitting from identification data: one shared clustering per
//! channel feeds both the type-1 and the interval model, and both are
//! scored on the held-out half of the measured data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{gk_cluster, GkConfig};
use crate::harness::config::IdentConfig;
use crate::harness::data::{generate_ident_data, IdentChannel, IdentData};
use crate::ivfm::{build_model_from_partition, rmse, BuildConfig, ModelKind, TsModel};
use crate::quadrotor::QuadParams;
use crate::Result;

/// Both model variants for one coupling function, with held-out RMSEs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelModels {
    pub name: String,
    pub t1: TsModel,
    pub interval: TsModel,
    pub rmse_t1: f64,
    pub rmse_interval: f64,
}

/// One model per attitude channel, of a single kind.
#[derive(Debug, Clone)]
pub struct IdentifiedModels {
    pub f_phi: TsModel,
    pub f_theta: TsModel,
    pub f_psi: TsModel,
}

/// Identification output for the three coupling functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentResult {
    pub f_phi: ChannelModels,
    pub f_theta: ChannelModels,
    pub f_psi: ChannelModels,
}

impl IdentResult {
    pub fn channels(&self) -> [&ChannelModels; 3] {
        [&self.f_phi, &self.f_theta, &self.f_psi]
    }

    /// Extracts the models of one kind for controller construction.
    pub fn models(&self, kind: ModelKind) -> IdentifiedModels {
        let pick = |c: &ChannelModels| match kind {
            ModelKind::Type1 => c.t1.clone(),
            ModelKind::Interval => c.interval.clone(),
        };
        IdentifiedModels {
            f_phi: pick(&self.f_phi),
            f_theta: pick(&self.f_theta),
            f_psi: pick(&self.f_psi),
        }
    }

    /// Validation RMSE table, interval next to type-1.
    pub fn table_markdown(&self) -> String {
        let mut out = String::from("| function | interval RMSE | type-1 RMSE |\n|---|---|---|\n");
        for c in self.channels() {
            out.push_str(&format!(
                "| {} | {:.4} | {:.4} |\n",
                c.name, c.rmse_interval, c.rmse_t1
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&json)?)
    }
}

fn build_config(cfg: &IdentConfig) -> BuildConfig {
    BuildConfig {
        clusters: cfg.clusters,
        fuzziness: cfg.fuzziness,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        seed: cfg.seed,
        upper_passes: cfg.upper_passes,
        lower_passes: cfg.lower_passes,
    }
}

/// Fits both model kinds for one channel from a single clustering of the
/// training half, then scores each on the held-out measurements.
pub fn identify_channel(channel: &IdentChannel, cfg: &IdentConfig) -> Result<ChannelModels> {
    let build = build_config(cfg);
    let training = channel.training_set(cfg.n_ident)?;
    let mut gk = GkConfig::new(build.clusters);
    gk.m = build.fuzziness;
    gk.tol = build.tol;
    gk.max_iter = build.max_iter;
    gk.seed = build.seed;
    let partition = gk_cluster(&training, &gk)?;

    let t1 = build_model_from_partition(&training, &partition, ModelKind::Type1, &build)?;
    let interval = build_model_from_partition(&training, &partition, ModelKind::Interval, &build)?;

    let validation = channel.validation_set(cfg.n_ident, true)?;
    let rmse_t1 = rmse(&t1, &validation)?;
    let rmse_interval = rmse(&interval, &validation)?;

    Ok(ChannelModels {
        name: channel.name.clone(),
        t1,
        interval,
        rmse_t1,
        rmse_interval,
    })
}

/// Fits all three channels from an existing data set.
pub fn identify_from_data(data: &IdentData, cfg: &IdentConfig) -> Result<IdentResult> {
    Ok(IdentResult {
        f_phi: identify_channel(&data.f_phi, cfg)?,
        f_theta: identify_channel(&data.f_theta, cfg)?,
        f_psi: identify_channel(&data.f_psi, cfg)?,
    })
}

/// Full pipeline: generate excitation data, fit, validate.
pub fn run_identification(plant: &QuadParams, cfg: &IdentConfig) -> Result<IdentResult> {
    let data = generate_ident_data(plant, cfg)?;
    identify_from_data(&data, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A noise-free affine channel: one cluster suffices and both model
    /// kinds must recover the function almost exactly.
    #[test]
    fn affine_channel_fits_to_machine_noise() {
        let mut regressors = Vec::new();
        let mut f = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                let x = -1.0 + 2.0 * (i as f64) / 39.0;
                let y = -1.0 + 2.0 * (j as f64) / 39.0;
                regressors.push(vec![x, y]);
                f.push(1.0 + 2.0 * x - 0.5 * y);
            }
        }
        let channel = IdentChannel {
            name: "affine".into(),
            regressor_names: vec!["x".into(), "y".into()],
            regressors,
            f_true: f.clone(),
            f_noisy: f,
        };
        let cfg = IdentConfig {
            clusters: 2,
            n_ident: 800,
            n_valid: 800,
            noise_frac: 0.0,
            ..IdentConfig::default()
        };
        let out = identify_channel(&channel, &cfg).unwrap();
        assert!(out.rmse_t1 < 1e-6, "type-1 rmse {}", out.rmse_t1);
        assert!(out.rmse_interval < 1e-6, "interval rmse {}", out.rmse_interval);
    }

    #[test]
    fn full_pipeline_produces_finite_scores_and_right_arity() {
        let plant = QuadParams::default();
        let cfg = IdentConfig {
            n_ident: 400,
            n_valid: 400,
            ..IdentConfig::default()
        };
        let result = run_identification(&plant, &cfg).unwrap();
        for c in result.channels() {
            assert!(c.rmse_t1.is_finite() && c.rmse_t1 > 0.0);
            assert!(c.rmse_interval.is_finite() && c.rmse_interval > 0.0);
            assert_eq!(c.t1.rules.len(), cfg.clusters);
            assert_eq!(c.interval.rules.len(), cfg.clusters);
        }
        assert_eq!(result.f_phi.t1.input_dim, 3);
        assert_eq!(result.f_theta.t1.input_dim, 3);
        assert_eq!(result.f_psi.t1.input_dim, 2);
        let table = result.table_markdown();
        assert!(table.contains("f_phi") && table.contains("f_psi"));
    }

    #[test]
    fn save_load_round_trip_preserves_serialization() {
        let plant = QuadParams::default();
        let cfg = IdentConfig {
            n_ident: 200,
            n_valid: 200,
            ..IdentConfig::default()
        };
        let result = run_identification(&plant, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models.json");
        result.save(&path).unwrap();
        let back = IdentResult::load(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&result).unwrap(),
            serde_json::to_string(&back).unwrap()
        );
    }
}
