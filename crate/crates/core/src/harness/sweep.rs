//! Controller x disturbance x seed grids, with one identification per seed
//! shared across controllers and parallel scenario execution.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harness::config::{ControllerKind, DisturbanceSpec, ScenarioConfig};
use crate::harness::identify::{run_identification, IdentResult};
use crate::harness::scenario::{run_scenario, RunLog, RunMetrics};
use crate::{Error, Result};

/// Grid specification: the base scenario plus the axes to vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    pub controllers: Vec<ControllerKind>,
    pub disturbances: Vec<DisturbanceSpec>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            controllers: vec![ControllerKind::Ivfc, ControllerKind::T1fc],
            disturbances: vec![DisturbanceSpec::None],
            seeds: vec![0],
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("sweep config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controllers.is_empty() || self.disturbances.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidInput(
                "sweep needs at least one controller, disturbance and seed".into(),
            ));
        }
        for d in &self.disturbances {
            d.validate(self.base.duration)?;
        }
        self.base.validate()
    }

    /// The expanded grid, seed-major then controller then disturbance.
    pub fn grid(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &seed in &self.seeds {
            for &controller in &self.controllers {
                for disturbance in &self.disturbances {
                    let mut cfg = self.base.clone();
                    cfg.ident.seed = seed;
                    cfg.controller = controller;
                    cfg.disturbance = disturbance.clone();
                    out.push(cfg);
                }
            }
        }
        out
    }
}

/// One completed grid cell.
#[derive(Debug)]
pub struct SweepRun {
    pub config: ScenarioConfig,
    pub metrics: RunMetrics,
    pub log: RunLog,
}

/// Runs the whole grid. Each seed is identified once (in parallel across
/// seeds) and the resulting models are shared by every controller variant
/// at that seed; the scenario runs are parallel as well, and the returned
/// order matches [`SweepConfig::grid`].
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRun>> {
    cfg.validate()?;
    let needs_models = cfg
        .controllers
        .iter()
        .any(|c| *c != ControllerKind::Exact);

    let mut cache: HashMap<u64, IdentResult> = HashMap::new();
    if needs_models {
        let mut seeds: Vec<u64> = cfg.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        let fitted: Vec<(u64, IdentResult)> = seeds
            .par_iter()
            .map(|&seed| {
                let mut ident = cfg.base.ident.clone();
                ident.seed = seed;
                run_identification(&cfg.base.plant, &ident).map(|r| (seed, r))
            })
            .collect::<Result<_>>()?;
        cache.extend(fitted);
    }

    cfg.grid()
        .into_par_iter()
        .map(|scenario| {
            let models = cache.get(&scenario.ident.seed);
            let (log, metrics) = run_scenario(&scenario, models)?;
            Ok(SweepRun { config: scenario, metrics, log })
        })
        .collect()
}
