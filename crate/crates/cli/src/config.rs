//! Run configuration: a JSON file whose fields mirror the command-line flags.
//! Flags win over file values, file values over built-in defaults.

use std::path::{Path, PathBuf};

use instrument_lab_core::bilateral::ThetaRule;
use instrument_lab_core::unilateral::{BetaRule, Case};
use instrument_lab_core::verify::Suite;
use instrument_lab_core::{OptimizerConfig, ReductionMode, ScenarioKind, Strategy};
use serde::{Deserialize, Serialize};

use crate::table::Format;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub parallel: Option<bool>,
    /// Solver settings; `seed`, `starts` and `parallel` above take precedence.
    pub optimizer: Option<OptimizerConfig>,

    // verify
    pub suites: Option<Vec<Suite>>,
    pub tolerance: Option<f64>,

    // table1, pareto, windows
    pub strategy: Option<Strategy>,
    pub scenario: Option<ScenarioKind>,
    pub mode: Option<ReductionMode>,
    pub rule: Option<ThetaRule>,

    // pareto
    pub targets: Option<usize>,
    pub range: Option<[f64; 2]>,
    pub anchor: Option<bool>,

    // theorem1
    pub n: Option<usize>,
    pub case: Option<Case>,
    pub c: Option<f64>,
    pub e: Option<f64>,
    pub eps_rel: Option<f64>,
    pub eps: Option<f64>,
    pub beta_rule: Option<BetaRule>,
    pub phi0: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            seed, starts, out, format, parallel, optimizer, suites, tolerance, strategy, scenario, mode, rule, targets,
            range, anchor, n, case, c, e, eps_rel, eps, beta_rule, phi0
        )
    }

    pub fn optimizer_config(&self, default_starts: usize) -> OptimizerConfig {
        let mut cfg = self.optimizer.unwrap_or_default();
        if self.optimizer.is_none() {
            cfg.starts = default_starts;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(starts) = self.starts {
            cfg.starts = starts;
        }
        if let Some(parallel) = self.parallel {
            cfg.parallel = parallel;
        }
        cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed.or(self.optimizer.as_ref().map(|o| o.seed)).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: RunConfig = serde_json::from_str(r#"{"seed": 5, "starts": 10, "mode": "linear"}"#).unwrap();
        let flags = RunConfig { seed: Some(9), ..RunConfig::default() };
        let merged = file.overlay(flags);
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.starts, Some(10));
        assert_eq!(merged.mode, Some(ReductionMode::Linear));
        let cfg = merged.optimizer_config(200);
        assert_eq!((cfg.seed, cfg.starts), (9, 10));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sead": 1}"#).is_err());
    }

    #[test]
    fn nested_optimizer_settings_apply() {
        let file: RunConfig = serde_json::from_str(r#"{"optimizer": {"starts": 7, "kkt_tol": 1e-6}}"#).unwrap();
        let cfg = file.optimizer_config(200);
        assert_eq!(cfg.starts, 7);
        assert_eq!(cfg.kkt_tol, 1e-6);
        assert_eq!(cfg.max_iters, OptimizerConfig::default().max_iters);
    }
}
