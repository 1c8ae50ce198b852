use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::collab::LoopConfig;
use crate::relevance::SelectionPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Threshold,
    Topk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: f64,
    /// Separate weight for scoring stepwise paths; `lambda` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_alpha: Option<f64>,
    pub tau: f64,
    pub k: usize,
    pub hops: usize,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub policy: PolicyKind,
    pub early_stop_conf: f64,
    pub disable_schema: bool,
    pub disable_graph_retrieval: bool,
    pub rerank_after_validation: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            lambda_alpha: None,
            tau: 0.3,
            k: 32,
            hops: 2,
            t_max: 5,
            m: 3,
            policy: PolicyKind::Topk,
            early_stop_conf: 0.7,
            disable_schema: false,
            disable_graph_retrieval: false,
            rerank_after_validation: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("lambda", self.lambda)?;
        if let Some(a) = self.lambda_alpha {
            unit("lambda_alpha", a)?;
        }
        unit("early_stop_conf", self.early_stop_conf)?;
        if !self.tau.is_finite() {
            return Err(HarnessError::Config("tau must be finite".into()));
        }
        for (name, v) in [("k", self.k), ("hops", self.hops), ("T_max", self.t_max), ("M", self.m)] {
            if v == 0 {
                return Err(HarnessError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn selection_policy(&self) -> SelectionPolicy {
        match self.policy {
            PolicyKind::Threshold => SelectionPolicy::Threshold { tau: self.tau },
            PolicyKind::Topk => SelectionPolicy::TopK { k: self.k },
        }
    }

    pub fn alpha_lambda(&self) -> f64 {
        self.lambda_alpha.unwrap_or(self.lambda)
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            t_max: self.t_max,
            m: self.m,
            early_stop_conf: self.early_stop_conf,
            retrieval: !self.disable_graph_retrieval,
        }
    }
}
