use std::path::Path;

use serde::Deserialize;

use super::{EngineConfig, EngineError};
use crate::graph::GraphParams;

/// Flat TOML settings file. Every key is optional; present keys override
/// the defaults they are applied to.
///
/// ```toml
/// k_default = 100
/// stage1_budget = 500
/// depth = 2
/// blend_alpha = 0.5
/// theta = 0.3
/// attr_weights = [0.2, 0.5, 0.3]
/// edge_threshold = 0.1
/// max_degree = 64
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub k_default: Option<usize>,
    pub stage1_budget: Option<usize>,
    pub depth: Option<usize>,
    pub blend_alpha: Option<f64>,
    pub theta: Option<f64>,
    pub attr_weights: Option<[f64; 3]>,
    pub edge_threshold: Option<f64>,
    pub max_degree: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        toml::from_str(text).map_err(|e| EngineError::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Layers `other` on top of `self`.
    pub fn merge(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            k_default: other.k_default.or(self.k_default),
            stage1_budget: other.stage1_budget.or(self.stage1_budget),
            depth: other.depth.or(self.depth),
            blend_alpha: other.blend_alpha.or(self.blend_alpha),
            theta: other.theta.or(self.theta),
            attr_weights: other.attr_weights.or(self.attr_weights),
            edge_threshold: other.edge_threshold.or(self.edge_threshold),
            max_degree: other.max_degree.or(self.max_degree),
        }
    }

    pub fn engine_config(&self, mut base: EngineConfig) -> Result<EngineConfig, EngineError> {
        if let Some(v) = self.k_default {
            base.k_default = v;
        }
        if let Some(v) = self.stage1_budget {
            base.stage1_budget = v;
        }
        if let Some(v) = self.depth {
            base.depth = v;
        }
        if let Some(v) = self.blend_alpha {
            base.blend_alpha = v;
        }
        if let Some(v) = self.theta {
            base.similarity.theta = v;
        }
        if let Some(v) = self.attr_weights {
            base.similarity.attr_weights = v.into();
        }
        base.validate()?;
        Ok(base)
    }

    pub fn graph_params(&self, mut base: GraphParams) -> Result<GraphParams, EngineError> {
        if let Some(v) = self.edge_threshold {
            base.edge_threshold = v;
        }
        if let Some(v) = self.max_degree {
            base.max_degree = v;
        }
        base.validate()?;
        Ok(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let file = ConfigFile::parse("k_default = 20\nattr_weights = [0.4, 0.4, 0.2]\nmax_degree = 8\n").unwrap();
        let flags = ConfigFile { k_default: Some(5), ..Default::default() };
        let merged = file.merge(flags);
        let cfg = merged.engine_config(EngineConfig::default()).unwrap();
        assert_eq!(cfg.k_default, 5);
        assert_eq!(cfg.similarity.attr_weights.brand, 0.4);
        assert_eq!(merged.graph_params(GraphParams::default()).unwrap().max_degree, 8);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ConfigFile::parse("kdefault = 3").is_err());
        let bad = ConfigFile::parse("blend_alpha = 2.0").unwrap();
        assert!(bad.engine_config(EngineConfig::default()).is_err());
        let bad = ConfigFile::parse("max_degree = 0").unwrap();
        assert!(bad.graph_params(GraphParams::default()).is_err());
    }
}
