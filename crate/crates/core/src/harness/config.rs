//! Experiment configuration (JSON) with CLI overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which model the experiment runs on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelSpec {
    /// Full joint simplex in log-odds coordinates.
    Full,
    /// `m(x_V; alpha) k(x_H | x_V; beta)` with disjoint parameters.
    Product,
    /// `m(x_V; theta) k(x_H | x_V; theta)` with shared parameters.
    Tied,
    /// Bayesian network loaded from a network description file.
    BayesNet(PathBuf),
}

impl FromStr for ModelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "product" => Ok(Self::Product),
            "tied" => Ok(Self::Tied),
            other => match other.strip_prefix("bayesnet:") {
                Some(path) if !path.is_empty() => Ok(Self::BayesNet(PathBuf::from(path))),
                _ => Err(Error::Config(format!(
                    "unknown model {other:?} (expected full, product, tied or bayesnet:<file>)"
                ))),
            },
        }
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Full => write!(f, "full"),
            Self::Product => write!(f, "product"),
            Self::Tied => write!(f, "tied"),
            Self::BayesNet(p) => write!(f, "bayesnet:{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `D(p* || pi_V(p))`, flowing along `p - pi_Q(p)`.
    KlVisible,
    /// `D(Q || p)`; identical flow to `KlVisible`, with `q` re-projected each step.
    #[serde(rename = "dist_to_Q", alias = "dist_to_q")]
    DistToQ,
    /// `D(q || p)` for the fixed recognition distribution.
    Dq,
    /// Expected ELBO (ascent), the negative of the `Dq` gradient.
    Elbo,
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl_visible" => Ok(Self::KlVisible),
            "dist_to_Q" | "dist_to_q" => Ok(Self::DistToQ),
            "dq" => Ok(Self::Dq),
            "elbo" => Ok(Self::Elbo),
            other => Err(Error::Config(format!(
                "unknown objective {other:?} (expected kl_visible, dist_to_Q, dq or elbo)"
            ))),
        }
    }
}

impl ObjectiveKind {
    /// Whether the joint gradient uses the fixed recognition distribution.
    pub fn uses_fixed_q(self) -> bool {
        matches!(self, Self::Dq | Self::Elbo)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Euler steps directly on the joint simplex (full model only).
    Ambient,
    /// Euler steps on parameters along the parameter-space natural gradient.
    Parametric,
}

impl FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ambient" => Ok(Self::Ambient),
            "parametric" => Ok(Self::Parametric),
            other => Err(Error::Config(format!("unknown integrator {other:?}"))),
        }
    }
}

/// `"random"` or an explicit vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Named(String),
    Explicit(Vec<f64>),
}

fn default_target() -> VectorSpec {
    VectorSpec::Named("random".into())
}

fn default_q_init() -> VectorSpec {
    VectorSpec::Named("projection".into())
}

/// Experiment settings. Every field has a default, so a config file may
/// set any subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nv: usize,
    pub nh: usize,
    /// `full`, `product`, `tied` or `bayesnet:<file>`.
    pub model: String,
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub step: f64,
    pub iters: usize,
    /// Tolerance for identity and invariance-gap checks.
    pub tol: f64,
    /// Tolerance for finite-difference oracle comparisons.
    pub fd_tol: f64,
    #[serde(default = "default_target")]
    pub target: VectorSpec,
    #[serde(default = "default_q_init")]
    pub q_init: VectorSpec,
    /// Defaults to `ambient` for the full model, `parametric` otherwise.
    pub integrator: Option<Integrator>,
    /// Random instances per check in the invariance suite.
    pub draws: usize,
    /// Conditional-family dimension of the product model; 0 selects the
    /// full `V -> H` chain.
    pub cond_dim: usize,
    /// Parameter count of the tied model.
    pub tied_dim: usize,
    /// Record wall-clock time in the CSV (breaks byte-identical reruns).
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nv: 3,
            nh: 4,
            model: "full".into(),
            objective: ObjectiveKind::Elbo,
            seed: 7,
            step: 0.01,
            iters: 1000,
            tol: 1e-8,
            fd_tol: 1e-6,
            target: default_target(),
            q_init: default_q_init(),
            integrator: None,
            draws: 20,
            cond_dim: 2,
            tied_dim: 1,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model.parse()
    }

    pub fn integrator(&self) -> Result<Integrator> {
        let spec = self.model_spec()?;
        Ok(self.integrator.unwrap_or(if spec == ModelSpec::Full {
            Integrator::Ambient
        } else {
            Integrator::Parametric
        }))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.nv < 2 || self.nh < 2 {
            return bad(format!("nv and nh must be >= 2 (got {}, {})", self.nv, self.nh));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad(format!("step must be positive (got {})", self.step));
        }
        if self.iters == 0 {
            return bad("iters must be >= 1".into());
        }
        if !(self.tol > 0.0) || !(self.fd_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.draws == 0 {
            return bad("draws must be >= 1".into());
        }
        if self.tied_dim == 0 {
            return bad("tied_dim must be >= 1".into());
        }
        let spec = self.model_spec()?;
        if self.integrator == Some(Integrator::Ambient) && spec != ModelSpec::Full {
            return bad("ambient integration is only defined for the full model".into());
        }
        match &self.target {
            VectorSpec::Named(n) if n == "random" => {}
            VectorSpec::Named(n) => return bad(format!("target must be \"random\" or a vector, got {n:?}")),
            VectorSpec::Explicit(v) => {
                if v.len() != self.nv && !matches!(spec, ModelSpec::BayesNet(_)) {
                    return bad(format!("target has {} entries, nv = {}", v.len(), self.nv));
                }
                if v.iter().any(|&x| !(x > 0.0)) {
                    return bad("target entries must be positive".into());
                }
                let s: f64 = v.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return bad(format!("target entries sum to {s}, expected 1"));
                }
            }
        }
        match &self.q_init {
            VectorSpec::Named(n) if n == "projection" => {}
            VectorSpec::Named(n) => return bad(format!("q_init must be \"projection\" or a vector, got {n:?}")),
            VectorSpec::Explicit(v) => {
                if v.iter().any(|&x| !(x > 0.0)) {
                    return bad("q_init entries must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"nv": 2, "objective": "dist_to_Q"}"#).unwrap();
        assert_eq!(cfg.nv, 2);
        assert_eq!(cfg.nh, 4);
        assert_eq!(cfg.objective, ObjectiveKind::DistToQ);
        assert_eq!(cfg.integrator().unwrap(), Integrator::Ambient);
    }

    #[test]
    fn explicit_target_is_checked() {
        let ok = r#"{"nv": 2, "target": [0.3, 0.7]}"#;
        assert!(ExperimentConfig::from_json(ok).is_ok());
        let bad_sum = r#"{"nv": 2, "target": [0.3, 0.6]}"#;
        assert!(ExperimentConfig::from_json(bad_sum).is_err());
        let bad_len = r#"{"nv": 3, "target": [0.3, 0.7]}"#;
        assert!(ExperimentConfig::from_json(bad_len).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_json(r#"{"step": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"iters": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"nh": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"model": "banana"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"unknown_key": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"model": "tied", "integrator": "ambient"}"#).is_err());
    }

    #[test]
    fn model_spec_parsing() {
        assert_eq!("tied".parse::<ModelSpec>().unwrap(), ModelSpec::Tied);
        assert_eq!(
            "bayesnet:net.json".parse::<ModelSpec>().unwrap(),
            ModelSpec::BayesNet("net.json".into())
        );
        assert!("bayesnet:".parse::<ModelSpec>().is_err());
    }
}
