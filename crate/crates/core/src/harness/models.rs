//! Named experiment models and their visible-side counterparts.

use rand::Rng;

use crate::bayesnet::{BayesNetModel, NetworkFile};
use crate::error::{Error, Result};
use crate::fibration::{marginalize_v, JointSpace};
use crate::harness::config::{ExperimentConfig, ModelSpec};
use crate::model::{ParametricModel, ProductModel, SoftmaxModel, TiedModel};
use crate::sampling::{random_params, rng_from_seed};

/// Offset mixed into the seed for model construction, so model weights and
/// experiment draws come from separate streams.
const MODEL_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// What the invariance theorems predict for a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expectation {
    /// Cylindrical: gaps vanish.
    Invariant,
    /// Non-cylindrical by construction: gaps are expected to be large.
    Counterexample,
    /// No prediction (generic Bayes nets).
    Unknown,
}

pub enum ExperimentModel {
    Full(SoftmaxModel<f64>),
    Product(ProductModel<f64>),
    Tied(TiedModel<f64>),
    BayesNet {
        net: BayesNetModel,
        theta0: Option<Vec<f64>>,
    },
}

impl ExperimentModel {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let js = JointSpace::new(cfg.nv, cfg.nh)?;
        let mut rng = rng_from_seed(cfg.seed ^ MODEL_STREAM);
        Ok(match cfg.model_spec()? {
            ModelSpec::Full => Self::Full(SoftmaxModel::full_joint(&js)),
            ModelSpec::Product if cfg.cond_dim == 0 => Self::Product(ProductModel::full_chain(&js)),
            ModelSpec::Product => Self::Product(ProductModel::random_restricted(&js, cfg.cond_dim, &mut rng)),
            ModelSpec::Tied => Self::Tied(TiedModel::random(&js, cfg.tied_dim, &mut rng)),
            ModelSpec::BayesNet(path) => {
                let (net, theta0) = NetworkFile::load(&path)
                    .and_then(|f| f.build())
                    .map_err(|e| Error::Config(e.to_string()))?;
                if ParametricModel::<f64>::joint_space(&net).is_none() {
                    return Err(Error::Config(
                        "network needs at least one visible and one hidden node".into(),
                    ));
                }
                Self::BayesNet { net, theta0 }
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full(_) => "full",
            Self::Product(_) => "product",
            Self::Tied(_) => "tied",
            Self::BayesNet { .. } => "bayesnet",
        }
    }

    pub fn joint(&self) -> &dyn ParametricModel<f64> {
        match self {
            Self::Full(m) => m,
            Self::Product(m) => m,
            Self::Tied(m) => m,
            Self::BayesNet { net, .. } => net,
        }
    }

    pub fn joint_space(&self) -> &JointSpace {
        self.joint()
            .joint_space()
            .expect("experiment models always carry a joint space")
    }

    pub fn expectation(&self) -> Expectation {
        match self {
            Self::Full(_) | Self::Product(_) => Expectation::Invariant,
            Self::Tied(_) => Expectation::Counterexample,
            Self::BayesNet { .. } => Expectation::Unknown,
        }
    }

    /// Starting parameters: `theta0` from a network file, otherwise a
    /// standard normal draw.
    pub fn initial_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::BayesNet {
                theta0: Some(t), ..
            } => t.clone(),
            _ => random_params(self.joint().dim(), 1.0, rng),
        }
    }

    /// The image model `M_V` and its parameters at the image of `theta`.
    ///
    /// Full models and Bayes nets use the full visible simplex in log-odds
    /// coordinates.
    pub fn visible_point(&self, theta: &[f64]) -> Result<(SoftmaxModel<f64>, Vec<f64>)> {
        match self {
            Self::Product(m) => Ok((m.visible_model().clone(), m.visible_params(theta).to_vec())),
            Self::Tied(m) => Ok((m.visible_model().clone(), m.visible_params(theta).to_vec())),
            Self::Full(_) | Self::BayesNet { .. } => {
                let js = self.joint_space();
                let pv = marginalize_v(js, &self.joint().eval(theta)?)?;
                Ok((SoftmaxModel::full(js.visible().clone()), SoftmaxModel::log_odds(&pv)))
            }
        }
    }
}
