use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeRef, ParamSet};
use crate::sketch::{ChoiceTag, SketchError};
use crate::tensor::Tensor;

use super::features::{
    arrow_rows, hand_features_eat, hand_features_organism, EAT_FEATURES, GEOMETRY_DIM,
    MAXPOOL_EAT_FEATURES, ORGANISM_FEATURES,
};
use super::{DetectionGraph, FoodwebError, EAT, ORGANISM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `score = W·φ` on hand features.
    Loglinear,
    /// `score = W₂·tanh(W₁·φ + b₁) + b₂` on hand features.
    Mlp2,
    /// The two-layer network, with eat features extended by a max-pool over
    /// detected arrows.
    Maxpool,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Loglinear, ModelKind::Mlp2, ModelKind::Maxpool];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Loglinear => "loglinear",
            ModelKind::Mlp2 => "mlp2",
            ModelKind::Maxpool => "maxpool",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model {s:?} (expected loglinear, mlp2 or maxpool)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Zeros,
    Uniform { scale: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub init: Init,
}

impl ModelSpec {
    pub const DEFAULT_HIDDEN: usize = 32;

    /// Zero init for the loglinear model; small uniform init for the
    /// networks, whose hidden layer never moves from an all-zero start.
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        let init = match kind {
            ModelKind::Loglinear => Init::Zeros,
            _ => Init::Uniform { scale: 0.1, seed },
        };
        Self {
            kind,
            hidden_dim: Self::DEFAULT_HIDDEN,
            init,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_hidden(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self
    }

    fn input_dim(&self, decision: &str) -> usize {
        match (decision, self.kind) {
            (ORGANISM, _) => ORGANISM_FEATURES,
            (_, ModelKind::Maxpool) => MAXPOOL_EAT_FEATURES,
            _ => EAT_FEATURES,
        }
    }

    /// Parameter names and shapes, e.g. `eat.w1 [32, 6]`.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for decision in [ORGANISM, EAT] {
            let f = self.input_dim(decision);
            let h = self.hidden_dim;
            match self.kind {
                ModelKind::Loglinear => out.push((format!("{decision}.w"), vec![2, f])),
                ModelKind::Mlp2 | ModelKind::Maxpool => {
                    out.push((format!("{decision}.w1"), vec![h, f]));
                    out.push((format!("{decision}.b1"), vec![h]));
                    out.push((format!("{decision}.w2"), vec![2, h]));
                    out.push((format!("{decision}.b2"), vec![2]));
                }
            }
        }
        out
    }

    pub fn init_params(&self) -> ParamSet {
        let mut p = ParamSet::new();
        for (i, (name, shape)) in self.param_shapes().into_iter().enumerate() {
            let t = match self.init {
                Init::Zeros => Tensor::zeros(&shape),
                Init::Uniform { scale, seed } => {
                    Tensor::random_uniform(&shape, scale, seed.wrapping_mul(1000).wrapping_add(i as u64))
                }
            };
            p.insert(name, t);
        }
        p
    }

    /// Builds the 2-entry `[true, false]` score node for a decision site.
    pub(crate) fn score_node(
        &self,
        g: &mut Graph<'_>,
        d: &DetectionGraph,
        tag: &ChoiceTag,
    ) -> Result<NodeRef, SketchError> {
        let data = |e: FoodwebError| SketchError::Data(e.to_string());
        let (decision, features) = match (tag.kind.as_str(), tag.args.as_slice()) {
            (ORGANISM, [x]) => (ORGANISM, g.constant(hand_features_organism(d, x).map_err(data)?)),
            (EAT, [x, y]) => {
                let hand = g.constant(hand_features_eat(d, x, y).map_err(data)?);
                let phi = if self.kind == ModelKind::Maxpool {
                    let rows: Vec<NodeRef> = arrow_rows(d, x, y)
                        .map_err(data)?
                        .into_iter()
                        .map(|r| g.constant(r))
                        .collect();
                    let pooled = g.maxpool(&rows, 1 + GEOMETRY_DIM)?;
                    g.concat(&[hand, pooled])?
                } else {
                    hand
                };
                (EAT, phi)
            }
            _ => return Err(SketchError::Data(format!("no model for decision {tag}"))),
        };
        let score = match self.kind {
            ModelKind::Loglinear => {
                let w = g.parameter(&format!("{decision}.w"))?;
                g.matvec(w, features)?
            }
            ModelKind::Mlp2 | ModelKind::Maxpool => {
                let w1 = g.parameter(&format!("{decision}.w1"))?;
                let b1 = g.parameter(&format!("{decision}.b1"))?;
                let w2 = g.parameter(&format!("{decision}.w2"))?;
                let b2 = g.parameter(&format!("{decision}.b2"))?;
                let pre = g.matvec(w1, features)?;
                let pre = g.add(pre, b1)?;
                let hidden = g.tanh(pre)?;
                let out = g.matvec(w2, hidden)?;
                g.add(out, b2)?
            }
        };
        Ok(score)
    }
}
