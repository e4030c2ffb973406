//! Executing food-web questions over noisy diagram detections.
//!
//! Two kinds of decisions are learned: `organism(x)` (is text label `x` an
//! organism?) and `eat(x, y)` (does `x` eat `y`?). Programs compile to
//! sketches that make these decisions lazily and memoize them per
//! execution; everything else about an answer is deterministic.

mod exec;
mod features;
mod model;
mod program;
mod semantics;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sketch::ChoiceTag;

pub use exec::{conditional_sketch, decided_web, execute, Scorer};
pub use features::{
    arrow_rows, hand_features_eat, hand_features_organism, maxpool_features_eat, EAT_FEATURES,
    GEOMETRY_DIM, MAXPOOL_EAT_FEATURES, ORGANISM_FEATURES,
};
pub use model::{Init, ModelKind, ModelSpec};
pub use program::{is_label, Change, ProgramAst};
pub use semantics::{answer_on, propagate_effect, tertiary_consumer};

pub const ORGANISM: &str = "organism";
pub const EAT: &str = "eat";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FoodwebError {
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("invalid food web: {0}")]
    InvalidWeb(String),
}

pub fn organism_tag(x: &str) -> ChoiceTag {
    ChoiceTag::new(ORGANISM, &[x])
}

pub fn eat_tag(x: &str, y: &str) -> ChoiceTag {
    ChoiceTag::new(EAT, &[x, y])
}

/// Organisms and who-eats-whom. Also used for relations decided by a model,
/// which need not be acyclic.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoodWeb {
    pub organisms: BTreeSet<String>,
    /// `(predator, prey)` pairs.
    pub eats: BTreeSet<(String, String)>,
}

impl FoodWeb {
    pub fn is_organism(&self, x: &str) -> bool {
        self.organisms.contains(x)
    }

    pub fn eats(&self, x: &str, y: &str) -> bool {
        self.eats.contains(&(x.to_string(), y.to_string()))
    }

    /// Gold value of a decision site, if the tag names one.
    pub fn decision(&self, tag: &ChoiceTag) -> Option<bool> {
        match (tag.kind.as_str(), tag.args.as_slice()) {
            (ORGANISM, [x]) => Some(self.is_organism(x)),
            (EAT, [x, y]) => Some(self.eats(x, y)),
            _ => None,
        }
    }

    /// Checks `eats ⊆ organisms²`, no self-loops, and acyclicity.
    pub fn validate(&self) -> Result<(), FoodwebError> {
        for (x, y) in &self.eats {
            if x == y {
                return Err(FoodwebError::InvalidWeb(format!("{x} eats itself")));
            }
            if !self.is_organism(x) || !self.is_organism(y) {
                return Err(FoodwebError::InvalidWeb(format!("edge {x}->{y} leaves the organisms")));
            }
        }
        // Kahn's algorithm.
        let mut indegree: BTreeMap<&str, usize> =
            self.organisms.iter().map(|o| (o.as_str(), 0)).collect();
        for (_, y) in &self.eats {
            *indegree.get_mut(y.as_str()).expect("checked") += 1;
        }
        let mut ready: Vec<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(o, _)| *o).collect();
        let mut seen = 0;
        while let Some(x) = ready.pop() {
            seen += 1;
            for (p, y) in &self.eats {
                if p == x {
                    let d = indegree.get_mut(y.as_str()).expect("checked");
                    *d -= 1;
                    if *d == 0 {
                        ready.push(y);
                    }
                }
            }
        }
        if seen != self.organisms.len() {
            return Err(FoodwebError::InvalidWeb("eats relation has a cycle".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextDetection {
    pub label: String,
    pub position: [f64; 2],
    pub organism_score: f64,
}

/// A detected arrow from `tail_label` (the eater) to `head_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowDetection {
    pub head_label: String,
    pub tail_label: String,
    pub confidence: f64,
    pub geometry: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionGraph {
    pub texts: Vec<TextDetection>,
    pub arrows: Vec<ArrowDetection>,
}

impl DetectionGraph {
    pub fn text(&self, label: &str) -> Result<&TextDetection, FoodwebError> {
        self.texts
            .iter()
            .find(|t| t.label == label)
            .ok_or_else(|| FoodwebError::UnknownLabel(label.to_string()))
    }

    /// Text labels in detection order; this is the candidate order for
    /// quantified queries.
    pub fn labels(&self) -> Vec<String> {
        self.texts.iter().map(|t| t.label.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), FoodwebError> {
        let mut seen = BTreeSet::new();
        for t in &self.texts {
            if !seen.insert(t.label.as_str()) {
                return Err(FoodwebError::InvalidWeb(format!("duplicate text {}", t.label)));
            }
        }
        for a in &self.arrows {
            self.text(&a.head_label)?;
            self.text(&a.tail_label)?;
            if a.geometry.len() != GEOMETRY_DIM {
                return Err(FoodwebError::InvalidWeb(format!(
                    "arrow geometry has {} channels, expected {GEOMETRY_DIM}",
                    a.geometry.len()
                )));
            }
        }
        Ok(())
    }
}

/// The answer a program computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Bool(bool),
    Int(u32),
    Effect(Effect),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Increase,
    Decrease,
    Same,
}

impl Effect {
    pub fn from_sign(sign: i8) -> Self {
        match sign.signum() {
            1 => Effect::Increase,
            -1 => Effect::Decrease,
            _ => Effect::Same,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Effect::Increase => Effect::Decrease,
            Effect::Decrease => Effect::Increase,
            Effect::Same => Effect::Same,
        }
    }
}

/// Correct outcome of every decision site on a program's correct execution,
/// in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldTrace(pub Vec<(ChoiceTag, bool)>);

impl GoldTrace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_map(&self) -> BTreeMap<ChoiceTag, bool> {
        self.0.iter().cloned().collect()
    }

    pub fn get(&self, tag: &ChoiceTag) -> Option<bool> {
        self.0.iter().find(|(t, _)| t == tag).map(|(_, b)| *b)
    }
}
