//! Synthetic data, evaluation metrics, and on-disk formats.

mod generate;
mod io;
mod metrics;

use thiserror::Error;

use crate::foodweb::{
    conditional_sketch, execute, Answer, DetectionGraph, FoodWeb, FoodwebError, GoldTrace, ModelSpec,
    ProgramAst, Scorer,
};
use crate::graph::ParamSet;
use crate::inference::InferenceError;
use crate::sketch::SketchError;
use crate::training::{train, TrainConfig, TrainError, TrainReport, TrainingExample};

pub use generate::{generate, label_program, GenConfig, NoiseConfig};
pub use io::{
    load_dataset, load_params, load_report, read_gen_config, save_dataset, save_params, save_report,
    ParamsFile, SCHEMA_VERSION,
};
pub use metrics::{evaluate, evaluate_program, EvalReport, EvalScorer, FamilyStats, KindStats, ProgramEval};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("{path}: line {line}, column {column}: {msg}")]
    Json {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{path}: schema_version {found} is not supported (expected {expected})")]
    Schema { path: String, found: u64, expected: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Foodweb(#[from] FoodwebError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl From<SketchError> for HarnessError {
    fn from(e: SketchError) -> Self {
        HarnessError::Inference(e.into())
    }
}

/// A program with its answer and gold decisions on one diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProgram {
    pub ast: ProgramAst,
    pub answer: Answer,
    pub trace: GoldTrace,
}

/// One diagram: the hidden web, its detections, and labeled programs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetExample {
    pub web: FoodWeb,
    pub detections: DetectionGraph,
    pub programs: Vec<LabeledProgram>,
}

/// Unconditional/conditional sketch pairs for every labeled program.
pub fn training_examples(
    examples: &[DatasetExample],
    spec: &ModelSpec,
) -> Result<Vec<TrainingExample<Answer>>, HarnessError> {
    let scorer = Scorer::Model(*spec);
    let mut out = Vec::new();
    for ex in examples {
        for p in &ex.programs {
            out.push(TrainingExample {
                unconditional: execute(&p.ast, &ex.detections, &scorer)?,
                conditional: conditional_sketch(&p.ast, &ex.detections, &scorer, &p.trace)?,
            });
        }
    }
    Ok(out)
}

/// Initializes parameters from `spec` and trains them on `examples`.
pub fn train_model(
    examples: &[DatasetExample],
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<(ParamSet, TrainReport), HarnessError> {
    let mut params = spec.init_params();
    let report = train(&training_examples(examples, spec)?, config, &mut params)?;
    Ok((params, report))
}
