//! Versioned JSON files for parameters, datasets, and reports.
//!
//! Floats are written in shortest round-trip form, so a saved and reloaded
//! parameter set is bitwise identical to the original.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::foodweb::{Answer, DetectionGraph, FoodWeb, GoldTrace, ModelSpec, ProgramAst};
use crate::graph::ParamSet;
use crate::sketch::ChoiceTag;
use crate::tensor::Tensor;

use super::{DatasetExample, EvalReport, GenConfig, HarnessError, LabeledProgram};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    pub params: BTreeMap<String, Tensor>,
}

impl ParamsFile {
    pub fn new(model: Option<ModelSpec>, params: &ParamSet) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model,
            params: params.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    pub fn to_params(&self) -> Result<ParamSet, HarnessError> {
        let mut p = ParamSet::new();
        for (name, t) in &self.params {
            let t = Tensor::new(t.shape().to_vec(), t.values().to_vec())
                .map_err(|e| HarnessError::Data(format!("parameter {name}: {e}")))?;
            p.insert(name.clone(), t);
        }
        Ok(p)
    }
}

/// `[kind, args..., gold]`, e.g. `["eat", "hawk", "mice", true]`.
#[derive(Debug, Clone, PartialEq)]
struct TraceEntry(ChoiceTag, bool);

impl Serialize for TraceEntry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut items: Vec<Value> = vec![Value::from(self.0.kind.as_str())];
        items.extend(self.0.args.iter().map(|a| Value::from(a.as_str())));
        items.push(Value::from(self.1));
        items.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TraceEntry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let items = Vec::<Value>::deserialize(d)?;
        let (last, rest) = items
            .split_last()
            .ok_or_else(|| D::Error::custom("empty trace entry"))?;
        let gold = last
            .as_bool()
            .ok_or_else(|| D::Error::custom("trace entry must end with a boolean"))?;
        let strings: Vec<&str> = rest
            .iter()
            .map(|v| v.as_str().ok_or_else(|| D::Error::custom("trace tag parts must be strings")))
            .collect::<Result<_, _>>()?;
        let (kind, args) = strings
            .split_first()
            .ok_or_else(|| D::Error::custom("trace entry has no decision kind"))?;
        Ok(TraceEntry(ChoiceTag::new(*kind, args), gold))
    }
}

#[derive(Serialize, Deserialize)]
struct ProgramRecord {
    program: ProgramAst,
    answer: Answer,
    trace: Vec<TraceEntry>,
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    web: FoodWeb,
    detections: DetectionGraph,
    programs: Vec<ProgramRecord>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema_version: u32,
    examples: Vec<ExampleRecord>,
}

#[derive(Deserialize)]
struct Header {
    schema_version: Option<u64>,
}

fn io_err(path: &Path, error: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        error,
    }
}

fn json_err(path: &Path, e: serde_json::Error) -> HarnessError {
    HarnessError::Json {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    match header.schema_version {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        found => {
            return Err(HarnessError::Schema {
                path: path.display().to_string(),
                found: found.unwrap_or(0),
                expected: SCHEMA_VERSION,
            })
        }
    }
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}

pub fn save_params(path: &Path, model: Option<ModelSpec>, params: &ParamSet) -> Result<(), HarnessError> {
    write_json(path, &ParamsFile::new(model, params))
}

pub fn load_params(path: &Path) -> Result<ParamsFile, HarnessError> {
    let file: ParamsFile = read_versioned(path)?;
    file.to_params()?;
    Ok(file)
}

pub fn save_dataset(path: &Path, examples: &[DatasetExample]) -> Result<(), HarnessError> {
    let file = DatasetFile {
        schema_version: SCHEMA_VERSION,
        examples: examples
            .iter()
            .map(|ex| ExampleRecord {
                web: ex.web.clone(),
                detections: ex.detections.clone(),
                programs: ex
                    .programs
                    .iter()
                    .map(|p| ProgramRecord {
                        program: p.ast.clone(),
                        answer: p.answer,
                        trace: p.trace.0.iter().map(|(t, b)| TraceEntry(t.clone(), *b)).collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    write_json(path, &file)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetExample>, HarnessError> {
    let file: DatasetFile = read_versioned(path)?;
    let mut out = Vec::with_capacity(file.examples.len());
    for (i, ex) in file.examples.into_iter().enumerate() {
        let context = |e: &dyn std::fmt::Display| {
            HarnessError::Data(format!("{}: example {i}: {e}", path.display()))
        };
        ex.web.validate().map_err(|e| context(&e))?;
        ex.detections.validate().map_err(|e| context(&e))?;
        let mut programs = Vec::with_capacity(ex.programs.len());
        for p in ex.programs {
            p.program.validate().map_err(|e| context(&e))?;
            for l in p.program.free_labels() {
                ex.detections.text(l).map_err(|e| context(&e))?;
            }
            programs.push(LabeledProgram {
                ast: p.program,
                answer: p.answer,
                trace: GoldTrace(p.trace.into_iter().map(|t| (t.0, t.1)).collect()),
            });
        }
        out.push(DatasetExample {
            web: ex.web,
            detections: ex.detections,
            programs,
        });
    }
    Ok(out)
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<(), HarnessError> {
    write_json(path, report)
}

pub fn load_report(path: &Path) -> Result<EvalReport, HarnessError> {
    read_versioned(path)
}

/// Reads a generator config; missing fields take their defaults.
pub fn read_gen_config(path: &Path) -> Result<GenConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e))
}
