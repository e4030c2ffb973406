//! Teacher-forced choose accuracy and beam execution accuracy.

use std::collections::BTreeMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::foodweb::{execute, Scorer, EAT, ORGANISM};
use crate::graph::{Graph, ParamSet};
use crate::inference::{beam_search_in, follow, InferenceError};

use super::{DatasetExample, HarnessError, LabeledProgram, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalScorer {
    Model(crate::foodweb::ModelSpec),
    /// Scores every decision from the example's hidden web.
    Oracle,
}

/// Per-program outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProgramEval {
    pub family: &'static str,
    /// `(decisions, correct)` per decision kind under teacher forcing.
    pub kinds: BTreeMap<String, (usize, usize)>,
    pub execution_correct: bool,
    pub answer_correct: bool,
}

impl ProgramEval {
    pub fn decisions(&self) -> usize {
        self.kinds.values().map(|k| k.0).sum()
    }

    pub fn correct(&self) -> usize {
        self.kinds.values().map(|k| k.1).sum()
    }

    pub fn all_correct(&self) -> bool {
        self.decisions() == self.correct()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub decisions: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyStats {
    pub programs: usize,
    pub execution_correct: usize,
    pub execution_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub scorer: String,
    pub beam_width: usize,
    pub programs: usize,
    pub decisions: usize,
    /// Fraction of decisions whose strict argmax is the gold option, with
    /// earlier decisions forced to gold. A tie counts as wrong.
    pub choose_accuracy: f64,
    /// Fraction of programs whose unique best beam execution has exactly
    /// the gold decisions. A tie for best counts as wrong.
    pub execution_accuracy: f64,
    /// Fraction of programs whose unique best beam execution answers
    /// correctly, possibly through wrong decisions.
    pub answer_accuracy: f64,
    /// Fraction of programs with every teacher-forced decision correct.
    pub teacher_forced_all_correct: f64,
    pub per_kind: BTreeMap<String, KindStats>,
    pub per_family: BTreeMap<String, FamilyStats>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Scores one labeled program.
pub fn evaluate_program(
    ex: &DatasetExample,
    program: &LabeledProgram,
    scorer: &EvalScorer,
    params: &ParamSet,
    beam_width: usize,
) -> Result<ProgramEval, HarnessError> {
    let scorer = match scorer {
        EvalScorer::Model(spec) => Scorer::Model(*spec),
        EvalScorer::Oracle => Scorer::Oracle(ex.web.clone()),
    };
    let sketch = execute(&program.ast, &ex.detections, &scorer)?;
    let mut out = ProgramEval {
        family: program.ast.family(),
        ..ProgramEval::default()
    };
    for kind in [ORGANISM, EAT] {
        out.kinds.insert(kind.to_string(), (0, 0));
    }

    let mut graph = Graph::new(params);
    follow::<_, HarnessError>(&mut graph, &sketch, |cp| {
        let gold = program.trace.get(&cp.tag).ok_or_else(|| {
            HarnessError::Data(format!("{}: gold trace has no entry for {}", program.ast, cp.tag))
        })?;
        let gold_index = if gold { 0 } else { 1 };
        let predicted = match cp.scores[0].partial_cmp(&cp.scores[1]) {
            Some(std::cmp::Ordering::Greater) => Some(0),
            Some(std::cmp::Ordering::Less) => Some(1),
            _ => None,
        };
        let counts = out.kinds.entry(cp.tag.kind.clone()).or_insert((0, 0));
        counts.0 += 1;
        if predicted == Some(gold_index) {
            counts.1 += 1;
        }
        Ok(gold_index)
    })?;

    let mut graph = Graph::new(params);
    let dist = match beam_search_in(&mut graph, &sketch, beam_width) {
        Ok(d) => Some(d),
        Err(InferenceError::NoExecutions) => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(best) = dist.as_ref().and_then(|d| d.unique_best()) {
        out.answer_correct = best.value == program.answer;
        let gold = program.trace.to_map();
        out.execution_correct = best.trace.len() == gold.len()
            && best
                .trace
                .iter()
                .all(|r| gold.get(&r.tag) == Some(&(r.value == "true")));
    }
    Ok(out)
}

/// Evaluates every program of every example.
pub fn evaluate(
    examples: &[DatasetExample],
    scorer: &EvalScorer,
    params: &ParamSet,
    beam_width: usize,
) -> Result<EvalReport, HarnessError> {
    if beam_width == 0 {
        return Err(InferenceError::ZeroBeamWidth.into());
    }
    let jobs: Vec<(&DatasetExample, &LabeledProgram)> = examples
        .iter()
        .flat_map(|ex| ex.programs.iter().map(move |p| (ex, p)))
        .collect();
    let run = |&(ex, p): &(&DatasetExample, &LabeledProgram)| evaluate_program(ex, p, scorer, params, beam_width);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<ProgramEval, HarnessError>> = jobs.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ProgramEval, HarnessError>> = jobs.iter().map(run).collect();
    let evals = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&evals, scorer, beam_width))
}

fn summarize(evals: &[ProgramEval], scorer: &EvalScorer, beam_width: usize) -> EvalReport {
    let mut kinds: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut families: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for e in evals {
        for (k, &(n, c)) in &e.kinds {
            let s = kinds.entry(k.clone()).or_default();
            s.0 += n;
            s.1 += c;
        }
        let f = families.entry(e.family.to_string()).or_default();
        f.0 += 1;
        f.1 += e.execution_correct as usize;
    }
    let decisions: usize = kinds.values().map(|k| k.0).sum();
    let correct: usize = kinds.values().map(|k| k.1).sum();
    let n = evals.len();
    let count = |f: fn(&ProgramEval) -> bool| evals.iter().filter(|e| f(e)).count();
    EvalReport {
        schema_version: SCHEMA_VERSION,
        scorer: match scorer {
            EvalScorer::Model(spec) => spec.kind.name().to_string(),
            EvalScorer::Oracle => "oracle".to_string(),
        },
        beam_width,
        programs: n,
        decisions,
        choose_accuracy: ratio(correct, decisions),
        execution_accuracy: ratio(count(|e| e.execution_correct), n),
        answer_accuracy: ratio(count(|e| e.answer_correct), n),
        teacher_forced_all_correct: ratio(count(|e| e.all_correct()), n),
        per_kind: kinds
            .into_iter()
            .map(|(k, (d, c))| {
                let s = KindStats {
                    decisions: d,
                    correct: c,
                    accuracy: ratio(c, d),
                };
                (k, s)
            })
            .collect(),
        per_family: families
            .into_iter()
            .map(|(f, (p, c))| {
                let s = FamilyStats {
                    programs: p,
                    execution_correct: c,
                    execution_accuracy: ratio(c, p),
                };
                (f, s)
            })
            .collect(),
    }
}
