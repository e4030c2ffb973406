//! Loglikelihood training from (unconditional, conditional) sketch pairs.
//!
//! The gradient of `log Z(conditional) - log Z(unconditional)` with respect
//! to a choice's score vector is the difference of expected one-hot counts
//! under the two distributions. Those counts seed a single backward sweep
//! per graph.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, Gradients, NodeRef, ParamSet};
use crate::inference::{beam_search_in, Distribution, InferenceError};
use crate::sketch::Sketch;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("conditional sketch has no executions on the beam")]
    Infeasible,
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub struct TrainingExample<T> {
    pub unconditional: Sketch<T>,
    /// The same computation restricted to correct executions.
    pub conditional: Sketch<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beam_width: usize,
    pub shuffle_seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 10,
            beam_width: 32,
            shuffle_seed: 0,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loglikelihood over feasible examples, measured before each update.
    pub mean_log_likelihood: f64,
    pub feasible: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn skipped(&self) -> usize {
        self.epochs.iter().map(|e| e.skipped).sum()
    }
}

fn search<'p, T: 'static>(
    graph: &mut Graph<'p>,
    sketch: &Sketch<T>,
    beam_width: usize,
    conditional: bool,
) -> Result<Distribution<T>, TrainError> {
    match beam_search_in(graph, sketch, beam_width) {
        Err(InferenceError::NoExecutions) if conditional => Err(TrainError::Infeasible),
        other => Ok(other?),
    }
}

pub fn log_likelihood<T: 'static>(
    ex: &TrainingExample<T>,
    params: &ParamSet,
    beam_width: usize,
) -> Result<f64, TrainError> {
    let cond = search(&mut Graph::new(params), &ex.conditional, beam_width, true)?;
    let uncond = search(&mut Graph::new(params), &ex.unconditional, beam_width, false)?;
    Ok(cond.log_partition() - uncond.log_partition())
}

fn expected_count_gradient<T: 'static>(
    params: &ParamSet,
    sketch: &Sketch<T>,
    beam_width: usize,
    sign: f64,
    conditional: bool,
) -> Result<(f64, Gradients), TrainError> {
    let mut graph = Graph::new(params);
    let dist = search(&mut graph, sketch, beam_width, conditional)?;
    let mut seeds: BTreeMap<NodeRef, Tensor> = BTreeMap::new();
    for entry in dist.entries() {
        for rec in &entry.trace {
            let weight = sign * entry.prob;
            let seed = match seeds.get_mut(&rec.node) {
                Some(s) => s,
                None => {
                    let shape = graph.value(rec.node).expect("scored").shape().to_vec();
                    seeds.entry(rec.node).or_insert(Tensor::zeros(&shape))
                }
            };
            seed.values_mut()[rec.index] += weight;
        }
    }
    let seeds: Vec<(NodeRef, Tensor)> = seeds.into_iter().collect();
    Ok((dist.log_partition(), graph.backward(&seeds)?))
}

/// Gradient of the example's loglikelihood; returns the loglikelihood too.
pub fn gradient<T: 'static>(
    ex: &TrainingExample<T>,
    params: &ParamSet,
    beam_width: usize,
) -> Result<(f64, Gradients), TrainError> {
    let (log_z_cond, mut grads) =
        expected_count_gradient(params, &ex.conditional, beam_width, 1.0, true)?;
    let (log_z, neg) = expected_count_gradient(params, &ex.unconditional, beam_width, -1.0, false)?;
    grads.merge(&neg)?;
    Ok((log_z_cond - log_z, grads))
}

/// Gradient ascent on the loglikelihood: `θ ← θ + lr·(g − l2·θ)`, then the
/// accumulated gradients are cleared.
pub fn sgd_step(params: &mut ParamSet, learning_rate: f64, l2: f64) {
    params.update(|_, value, grad| {
        for (v, g) in value.values_mut().iter_mut().zip(grad.values()) {
            *v += learning_rate * (g - l2 * *v);
        }
    });
    params.zero_grad();
}

/// Mean loglikelihood over the feasible examples, with the count skipped.
pub fn mean_log_likelihood<T: 'static>(
    examples: &[TrainingExample<T>],
    params: &ParamSet,
    beam_width: usize,
) -> Result<(f64, usize), TrainError> {
    let mut total = 0.0;
    let mut n = 0usize;
    let mut skipped = 0usize;
    for ex in examples {
        match log_likelihood(ex, params, beam_width) {
            Ok(ll) => {
                total += ll;
                n += 1;
            }
            Err(TrainError::Infeasible) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((if n == 0 { 0.0 } else { total / n as f64 }, skipped))
}

/// Per-example SGD over seeded shuffles of `examples`.
pub fn train<T: 'static>(
    examples: &[TrainingExample<T>],
    config: &TrainConfig,
    params: &mut ParamSet,
) -> Result<TrainReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TrainReport::default();
    params.zero_grad();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut feasible, mut skipped) = (0.0, 0usize, 0usize);
        for &i in &order {
            match gradient(&examples[i], params, config.beam_width) {
                Ok((ll, grads)) => {
                    total += ll;
                    feasible += 1;
                    params.accumulate(&grads)?;
                    sgd_step(params, config.learning_rate, config.l2);
                }
                Err(TrainError::Infeasible) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        report.epochs.push(EpochStats {
            epoch,
            mean_log_likelihood: if feasible == 0 { 0.0 } else { total / feasible as f64 },
            feasible,
            skipped,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{mlp, two_choice_sketch, zero_params, DEMO_HIDDEN, DEMO_INPUT};
    use crate::sketch::{choose, param, require, ChoiceTag};

    fn binary(gold: Option<usize>) -> Sketch<usize> {
        param("w").bind(move |w| {
            choose(vec![0usize, 1], w, ChoiceTag::new("b", &[]))
                .bind(move |v| require(gold.is_none_or(|g| g == v)).map(move |_| v))
        })
    }

    fn binary_params() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(&[2]));
        p
    }

    fn pair(gold: usize) -> TrainingExample<usize> {
        TrainingExample {
            unconditional: binary(None),
            conditional: binary(Some(gold)),
        }
    }

    #[test]
    fn unconditioned_pair_cancels() {
        let p = binary_params();
        let ex = TrainingExample {
            unconditional: binary(None),
            conditional: binary(None),
        };
        assert_eq!(log_likelihood(&ex, &p, 8).unwrap(), 0.0);
        let (_, g) = gradient(&ex, &p, 8).unwrap();
        assert!(g.get("w").unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_binary_choice() {
        let p = binary_params();
        let ex = pair(0);
        assert!((log_likelihood(&ex, &p, 8).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let (_, g) = gradient(&ex, &p, 8).unwrap();
        assert_eq!(g.get("w").unwrap().values(), &[0.5, -0.5]);
    }

    fn two_choice(want_v: Option<i64>, want_y: Option<i64>) -> Sketch<i64> {
        mlp(Tensor::vector(DEMO_INPUT.to_vec())).bind(move |s| {
            choose(vec![0i64, 1], s, ChoiceTag::new("v", &[])).bind(move |v| {
                require(want_v.is_none_or(|w| w == v)).bind(move |_| {
                    choose(vec![2i64, 3], s, ChoiceTag::new("y", &[])).bind(move |y| {
                        require(want_y.is_none_or(|w| w == y)).map(move |_| v + y)
                    })
                })
            })
        })
    }

    #[test]
    fn two_choice_conditioned_likelihoods() {
        let p = zero_params(DEMO_INPUT.len(), DEMO_HIDDEN);
        let ex = |v, y| TrainingExample {
            unconditional: two_choice_sketch(&DEMO_INPUT),
            conditional: two_choice(v, y),
        };
        let ll_v = log_likelihood(&ex(Some(0), None), &p, 10).unwrap();
        assert!((ll_v - 0.5f64.ln()).abs() < 1e-12);
        let ll_vy = log_likelihood(&ex(Some(0), Some(2)), &p, 10).unwrap();
        assert!((ll_vy - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infeasible_conditional() {
        let p = binary_params();
        let ex = TrainingExample {
            unconditional: binary(None),
            conditional: binary(Some(0)).bind(|_| require(false)).map(|_| 0usize),
        };
        assert_eq!(log_likelihood(&ex, &p, 4), Err(TrainError::Infeasible));
    }

    #[test]
    fn sgd_step_exact() {
        let mut p = binary_params();
        sgd_step(&mut p, 0.1, 0.0);
        assert_eq!(p.get("w").unwrap().values(), &[0.0, 0.0]);
        let (_, g) = gradient(&pair(0), &p, 8).unwrap();
        p.accumulate(&g).unwrap();
        sgd_step(&mut p, 0.1, 0.0);
        assert_eq!(p.get("w").unwrap().values(), &[0.1 * 0.5, 0.1 * -0.5]);
        assert_eq!(p.gradient("w").unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn repeated_steps_increase_gold_probability() {
        let mut p = binary_params();
        let ex = pair(1);
        let mut last = log_likelihood(&ex, &p, 8).unwrap();
        for _ in 0..50 {
            let (_, g) = gradient(&ex, &p, 8).unwrap();
            p.accumulate(&g).unwrap();
            sgd_step(&mut p, 0.5, 0.0);
            let ll = log_likelihood(&ex, &p, 8).unwrap();
            assert!(ll > last);
            last = ll;
        }
        assert!(last.exp() > 0.9);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut p = binary_params();
        let before = p.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let report = train(&[pair(0)], &cfg, &mut p).unwrap();
        assert!(report.epochs.is_empty());
        assert_eq!(p, before);
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let corpus: Vec<TrainingExample<usize>> = [0, 0, 1, 0, 0].iter().map(|&g| pair(g)).collect();
        let cfg = TrainConfig {
            epochs: 5,
            shuffle_seed: 9,
            ..TrainConfig::default()
        };
        let mut a = binary_params();
        let mut b = binary_params();
        let (before, _) = mean_log_likelihood(&corpus, &a, 8).unwrap();
        train(&corpus, &cfg, &mut a).unwrap();
        train(&corpus, &cfg, &mut b).unwrap();
        assert_eq!(a, b);
        let (after, _) = mean_log_likelihood(&corpus, &a, 8).unwrap();
        assert!(after > before, "{after} <= {before}");
    }
}
