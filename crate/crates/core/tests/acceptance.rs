//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnp::demo::{two_choice_sketch, zero_params, DEMO_HIDDEN, DEMO_INPUT};
use pnp::foodweb::{conditional_sketch, execute, Init, ModelKind, ModelSpec, Scorer};
use pnp::graph::{Graph, NodeRef, ParamSet};
use pnp::harness::{
    evaluate, generate, save_dataset, save_params, save_report, train_model, EvalReport, EvalScorer,
    GenConfig, NoiseConfig,
};
use pnp::inference::{beam_search, enumerate, Distribution};
use pnp::sketch::{choose, choose_scores, require, ChoiceTag, Sketch};
use pnp::tensor::Tensor;
use pnp::training::{gradient, log_likelihood, TrainConfig, TrainingExample};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// `|a − b| / max(|a|, |b|, 1)`: relative for large magnitudes, absolute
/// near zero.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn two_choice() -> Outcome {
    let params = zero_params(DEMO_INPUT.len(), DEMO_HIDDEN);
    let dist = beam_search(&two_choice_sketch(&DEMO_INPUT), 10, &params).expect("demo runs");
    let mut values: Vec<i64> = dist.entries().iter().map(|e| e.value).collect();
    values.sort();
    let worst = dist
        .entries()
        .iter()
        .map(|e| (e.prob - 0.25).abs())
        .fold(0.0, f64::max);
    outcome(
        values == [2, 3, 3, 4] && worst <= 1e-9,
        format!("values {values:?}, max |p - 0.25| = {worst:.1e}"),
    )
}

/// A random graph over random parameters. The objective is a random linear
/// functional of the last vector node plus every scalar node.
struct RandomGraph {
    params: ParamSet,
    ops: Vec<Op>,
    /// Random seed per output node.
    outputs: Vec<(usize, Vec<f64>)>,
    kinds: BTreeSet<&'static str>,
}

enum Op {
    Param(String),
    Const(Tensor),
    MatVec(usize, usize),
    Add(usize, usize),
    Tanh(usize),
    Concat(Vec<usize>),
    MaxPool(Vec<usize>, usize),
    Index(usize, usize),
}

fn uniform(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_graph(rng: &mut ChaCha8Rng) -> RandomGraph {
    let mut params = ParamSet::new();
    let mut ops: Vec<Op> = Vec::new();
    // Vector length per op; 0 marks a scalar.
    let mut dims: Vec<usize> = Vec::new();
    let mut kinds = BTreeSet::new();

    for i in 0..rng.random_range(2..4) {
        let d = rng.random_range(2..5);
        if i == 0 || rng.random_bool(0.6) {
            let name = format!("v{i}");
            params.insert(name.clone(), Tensor::vector(uniform(rng, d)));
            ops.push(Op::Param(name));
            kinds.insert("parameter");
        } else {
            ops.push(Op::Const(Tensor::vector(uniform(rng, d))));
            kinds.insert("constant");
        }
        dims.push(d);
    }
    for step in 0..rng.random_range(4..12) {
        let vectors: Vec<usize> = (0..ops.len()).filter(|&j| dims[j] > 0 && dims[j] != usize::MAX).collect();
        let x = vectors[rng.random_range(0..vectors.len())];
        let same: Vec<usize> = vectors.iter().copied().filter(|&j| dims[j] == dims[x]).collect();
        let (op, d) = match rng.random_range(0..6) {
            0 => {
                let rows = rng.random_range(1..5);
                let name = format!("m{step}");
                let values = uniform(rng, rows * dims[x]);
                params.insert(name.clone(), Tensor::new(vec![rows, dims[x]], values).unwrap());
                ops.push(Op::Param(name));
                dims.push(usize::MAX);
                kinds.extend(["parameter", "matvec"]);
                (Op::MatVec(ops.len() - 1, x), rows)
            }
            1 => {
                kinds.insert("add");
                (Op::Add(x, same[rng.random_range(0..same.len())]), dims[x])
            }
            2 => {
                kinds.insert("tanh");
                (Op::Tanh(x), dims[x])
            }
            3 => {
                let parts: Vec<usize> = (0..rng.random_range(1..4))
                    .map(|_| vectors[rng.random_range(0..vectors.len())])
                    .collect();
                kinds.insert("concat");
                let d = parts.iter().map(|&p| dims[p]).sum();
                (Op::Concat(parts), d)
            }
            4 => {
                let rows: Vec<usize> = (0..rng.random_range(1..4))
                    .map(|_| same[rng.random_range(0..same.len())])
                    .collect();
                kinds.insert("maxpool");
                (Op::MaxPool(rows, dims[x]), dims[x])
            }
            _ => {
                kinds.insert("index_scalar");
                (Op::Index(x, rng.random_range(0..dims[x])), 0)
            }
        };
        ops.push(op);
        dims.push(d);
    }
    let last = (0..ops.len()).rev().find(|&j| dims[j] > 0 && dims[j] != usize::MAX).unwrap();
    let mut outputs = vec![(last, uniform(rng, dims[last]))];
    for j in 0..ops.len() {
        if dims[j] == 0 {
            outputs.push((j, uniform(rng, 1)));
        }
    }
    RandomGraph {
        params,
        ops,
        outputs,
        kinds,
    }
}

impl RandomGraph {
    fn instantiate(&self, g: &mut Graph<'_>) -> Vec<NodeRef> {
        let mut nodes: Vec<NodeRef> = Vec::new();
        for op in &self.ops {
            let n = match op {
                Op::Param(name) => g.parameter(name).unwrap(),
                Op::Const(t) => g.constant(t.clone()),
                Op::MatVec(a, x) => g.matvec(nodes[*a], nodes[*x]).unwrap(),
                Op::Add(a, b) => g.add(nodes[*a], nodes[*b]).unwrap(),
                Op::Tanh(a) => g.tanh(nodes[*a]).unwrap(),
                Op::Concat(parts) => {
                    let p: Vec<NodeRef> = parts.iter().map(|&i| nodes[i]).collect();
                    g.concat(&p).unwrap()
                }
                Op::MaxPool(rows, w) => {
                    let r: Vec<NodeRef> = rows.iter().map(|&i| nodes[i]).collect();
                    g.maxpool(&r, *w).unwrap()
                }
                Op::Index(x, i) => g.index_scalar(nodes[*x], *i).unwrap(),
            };
            nodes.push(n);
        }
        nodes
    }

    fn seeds(&self, g: &mut Graph<'_>) -> Vec<(NodeRef, Tensor)> {
        let nodes = self.instantiate(g);
        self.outputs
            .iter()
            .map(|(j, w)| {
                let shape = g.forward(nodes[*j]).unwrap().shape().to_vec();
                (nodes[*j], Tensor::new(shape, w.clone()).unwrap())
            })
            .collect()
    }

    fn objective(&self, params: &ParamSet) -> f64 {
        let mut g = Graph::new(params);
        let seeds = self.seeds(&mut g);
        seeds
            .iter()
            .map(|(n, w)| {
                let v = g.value(*n).unwrap();
                v.values().iter().zip(w.values()).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }
}

fn autodiff() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut kinds = BTreeSet::new();
    let mut worst: f64 = 0.0;
    let graphs = 150;
    for _ in 0..graphs {
        let rg = random_graph(&mut rng);
        kinds.extend(rg.kinds.iter().copied());
        let mut g = Graph::new(&rg.params);
        let seeds = rg.seeds(&mut g);
        let grads = g.backward(&seeds).unwrap();
        for (name, value) in rg.params.iter() {
            for k in 0..value.len() {
                let h = 1e-5;
                let mut plus = rg.params.clone();
                let mut minus = rg.params.clone();
                plus.update(|n, v, _| {
                    if n == name {
                        v.values_mut()[k] += h
                    }
                });
                minus.update(|n, v, _| {
                    if n == name {
                        v.values_mut()[k] -= h
                    }
                });
                let numeric = (rg.objective(&plus) - rg.objective(&minus)) / (2.0 * h);
                let analytic = grads.get(name).map_or(0.0, |t| t.values()[k]);
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }
    let all_kinds = ["parameter", "constant", "matvec", "add", "tanh", "concat", "maxpool", "index_scalar"];
    let covered = all_kinds.iter().all(|k| kinds.contains(k));
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && covered && within(elapsed, 10),
        format!("{graphs} graphs, all node kinds covered: {covered}, max rel err {worst:.2e}, {elapsed:.1?}"),
    )
}

/// A random choice tree with its leaf count.
enum Tree {
    Leaf(i64),
    Fail,
    Choice {
        scores: Vec<f64>,
        via_graph: bool,
        children: Vec<Rc<Tree>>,
    },
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize, budget: usize, next: &mut i64) -> (Tree, usize) {
    if depth == 0 || budget < 2 || rng.random_bool(0.25) {
        if rng.random_bool(0.1) {
            return (Tree::Fail, 1);
        }
        *next += 1;
        return (Tree::Leaf(*next % 5), 1);
    }
    let k = rng.random_range(2..=3.min(budget));
    let mut children = Vec::new();
    let mut used = 0;
    for i in 0..k {
        let share = (budget - used) / (k - i);
        let (child, n) = random_tree(rng, depth - 1, share.max(1), next);
        used += n;
        children.push(Rc::new(child));
    }
    let scores = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    (
        Tree::Choice {
            scores,
            via_graph: rng.random_bool(0.5),
            children,
        },
        used,
    )
}

fn tree_sketch(t: Rc<Tree>, path: String) -> Sketch<i64> {
    match &*t {
        Tree::Leaf(v) => pnp::sketch::pure(*v),
        Tree::Fail => require(false).map(|_| 0),
        Tree::Choice {
            scores,
            via_graph,
            children,
        } => {
            let tag = ChoiceTag::new("c", &[path.as_str()]);
            let options: Vec<usize> = (0..children.len()).collect();
            let kids = children.clone();
            let cont = move |i: usize| tree_sketch(Rc::clone(&kids[i]), format!("{path}.{i}"));
            if *via_graph {
                let s = scores.clone();
                Sketch::graph(move |g| {
                    let c = g.constant(Tensor::vector(s.clone()));
                    Ok(g.tanh(c)?)
                })
                .bind(move |node| choose(options.clone(), node, tag.clone()))
                .bind(cont)
            } else {
                choose_scores(options, scores.clone(), tag).bind(cont)
            }
        }
    }
}

fn traces(d: &Distribution<i64>) -> BTreeMap<Vec<usize>, (i64, f64, f64)> {
    d.entries()
        .iter()
        .map(|e| (e.indices(), (e.value, e.score, e.prob)))
        .collect()
}

fn inference_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params = ParamSet::new();
    let mut checked = 0;
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    while checked < 250 {
        let mut next = 0;
        let (tree, leaves) = random_tree(&mut rng, 6, 64, &mut next);
        assert!(leaves <= 64);
        let sketch = tree_sketch(Rc::new(tree), "r".into());
        let exact = match enumerate(&sketch, &params) {
            Ok(d) => d,
            Err(_) => continue,
        };
        checked += 1;
        let beam = beam_search(&sketch, 64, &params).unwrap();
        let (a, b) = (traces(&exact), traces(&beam));
        if a.keys().ne(b.keys()) {
            mismatches += 1;
            continue;
        }
        for (k, (v, s, p)) in &a {
            let (v2, s2, p2) = b[k];
            if *v != v2 || (s - s2).abs() > 1e-12 {
                mismatches += 1;
            }
            worst = worst.max((p - p2).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && worst <= 1e-9 && within(elapsed, 30),
        format!("{checked} sketches, {mismatches} trace mismatches, max |dp| {worst:.1e}, {elapsed:.1?}"),
    )
}

fn gradient_consistency() -> Outcome {
    let start = Instant::now();
    let data = generate(&GenConfig {
        num_webs: 3,
        organisms_per_web: 3,
        distractor_texts: 1,
        programs_per_web: 5,
        edge_density: 0.5,
        seed: 9,
        ..GenConfig::default()
    })
    .expect("generate");
    let exhaustive = 1 << 20;
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    let mut programs = 0;
    for (ki, kind) in [ModelKind::Loglinear, ModelKind::Mlp2, ModelKind::Maxpool].into_iter().enumerate() {
        let spec = ModelSpec::new(kind, 3 + ki as u64)
            .with_hidden(3)
            .with_init(Init::Uniform {
                scale: 0.5,
                seed: 3 + ki as u64,
            });
        let params = spec.init_params();
        let scorer = Scorer::Model(spec);
        for ex in &data {
            for p in &ex.programs {
                let tex = TrainingExample {
                    unconditional: execute(&p.ast, &ex.detections, &scorer).unwrap(),
                    conditional: conditional_sketch(&p.ast, &ex.detections, &scorer, &p.trace).unwrap(),
                };
                let (_, grads) = gradient(&tex, &params, exhaustive).unwrap();
                programs += 1;
                for (name, value) in params.iter() {
                    for k in 0..value.len() {
                        let h = 1e-5;
                        let shifted = |delta: f64| {
                            let mut q = params.clone();
                            q.update(|n, v, _| {
                                if n == name {
                                    v.values_mut()[k] += delta
                                }
                            });
                            log_likelihood(&tex, &q, exhaustive).unwrap()
                        };
                        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                        let analytic = grads.get(name).map_or(0.0, |t| t.values()[k]);
                        worst = worst.max(rel_err(analytic, numeric));
                        coords += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-4 && within(elapsed, 60),
        format!("{programs} programs x 3 models, {coords} coordinates, max rel err {worst:.2e}, {elapsed:.1?}"),
    )
}

fn noiseless(num_webs: usize, seed: u64) -> GenConfig {
    GenConfig {
        num_webs,
        noise: NoiseConfig::noiseless(),
        seed,
        ..GenConfig::default()
    }
}

/// Reports from every trained or scored run, for the metric inequality.
type Reports = Vec<(String, EvalReport)>;

fn learnability(reports: &mut Reports) -> Outcome {
    let start = Instant::now();
    let train = generate(&noiseless(100, 501)).unwrap();
    let test = generate(&noiseless(50, 502)).unwrap();
    let spec = ModelSpec::new(ModelKind::Mlp2, 5);
    let config = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let (params, _) = train_model(&train, &spec, &config).unwrap();
    let r = evaluate(&test, &EvalScorer::Model(spec), &params, config.beam_width).unwrap();
    let elapsed = start.elapsed();
    let detail = format!(
        "held-out choose {:.4}, execution {:.4}, {elapsed:.1?}",
        r.choose_accuracy, r.execution_accuracy
    );
    let pass = r.choose_accuracy >= 0.95 && r.execution_accuracy >= 0.80 && within(elapsed, 300);
    reports.push(("noiseless mlp2".into(), r));
    outcome(pass, detail)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn model_ordering(reports: &mut Reports) -> Outcome {
    let start = Instant::now();
    let noisy = |num_webs, seed| GenConfig {
        num_webs,
        noise: NoiseConfig {
            score_noise_sd: 0.1,
            arrow_confusion_rate: 0.3,
            geometry_signal: true,
        },
        seed,
        ..GenConfig::default()
    };
    let mut acc: BTreeMap<ModelKind, Vec<f64>> = BTreeMap::new();
    for seed in 0..5u64 {
        let train = generate(&noisy(150, 100 + seed)).unwrap();
        let test = generate(&noisy(60, 200 + seed)).unwrap();
        let config = TrainConfig {
            learning_rate: 0.01,
            epochs: 10,
            beam_width: 32,
            shuffle_seed: seed,
            l2: 0.0,
        };
        for kind in ModelKind::ALL {
            let spec = ModelSpec::new(kind, seed);
            let (params, _) = train_model(&train, &spec, &config).unwrap();
            let r = evaluate(&test, &EvalScorer::Model(spec), &params, config.beam_width).unwrap();
            acc.entry(kind).or_default().push(r.choose_accuracy);
            reports.push((format!("{kind} seed {seed}"), r));
        }
    }
    let m = |k: ModelKind| median(acc[&k].clone());
    let (ll, mlp, mp) = (m(ModelKind::Loglinear), m(ModelKind::Mlp2), m(ModelKind::Maxpool));
    let elapsed = start.elapsed();
    outcome(
        mp >= ll + 0.03 && mlp >= ll && within(elapsed, 900),
        format!("median choose accuracy loglinear {ll:.4}, mlp2 {mlp:.4}, maxpool {mp:.4}, {elapsed:.1?}"),
    )
}

fn metric_definitions(reports: &mut Reports) -> Outcome {
    let data = generate(&GenConfig {
        num_webs: 30,
        seed: 71,
        ..GenConfig::default()
    })
    .unwrap();
    let oracle = evaluate(&data, &EvalScorer::Oracle, &ParamSet::new(), 32).unwrap();
    let mut zero_choose = Vec::new();
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind, 0).with_init(Init::Zeros);
        let r = evaluate(&data, &EvalScorer::Model(spec), &spec.init_params(), 32).unwrap();
        zero_choose.push(r.choose_accuracy);
        reports.push((format!("zero-init {kind}"), r));
    }
    let spec = ModelSpec::new(ModelKind::Loglinear, 0);
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let (params, _) = train_model(&data, &spec, &config).unwrap();
    for width in [1, 4, 32] {
        let r = evaluate(&data, &EvalScorer::Model(spec), &params, width).unwrap();
        reports.push((format!("loglinear beam {width}"), r));
    }
    let oracle_ok = oracle.choose_accuracy == 1.0 && oracle.execution_accuracy == 1.0;
    reports.push(("oracle".into(), oracle));
    let zero_ok = zero_choose.iter().all(|&a| a == 0.0);
    let violations: Vec<&str> = reports
        .iter()
        .filter(|(_, r)| r.execution_accuracy > r.teacher_forced_all_correct)
        .map(|(n, _)| n.as_str())
        .collect();
    outcome(
        oracle_ok && zero_ok && violations.is_empty(),
        format!(
            "oracle both 1.0: {oracle_ok}, zero-init choose {zero_choose:?}, exec <= all-correct on {} runs (violations {violations:?})",
            reports.len()
        ),
    )
}

fn pipeline(dir: &std::path::Path) -> (Vec<u8>, Vec<u8>) {
    let cfg = GenConfig {
        num_webs: 12,
        seed: 5,
        ..GenConfig::default()
    };
    let data = generate(&cfg).unwrap();
    save_dataset(&dir.join("data.json"), &data).unwrap();
    let data = pnp::harness::load_dataset(&dir.join("data.json")).unwrap();
    let spec = ModelSpec::new(ModelKind::Maxpool, 8).with_hidden(8);
    let config = TrainConfig {
        epochs: 2,
        shuffle_seed: 8,
        ..TrainConfig::default()
    };
    let (params, _) = train_model(&data, &spec, &config).unwrap();
    save_params(&dir.join("params.json"), Some(spec), &params).unwrap();
    let r = evaluate(&data, &EvalScorer::Model(spec), &params, 16).unwrap();
    save_report(&dir.join("report.json"), &r).unwrap();
    (
        fs::read(dir.join("params.json")).unwrap(),
        fs::read(dir.join("report.json")).unwrap(),
    )
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let same_data = fs::read(a.path().join("data.json")).unwrap() == fs::read(b.path().join("data.json")).unwrap();
    outcome(
        first == second && same_data,
        format!(
            "dataset identical: {same_data}, params identical: {}, report identical: {}",
            first.0 == second.0,
            first.1 == second.1
        ),
    )
}

fn main() {
    let mut reports: Reports = Vec::new();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {name}: {status} ({})", o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "two-choice demo distribution", two_choice());
    report(2, "autodiff soundness", autodiff());
    report(3, "inference oracle equivalence", inference_oracle());
    report(4, "training gradient consistency", gradient_consistency());
    report(5, "learnability", learnability(&mut reports));
    report(6, "model ordering", model_ordering(&mut reports));
    report(7, "metric definitions", metric_definitions(&mut reports));
    report(8, "determinism", determinism());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
