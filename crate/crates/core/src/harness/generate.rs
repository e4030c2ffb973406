//! Seeded synthetic food webs with simulated detections.
//!
//! The detection noise model: organism scores sit near 1.0 for organisms
//! and 0.1 for other text; every gold edge emits an arrow with confidence
//! near 0.8 whose first geometry channel carries a clean signal; spurious
//! arrows between other ordered label pairs have confidence near 0.6 and
//! no signal. Confidence alone is therefore ambiguous under noise, while
//! the geometry separates real arrows from spurious ones.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::foodweb::{
    answer_on, execute, ArrowDetection, Change, DetectionGraph, FoodWeb, GoldTrace, ProgramAst,
    Scorer, TextDetection, GEOMETRY_DIM,
};
use crate::graph::{Graph, ParamSet};
use crate::inference::follow;
use crate::sketch::SketchError;

use super::{DatasetExample, HarnessError, LabeledProgram};

const ORGANISM_NAMES: &[&str] = &[
    "grass", "deer", "mice", "snakes", "hawk", "rabbits", "fox", "owl", "frog", "insects",
    "berries", "bear", "wolf", "algae", "fish", "heron", "shrimp", "plankton", "seeds",
    "squirrel", "eagle", "lizard", "trees", "caterpillar", "sparrow", "raccoon", "worms",
    "beetle", "clover", "moose", "crab", "otter",
];

const DISTRACTOR_NAMES: &[&str] = &[
    "title", "legend", "sun", "caption", "key", "soil", "water", "forest",
];

const MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub score_noise_sd: f64,
    /// Probability that a non-edge ordered label pair gets a spurious arrow.
    pub arrow_confusion_rate: f64,
    pub geometry_signal: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            score_noise_sd: 0.1,
            arrow_confusion_rate: 0.1,
            geometry_signal: true,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            score_noise_sd: 0.0,
            arrow_confusion_rate: 0.0,
            geometry_signal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub num_webs: usize,
    pub organisms_per_web: usize,
    pub edge_density: f64,
    pub distractor_texts: usize,
    pub noise: NoiseConfig,
    /// Families cycle cause, eats, count, tertiary-consumer, organism.
    pub programs_per_web: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_webs: 120,
            organisms_per_web: 6,
            edge_density: 0.3,
            distractor_texts: 2,
            noise: NoiseConfig::default(),
            programs_per_web: 4,
            seed: 0,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.organisms_per_web < 2 || self.organisms_per_web > ORGANISM_NAMES.len() {
            return bad(&format!("organisms_per_web must be in 2..={}", ORGANISM_NAMES.len()));
        }
        if self.distractor_texts > DISTRACTOR_NAMES.len() {
            return bad(&format!("distractor_texts must be at most {}", DISTRACTOR_NAMES.len()));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return bad("edge_density must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.noise.arrow_confusion_rate) {
            return bad("arrow_confusion_rate must be in [0, 1]");
        }
        if !(self.noise.score_noise_sd >= 0.0) {
            return bad("score_noise_sd must be nonnegative");
        }
        Ok(())
    }
}

const FAMILIES: [&str; 5] = ["cause", "eats", "count", "tertiary-consumer", "organism"];

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

struct Noise {
    normal: Option<Normal<f64>>,
}

impl Noise {
    fn new(sd: f64) -> Self {
        Self {
            normal: (sd > 0.0).then(|| Normal::new(0.0, sd).expect("sd > 0")),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.normal.map_or(0.0, |n| n.sample(rng))
    }
}

fn sample_web(config: &GenConfig, rng: &mut ChaCha8Rng) -> (FoodWeb, Vec<String>, Vec<String>) {
    let organisms: Vec<String> = ORGANISM_NAMES
        .choose_multiple(rng, config.organisms_per_web)
        .map(|s| s.to_string())
        .collect();
    let distractors: Vec<String> = DISTRACTOR_NAMES
        .choose_multiple(rng, config.distractor_texts)
        .map(|s| s.to_string())
        .collect();
    let mut web = FoodWeb {
        organisms: organisms.iter().cloned().collect(),
        ..FoodWeb::default()
    };
    // `organisms` is a topological order: only later entries eat earlier ones.
    for i in 0..organisms.len() {
        for j in 0..i {
            if rng.random_bool(config.edge_density) {
                web.eats.insert((organisms[i].clone(), organisms[j].clone()));
            }
        }
    }
    (web, organisms, distractors)
}

fn sample_detections(
    config: &GenConfig,
    web: &FoodWeb,
    organisms: &[String],
    distractors: &[String],
    rng: &mut ChaCha8Rng,
) -> DetectionGraph {
    let noise = Noise::new(config.noise.score_noise_sd);
    let mut labels: Vec<&String> = organisms.iter().chain(distractors).collect();
    labels.shuffle(rng);
    let texts = labels
        .iter()
        .map(|&l| {
            let is_org = if web.is_organism(l) { 1.0 } else { 0.0 };
            TextDetection {
                label: l.clone(),
                position: [rng.random::<f64>(), rng.random::<f64>()],
                organism_score: clamp01(0.9 * is_org + 0.1 + noise.sample(rng)),
            }
        })
        .collect();
    let geometry = |signal: f64, rng: &mut ChaCha8Rng| {
        let mut g = vec![signal];
        g.extend((1..GEOMETRY_DIM).map(|_| rng.random::<f64>()));
        g
    };
    let mut arrows = Vec::new();
    let signal = if config.noise.geometry_signal { 1.0 } else { 0.0 };
    for (x, y) in &web.eats {
        arrows.push(ArrowDetection {
            head_label: y.clone(),
            tail_label: x.clone(),
            confidence: clamp01(0.8 + noise.sample(rng)),
            geometry: geometry(signal, rng),
        });
    }
    if config.noise.arrow_confusion_rate > 0.0 {
        for &x in &labels {
            for &y in &labels {
                if x == y || web.eats(x, y) {
                    continue;
                }
                if rng.random_bool(config.noise.arrow_confusion_rate) {
                    arrows.push(ArrowDetection {
                        head_label: y.clone(),
                        tail_label: x.clone(),
                        confidence: clamp01(0.6 + noise.sample(rng)),
                        geometry: geometry(0.0, rng),
                    });
                }
            }
        }
    }
    DetectionGraph { texts, arrows }
}

fn has_edge(web: &FoodWeb, x: &str) -> bool {
    web.eats.iter().any(|(a, b)| a == x || b == x)
}

fn sample_program(
    family: &str,
    web: &FoodWeb,
    organisms: &[String],
    labels: &[String],
    rng: &mut ChaCha8Rng,
) -> Option<ProgramAst> {
    let pick = |rng: &mut ChaCha8Rng, from: &[String]| from.choose(rng).cloned();
    let ast = match family {
        "cause" => {
            let connected: Vec<String> = organisms.iter().filter(|o| has_edge(web, o)).cloned().collect();
            let source = pick(rng, &connected)?;
            let rest: Vec<String> = organisms.iter().filter(|o| **o != source).cloned().collect();
            let target = pick(rng, &rest)?;
            let change = if rng.random_bool(0.5) { Change::Increase } else { Change::Decrease };
            ProgramAst::Cause { change, source, target }
        }
        "eats" => {
            let edges: Vec<&(String, String)> = web.eats.iter().collect();
            if !edges.is_empty() && rng.random_bool(0.5) {
                let (x, y) = (*edges.choose(rng)?).clone();
                ProgramAst::Eats(x, y)
            } else {
                let x = pick(rng, organisms)?;
                let rest: Vec<String> = organisms.iter().filter(|o| **o != x).cloned().collect();
                ProgramAst::Eats(x, pick(rng, &rest)?)
            }
        }
        "count" => {
            let eaten: Vec<String> = organisms
                .iter()
                .filter(|o| web.eats.iter().any(|(_, y)| y == *o))
                .cloned()
                .collect();
            let y = if !eaten.is_empty() && rng.random_bool(0.5) {
                pick(rng, &eaten)?
            } else {
                pick(rng, organisms)?
            };
            ProgramAst::Count {
                var: "x".into(),
                body: Box::new(ProgramAst::Eats("x".into(), y)),
            }
        }
        "tertiary-consumer" => ProgramAst::TertiaryConsumer(pick(rng, organisms)?),
        "organism" => ProgramAst::Organism(pick(rng, labels)?),
        _ => unreachable!("unknown family {family}"),
    };
    Some(ast)
}

/// Runs a program with gold decisions and returns its answer and trace,
/// checking the answer against the reference semantics.
pub fn label_program(
    ast: &ProgramAst,
    web: &FoodWeb,
    detections: &DetectionGraph,
) -> Result<LabeledProgram, HarnessError> {
    let sketch = execute(ast, detections, &Scorer::Oracle(web.clone()))?;
    let params = ParamSet::new();
    let mut graph = Graph::new(&params);
    let run = follow::<_, SketchError>(&mut graph, &sketch, |cp| {
        Ok(if cp.scores[0] > cp.scores[1] { 0 } else { 1 })
    })?;
    let answer = run
        .value
        .ok_or_else(|| HarnessError::Data(format!("{ast}: gold execution failed")))?;
    let expected = answer_on(web, ast);
    if answer != expected {
        return Err(HarnessError::Data(format!(
            "{ast}: execution answered {answer:?}, reference semantics give {expected:?}"
        )));
    }
    let trace = GoldTrace(
        run.trace
            .into_iter()
            .map(|r| (r.tag, r.value == "true"))
            .collect(),
    );
    Ok(LabeledProgram {
        ast: ast.clone(),
        answer,
        trace,
    })
}

fn generate_one(config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<DatasetExample, HarnessError> {
    let needs_edge = (0..config.programs_per_web).any(|i| FAMILIES[i % FAMILIES.len()] == "cause");
    for _ in 0..MAX_RETRIES {
        let (web, organisms, distractors) = sample_web(config, rng);
        if needs_edge && web.eats.is_empty() {
            continue;
        }
        let detections = sample_detections(config, &web, &organisms, &distractors, rng);
        let labels = detections.labels();
        let mut programs = Vec::with_capacity(config.programs_per_web);
        for i in 0..config.programs_per_web {
            let family = FAMILIES[i % FAMILIES.len()];
            let ast = sample_program(family, &web, &organisms, &labels, rng)
                .ok_or_else(|| HarnessError::Config(format!("cannot sample a {family} program")))?;
            programs.push(label_program(&ast, &web, &detections)?);
        }
        return Ok(DatasetExample {
            web,
            detections,
            programs,
        });
    }
    Err(HarnessError::Config(format!(
        "no web with an eats edge after {MAX_RETRIES} attempts; raise edge_density"
    )))
}

/// Generates `config.num_webs` examples, deterministically from `config.seed`.
pub fn generate(config: &GenConfig) -> Result<Vec<DatasetExample>, HarnessError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.num_webs).map(|_| generate_one(config, &mut rng)).collect()
}
