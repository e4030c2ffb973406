//! Inference over sketch executions: beam search on a shared graph and an
//! exhaustive enumeration oracle.

use std::cmp::Ordering;
use std::rc::Rc;

use thiserror::Error;

use crate::graph::{Graph, NodeRef, ParamSet};
use crate::sketch::{ChoicePoint, ChoiceTag, Sketch, SketchError, Step};

/// Default cap on the number of executions [`enumerate`] will expand.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error("every execution failed; the distribution is empty")]
    NoExecutions,
    #[error("enumeration exceeded {0} executions")]
    GuardLimit(usize),
    #[error("beam width must be at least 1")]
    ZeroBeamWidth,
    #[error("replay index {index} out of range at {tag} with {options} options")]
    ReplayIndex {
        tag: ChoiceTag,
        index: usize,
        options: usize,
    },
}

/// One decision taken by an execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceRecord {
    pub tag: ChoiceTag,
    pub index: usize,
    /// Score entry of the chosen option.
    pub score: f64,
    pub value: String,
    /// Score node in the graph the execution ran on.
    pub node: NodeRef,
}

impl ChoiceRecord {
    fn new<T>(cp: &ChoicePoint<T>, index: usize) -> Self {
        Self {
            tag: cp.tag.clone(),
            index,
            score: cp.scores[index],
            value: cp.labels[index].clone(),
            node: cp.node,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T> {
    pub value: T,
    pub score: f64,
    pub prob: f64,
    pub trace: Vec<ChoiceRecord>,
}

impl<T> Entry<T> {
    pub fn indices(&self) -> Vec<usize> {
        self.trace.iter().map(|r| r.index).collect()
    }
}

/// Normalized distribution over completed executions, most probable first.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T> {
    entries: Vec<Entry<T>>,
    log_partition: f64,
}

pub fn logsumexp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn compare_traces(a: &[ChoiceRecord], b: &[ChoiceRecord]) -> Ordering {
    a.iter()
        .map(|r| r.index)
        .cmp(b.iter().map(|r| r.index))
        .then_with(|| a.iter().map(|r| &r.tag).cmp(b.iter().map(|r| &r.tag)))
}

impl<T> Distribution<T> {
    fn from_completed(completed: Vec<(T, f64, Vec<ChoiceRecord>)>) -> Result<Self, InferenceError> {
        if completed.is_empty() {
            return Err(InferenceError::NoExecutions);
        }
        let log_partition = logsumexp(completed.iter().map(|c| c.1));
        let mut entries: Vec<Entry<T>> = completed
            .into_iter()
            .map(|(value, score, trace)| Entry {
                value,
                score,
                prob: (score - log_partition).exp(),
                trace,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.prob
                .total_cmp(&a.prob)
                .then_with(|| compare_traces(&a.trace, &b.trace))
        });
        Ok(Self {
            entries,
            log_partition,
        })
    }

    pub fn entries(&self) -> &[Entry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// The most probable execution, unless another ties with it.
    pub fn unique_best(&self) -> Option<&Entry<T>> {
        match self.entries.as_slice() {
            [] => None,
            [only] => Some(only),
            [first, second, ..] => (first.score > second.score).then_some(first),
        }
    }
}

/// Merges entries with equal values; the highest-probability member's
/// trace represents the merged entry.
pub fn marginalize<T: PartialEq + Clone>(d: &Distribution<T>) -> Distribution<T> {
    let mut groups: Vec<(T, Vec<f64>, Vec<ChoiceRecord>)> = Vec::new();
    for e in &d.entries {
        match groups.iter_mut().find(|g| g.0 == e.value) {
            Some(g) => g.1.push(e.score),
            None => groups.push((e.value.clone(), vec![e.score], e.trace.clone())),
        }
    }
    let completed = groups
        .into_iter()
        .map(|(v, scores, trace)| (v, logsumexp(scores), trace))
        .collect();
    Distribution::from_completed(completed).expect("marginal of a nonempty distribution")
}

/// A choice site shared by every successor of one choice point.
struct Site {
    tag: ChoiceTag,
    node: NodeRef,
    scores: Vec<f64>,
    labels: Vec<String>,
}

/// Persistent trace: the latest decision links back to the earlier ones.
struct Link {
    site: Rc<Site>,
    index: usize,
    prev: Option<Rc<Link>>,
}

fn materialize(mut link: Option<&Rc<Link>>) -> Vec<ChoiceRecord> {
    let mut out = Vec::new();
    while let Some(l) = link {
        out.push(ChoiceRecord {
            tag: l.site.tag.clone(),
            index: l.index,
            score: l.site.scores[l.index],
            value: l.site.labels[l.index].clone(),
            node: l.site.node,
        });
        link = l.prev.as_ref();
    }
    out.reverse();
    out
}

struct Partial<T> {
    sketch: Sketch<T>,
    score: f64,
    trace: Option<Rc<Link>>,
}

impl<T: 'static> Partial<T> {
    fn root(sketch: &Sketch<T>) -> Self {
        Self {
            sketch: sketch.clone(),
            score: 0.0,
            trace: None,
        }
    }

    fn successors(&self, cp: &ChoicePoint<T>) -> impl DoubleEndedIterator<Item = Partial<T>> + '_ {
        let site = Rc::new(Site {
            tag: cp.tag.clone(),
            node: cp.node,
            scores: cp.scores.clone(),
            labels: cp.labels.clone(),
        });
        let resumed: Vec<Sketch<T>> = (0..cp.len()).map(|i| cp.resume(i)).collect();
        resumed.into_iter().enumerate().map(move |(i, sketch)| Partial {
            sketch,
            score: self.score + site.scores[i],
            trace: Some(Rc::new(Link {
                site: Rc::clone(&site),
                index: i,
                prev: self.trace.clone(),
            })),
        })
    }
}

/// Beam search on a fresh graph over `params`.
pub fn beam_search<T: 'static>(
    sketch: &Sketch<T>,
    beam_width: usize,
    params: &ParamSet,
) -> Result<Distribution<T>, InferenceError> {
    let mut graph = Graph::new(params);
    beam_search_in(&mut graph, sketch, beam_width)
}

/// Beam search whose executions all extend `graph`.
///
/// Every step advances each frontier execution to its next choice, moves
/// finished executions to the result set, and keeps the `beam_width`
/// best-scoring successors (earlier-created first on ties). Finished
/// executions are never pruned.
pub fn beam_search_in<T: 'static>(
    graph: &mut Graph<'_>,
    sketch: &Sketch<T>,
    beam_width: usize,
) -> Result<Distribution<T>, InferenceError> {
    if beam_width == 0 {
        return Err(InferenceError::ZeroBeamWidth);
    }
    let mut completed = Vec::new();
    let mut frontier = vec![Partial::root(sketch)];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for ex in frontier {
            match ex.sketch.advance(graph)? {
                Step::Done(v) => completed.push((v, ex.score, materialize(ex.trace.as_ref()))),
                Step::Fail => {}
                Step::Choose(cp) => next.extend(ex.successors(&cp)),
            }
        }
        next.sort_by(|a, b| b.score.total_cmp(&a.score));
        next.truncate(beam_width);
        frontier = next;
    }
    Distribution::from_completed(completed)
}

pub fn enumerate<T: 'static>(
    sketch: &Sketch<T>,
    params: &ParamSet,
) -> Result<Distribution<T>, InferenceError> {
    let mut graph = Graph::new(params);
    enumerate_in(&mut graph, sketch, DEFAULT_ENUMERATION_LIMIT)
}

/// Exact distribution by depth-first expansion of every choice.
pub fn enumerate_in<T: 'static>(
    graph: &mut Graph<'_>,
    sketch: &Sketch<T>,
    limit: usize,
) -> Result<Distribution<T>, InferenceError> {
    let mut completed = Vec::new();
    let mut leaves = 0usize;
    let mut stack = vec![Partial::root(sketch)];
    while let Some(ex) = stack.pop() {
        match ex.sketch.advance(graph)? {
            Step::Done(v) => {
                leaves += 1;
                completed.push((v, ex.score, materialize(ex.trace.as_ref())));
            }
            Step::Fail => leaves += 1,
            Step::Choose(cp) => stack.extend(ex.successors(&cp).rev()),
        }
        if leaves > limit {
            return Err(InferenceError::GuardLimit(limit));
        }
    }
    Distribution::from_completed(completed)
}

/// Outcome of driving a single execution with a policy.
pub struct Followed<T> {
    /// `None` when the execution failed.
    pub value: Option<T>,
    pub score: f64,
    pub trace: Vec<ChoiceRecord>,
}

/// Runs one execution, asking `policy` which option to take at each choice.
pub fn follow<T: 'static, E>(
    graph: &mut Graph<'_>,
    sketch: &Sketch<T>,
    mut policy: impl FnMut(&ChoicePoint<T>) -> Result<usize, E>,
) -> Result<Followed<T>, E>
where
    E: From<SketchError>,
{
    let mut current = sketch.clone();
    let mut score = 0.0;
    let mut trace = Vec::new();
    loop {
        match current.advance(graph)? {
            Step::Done(v) => {
                return Ok(Followed {
                    value: Some(v),
                    score,
                    trace,
                })
            }
            Step::Fail => {
                return Ok(Followed {
                    value: None,
                    score,
                    trace,
                })
            }
            Step::Choose(cp) => {
                let i = policy(&cp)?;
                score += cp.scores[i];
                trace.push(ChoiceRecord::new(&cp, i));
                current = cp.resume(i);
            }
        }
    }
}

/// Replays a recorded sequence of option indices.
pub fn replay<T: 'static>(
    graph: &mut Graph<'_>,
    sketch: &Sketch<T>,
    indices: &[usize],
) -> Result<Followed<T>, InferenceError> {
    let mut it = indices.iter();
    follow(graph, sketch, |cp| {
        let &index = it.next().ok_or(InferenceError::ReplayIndex {
            tag: cp.tag.clone(),
            index: usize::MAX,
            options: cp.len(),
        })?;
        if index >= cp.len() {
            return Err(InferenceError::ReplayIndex {
                tag: cp.tag.clone(),
                index,
                options: cp.len(),
            });
        }
        Ok(index)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{choose_scores, pure, require};

    fn coin(tag: &str, scores: [f64; 2]) -> Sketch<usize> {
        choose_scores(vec![0, 1], scores.to_vec(), ChoiceTag::new(tag, &[]))
    }

    #[test]
    fn pure_has_one_entry() {
        let d = enumerate(&pure(7), &ParamSet::new()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.entries()[0].value, 7);
        assert_eq!(d.entries()[0].prob, 1.0);
    }

    #[test]
    fn five_uniform_coins() {
        let mut s = pure(0u32);
        for k in 0..5 {
            s = s.bind(move |acc| coin("c", [0.0, 0.0]).map(move |b| acc | ((b as u32) << k)));
        }
        let d = enumerate(&s, &ParamSet::new()).unwrap();
        assert_eq!(d.len(), 32);
        for e in d.entries() {
            assert!((e.prob - 1.0 / 32.0).abs() < 1e-15);
        }
        // Equal probabilities sort by trace, i.e. counting order here.
        let values: Vec<u32> = d.entries().iter().map(|e| e.value.reverse_bits() >> 27).collect();
        assert_eq!(values, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn greedy_width_one() {
        // Enumerated by hand: paths (0,0)=1, (0,1)=3, (1,0)=0, (1,1)=2.
        let s = coin("a", [1.0, 0.0]).bind(|a| coin("b", [0.0, 2.0]).map(move |b| (a, b)));
        let d = beam_search(&s, 1, &ParamSet::new()).unwrap();
        assert_eq!(d.len(), 1);
        let e = &d.entries()[0];
        assert_eq!(e.indices(), vec![0, 1]);
        assert_eq!(e.score, 3.0);
        assert_eq!(e.prob, 1.0);
    }

    #[test]
    fn softmax_of_scores() {
        let d = enumerate(&coin("x", [3f64.ln(), 0.0]), &ParamSet::new()).unwrap();
        assert!((d.entries()[0].prob - 0.75).abs() < 1e-12);
        assert!((d.entries()[1].prob - 0.25).abs() < 1e-12);
        let d = enumerate(&coin("x", [1.0, 1.0 + 2f64.ln()]), &ParamSet::new()).unwrap();
        assert_eq!(d.entries()[0].value, 1);
        assert!((d.entries()[0].prob - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.entries()[1].prob - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_failures_are_an_error() {
        let s = coin("x", [0.0, 0.0]).bind(|_| require(false));
        assert_eq!(beam_search(&s, 4, &ParamSet::new()), Err(InferenceError::NoExecutions));
        assert_eq!(enumerate(&s, &ParamSet::new()), Err(InferenceError::NoExecutions));
        assert_eq!(
            beam_search(&pure(1), 0, &ParamSet::new()),
            Err(InferenceError::ZeroBeamWidth)
        );
    }

    #[test]
    fn require_renormalizes() {
        let s = coin("v", [0.0, 0.0]).bind(|v| require(v == 1).map(move |_| v));
        let d = enumerate(&s, &ParamSet::new()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.entries()[0].value, 1);
        assert!((d.entries()[0].prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn guard_limit() {
        let mut s = pure(0);
        for _ in 0..4 {
            s = s.bind(|_| coin("c", [0.0, 0.0]));
        }
        let p = ParamSet::new();
        let mut g = Graph::new(&p);
        assert_eq!(enumerate_in(&mut g, &s, 15), Err(InferenceError::GuardLimit(15)));
        let mut g = Graph::new(&p);
        assert_eq!(enumerate_in(&mut g, &s, 16).unwrap().len(), 16);
    }

    #[test]
    fn marginalize_examples() {
        let s = coin("v", [0.0, 0.0]).bind(|v| coin("y", [0.0, 0.0]).map(move |y| v + y + 2));
        let d = enumerate(&s, &ParamSet::new()).unwrap();
        let m = marginalize(&d);
        let got: Vec<(usize, f64)> = m.entries().iter().map(|e| (e.value, e.prob)).collect();
        assert_eq!(got[0].0, 3);
        assert!((got[0].1 - 0.5).abs() < 1e-12);
        assert_eq!((got[1].0, got[2].0), (2, 4));
        assert!((got[1].1 - 0.25).abs() < 1e-12 && (got[2].1 - 0.25).abs() < 1e-12);
        assert_eq!(m.entries()[0].indices(), vec![0, 1]);

        let distinct = enumerate(&coin("x", [0.3, 0.1]), &ParamSet::new()).unwrap();
        assert_eq!(marginalize(&distinct), distinct);
        let single = enumerate(&pure(5), &ParamSet::new()).unwrap();
        assert_eq!(marginalize(&single), single);
    }

    #[test]
    fn replay_reproduces_trace() {
        let s = coin("a", [0.5, -1.0]).bind(|a| coin("b", [2.0, 0.25]).map(move |b| 10 * a + b));
        let p = ParamSet::new();
        let d = enumerate(&s, &p).unwrap();
        for e in d.entries() {
            let mut g = Graph::new(&p);
            let r = replay(&mut g, &s, &e.indices()).unwrap();
            assert_eq!(r.value, Some(e.value));
            assert_eq!(r.score, e.score);
        }
        let mut g = Graph::new(&p);
        assert!(matches!(
            replay(&mut g, &s, &[2]),
            Err(InferenceError::ReplayIndex { index: 2, .. })
        ));
    }
}
