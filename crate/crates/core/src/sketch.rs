//! Program sketches: suspended nondeterministic computations whose choices
//! are weighted by computation-graph nodes.
//!
//! A [`Sketch`] is an immutable value. Advancing it against a [`Graph`] runs
//! it up to the next choice point, appending whatever nodes it builds on the
//! way. A [`ChoicePoint`] can be resumed with any option index, any number of
//! times, which is what lets beam search fan one execution out into several.

use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeRef};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SketchError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("choose {0} has no options")]
    EmptyOptions(ChoiceTag),
    #[error("choose {tag}: {options} options but the score node has {scores} entries")]
    ScoreLength {
        tag: ChoiceTag,
        options: usize,
        scores: usize,
    },
    #[error("{0}")]
    Data(String),
}

/// Names a decision site, e.g. `eat(deer, grass)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChoiceTag {
    pub kind: String,
    pub args: Vec<String>,
}

impl ChoiceTag {
    pub fn new(kind: impl Into<String>, args: &[&str]) -> Self {
        Self {
            kind: kind.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }

    pub fn anon() -> Self {
        Self::new("anon", &[])
    }
}

impl fmt::Display for ChoiceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind, self.args.join(", "))
    }
}

type Advance<T> = dyn Fn(&mut Graph<'_>) -> Result<Step<T>, SketchError>;
type Resume<T> = Rc<dyn Fn(usize) -> Sketch<T>>;

pub struct Sketch<T>(Rc<Advance<T>>);

impl<T> Clone for Sketch<T> {
    fn clone(&self) -> Self {
        Sketch(Rc::clone(&self.0))
    }
}

/// Result of advancing a sketch.
pub enum Step<T> {
    Done(T),
    Choose(ChoicePoint<T>),
    Fail,
}

pub struct ChoicePoint<T> {
    pub tag: ChoiceTag,
    /// The node whose entries score the options.
    pub node: NodeRef,
    /// Forward value of `node`, one entry per option.
    pub scores: Vec<f64>,
    /// Display form of each option, for traces.
    pub labels: Vec<String>,
    resume: Resume<T>,
}

impl<T> ChoicePoint<T> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Continuation after selecting option `i`.
    pub fn resume(&self, i: usize) -> Sketch<T> {
        (self.resume)(i)
    }
}

impl<T: 'static> Sketch<T> {
    pub fn from_fn(f: impl Fn(&mut Graph<'_>) -> Result<Step<T>, SketchError> + 'static) -> Self {
        Sketch(Rc::new(f))
    }

    /// Runs the sketch until it finishes, fails, or reaches a choice.
    pub fn advance(&self, graph: &mut Graph<'_>) -> Result<Step<T>, SketchError> {
        (self.0)(graph)
    }

    /// Deterministic graph-building step with no choice point.
    pub fn graph(f: impl Fn(&mut Graph<'_>) -> Result<T, SketchError> + 'static) -> Self {
        Self::from_fn(move |g| f(g).map(Step::Done))
    }

    pub fn fail() -> Self {
        Self::from_fn(|_| Ok(Step::Fail))
    }

    /// A sketch that aborts inference with `err` when advanced.
    pub fn raise(err: SketchError) -> Self {
        Self::from_fn(move |_| Err(err.clone()))
    }

    pub fn bind<B: 'static>(self, f: impl Fn(T) -> Sketch<B> + 'static) -> Sketch<B> {
        bind_rc(self, Rc::new(f))
    }

    pub fn map<B: Clone + 'static>(self, f: impl Fn(T) -> B + 'static) -> Sketch<B> {
        self.bind(move |a| pure(f(a)))
    }
}

fn bind_rc<A: 'static, B: 'static>(s: Sketch<A>, f: Rc<dyn Fn(A) -> Sketch<B>>) -> Sketch<B> {
    Sketch::from_fn(move |g| match s.advance(g)? {
        Step::Done(a) => f(a).advance(g),
        Step::Fail => Ok(Step::Fail),
        Step::Choose(cp) => {
            let inner = cp.resume;
            let f = Rc::clone(&f);
            Ok(Step::Choose(ChoicePoint {
                tag: cp.tag,
                node: cp.node,
                scores: cp.scores,
                labels: cp.labels,
                resume: Rc::new(move |i| bind_rc(inner(i), Rc::clone(&f))),
            }))
        }
    })
}

pub fn pure<T: Clone + 'static>(v: T) -> Sketch<T> {
    Sketch::from_fn(move |_| Ok(Step::Done(v.clone())))
}

pub fn param(name: &str) -> Sketch<NodeRef> {
    let name = name.to_string();
    Sketch::graph(move |g| Ok(g.parameter(&name)?))
}

pub fn constant(t: Tensor) -> Sketch<NodeRef> {
    Sketch::graph(move |g| Ok(g.constant(t.clone())))
}

/// Weighted choice among `options`; entry `i` of `score` is added to the
/// execution's score when option `i` is taken.
pub fn choose<T: Clone + fmt::Debug + 'static>(
    options: Vec<T>,
    score: NodeRef,
    tag: ChoiceTag,
) -> Sketch<T> {
    let options = Rc::new(options);
    let labels: Vec<String> = options.iter().map(|o| format!("{o:?}")).collect();
    Sketch::from_fn(move |g| {
        if options.is_empty() {
            return Err(SketchError::EmptyOptions(tag.clone()));
        }
        let scores = g.forward(score)?.values().to_vec();
        if scores.len() != options.len() {
            return Err(SketchError::ScoreLength {
                tag: tag.clone(),
                options: options.len(),
                scores: scores.len(),
            });
        }
        let opts = Rc::clone(&options);
        Ok(Step::Choose(ChoicePoint {
            tag: tag.clone(),
            node: score,
            scores,
            labels: labels.clone(),
            resume: Rc::new(move |i| pure(opts[i].clone())),
        }))
    })
}

/// [`choose`] with fixed scores held in a fresh constant node.
pub fn choose_scores<T: Clone + fmt::Debug + 'static>(
    options: Vec<T>,
    scores: Vec<f64>,
    tag: ChoiceTag,
) -> Sketch<T> {
    constant(Tensor::vector(scores)).bind(move |node| choose(options.clone(), node, tag.clone()))
}

/// Keeps the execution only when `cond` holds.
pub fn require(cond: bool) -> Sketch<()> {
    if cond {
        pure(())
    } else {
        Sketch::fail()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ParamSet;

    fn run_first<T: 'static>(s: &Sketch<T>) -> (Option<T>, Vec<usize>) {
        let p = ParamSet::new();
        let mut g = Graph::new(&p);
        let mut s = s.clone();
        let mut path = Vec::new();
        loop {
            match s.advance(&mut g).unwrap() {
                Step::Done(v) => return (Some(v), path),
                Step::Fail => return (None, path),
                Step::Choose(cp) => {
                    path.push(cp.len());
                    s = cp.resume(0);
                }
            }
        }
    }

    #[test]
    fn pure_and_bind() {
        let s = pure(2).bind(|x| pure(x + 1));
        assert_eq!(run_first(&s), (Some(3), vec![]));
    }

    #[test]
    fn choose_rejects_empty_and_mismatched() {
        let p = ParamSet::new();
        let mut g = Graph::new(&p);
        let s = choose_scores(Vec::<i32>::new(), vec![], ChoiceTag::anon());
        assert!(matches!(s.advance(&mut g), Err(SketchError::EmptyOptions(_))));
        let s = choose_scores(vec![1, 2], vec![0.0], ChoiceTag::anon());
        assert!(matches!(
            s.advance(&mut g),
            Err(SketchError::ScoreLength { options: 2, scores: 1, .. })
        ));
    }

    #[test]
    fn param_errors_when_advanced() {
        let s = param("nope");
        let p = ParamSet::new();
        let mut g = Graph::new(&p);
        assert!(matches!(
            s.advance(&mut g),
            Err(SketchError::Graph(GraphError::UnknownParameter(_)))
        ));
    }

    #[test]
    fn require_prunes() {
        assert_eq!(run_first(&require(false).map(|_| 1)), (None, vec![]));
        assert_eq!(run_first(&require(true).map(|_| 1)), (Some(1), vec![]));
    }

    #[test]
    fn choice_points_resume_repeatedly() {
        let s = choose_scores(vec!['a', 'b'], vec![0.0, 1.0], ChoiceTag::new("t", &["x"]));
        let p = ParamSet::new();
        let mut g = Graph::new(&p);
        let Step::Choose(cp) = s.advance(&mut g).unwrap() else {
            panic!("expected a choice")
        };
        assert_eq!(cp.labels, vec!["'a'", "'b'"]);
        assert_eq!(cp.scores, vec![0.0, 1.0]);
        assert_eq!(cp.tag.to_string(), "t(x)");
        for _ in 0..2 {
            assert!(matches!(cp.resume(1).advance(&mut g).unwrap(), Step::Done('b')));
            assert!(matches!(cp.resume(0).advance(&mut g).unwrap(), Step::Done('a')));
        }
    }

    #[test]
    fn score_forward_is_lazy() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(&[2]));
        let mut g = Graph::new(&p);
        let s = param("w").bind(|w| choose(vec![0, 1], w, ChoiceTag::anon()));
        // Building the sketch touches nothing.
        assert_eq!(g.node_count(), 0);
        let before = g.evaluations();
        let Step::Choose(_) = s.advance(&mut g).unwrap() else {
            panic!()
        };
        assert_eq!(g.evaluations(), before + 1);
    }
}
