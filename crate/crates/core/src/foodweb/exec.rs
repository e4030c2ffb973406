//! Compiling programs to sketches over `organism` / `eat` decisions.
//!
//! Decisions are memoized per execution by threading a cache through every
//! bind, so a site queried twice on one branch is decided once while
//! sibling branches stay independent.

use std::collections::BTreeMap;
use std::rc::Rc;

use crate::inference::ChoiceRecord;
use crate::sketch::{choose, choose_scores, pure, require, ChoiceTag, Sketch, SketchError};

use super::program::{Change, ProgramAst};
use super::{Answer, DetectionGraph, Effect, FoodWeb, FoodwebError, GoldTrace, ModelSpec, EAT, ORGANISM};

/// How decisions are scored.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Model(ModelSpec),
    /// Constant scores, 0 for the gold outcome and −1 for the other, so the
    /// gold execution outscores every other regardless of length.
    Oracle(FoodWeb),
}

/// Decision cache indexed by [`Ctx::site`]: 0 undecided, 1 false, 2 true.
type Memo = Rc<Vec<u8>>;
/// A sketch that also threads the decision cache.
type M<T> = Sketch<(Memo, T)>;

struct Ctx {
    detections: DetectionGraph,
    labels: Vec<String>,
    scorer: Scorer,
    gold: Option<BTreeMap<ChoiceTag, bool>>,
}

type Cx = Rc<Ctx>;

impl Ctx {
    fn index(&self, x: &str) -> usize {
        self.labels
            .iter()
            .position(|l| l == x)
            .expect("labels are checked before execution")
    }

    fn sites(&self) -> usize {
        let n = self.labels.len();
        n + n * n
    }

    fn site(&self, tag_args: &[&str]) -> usize {
        let n = self.labels.len();
        match tag_args {
            [x] => self.index(x),
            [x, y] => n + self.index(x) * n + self.index(y),
            _ => unreachable!("decisions take one or two labels"),
        }
    }
}

fn score_decision(cx: &Cx, tag: ChoiceTag) -> Sketch<bool> {
    match &cx.scorer {
        Scorer::Oracle(web) => {
            let gold = web.decision(&tag).unwrap_or(false);
            let scores = if gold { vec![0.0, -1.0] } else { vec![-1.0, 0.0] };
            choose_scores(vec![true, false], scores, tag)
        }
        Scorer::Model(spec) => {
            let cx2 = Rc::clone(cx);
            let spec = *spec;
            let t = tag.clone();
            Sketch::graph(move |g| g.shared(&t.to_string(), |g| spec.score_node(g, &cx2.detections, &t)))
                .bind(move |score| choose(vec![true, false], score, tag.clone()))
        }
    }
}

fn decide(cx: &Cx, memo: Memo, kind: &str, args: &[&str]) -> M<bool> {
    let site = cx.site(args);
    match memo[site] {
        1 => return pure((memo, false)),
        2 => return pure((memo, true)),
        _ => {}
    }
    let tag = ChoiceTag::new(kind, args);
    let cx2 = Rc::clone(cx);
    score_decision(cx, tag.clone()).bind(move |b| {
        let mut next = (*memo).clone();
        next[site] = if b { 2 } else { 1 };
        let next: Memo = Rc::new(next);
        match &cx2.gold {
            None => pure((next, b)),
            Some(gold) => match gold.get(&tag) {
                Some(&want) => require(b == want).map(move |_| (Rc::clone(&next), b)),
                None => Sketch::raise(SketchError::Data(format!("gold trace has no entry for {tag}"))),
            },
        }
    })
}

fn organism(cx: &Cx, memo: Memo, x: &str) -> M<bool> {
    decide(cx, memo, ORGANISM, &[x])
}

fn eat(cx: &Cx, memo: Memo, x: &str, y: &str) -> M<bool> {
    decide(cx, memo, EAT, &[x, y])
}

/// `first ∧ rest`, short-circuiting.
fn and(first: M<bool>, rest: impl Fn(Memo) -> M<bool> + 'static) -> M<bool> {
    first.bind(move |(memo, b)| if b { rest(memo) } else { pure((memo, false)) })
}

fn not(m: M<bool>) -> M<bool> {
    m.map(|(memo, b)| (memo, !b))
}

type Pred = Rc<dyn Fn(&Cx, Memo, &str) -> M<bool>>;

/// `∃ c ∈ candidates \ exclude. pred(c)`, in label order, stopping at the
/// first witness.
fn exists(cx: &Cx, memo: Memo, exclude: Rc<Vec<String>>, i: usize, pred: Pred) -> M<bool> {
    let mut i = i;
    while i < cx.labels.len() && exclude.contains(&cx.labels[i]) {
        i += 1;
    }
    if i == cx.labels.len() {
        return pure((memo, false));
    }
    let c = cx.labels[i].clone();
    let cx2 = Rc::clone(cx);
    pred(cx, memo, &c).bind(move |(memo, b)| {
        if b {
            pure((memo, true))
        } else {
            exists(&cx2, memo, Rc::clone(&exclude), i + 1, Rc::clone(&pred))
        }
    })
}

fn excluding(labels: &[&str]) -> Rc<Vec<String>> {
    Rc::new(labels.iter().map(|s| s.to_string()).collect())
}

/// `organism(c) ∧ eat(from, c)`.
fn organism_eaten_by(cx: &Cx, memo: Memo, from: &str, c: &str) -> M<bool> {
    let (cx2, from, c2) = (Rc::clone(cx), from.to_string(), c.to_string());
    and(organism(cx, memo, c), move |memo| eat(&cx2, memo, &from, &c2))
}

fn producer(cx: &Cx, memo: Memo, p: &str) -> M<bool> {
    let p2 = p.to_string();
    not(exists(
        cx,
        memo,
        excluding(&[p]),
        0,
        Rc::new(move |cx, memo, q| organism_eaten_by(cx, memo, &p2, q)),
    ))
}

fn tertiary(cx: &Cx, memo: Memo, x: &str) -> M<bool> {
    let (cx2, x) = (Rc::clone(cx), x.to_string());
    and(organism(cx, memo, &x), move |memo| {
        let x2 = x.clone();
        let pred: Pred = Rc::new(move |cx, memo, a| chain_from(cx, memo, &x2, a));
        exists(&cx2, memo, excluding(&[&x]), 0, pred)
    })
}

/// `x → a`, then some `a → b`.
fn chain_from(cx: &Cx, memo: Memo, x: &str, a: &str) -> M<bool> {
    let (cx2, x, a) = (Rc::clone(cx), x.to_string(), a.to_string());
    and(organism_eaten_by(cx, memo, &x, &a), move |memo| {
        let (x2, a2) = (x.clone(), a.clone());
        let pred: Pred = Rc::new(move |cx, memo, b| chain_to_producer(cx, memo, &x2, &a2, b));
        exists(&cx2, memo, excluding(&[&x, &a]), 0, pred)
    })
}

/// `a → b`, then some `b → p` with `p` a producer.
fn chain_to_producer(cx: &Cx, memo: Memo, x: &str, a: &str, b: &str) -> M<bool> {
    let (cx2, x, a, b) = (Rc::clone(cx), x.to_string(), a.to_string(), b.to_string());
    and(organism_eaten_by(cx, memo, &a, &b), move |memo| {
        let b2 = b.clone();
        let pred: Pred = Rc::new(move |cx, memo, p| {
            let (cx2, p2) = (Rc::clone(cx), p.to_string());
            and(organism_eaten_by(cx, memo, &b2, p), move |memo| producer(&cx2, memo, &p2))
        });
        exists(&cx2, memo, excluding(&[&x, &a, &b]), 0, pred)
    })
}

fn boolean(cx: &Cx, memo: Memo, ast: &ProgramAst) -> M<bool> {
    match ast {
        ProgramAst::Eats(x, y) => eat(cx, memo, x, y),
        ProgramAst::Organism(x) => organism(cx, memo, x),
        ProgramAst::TertiaryConsumer(x) => tertiary(cx, memo, x),
        ProgramAst::Count { .. } | ProgramAst::Cause { .. } => {
            unreachable!("validated programs only use boolean count bodies")
        }
    }
}

fn count(cx: &Cx, memo: Memo, var: Rc<String>, body: Rc<ProgramAst>, i: usize, acc: u32) -> M<u32> {
    let constants: Vec<&str> = body.labels().into_iter().filter(|l| *l != var.as_str()).collect();
    let mut i = i;
    while i < cx.labels.len() && constants.contains(&cx.labels[i].as_str()) {
        i += 1;
    }
    if i == cx.labels.len() {
        return pure((memo, acc));
    }
    let c = cx.labels[i].clone();
    let cx2 = Rc::clone(cx);
    organism(cx, memo, &c).bind(move |(memo, is_org)| {
        let (cx3, var2, body2) = (Rc::clone(&cx2), Rc::clone(&var), Rc::clone(&body));
        if !is_org {
            return count(&cx2, memo, var2, body2, i + 1, acc);
        }
        boolean(&cx2, memo, &body.substitute(&var, &cx2.labels[i])).bind(move |(memo, b)| {
            count(&cx3, memo, Rc::clone(&var2), Rc::clone(&body2), i + 1, acc + u32::from(b))
        })
    })
}

/// Breadth-first effect propagation state; mirrors `propagate_effect`.
#[derive(Clone)]
struct Bfs {
    target: String,
    signs: BTreeMap<String, i8>,
    level: Vec<String>,
    next: Vec<(String, i8)>,
    depth: usize,
}

impl Bfs {
    fn mark(&mut self, c: &str, s: i8) {
        match self.next.iter_mut().find(|(n, _)| n == c) {
            Some((_, prev)) if *prev != s => *prev = 0,
            Some(_) => {}
            None => self.next.push((c.to_string(), s)),
        }
    }
}

fn bfs(cx: &Cx, memo: Memo, st: Rc<Bfs>, ui: usize, ci: usize) -> M<Effect> {
    if ui == st.level.len() {
        let mut st = (*st).clone();
        for (c, s) in std::mem::take(&mut st.next) {
            st.signs.insert(c.clone(), s);
            if s != 0 {
                st.level.push(c);
            }
        }
        st.level.drain(..ui);
        if let Some(&s) = st.signs.get(&st.target) {
            return pure((memo, Effect::from_sign(s)));
        }
        st.depth += 1;
        if st.level.is_empty() || st.depth >= cx.labels.len() {
            return pure((memo, Effect::Same));
        }
        return bfs(cx, memo, Rc::new(st), 0, 0);
    }
    if ci == cx.labels.len() {
        return bfs(cx, memo, st, ui + 1, 0);
    }
    let u = st.level[ui].clone();
    let c = cx.labels[ci].clone();
    if c == u || st.signs.contains_key(&c) {
        return bfs(cx, memo, st, ui, ci + 1);
    }
    let cx2 = Rc::clone(cx);
    organism(cx, memo, &c).bind(move |(memo, is_org)| {
        if !is_org {
            return bfs(&cx2, memo, Rc::clone(&st), ui, ci + 1);
        }
        let (cx3, st2, u2, c2) = (Rc::clone(&cx2), Rc::clone(&st), u.clone(), c.clone());
        eat(&cx2, memo, &c, &u).bind(move |(memo, predator)| {
            let (cx4, st3, c3) = (Rc::clone(&cx3), Rc::clone(&st2), c2.clone());
            eat(&cx3, memo, &u2, &c2).bind(move |(memo, prey)| {
                let su = st3.signs[&st3.level[ui]];
                let mut st = (*st3).clone();
                if predator {
                    st.mark(&c3, su);
                }
                if prey {
                    st.mark(&c3, -su);
                }
                bfs(&cx4, memo, Rc::new(st), ui, ci + 1)
            })
        })
    })
}

fn cause(cx: &Cx, memo: Memo, change: Change, source: &str, target: &str) -> M<Effect> {
    if source == target {
        return pure((memo, Effect::from_sign(change.sign())));
    }
    let st = Bfs {
        target: target.to_string(),
        signs: BTreeMap::from([(source.to_string(), change.sign())]),
        level: vec![source.to_string()],
        next: Vec::new(),
        depth: 0,
    };
    bfs(cx, memo, Rc::new(st), 0, 0)
}

fn answer(cx: &Cx, ast: &ProgramAst) -> Sketch<Answer> {
    let memo: Memo = Rc::new(vec![0; cx.sites()]);
    match ast {
        ProgramAst::Eats(..) | ProgramAst::Organism(_) | ProgramAst::TertiaryConsumer(_) => {
            boolean(cx, memo, ast).map(|(_, b)| Answer::Bool(b))
        }
        ProgramAst::Count { var, body } => count(cx, memo, Rc::new(var.clone()), Rc::new((**body).clone()), 0, 0)
            .map(|(_, n)| Answer::Int(n)),
        ProgramAst::Cause {
            change,
            source,
            target,
        } => cause(cx, memo, *change, source, target).map(|(_, e)| Answer::Effect(e)),
    }
}

fn context(
    ast: &ProgramAst,
    d: &DetectionGraph,
    scorer: &Scorer,
    gold: Option<&GoldTrace>,
) -> Result<Cx, FoodwebError> {
    ast.validate()?;
    for l in ast.free_labels() {
        d.text(l)?;
    }
    Ok(Rc::new(Ctx {
        detections: d.clone(),
        labels: d.labels(),
        scorer: scorer.clone(),
        gold: gold.map(GoldTrace::to_map),
    }))
}

/// The unconditional sketch of a program's executions.
pub fn execute(ast: &ProgramAst, d: &DetectionGraph, scorer: &Scorer) -> Result<Sketch<Answer>, FoodwebError> {
    Ok(answer(&context(ast, d, scorer, None)?, ast))
}

/// [`execute`] with every decision followed by `require(decision = gold)`.
pub fn conditional_sketch(
    ast: &ProgramAst,
    d: &DetectionGraph,
    scorer: &Scorer,
    gold: &GoldTrace,
) -> Result<Sketch<Answer>, FoodwebError> {
    Ok(answer(&context(ast, d, scorer, Some(gold))?, ast))
}

/// The relation an execution decided: sites decided true, everything else
/// absent.
pub fn decided_web(trace: &[ChoiceRecord]) -> FoodWeb {
    let mut web = FoodWeb::default();
    for r in trace {
        if r.value != "true" {
            continue;
        }
        match (r.tag.kind.as_str(), r.tag.args.as_slice()) {
            (super::ORGANISM, [x]) => {
                web.organisms.insert(x.clone());
            }
            (super::EAT, [x, y]) => {
                web.eats.insert((x.clone(), y.clone()));
            }
            _ => {}
        }
    }
    web
}
