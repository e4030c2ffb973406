//! Answers computed directly from a fully known relation.
//!
//! These are the reference semantics: the data generator labels programs
//! with them, and tests check that compiled sketches agree with them on the
//! relation an execution decided.

use std::collections::BTreeMap;

use super::program::{Change, ProgramAst};
use super::{Answer, Effect, FoodWeb};

/// Signed reachability from `source` to `target`.
///
/// `source` takes the sign of `change`. Expanding a node with sign σ gives
/// its predators σ and its prey −σ. A node keeps the sign of its shallowest
/// visit; opposite signs arriving at the same depth cancel to "same", and
/// such nodes do not propagate further. An unreached target is "same".
pub fn propagate_effect(web: &FoodWeb, change: Change, source: &str, target: &str) -> Effect {
    if source == target {
        return Effect::from_sign(change.sign());
    }
    let mut signs: BTreeMap<&str, i8> = BTreeMap::new();
    signs.insert(source, change.sign());
    let mut level: Vec<&str> = vec![source];
    let bound = web.organisms.len().max(1);
    let mut depth = 0;
    while !level.is_empty() && depth < bound {
        let mut next: Vec<(&str, i8)> = Vec::new();
        for &u in &level {
            let su = signs[u];
            for c in &web.organisms {
                if c == u || signs.contains_key(c.as_str()) {
                    continue;
                }
                if web.eats(c, u) {
                    mark(&mut next, c, su);
                }
                if web.eats(u, c) {
                    mark(&mut next, c, -su);
                }
            }
        }
        for &(c, s) in &next {
            signs.insert(c, s);
        }
        if let Some(&s) = signs.get(target) {
            return Effect::from_sign(s);
        }
        level = next.into_iter().filter(|(_, s)| *s != 0).map(|(c, _)| c).collect();
        depth += 1;
    }
    Effect::Same
}

fn mark<'w>(next: &mut Vec<(&'w str, i8)>, c: &'w str, s: i8) {
    match next.iter_mut().find(|(n, _)| *n == c) {
        Some((_, prev)) if *prev != s => *prev = 0,
        Some(_) => {}
        None => next.push((c, s)),
    }
}

fn others<'w>(web: &'w FoodWeb, exclude: &[&str]) -> impl Iterator<Item = &'w str> {
    let exclude: Vec<String> = exclude.iter().map(|s| s.to_string()).collect();
    web.organisms
        .iter()
        .map(|s| s.as_str())
        .filter(move |c| !exclude.iter().any(|e| e == c))
}

fn producer(web: &FoodWeb, p: &str) -> bool {
    !others(web, &[p]).any(|q| web.eats(p, q))
}

/// `x` tops an eat-chain `x → a → b → p` of distinct organisms where `p`
/// eats nothing.
pub fn tertiary_consumer(web: &FoodWeb, x: &str) -> bool {
    web.is_organism(x)
        && others(web, &[x]).any(|a| {
            web.eats(x, a)
                && others(web, &[x, a]).any(|b| {
                    web.eats(a, b)
                        && others(web, &[x, a, b]).any(|p| web.eats(b, p) && producer(web, p))
                })
        })
}

fn boolean(web: &FoodWeb, ast: &ProgramAst) -> bool {
    match answer_on(web, ast) {
        Answer::Bool(b) => b,
        other => panic!("count body produced {other:?}"),
    }
}

/// Evaluates a validated program against a known relation.
pub fn answer_on(web: &FoodWeb, ast: &ProgramAst) -> Answer {
    match ast {
        ProgramAst::Eats(x, y) => Answer::Bool(web.eats(x, y)),
        ProgramAst::Organism(x) => Answer::Bool(web.is_organism(x)),
        ProgramAst::TertiaryConsumer(x) => Answer::Bool(tertiary_consumer(web, x)),
        ProgramAst::Count { var, body } => {
            let constants: Vec<&str> = body.labels().into_iter().filter(|l| l != var).collect();
            let n = others(web, &constants)
                .filter(|c| boolean(web, &body.substitute(var, c)))
                .count();
            Answer::Int(n as u32)
        }
        ProgramAst::Cause {
            change,
            source,
            target,
        } => Answer::Effect(propagate_effect(web, *change, source, target)),
    }
}
