//! Food-web query programs and their s-expression syntax.
//!
//! ```text
//! (eats deer grass)
//! (organism deer)
//! (count (lambda v (eats v grass)))
//! (tertiary-consumer hawk)
//! (cause (decrease mice) snakes)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FoodwebError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Change {
    Increase,
    Decrease,
}

impl Change {
    pub fn sign(self) -> i8 {
        match self {
            Change::Increase => 1,
            Change::Decrease => -1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Change::Increase => Change::Decrease,
            Change::Decrease => Change::Increase,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            Change::Increase => "increase",
            Change::Decrease => "decrease",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ProgramAst {
    Eats(String, String),
    Organism(String),
    Count { var: String, body: Box<ProgramAst> },
    TertiaryConsumer(String),
    Cause {
        change: Change,
        source: String,
        target: String,
    },
}

pub fn is_label(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

impl ProgramAst {
    /// Which family the program belongs to, e.g. `"count"`.
    pub fn family(&self) -> &'static str {
        match self {
            ProgramAst::Eats(..) => "eats",
            ProgramAst::Organism(_) => "organism",
            ProgramAst::Count { .. } => "count",
            ProgramAst::TertiaryConsumer(_) => "tertiary-consumer",
            ProgramAst::Cause { .. } => "cause",
        }
    }

    /// Every label argument, in order, including bound variables.
    pub fn labels(&self) -> Vec<&str> {
        match self {
            ProgramAst::Eats(x, y) => vec![x, y],
            ProgramAst::Organism(x) | ProgramAst::TertiaryConsumer(x) => vec![x],
            ProgramAst::Count { body, .. } => body.labels(),
            ProgramAst::Cause { source, target, .. } => vec![source, target],
        }
    }

    /// Label arguments that must name detected text.
    pub fn free_labels(&self) -> Vec<&str> {
        match self {
            ProgramAst::Count { var, body } => body.free_labels().into_iter().filter(|l| l != var).collect(),
            _ => self.labels(),
        }
    }

    /// Replaces every occurrence of label `var` with `value`.
    pub fn substitute(&self, var: &str, value: &str) -> ProgramAst {
        let s = |l: &String| if l == var { value.to_string() } else { l.clone() };
        match self {
            ProgramAst::Eats(x, y) => ProgramAst::Eats(s(x), s(y)),
            ProgramAst::Organism(x) => ProgramAst::Organism(s(x)),
            ProgramAst::TertiaryConsumer(x) => ProgramAst::TertiaryConsumer(s(x)),
            ProgramAst::Count { var: v, body } if v == var => self.clone(),
            ProgramAst::Count { var: v, body } => ProgramAst::Count {
                var: v.clone(),
                body: Box::new(body.substitute(var, value)),
            },
            ProgramAst::Cause {
                change,
                source,
                target,
            } => ProgramAst::Cause {
                change: *change,
                source: s(source),
                target: s(target),
            },
        }
    }

    /// Checks label syntax and that every count body is a boolean query
    /// mentioning its variable.
    pub fn validate(&self) -> Result<(), FoodwebError> {
        for l in self.labels() {
            if !is_label(l) {
                return Err(FoodwebError::Malformed(format!("bad label {l:?}")));
            }
        }
        if let ProgramAst::Count { var, body } = self {
            match body.as_ref() {
                ProgramAst::Count { .. } | ProgramAst::Cause { .. } => {
                    return Err(FoodwebError::Malformed(format!(
                        "count body must be a boolean query, got {}",
                        body.family()
                    )))
                }
                _ => {}
            }
            if !body.labels().contains(&var.as_str()) {
                return Err(FoodwebError::Malformed(format!(
                    "count variable {var} does not occur in its body"
                )));
            }
            if !is_label(var) {
                return Err(FoodwebError::Malformed(format!("bad variable {var:?}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ProgramAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramAst::Eats(x, y) => write!(f, "(eats {x} {y})"),
            ProgramAst::Organism(x) => write!(f, "(organism {x})"),
            ProgramAst::Count { var, body } => write!(f, "(count (lambda {var} {body}))"),
            ProgramAst::TertiaryConsumer(x) => write!(f, "(tertiary-consumer {x})"),
            ProgramAst::Cause {
                change,
                source,
                target,
            } => write!(f, "(cause ({} {source}) {target})", change.keyword()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SExpr {
    Atom(String, usize),
    List(Vec<SExpr>, usize),
}

impl SExpr {
    fn pos(&self) -> usize {
        match self {
            SExpr::Atom(_, p) | SExpr::List(_, p) => *p,
        }
    }
}

fn parse_error(pos: usize, msg: impl Into<String>) -> FoodwebError {
    FoodwebError::Parse {
        pos,
        msg: msg.into(),
    }
}

fn read_sexpr(src: &str) -> Result<SExpr, FoodwebError> {
    let mut tokens = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '(' | ')' => {
                tokens.push((i, c.to_string()));
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut atom = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    atom.push(c);
                    chars.next();
                }
                tokens.push((i, atom));
            }
        }
    }
    let mut stack: Vec<(usize, Vec<SExpr>)> = Vec::new();
    let mut done: Option<SExpr> = None;
    for (pos, tok) in tokens {
        if done.is_some() {
            return Err(parse_error(pos, "trailing input"));
        }
        let item = match tok.as_str() {
            "(" => {
                stack.push((pos, Vec::new()));
                continue;
            }
            ")" => {
                let (start, items) = stack.pop().ok_or_else(|| parse_error(pos, "unbalanced ')'"))?;
                SExpr::List(items, start)
            }
            _ => SExpr::Atom(tok, pos),
        };
        match stack.last_mut() {
            Some((_, items)) => items.push(item),
            None => done = Some(item),
        }
    }
    if let Some((pos, _)) = stack.last() {
        return Err(parse_error(*pos, "unclosed '('"));
    }
    done.ok_or_else(|| parse_error(0, "empty program"))
}

fn atom(e: &SExpr) -> Result<&str, FoodwebError> {
    match e {
        SExpr::Atom(a, _) if is_label(a) => Ok(a),
        other => Err(parse_error(other.pos(), "expected a lowercase label")),
    }
}

fn to_ast(e: &SExpr) -> Result<ProgramAst, FoodwebError> {
    let SExpr::List(items, pos) = e else {
        return Err(parse_error(e.pos(), "expected a list"));
    };
    let head = match items.first() {
        Some(SExpr::Atom(h, _)) => h.as_str(),
        _ => return Err(parse_error(*pos, "expected an operator")),
    };
    let arity = |n: usize| {
        if items.len() == n + 1 {
            Ok(())
        } else {
            Err(parse_error(*pos, format!("{head} takes {n} arguments")))
        }
    };
    let ast = match head {
        "eats" => {
            arity(2)?;
            ProgramAst::Eats(atom(&items[1])?.into(), atom(&items[2])?.into())
        }
        "organism" => {
            arity(1)?;
            ProgramAst::Organism(atom(&items[1])?.into())
        }
        "tertiary-consumer" => {
            arity(1)?;
            ProgramAst::TertiaryConsumer(atom(&items[1])?.into())
        }
        "count" => {
            arity(1)?;
            let SExpr::List(lam, lpos) = &items[1] else {
                return Err(parse_error(items[1].pos(), "count expects a lambda"));
            };
            match lam.as_slice() {
                [SExpr::Atom(kw, _), var, body] if kw == "lambda" => ProgramAst::Count {
                    var: atom(var)?.into(),
                    body: Box::new(to_ast(body)?),
                },
                _ => return Err(parse_error(*lpos, "expected (lambda var body)")),
            }
        }
        "cause" => {
            arity(2)?;
            let SExpr::List(ch, cpos) = &items[1] else {
                return Err(parse_error(items[1].pos(), "cause expects (increase|decrease x)"));
            };
            let (change, source) = match ch.as_slice() {
                [SExpr::Atom(kw, _), x] if kw == "increase" => (Change::Increase, atom(x)?),
                [SExpr::Atom(kw, _), x] if kw == "decrease" => (Change::Decrease, atom(x)?),
                _ => return Err(parse_error(*cpos, "expected (increase x) or (decrease x)")),
            };
            ProgramAst::Cause {
                change,
                source: source.into(),
                target: atom(&items[2])?.into(),
            }
        }
        other => return Err(parse_error(*pos, format!("unknown operator {other:?}"))),
    };
    ast.validate()?;
    Ok(ast)
}

impl FromStr for ProgramAst {
    type Err = FoodwebError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        to_ast(&read_sexpr(s)?)
    }
}

impl Serialize for ProgramAst {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProgramAst {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
