//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; failures come back as `{"error": "..."}`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use pnp::demo::{two_choice_sketch, zero_params, DEMO_HIDDEN, DEMO_INPUT};
use pnp::foodweb::{propagate_effect, Change, FoodWeb};
use pnp::graph::ParamSet;
use pnp::inference::{beam_search, marginalize, Distribution};
use pnp::sketch::{choose_scores, ChoiceTag};
use pnp::tensor::Tensor;

fn respond(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

fn entries<T: Into<Value> + Clone>(d: &Distribution<T>) -> Value {
    d.entries()
        .iter()
        .map(|e| {
            let trace: Vec<Value> = e.trace.iter().map(|r| json!({ "tag": r.tag.to_string(), "value": r.value })).collect();
            json!({ "value": e.value.clone().into(), "prob": e.prob, "score": e.score, "trace": trace })
        })
        .collect()
}

/// The two-choice program: `v ∈ {0, 1}` then `y ∈ {2, 3}`, both scored by
/// one zero-weight network whose output bias is `[bias_first, bias_second]`.
pub fn two_choice(beam_width: usize, bias_first: f64, bias_second: f64) -> Result<Value, String> {
    let mut params = zero_params(DEMO_INPUT.len(), DEMO_HIDDEN);
    params.insert("b2", Tensor::vector(vec![bias_first, bias_second]));
    let d = beam_search(&two_choice_sketch(&DEMO_INPUT), beam_width, &params).map_err(|e| e.to_string())?;
    Ok(json!({
        "executions": entries(&d),
        "marginal": entries(&marginalize(&d)),
        "log_partition": d.log_partition(),
    }))
}

/// Probabilities of a single choice over options `0..scores.len()`.
pub fn single_choice(scores: Vec<f64>) -> Result<Value, String> {
    let options: Vec<i64> = (0..scores.len() as i64).collect();
    let sketch = choose_scores(options, scores, ChoiceTag::new("choice", &[]));
    let d = beam_search(&sketch, usize::MAX, &ParamSet::new()).map_err(|e| e.to_string())?;
    let mut probs: Vec<(i64, f64)> = d.entries().iter().map(|e| (e.value, e.prob)).collect();
    probs.sort_by_key(|p| p.0);
    Ok(json!(probs.into_iter().map(|p| p.1).collect::<Vec<f64>>()))
}

/// Parses lines of the form `hawk eats snake`.
fn parse_web(text: &str) -> Result<FoodWeb, String> {
    let mut web = FoodWeb::default();
    for (i, line) in text.lines().enumerate() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            [x, "eats", y] => {
                web.organisms.insert(x.to_string());
                web.organisms.insert(y.to_string());
                web.eats.insert((x.to_string(), y.to_string()));
            }
            [x] => {
                web.organisms.insert(x.to_string());
            }
            _ => return Err(format!("line {}: expected `predator eats prey`", i + 1)),
        }
    }
    web.validate().map_err(|e| e.to_string())?;
    Ok(web)
}

/// Effect of changing `source` on every organism of the web.
pub fn effects(web_text: &str, change: &str, source: &str) -> Result<Value, String> {
    let web = parse_web(web_text)?;
    let change = match change {
        "increase" => Change::Increase,
        "decrease" => Change::Decrease,
        other => return Err(format!("unknown change {other:?}")),
    };
    if !web.is_organism(source) {
        return Err(format!("{source:?} is not in the web"));
    }
    let rows: Vec<Value> = web
        .organisms
        .iter()
        .map(|t| json!({ "organism": t, "effect": propagate_effect(&web, change, source, t) }))
        .collect();
    Ok(json!(rows))
}

#[wasm_bindgen(js_name = twoChoice)]
pub fn two_choice_js(beam_width: usize, bias_first: f64, bias_second: f64) -> String {
    respond(two_choice(beam_width, bias_first, bias_second))
}

#[wasm_bindgen(js_name = singleChoice)]
pub fn single_choice_js(scores: Vec<f64>) -> String {
    respond(single_choice(scores))
}

#[wasm_bindgen(js_name = effects)]
pub fn effects_js(web_text: &str, change: &str, source: &str) -> String {
    respond(effects(web_text, change, source))
}
