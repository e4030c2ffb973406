//! Fixed feature vectors computed from detections.
//!
//! organism(x), 3 entries: organism score of x, distance from x to the
//! nearest other text, bias.
//!
//! eat(x, y), 6 entries: max confidence over arrows x→y (−1 if none),
//! arrow count capped at 3 and scaled by 1/3, distance(x, y), organism
//! score of x, organism score of y, bias.
//!
//! Arrow geometry is left out of both; only the maxpool model sees it.

use crate::tensor::{self, Tensor};

use super::{ArrowDetection, DetectionGraph, FoodwebError, TextDetection};

pub const ORGANISM_FEATURES: usize = 3;
pub const EAT_FEATURES: usize = 6;
pub const GEOMETRY_DIM: usize = 4;
/// Hand features plus one pooled `[confidence ⧺ geometry]` block.
pub const MAXPOOL_EAT_FEATURES: usize = EAT_FEATURES + 1 + GEOMETRY_DIM;

fn distance(a: &TextDetection, b: &TextDetection) -> f64 {
    let dx = a.position[0] - b.position[0];
    let dy = a.position[1] - b.position[1];
    (dx * dx + dy * dy).sqrt()
}

fn arrows_between<'d>(d: &'d DetectionGraph, x: &str, y: &str) -> impl Iterator<Item = &'d ArrowDetection> {
    let (x, y) = (x.to_string(), y.to_string());
    d.arrows
        .iter()
        .filter(move |a| a.tail_label == x && a.head_label == y)
}

pub fn hand_features_organism(d: &DetectionGraph, x: &str) -> Result<Tensor, FoodwebError> {
    let t = d.text(x)?;
    let nearest = d
        .texts
        .iter()
        .filter(|o| o.label != x)
        .map(|o| distance(t, o))
        .fold(f64::INFINITY, f64::min);
    let nearest = if nearest.is_finite() { nearest } else { 0.0 };
    Ok(Tensor::vector(vec![t.organism_score, nearest, 1.0]))
}

pub fn hand_features_eat(d: &DetectionGraph, x: &str, y: &str) -> Result<Tensor, FoodwebError> {
    let (tx, ty) = (d.text(x)?, d.text(y)?);
    let (mut best, mut count) = (None::<f64>, 0usize);
    for a in arrows_between(d, x, y) {
        best = Some(best.map_or(a.confidence, |b| b.max(a.confidence)));
        count += 1;
    }
    Ok(Tensor::vector(vec![
        best.unwrap_or(-1.0),
        count.min(3) as f64 / 3.0,
        distance(tx, ty),
        tx.organism_score,
        ty.organism_score,
        1.0,
    ]))
}

/// `[confidence ⧺ geometry]` for every arrow x→y.
pub fn arrow_rows(d: &DetectionGraph, x: &str, y: &str) -> Result<Vec<Tensor>, FoodwebError> {
    d.text(x)?;
    d.text(y)?;
    Ok(arrows_between(d, x, y)
        .map(|a| {
            let mut row = Vec::with_capacity(1 + GEOMETRY_DIM);
            row.push(a.confidence);
            row.extend_from_slice(&a.geometry);
            Tensor::vector(row)
        })
        .collect())
}

/// Hand features followed by the column-wise max over [`arrow_rows`].
pub fn maxpool_features_eat(d: &DetectionGraph, x: &str, y: &str) -> Result<Tensor, FoodwebError> {
    let hand = hand_features_eat(d, x, y)?;
    let rows = arrow_rows(d, x, y)?;
    let refs: Vec<&Tensor> = rows.iter().collect();
    let pooled = tensor::maxpool(&refs, 1 + GEOMETRY_DIM).map_err(|e| FoodwebError::InvalidWeb(e.to_string()))?;
    Ok(tensor::concat(&[&hand, &pooled]).expect("rank-1 parts"))
}
