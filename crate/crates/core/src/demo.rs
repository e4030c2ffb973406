//! The two-layer perceptron sketch and the two-choice program built on it.

use crate::graph::{NodeRef, ParamSet};
use crate::sketch::{choose, constant, param, ChoiceTag, Sketch};
use crate::tensor::Tensor;

pub const DEMO_INPUT: [f64; 3] = [1.0, 2.0, 3.0];
pub const DEMO_HIDDEN: usize = 4;

/// `w2 · tanh(w1 · v + b1) + b2` as a sketch over the named parameters.
pub fn mlp(v: Tensor) -> Sketch<NodeRef> {
    constant(v).bind(|v| {
        param("w1").bind(move |w1| {
            param("b1").bind(move |b1| {
                Sketch::graph(move |g| {
                    let wv = g.matvec(w1, v)?;
                    let pre = g.add(wv, b1)?;
                    Ok(g.tanh(pre)?)
                })
                .bind(|h1| {
                    param("w2").bind(move |w2| {
                        param("b2").bind(move |b2| {
                            Sketch::graph(move |g| {
                                let wh = g.matvec(w2, h1)?;
                                Ok(g.add(wh, b2)?)
                            })
                        })
                    })
                })
            })
        })
    })
}

/// Parameters for [`mlp`] with a 2-entry output, all zero.
pub fn zero_params(input_dim: usize, hidden: usize) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert("w1", Tensor::zeros(&[hidden, input_dim]));
    p.insert("b1", Tensor::zeros(&[hidden]));
    p.insert("w2", Tensor::zeros(&[2, hidden]));
    p.insert("b2", Tensor::zeros(&[2]));
    p
}

/// Chooses `v ∈ {0, 1}` then `y ∈ {2, 3}`, both scored by the same MLP
/// output, and yields `v + y`.
pub fn two_choice_sketch(input: &[f64]) -> Sketch<i64> {
    mlp(Tensor::vector(input.to_vec())).bind(|s| {
        choose(vec![0i64, 1], s, ChoiceTag::new("v", &[])).bind(move |v| {
            choose(vec![2i64, 3], s, ChoiceTag::new("y", &[])).map(move |y| v + y)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::sketch::Step;

    #[test]
    fn zero_mlp_outputs_zero() {
        let p = zero_params(3, DEMO_HIDDEN);
        let mut g = Graph::new(&p);
        let Step::Done(out) = mlp(Tensor::vector(vec![0.3, -2.0, 7.0])).advance(&mut g).unwrap() else {
            panic!()
        };
        assert_eq!(g.forward(out).unwrap().values(), &[0.0, 0.0]);
    }
}
