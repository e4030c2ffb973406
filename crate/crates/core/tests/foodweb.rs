use std::collections::BTreeSet;

use proptest::prelude::*;

use pnp::foodweb::{
    answer_on, decided_web, execute, propagate_effect, Change, FoodWeb, Init, ModelKind, ModelSpec, Scorer,
};
use pnp::harness::{generate, GenConfig};
use pnp::inference::enumerate;

fn small_config(seed: u64) -> GenConfig {
    GenConfig {
        num_webs: 1,
        organisms_per_web: 3,
        distractor_texts: 1,
        edge_density: 0.5,
        programs_per_web: 5,
        seed,
        ..GenConfig::default()
    }
}

fn random_web(n: usize, edges: &[(usize, usize)]) -> FoodWeb {
    let names: Vec<String> = (0..n).map(|i| format!("o{i}")).collect();
    FoodWeb {
        organisms: names.iter().cloned().collect(),
        eats: edges
            .iter()
            .filter(|(a, b)| a != b && *a < n && *b < n)
            .map(|&(a, b)| (names[a].clone(), names[b].clone()))
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn answers_follow_from_decisions(seed in 0u64..1_000_000, kind in 0usize..3) {
        let ex = generate(&small_config(seed)).unwrap().remove(0);
        let spec = ModelSpec::new(ModelKind::ALL[kind], seed).with_hidden(4)
            .with_init(Init::Uniform { scale: 1.0, seed });
        let params = spec.init_params();
        for p in &ex.programs {
            let sketch = execute(&p.ast, &ex.detections, &Scorer::Model(spec)).unwrap();
            let dist = enumerate(&sketch, &params).unwrap();
            for e in dist.entries() {
                let tags: BTreeSet<_> = e.trace.iter().map(|r| &r.tag).collect();
                prop_assert_eq!(tags.len(), e.trace.len(), "a site was decided twice in {}", p.ast);
                let expected = answer_on(&decided_web(&e.trace), &p.ast);
                prop_assert_eq!(e.value, expected, "{}", p.ast);
            }
        }
    }

    #[test]
    fn zero_init_is_uniform_over_executions(seed in 0u64..1_000_000) {
        let ex = generate(&small_config(seed)).unwrap().remove(0);
        let spec = ModelSpec::new(ModelKind::Mlp2, 0).with_hidden(4).with_init(Init::Zeros);
        let params = spec.init_params();
        for p in &ex.programs {
            let sketch = execute(&p.ast, &ex.detections, &Scorer::Model(spec)).unwrap();
            let dist = enumerate(&sketch, &params).unwrap();
            let uniform = 1.0 / dist.len() as f64;
            for e in dist.entries() {
                prop_assert!((e.prob - uniform).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn effect_sign_symmetry(
        n in 2usize..7,
        edges in prop::collection::vec((0usize..7, 0usize..7), 0..14),
        s in 0usize..7,
        t in 0usize..7,
    ) {
        let web = random_web(n, &edges);
        let (s, t) = (format!("o{}", s % n), format!("o{}", t % n));
        let up = propagate_effect(&web, Change::Increase, &s, &t);
        let down = propagate_effect(&web, Change::Decrease, &s, &t);
        prop_assert_eq!(up, down.flipped());
    }
}

#[test]
fn effects_on_a_chain() {
    use pnp::foodweb::Effect;
    let web = FoodWeb {
        organisms: ["grass", "mice", "snakes"].iter().map(|s| s.to_string()).collect(),
        eats: [("snakes", "mice"), ("mice", "grass")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
    };
    assert_eq!(propagate_effect(&web, Change::Decrease, "mice", "snakes"), Effect::Decrease);
    assert_eq!(propagate_effect(&web, Change::Decrease, "mice", "grass"), Effect::Increase);
    assert_eq!(propagate_effect(&web, Change::Increase, "snakes", "grass"), Effect::Increase);
}

#[test]
fn executions_agree_with_gold_under_the_oracle() {
    for seed in 0..10 {
        let ex = generate(&small_config(seed)).unwrap().remove(0);
        for p in &ex.programs {
            let sketch = execute(&p.ast, &ex.detections, &Scorer::Oracle(ex.web.clone())).unwrap();
            let dist = enumerate(&sketch, &pnp::graph::ParamSet::new()).unwrap();
            let best = dist.unique_best().expect("gold execution is the unique best");
            assert_eq!(best.value, p.answer, "{}", p.ast);
        }
    }
}
