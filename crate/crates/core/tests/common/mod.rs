#![allow(dead_code)]

pub mod models;

use std::sync::Arc;

use fairtree::data::{Dataset, FeatureSchema, Labels, Value};
use fairtree::fairness::{FairnessConfig, IndexFamily, Kernel, ZeroDenominatorPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random classification instance with one binary protected feature
/// and `n_quant` quantitative plus `n_cat` categorical unprotected features.
#[derive(Debug, Clone)]
pub struct Instance {
    pub ds: Dataset,
    pub lambda: f64,
    pub fairness: FairnessConfig,
    pub depth: usize,
}

pub fn schema(n_quant: usize, cat_levels: &[usize], n_classes: usize, regression: bool) -> Arc<FeatureSchema> {
    let mut text = String::new();
    for q in 0..n_quant {
        text.push_str(&format!("feature x{q} quantitative unprotected\n"));
    }
    for (c, &levels) in cat_levels.iter().enumerate() {
        let names: Vec<String> = (0..levels).map(|l| format!("l{l}")).collect();
        text.push_str(&format!("feature c{c} categorical unprotected {}\n", names.join(",")));
    }
    text.push_str("feature grp categorical protected a,b\n");
    if regression {
        text.push_str("label y regression\n");
    } else {
        let names: Vec<String> = (0..n_classes).map(|k| format!("k{k}")).collect();
        text.push_str(&format!("label y classification {}\n", names.join(",")));
    }
    Arc::new(FeatureSchema::parse(&text).unwrap())
}

/// Records whose quantitative values lie on a coarse grid in `[0, 1]`.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, n_quant: usize, cat_levels: &[usize], n_classes: usize) -> Dataset {
    let schema = schema(n_quant, cat_levels, n_classes, false);
    let mut records = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = Vec::new();
        for _ in 0..n_quant {
            r.push(Value::Num(rng.gen_range(0..=4) as f64 / 4.0));
        }
        for &levels in cat_levels {
            r.push(Value::Level(rng.gen_range(0..levels)));
        }
        // both groups are always present
        let g = if i < 2 { i } else { rng.gen_range(0..2) };
        r.push(Value::Level(g));
        records.push(r);
        labels.push(rng.gen_range(0..n_classes));
    }
    Dataset::new(schema, records, Labels::Class(labels)).unwrap()
}

pub fn random_regression(rng: &mut ChaCha8Rng, n: usize, n_quant: usize) -> Dataset {
    let schema = schema(n_quant, &[], 0, true);
    let mut records = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut r: Vec<Value> = (0..n_quant).map(|_| Value::Num(rng.gen_range(0..=4) as f64 / 4.0)).collect();
        let g = if i < 2 { i } else { rng.gen_range(0..2) };
        r.push(Value::Level(g));
        records.push(r);
        labels.push(rng.gen_range(-4..=4) as f64 / 4.0);
    }
    Dataset::new(schema, records, Labels::Real(labels)).unwrap()
}

pub fn fairness_variant(k: usize) -> FairnessConfig {
    match k % 3 {
        0 => FairnessConfig::default(),
        1 => FairnessConfig { index: IndexFamily::Dtdi, ..FairnessConfig::default() },
        _ => FairnessConfig {
            index: IndexFamily::Dtdi,
            kernel: Kernel::Knn(2),
            zero_denominator: ZeroDenominatorPolicy::UnitFallback,
        },
    }
}

/// Deterministic stream of oracle-scale instances.
pub fn oracle_instances(seed: u64, count: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let depth = if k % 4 == 3 { 2 } else { 1 };
            let n = if depth == 1 { rng.gen_range(6..=14) } else { rng.gen_range(5..=8) };
            let d = rng.gen_range(1..=3usize);
            let n_cat = if d > 1 { rng.gen_range(0..d) } else { rng.gen_range(0..=1) };
            let cat_levels: Vec<usize> = (0..n_cat).map(|_| rng.gen_range(2..=3)).collect();
            let n_classes = if k % 5 == 4 { 3 } else { 2 };
            let ds = random_dataset(&mut rng, n, d - n_cat, &cat_levels, n_classes);
            let lambda = [0.0, 0.5, 1.0][k % 3];
            Instance { ds, lambda, fairness: fairness_variant(k / 3), depth }
        })
        .collect()
}

/// Dataset from `(x, group, label)` triples with one quantitative feature.
pub fn one_feature(points: &[(f64, usize, usize)]) -> Dataset {
    let schema = schema(1, &[], 2, false);
    let records = points.iter().map(|&(x, g, _)| vec![Value::Num(x), Value::Level(g)]).collect();
    let labels = points.iter().map(|p| p.2).collect();
    Dataset::new(schema, records, Labels::Class(labels)).unwrap()
}

/// Eight points whose labels lean on the group. The fair tree overtakes the
/// accurate one strictly between lambda = 0.7 and 0.8, off the 0.1 grid.
pub fn biased_eight() -> Dataset {
    one_feature(&[(0.0, 0, 0), (0.125, 0, 0), (0.25, 1, 0), (0.375, 0, 0), (0.5, 0, 1), (0.625, 1, 1), (0.75, 1, 1), (1.0, 1, 1)])
}

/// Linearly separable eight points with balanced groups.
pub fn separable_eight() -> Dataset {
    one_feature(&[
        (0.0, 0, 0),
        (0.125, 1, 0),
        (0.25, 0, 0),
        (0.375, 1, 0),
        (0.625, 0, 1),
        (0.75, 1, 1),
        (0.875, 0, 1),
        (1.0, 1, 1),
    ])
}
