//! Conversions between solution vectors and decision trees.

use thiserror::Error;

use super::build::{AbsTerm, BuiltModel, Formulation, LeafVars, PredictionVars};
use crate::data::Dataset;
use crate::tree::{BranchRule, DecisionTree, LeafRule, Prediction, TreeClass, TreeError};

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("solution has {found} values but the model has {expected} variables")]
    Length { expected: usize, found: usize },
    #[error("binary `{name}` is fractional ({value})")]
    Fractional { name: String, value: f64 },
    #[error("routing mismatch on record {record}: tree reaches leaf {tree}, solution assigns leaf {solution}")]
    Routing { record: usize, tree: usize, solution: usize },
    #[error("node {node}: {message}")]
    Structure { node: usize, message: String },
    #[error("tree is not representable in this formulation: {0}")]
    Unrepresentable(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub type Result<T> = std::result::Result<T, ExtractError>;

/// Coefficients below this magnitude are dropped from extracted linear rules.
const COEF_ZERO: f64 = 1e-9;

fn argmax(xs: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, x) in xs.into_iter().enumerate() {
        if x > best.1 {
            best = (k, x);
        }
    }
    best.0
}

fn branch_score(rule: &BranchRule, ds: &Dataset, i: usize) -> f64 {
    match rule {
        BranchRule::Threshold { feature, .. } => ds.value(i, *feature).num(),
        BranchRule::Linear { weights, .. } => weights.iter().map(|&(j, w)| w * ds.value(i, j).num()).sum(),
        BranchRule::Subset { .. } => 0.0,
    }
}

/// Reads the tree encoded by an integral solution of `built` and checks that
/// it routes every training record to the leaf chosen by the solution.
pub fn extract_tree(built: &BuiltModel, ds: &Dataset, values: &[f64], int_tol: f64) -> Result<DecisionTree> {
    let model = &built.model;
    let f = &built.form;
    if values.len() != model.n_vars() {
        return Err(ExtractError::Length { expected: model.n_vars(), found: values.len() });
    }
    for j in model.binaries() {
        if (values[j] - values[j].round()).abs() > int_tol {
            return Err(ExtractError::Fractional { name: model.vars[j].name.clone(), value: values[j] });
        }
    }
    let bit = |v: usize| values[v] > 0.5;
    let nq = f.quant.len();

    let mut branches = Vec::with_capacity(f.shape.n_branch());
    for v in 0..f.shape.n_branch() {
        let mut rule = if f.class == TreeClass::LinearBranching {
            let weights: Vec<(usize, f64)> =
                f.quant.iter().enumerate().map(|(k, &j)| (j, values[f.p[v][k]])).filter(|w| w.1.abs() > COEF_ZERO).collect();
            BranchRule::Linear { weights, cutoff: values[f.q[v]] }
        } else {
            let k = argmax(f.p[v].iter().map(|&x| values[x]));
            if !bit(f.p[v][k]) {
                return Err(ExtractError::Structure { node: v, message: "no feature selected".into() });
            }
            if k < nq {
                BranchRule::Threshold { feature: f.quant[k], cutoff: values[f.q[v]] }
            } else {
                let c = k - nq;
                let left_levels = f.s[v][c].iter().enumerate().filter(|(_, &s)| bit(s)).map(|(lvl, _)| lvl).collect();
                BranchRule::Subset { feature: f.cat[c], left_levels }
            }
        };
        // Snap the cutoff onto the records the solution sends left so that
        // solver round-off cannot flip a boundary record.
        if !f.w_q.is_empty() {
            let left_max =
                (0..ds.len()).filter(|&i| bit(f.w_q[i][v])).map(|i| branch_score(&rule, ds, i)).fold(f64::NEG_INFINITY, f64::max);
            if let BranchRule::Threshold { cutoff, .. } | BranchRule::Linear { cutoff, .. } = &mut rule {
                if left_max > *cutoff {
                    *cutoff = left_max;
                }
            }
        }
        branches.push(rule);
    }

    let leaves = match &f.leaves {
        LeafVars::Class(u) => u.iter().map(|ul| LeafRule::Label(argmax(ul.iter().map(|&x| values[x])))).collect(),
        LeafVars::Value(u) => u.iter().map(|&x| LeafRule::Value(values[x].clamp(-1.0, 1.0))).collect(),
        LeafVars::Linear(u) => u
            .iter()
            .map(|ul| {
                LeafRule::Linear(
                    f.quant.iter().enumerate().map(|(k, &j)| (j, values[ul[k]])).filter(|c| c.1.abs() > COEF_ZERO).collect(),
                )
            })
            .collect(),
    };

    let schema = ds.schema();
    let tree = DecisionTree {
        shape: f.shape,
        class: f.class,
        task: f.task,
        branches,
        leaves,
        schema_fingerprint: schema.fingerprint(),
        normalization: ds.normalization().cloned().unwrap_or_else(|| crate::data::NormalizationReport::identity(schema)),
    };
    tree.validate(schema)?;
    for i in 0..ds.len() {
        let solution = argmax(f.z[i].iter().map(|&x| values[x]));
        let reached = tree.route(ds.record(i), schema)?;
        if reached != solution {
            return Err(ExtractError::Routing { record: i, tree: reached, solution });
        }
    }
    Ok(tree)
}

/// Per-record predictions read from the solution's `yhat` variables.
pub fn solution_predictions(form: &Formulation, values: &[f64]) -> Vec<Prediction> {
    match &form.predictions {
        PredictionVars::Class { yhat, .. } => {
            yhat.iter().map(|yh| Prediction::Label(argmax(yh.iter().map(|&x| values[x])))).collect()
        }
        PredictionVars::Value { yhat, .. } => yhat.iter().map(|&x| Prediction::Value(values[x])).collect(),
    }
}

fn abs_value(term: &AbsTerm, x: &[f64]) -> f64 {
    (term.constant + term.coeffs.iter().map(|&(v, a)| a * x[v]).sum::<f64>()).abs()
}

/// Builds the model assignment that encodes `tree` on the training records
/// of `ds`. The assignment is feasible whenever the tree's rules fit the
/// formulation's variable domains.
pub fn assignment_from_tree(built: &BuiltModel, ds: &Dataset, tree: &DecisionTree) -> Result<Vec<f64>> {
    let f = &built.form;
    let schema = ds.schema();
    if tree.shape != f.shape {
        return Err(ExtractError::Unrepresentable("tree depth differs from the model".into()));
    }
    if tree.schema_fingerprint != schema.fingerprint() {
        return Err(TreeError::Fingerprint { expected: tree.schema_fingerprint.clone(), found: schema.fingerprint() }.into());
    }
    tree.validate(schema)?;
    let mut x = vec![0.0; built.model.n_vars()];
    let nq = f.quant.len();
    let n = ds.len();
    let eps = f.epsilon;
    let quant_pos = |j: usize| f.quant.iter().position(|&q| q == j);

    for (v, rule) in tree.branches.iter().enumerate() {
        // weights over `quant`, or the categorical slot
        let mut weights = vec![0.0; nq];
        let mut cat_slot = None;
        match rule {
            BranchRule::Threshold { feature, .. } => {
                let k = quant_pos(*feature)
                    .ok_or_else(|| ExtractError::Unrepresentable(format!("node {v}: feature {feature} is not branchable")))?;
                weights[k] = 1.0;
            }
            BranchRule::Linear { weights: w, .. } => {
                for &(j, a) in w {
                    let k = quant_pos(j)
                        .ok_or_else(|| ExtractError::Unrepresentable(format!("node {v}: feature {j} is not branchable")))?;
                    weights[k] += a;
                }
            }
            BranchRule::Subset { feature, left_levels } => {
                let c = f
                    .cat
                    .iter()
                    .position(|&j| j == *feature)
                    .ok_or_else(|| ExtractError::Unrepresentable(format!("node {v}: feature {feature} is not branchable")))?;
                cat_slot = Some((c, left_levels));
            }
        }
        let linear_model = f.class == TreeClass::LinearBranching;
        if linear_model != matches!(rule, BranchRule::Linear { .. }) {
            return Err(ExtractError::Unrepresentable(format!("node {v}: rule kind does not match the tree class")));
        }
        for k in 0..nq {
            x[f.p[v][k]] = weights[k];
        }
        if let Some((c, levels)) = cat_slot {
            x[f.p[v][nq + c]] = 1.0;
            for &lvl in levels {
                x[f.s[v][c][lvl]] = 1.0;
            }
        }
        if !f.usage.is_empty() {
            for k in 0..f.n_branch_features() {
                x[f.usage[v][k]] = if x[f.p[v][k]] != 0.0 { 1.0 } else { 0.0 };
            }
        }
        if nq > 0 {
            let scores: Vec<f64> =
                (0..n).map(|i| f.quant.iter().enumerate().map(|(k, &j)| weights[k] * ds.value(i, j).num()).sum()).collect();
            let cutoff = match rule {
                BranchRule::Threshold { cutoff, .. } | BranchRule::Linear { cutoff, .. } => *cutoff,
                BranchRule::Subset { .. } => f64::INFINITY,
            };
            let var = &built.model.vars[f.q[v]];
            let left_max = scores.iter().copied().filter(|&s| s <= cutoff).fold(f64::NEG_INFINITY, f64::max);
            let q = if left_max.is_finite() { left_max } else { scores.iter().copied().fold(f64::INFINITY, f64::min) - eps };
            let q = if cat_slot.is_some() { 0.0 } else { q.max(var.lower) };
            if q > var.upper || scores.iter().any(|&s| s > q && s < q + eps * (1.0 - 1e-9)) {
                return Err(ExtractError::Unrepresentable(format!("node {v}: cutoff cannot be separated by epsilon")));
            }
            if scores.iter().any(|&s| (s <= cutoff) != (s <= q)) {
                return Err(ExtractError::Unrepresentable(format!("node {v}: cutoff sends every record right")));
            }
            x[f.q[v]] = q;
            for i in 0..n {
                let d = q - scores[i];
                x[f.g_pos[i][v]] = d.max(0.0);
                x[f.g_neg[i][v]] = (-d).max(0.0);
                x[f.w_q[i][v]] = if d >= 0.0 { 1.0 } else { 0.0 };
            }
        }
        if !f.cat.is_empty() {
            for i in 0..n {
                let routed: f64 = f.cat.iter().enumerate().map(|(c, &j)| x[f.s[v][c][ds.value(i, j).level()]]).sum();
                x[f.w_c[i][v]] = routed;
            }
        }
    }

    let leaf_of: Vec<usize> = (0..n).map(|i| tree.route(ds.record(i), schema)).collect::<std::result::Result<_, _>>()?;
    for (i, &l) in leaf_of.iter().enumerate() {
        x[f.z[i][l]] = 1.0;
    }

    match (&f.leaves, &f.predictions) {
        (LeafVars::Class(u), PredictionVars::Class { yhat, r }) => {
            for (l, rule) in tree.leaves.iter().enumerate() {
                let LeafRule::Label(c) = rule else {
                    return Err(ExtractError::Unrepresentable("leaf kind does not match the task".into()));
                };
                x[u[l][*c]] = 1.0;
            }
            for i in 0..n {
                let l = leaf_of[i];
                let LeafRule::Label(c) = tree.leaves[l] else { unreachable!() };
                x[r[i][l][c]] = 1.0;
                x[yhat[i][c]] = 1.0;
            }
        }
        (leaves, PredictionVars::Value { yhat, v, .. }) => {
            let mut outputs = vec![vec![0.0; n]; tree.leaves.len()];
            for (l, rule) in tree.leaves.iter().enumerate() {
                match (leaves, rule) {
                    (LeafVars::Value(u), LeafRule::Value(c)) => {
                        x[u[l]] = *c;
                        outputs[l].fill(*c);
                    }
                    (LeafVars::Linear(u), LeafRule::Linear(coefs)) => {
                        for &(j, a) in coefs {
                            let k = quant_pos(j).ok_or_else(|| {
                                ExtractError::Unrepresentable(format!("leaf {l}: feature {j} is not a leaf input"))
                            })?;
                            x[u[l][k]] += a;
                        }
                        for (i, out) in outputs[l].iter_mut().enumerate() {
                            *out = f.quant.iter().enumerate().map(|(k, &j)| x[u[l][k]] * ds.value(i, j).num()).sum();
                        }
                    }
                    _ => return Err(ExtractError::Unrepresentable("leaf kind does not match the tree class".into())),
                }
            }
            for i in 0..n {
                let l = leaf_of[i];
                let out = outputs[l][i];
                if out.abs() > 1.0 + 1e-12 {
                    return Err(ExtractError::Unrepresentable(format!("record {i}: leaf output {out} outside [-1, 1]")));
                }
                x[v[i][l]] = out;
                x[yhat[i]] = out;
            }
        }
        _ => return Err(ExtractError::Unrepresentable("leaf kind does not match the task".into())),
    }

    for term in f.loss_terms.iter().chain(&f.fairness_terms) {
        x[term.aux] = abs_value(term, &x);
    }
    Ok(x)
}
