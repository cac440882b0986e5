//! Mixed-integer formulation of a fairness-regularized decision tree.
//!
//! Row families are named after the constraint they implement:
//!
//! | family            | rows                                                       |
//! |-------------------|------------------------------------------------------------|
//! | `structure`       | `sum_j p[v][j] = 1` per branching node                     |
//! | `leaf_onehot`     | `sum_y u[l][y] = 1` per leaf (classification)              |
//! | `cut_balance`     | `q[v] - sum_j p[v][j] x[i][j] = g+[i][v] - g-[i][v]`       |
//! | `cut_pos`         | `g+ <= M w_q`                                              |
//! | `cut_neg`         | `g- <= M (1 - w_q)`                                        |
//! | `cut_gap`         | `g+ + g- >= eps (1 - w_q)`                                 |
//! | `quant_right`     | `z[i][l] <= 1 - w_q + (1 - sum_{j quant} p)`, `l` right of `v` |
//! | `quant_left`      | `z[i][l] <= w_q + (1 - sum_{j quant} p)`, `l` left of `v`  |
//! | `level_link`      | `s[v][j][k] <= p[v][j]`                                    |
//! | `level_route`     | `w_c[i][v] = sum_j s[v][j][x_ij]`                          |
//! | `cat_left`        | `z <= w_c + (1 - sum_{j cat} p)`, `l` left of `v`          |
//! | `cat_right`       | `z <= 1 - w_c + (1 - sum_{j cat} p)`, `l` right of `v`     |
//! | `assign`          | `sum_l z[i][l] = 1`                                        |
//!
//! Loss and fairness terms are linearized with product rows and
//! absolute-value splits (`t >= expr`, `t >= -expr`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{MilpModel, Sense, VarId};
use crate::data::{Dataset, FeatureKind};
use crate::fairness::{self, FairnessConfig, FairnessError, IndexFamily};
use crate::tree::{Task, TreeClass, TreeShape};

#[derive(Debug, Error, PartialEq)]
pub enum BuildError {
    #[error("infeasible configuration: {0}")]
    Config(String),
    #[error("big-M {given} is below the required {required}")]
    BigMTooSmall { given: f64, required: f64 },
    #[error("dataset is not normalized: {0}")]
    NotNormalized(String),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

pub type Result<T> = std::result::Result<T, BuildError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub class: TreeClass,
    pub task: Task,
    pub fairness: FairnessConfig,
    pub lambda: f64,
    /// Overrides the default big-M.
    pub big_m: Option<f64>,
    /// Overrides the data-driven strict-separation gap.
    pub epsilon: Option<f64>,
    /// Box on linear-leaf coefficients.
    pub leaf_box: f64,
    pub max_feature_uses: Option<usize>,
    pub max_features_per_rule: Option<usize>,
    /// Restrict linear branching weights to `[0, 1]`.
    pub nonnegative_weights: bool,
}

impl BuildConfig {
    pub fn new(class: TreeClass, task: Task) -> Self {
        BuildConfig {
            class,
            task,
            fairness: FairnessConfig::default(),
            lambda: 0.0,
            big_m: None,
            epsilon: None,
            leaf_box: 10.0,
            max_feature_uses: None,
            max_features_per_rule: None,
            nonnegative_weights: false,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_fairness(mut self, fairness: FairnessConfig) -> Self {
        self.fairness = fairness;
        self
    }
}

/// Decision variables of a leaf.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafVars {
    /// One-hot `u[l][y]`.
    Class(Vec<Vec<VarId>>),
    Value(Vec<VarId>),
    /// `u[l][k]` over `Formulation::quant`.
    Linear(Vec<Vec<VarId>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictionVars {
    /// `yhat[i][y]` with products `r[i][l][y] = z[i][l] u[l][y]`.
    Class { yhat: Vec<Vec<VarId>>, r: Vec<Vec<Vec<VarId>>> },
    /// `yhat[i]` with products `v[i][l] = z[i][l] * (leaf output of l at i)`.
    Value { yhat: Vec<VarId>, v: Vec<Vec<VarId>>, bound: Vec<f64> },
}

/// An absolute-value split: `aux >= |constant + sum coeffs|`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsTerm {
    pub aux: VarId,
    pub coeffs: Vec<(VarId, f64)>,
    pub constant: f64,
}

/// Map from structural names to model variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Formulation {
    pub shape: TreeShape,
    pub class: TreeClass,
    pub task: Task,
    pub lambda: f64,
    pub fairness: FairnessConfig,
    /// Quantitative branching features (schema indices).
    pub quant: Vec<usize>,
    /// Categorical branching features (schema indices).
    pub cat: Vec<usize>,
    /// `p[v][k]` over `quant` followed by `cat`.
    pub p: Vec<Vec<VarId>>,
    pub q: Vec<VarId>,
    /// `[i][v]`, empty when no quantitative branching features exist.
    pub g_pos: Vec<Vec<VarId>>,
    pub g_neg: Vec<Vec<VarId>>,
    pub w_q: Vec<Vec<VarId>>,
    /// `s[v][c][k]` for categorical feature `cat[c]`, level `k`.
    pub s: Vec<Vec<Vec<VarId>>>,
    pub w_c: Vec<Vec<VarId>>,
    pub z: Vec<Vec<VarId>>,
    pub leaves: LeafVars,
    pub predictions: PredictionVars,
    /// Regression absolute errors.
    pub loss_terms: Vec<AbsTerm>,
    pub fairness_terms: Vec<AbsTerm>,
    /// Linear-branching usage indicators `b[v][k]` (only with interpretability limits).
    pub usage: Vec<Vec<VarId>>,
    pub big_m: f64,
    pub epsilon: f64,
    pub var_families: BTreeMap<String, usize>,
    pub row_families: BTreeMap<String, usize>,
}

impl Formulation {
    pub fn n_branch_features(&self) -> usize {
        self.quant.len() + self.cat.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub class: TreeClass,
    pub task: Task,
    pub lambda: f64,
    pub big_m: f64,
    pub epsilon: f64,
    pub n_vars: usize,
    pub n_binaries: usize,
    pub n_rows: usize,
    pub variables: BTreeMap<String, usize>,
    pub constraints: BTreeMap<String, usize>,
    pub loss_terms: usize,
    pub fairness_terms: usize,
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: MilpModel,
    pub form: Formulation,
}

impl BuiltModel {
    pub fn report(&self) -> BuildReport {
        BuildReport {
            class: self.form.class,
            task: self.form.task,
            lambda: self.form.lambda,
            big_m: self.form.big_m,
            epsilon: self.form.epsilon,
            n_vars: self.model.n_vars(),
            n_binaries: self.model.binaries().count(),
            n_rows: self.model.n_rows(),
            variables: self.form.var_families.clone(),
            constraints: self.form.row_families.clone(),
            loss_terms: self.form.loss_terms.len(),
            fairness_terms: self.form.fairness_terms.len(),
        }
    }
}

pub const EPSILON_FLOOR: f64 = 1e-6;

/// Half the smallest nonzero gap between consecutive sorted values of any
/// listed feature, floored at [`EPSILON_FLOOR`].
pub fn data_epsilon(ds: &Dataset, features: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for &j in features {
        let mut v: Vec<f64> = ds.records().iter().map(|r| r[j].num()).collect();
        v.sort_by(f64::total_cmp);
        for w in v.windows(2) {
            let gap = w[1] - w[0];
            if gap > 0.0 {
                best = best.min(gap);
            }
        }
    }
    if best.is_finite() {
        (best / 2.0).max(EPSILON_FLOOR)
    } else {
        EPSILON_FLOOR
    }
}

struct Builder {
    model: MilpModel,
    var_families: BTreeMap<String, usize>,
    row_families: BTreeMap<String, usize>,
}

impl Builder {
    fn bin(&mut self, family: &str, name: String) -> VarId {
        *self.var_families.entry(family.to_string()).or_default() += 1;
        self.model.binary(name)
    }

    fn cont(&mut self, family: &str, name: String, lo: f64, hi: f64) -> VarId {
        *self.var_families.entry(family.to_string()).or_default() += 1;
        self.model.continuous(name, lo, hi)
    }

    fn row(&mut self, family: &str, name: String, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) {
        *self.row_families.entry(family.to_string()).or_default() += 1;
        self.model.add_row(name, terms, sense, rhs);
    }

    /// `aux >= |constant + sum coeffs|` as two rows; `aux` bounded by the
    /// largest attainable magnitude given `var_abs_bound` on each variable.
    fn abs_split(&mut self, family: &str, name: String, coeffs: Vec<(VarId, f64)>, constant: f64, var_abs_bound: f64) -> AbsTerm {
        let ub = constant.abs() + coeffs.iter().map(|c| c.1.abs()).sum::<f64>() * var_abs_bound;
        let aux = self.cont(family, name.clone(), 0.0, ub);
        let mut plus = vec![(aux, 1.0)];
        plus.extend(coeffs.iter().map(|&(v, a)| (v, -a)));
        self.row(family, format!("{name}+"), plus, Sense::Ge, constant);
        let mut minus = vec![(aux, 1.0)];
        minus.extend(coeffs.iter().copied());
        self.row(family, format!("{name}-"), minus, Sense::Ge, -constant);
        AbsTerm { aux, coeffs, constant }
    }
}

fn check_normalized(ds: &Dataset) -> Result<()> {
    let schema = ds.schema();
    for (j, f) in schema.features.iter().enumerate() {
        if let FeatureKind::Quantitative = f.kind {
            if let Some((lo, hi)) = ds.feature_range(j) {
                if lo < 0.0 || hi > 1.0 {
                    return Err(BuildError::NotNormalized(format!("feature `{}` outside [0, 1]", f.name)));
                }
            }
        }
    }
    if let Some(ys) = ds.real_labels() {
        if ys.iter().any(|y| !(-1.0..=1.0).contains(y)) {
            return Err(BuildError::NotNormalized("regression labels outside [-1, 1]".into()));
        }
    }
    Ok(())
}

/// Assembles the mixed-integer program for `ds` (normalized) and `shape`.
pub fn build(ds: &Dataset, shape: TreeShape, cfg: &BuildConfig) -> Result<BuiltModel> {
    let schema = ds.schema();
    check_normalized(ds)?;
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(BuildError::Config(format!("lambda must be >= 0, got {}", cfg.lambda)));
    }
    match (cfg.task, schema.is_classification()) {
        (Task::Classification, false) | (Task::Regression, true) => {
            return Err(BuildError::Config("task does not match the dataset's label kind".into()))
        }
        _ => {}
    }
    let quant = schema.unprotected_quantitative();
    let cat = match cfg.class {
        TreeClass::LinearBranching => Vec::new(),
        _ => schema.unprotected_categorical(),
    };
    match cfg.class {
        TreeClass::Classical if quant.is_empty() && cat.is_empty() => {
            return Err(BuildError::Config("no unprotected features to branch on".into()))
        }
        TreeClass::LinearBranching if quant.is_empty() => {
            return Err(BuildError::Config("linear branching needs quantitative unprotected features".into()))
        }
        TreeClass::LinearLeafing if cfg.task != Task::Regression => {
            return Err(BuildError::Config("linear leafing is a regression tree class".into()))
        }
        TreeClass::LinearLeafing if quant.is_empty() => {
            return Err(BuildError::Config("linear leafing needs quantitative unprotected features".into()))
        }
        TreeClass::LinearLeafing if !(cfg.leaf_box > 0.0 && cfg.leaf_box.is_finite()) => {
            return Err(BuildError::Config("linear leafing needs a finite positive coefficient box".into()))
        }
        _ => {}
    }
    if cfg.max_feature_uses == Some(0) || cfg.max_features_per_rule == Some(0) {
        return Err(BuildError::Config("interpretability limits must be at least 1".into()));
    }

    let linear = cfg.class == TreeClass::LinearBranching;
    let d_q = quant.len() as f64;
    let (p_lo, q_lo, q_hi, required_m) =
        if !linear || cfg.nonnegative_weights { (0.0, 0.0, 1.0, 2.0) } else { (-1.0, -d_q, d_q, 1.0 + 2.0 * d_q) };
    let big_m = match cfg.big_m {
        Some(m) if m < required_m => return Err(BuildError::BigMTooSmall { given: m, required: required_m }),
        Some(m) => m,
        None => required_m,
    };
    let epsilon = match cfg.epsilon {
        Some(e) if !(e > 0.0) => return Err(BuildError::Config("epsilon must be positive".into())),
        Some(e) => e,
        None => data_epsilon(ds, &quant),
    };

    let n = ds.len();
    let n_branch = shape.n_branch();
    let n_leaves = shape.n_leaves();
    let n_classes = schema.n_classes();
    let mut b = Builder { model: MilpModel::new("fairtree"), var_families: BTreeMap::new(), row_families: BTreeMap::new() };

    // branching structure
    let n_feat = quant.len() + cat.len();
    let mut p = Vec::with_capacity(n_branch);
    let mut q = Vec::with_capacity(n_branch);
    for v in 0..n_branch {
        let row: Vec<VarId> = (0..n_feat)
            .map(|k| if linear { b.cont("p", format!("p_{v}_{k}"), p_lo, 1.0) } else { b.bin("p", format!("p_{v}_{k}")) })
            .collect();
        b.row("structure", format!("tree_{v}"), row.iter().map(|&x| (x, 1.0)).collect(), Sense::Eq, 1.0);
        p.push(row);
        if !quant.is_empty() {
            q.push(b.cont("q", format!("q_{v}"), q_lo, q_hi));
        }
    }

    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        z.push((0..n_leaves).map(|l| b.bin("z", format!("z_{i}_{l}"))).collect::<Vec<_>>());
    }

    // quantitative (or linear) cuts
    let (mut g_pos, mut g_neg, mut w_q) = (Vec::new(), Vec::new(), Vec::new());
    if !quant.is_empty() {
        for i in 0..n {
            let mut gp_i = Vec::with_capacity(n_branch);
            let mut gm_i = Vec::with_capacity(n_branch);
            let mut w_i = Vec::with_capacity(n_branch);
            for v in 0..n_branch {
                let gp = b.cont("g+", format!("gp_{i}_{v}"), 0.0, big_m);
                let gm = b.cont("g-", format!("gm_{i}_{v}"), 0.0, big_m);
                let w = b.bin("w_q", format!("wq_{i}_{v}"));
                let mut terms = vec![(q[v], 1.0), (gp, -1.0), (gm, 1.0)];
                for (k, &j) in quant.iter().enumerate() {
                    terms.push((p[v][k], -ds.value(i, j).num()));
                }
                b.row("cut_balance", format!("cb_{i}_{v}"), terms, Sense::Eq, 0.0);
                b.row("cut_pos", format!("cp_{i}_{v}"), vec![(gp, 1.0), (w, -big_m)], Sense::Le, 0.0);
                b.row("cut_neg", format!("cn_{i}_{v}"), vec![(gm, 1.0), (w, big_m)], Sense::Le, big_m);
                b.row("cut_gap", format!("cg_{i}_{v}"), vec![(gp, 1.0), (gm, 1.0), (w, epsilon)], Sense::Ge, epsilon);
                let p_quant: Vec<(VarId, f64)> = (0..quant.len()).map(|k| (p[v][k], 1.0)).collect();
                for l in shape.right_leaves(v) {
                    let mut t = vec![(z[i][l], 1.0), (w, 1.0)];
                    t.extend(p_quant.iter().copied());
                    b.row("quant_right", format!("qr_{i}_{v}_{l}"), t, Sense::Le, 2.0);
                }
                for l in shape.left_leaves(v) {
                    let mut t = vec![(z[i][l], 1.0), (w, -1.0)];
                    t.extend(p_quant.iter().copied());
                    b.row("quant_left", format!("ql_{i}_{v}_{l}"), t, Sense::Le, 1.0);
                }
                gp_i.push(gp);
                gm_i.push(gm);
                w_i.push(w);
            }
            g_pos.push(gp_i);
            g_neg.push(gm_i);
            w_q.push(w_i);
        }
    }

    // categorical cuts
    let mut s = Vec::new();
    let mut w_c = Vec::new();
    if !cat.is_empty() {
        for v in 0..n_branch {
            let mut sv = Vec::with_capacity(cat.len());
            for (c, &j) in cat.iter().enumerate() {
                let n_levels = schema.features[j].levels().map_or(0, <[String]>::len);
                let pv = p[v][quant.len() + c];
                let levels: Vec<VarId> = (0..n_levels)
                    .map(|k| {
                        let sv = b.bin("s", format!("s_{v}_{c}_{k}"));
                        b.row("level_link", format!("sl_{v}_{c}_{k}"), vec![(sv, 1.0), (pv, -1.0)], Sense::Le, 0.0);
                        sv
                    })
                    .collect();
                sv.push(levels);
            }
            s.push(sv);
        }
        for i in 0..n {
            let mut w_i = Vec::with_capacity(n_branch);
            for v in 0..n_branch {
                let w = b.bin("w_c", format!("wc_{i}_{v}"));
                let mut terms = vec![(w, 1.0)];
                for (c, &j) in cat.iter().enumerate() {
                    terms.push((s[v][c][ds.value(i, j).level()], -1.0));
                }
                b.row("level_route", format!("lr_{i}_{v}"), terms, Sense::Eq, 0.0);
                let p_cat: Vec<(VarId, f64)> = (0..cat.len()).map(|c| (p[v][quant.len() + c], 1.0)).collect();
                for l in shape.left_leaves(v) {
                    let mut t = vec![(z[i][l], 1.0), (w, -1.0)];
                    t.extend(p_cat.iter().copied());
                    b.row("cat_left", format!("kl_{i}_{v}_{l}"), t, Sense::Le, 1.0);
                }
                for l in shape.right_leaves(v) {
                    let mut t = vec![(z[i][l], 1.0), (w, 1.0)];
                    t.extend(p_cat.iter().copied());
                    b.row("cat_right", format!("kr_{i}_{v}_{l}"), t, Sense::Le, 2.0);
                }
                w_i.push(w);
            }
            w_c.push(w_i);
        }
    }

    for (i, zi) in z.iter().enumerate() {
        b.row("assign", format!("as_{i}"), zi.iter().map(|&x| (x, 1.0)).collect(), Sense::Eq, 1.0);
    }

    // interpretability
    let mut usage = Vec::new();
    if linear && (cfg.max_feature_uses.is_some() || cfg.max_features_per_rule.is_some()) {
        for v in 0..n_branch {
            let row: Vec<VarId> = (0..n_feat)
                .map(|k| {
                    let u = b.bin("usage", format!("b_{v}_{k}"));
                    b.row("usage_link", format!("ub_{v}_{k}+"), vec![(p[v][k], 1.0), (u, -1.0)], Sense::Le, 0.0);
                    b.row("usage_link", format!("ub_{v}_{k}-"), vec![(p[v][k], -1.0), (u, -1.0)], Sense::Le, 0.0);
                    u
                })
                .collect();
            if let Some(limit) = cfg.max_features_per_rule {
                b.row("interpretability", format!("rule_{v}"), row.iter().map(|&u| (u, 1.0)).collect(), Sense::Le, limit as f64);
            }
            usage.push(row);
        }
    }
    if let Some(limit) = cfg.max_feature_uses {
        let ind = if linear { &usage } else { &p };
        for k in 0..n_feat {
            b.row("interpretability", format!("uses_{k}"), ind.iter().map(|r| (r[k], 1.0)).collect(), Sense::Le, limit as f64);
        }
    }

    // leaves and predictions
    let inv_n = 1.0 / n as f64;
    let mut loss_terms = Vec::new();
    let (leaves, predictions) = match cfg.task {
        Task::Classification => {
            let u: Vec<Vec<VarId>> = (0..n_leaves)
                .map(|l| {
                    let row: Vec<VarId> = (0..n_classes).map(|y| b.bin("u", format!("u_{l}_{y}"))).collect();
                    b.row("leaf_onehot", format!("leaf_{l}"), row.iter().map(|&x| (x, 1.0)).collect(), Sense::Eq, 1.0);
                    row
                })
                .collect();
            let mut r = Vec::with_capacity(n);
            let mut yhat = Vec::with_capacity(n);
            for i in 0..n {
                let yh: Vec<VarId> = (0..n_classes).map(|y| b.cont("yhat", format!("yh_{i}_{y}"), 0.0, 1.0)).collect();
                let mut r_i = Vec::with_capacity(n_leaves);
                for l in 0..n_leaves {
                    let mut r_il = Vec::with_capacity(n_classes);
                    for y in 0..n_classes {
                        let rv = b.cont("r", format!("r_{i}_{l}_{y}"), 0.0, 1.0);
                        b.row("product", format!("rz_{i}_{l}_{y}"), vec![(rv, 1.0), (z[i][l], -1.0)], Sense::Le, 0.0);
                        b.row("product", format!("ru_{i}_{l}_{y}"), vec![(rv, 1.0), (u[l][y], -1.0)], Sense::Le, 0.0);
                        b.row(
                            "product",
                            format!("rb_{i}_{l}_{y}"),
                            vec![(rv, 1.0), (z[i][l], -1.0), (u[l][y], -1.0)],
                            Sense::Ge,
                            -1.0,
                        );
                        r_il.push(rv);
                    }
                    r_i.push(r_il);
                }
                for y in 0..n_classes {
                    let mut terms = vec![(yh[y], 1.0)];
                    terms.extend((0..n_leaves).map(|l| (r_i[l][y], -1.0)));
                    b.row("yhat_def", format!("yd_{i}_{y}"), terms, Sense::Eq, 0.0);
                }
                r.push(r_i);
                yhat.push(yh);
            }
            let truth = ds.class_labels().expect("classification labels");
            b.model.objective_constant += 1.0;
            for (i, &y) in truth.iter().enumerate() {
                b.model.add_objective(yhat[i][y], -inv_n);
            }
            (LeafVars::Class(u), PredictionVars::Class { yhat, r })
        }
        Task::Regression => {
            let leaf_vars = if cfg.class == TreeClass::LinearLeafing {
                LeafVars::Linear(
                    (0..n_leaves)
                        .map(|l| {
                            (0..quant.len()).map(|k| b.cont("u", format!("u_{l}_{k}"), -cfg.leaf_box, cfg.leaf_box)).collect()
                        })
                        .collect(),
                )
            } else {
                LeafVars::Value((0..n_leaves).map(|l| b.cont("u", format!("u_{l}"), -1.0, 1.0)).collect())
            };
            let mut v = Vec::with_capacity(n);
            let mut yhat = Vec::with_capacity(n);
            let mut bound = Vec::with_capacity(n);
            for i in 0..n {
                let yh = b.cont("yhat", format!("yh_{i}"), -1.0, 1.0);
                // leaf output of l at record i, as terms over u
                let (m_i, outputs): (f64, Vec<Vec<(VarId, f64)>>) = match &leaf_vars {
                    LeafVars::Value(u) => (1.0, u.iter().map(|&x| vec![(x, 1.0)]).collect()),
                    LeafVars::Linear(u) => {
                        let m: f64 = cfg.leaf_box * quant.iter().map(|&j| ds.value(i, j).num().abs()).sum::<f64>();
                        (
                            m,
                            u.iter()
                                .map(|ul| quant.iter().enumerate().map(|(k, &j)| (ul[k], ds.value(i, j).num())).collect())
                                .collect(),
                        )
                    }
                    LeafVars::Class(_) => unreachable!(),
                };
                let mut v_i = Vec::with_capacity(n_leaves);
                for l in 0..n_leaves {
                    let vv = b.cont("v", format!("v_{i}_{l}"), -m_i, m_i);
                    let zl = z[i][l];
                    b.row("product", format!("vz+_{i}_{l}"), vec![(vv, 1.0), (zl, -m_i)], Sense::Le, 0.0);
                    b.row("product", format!("vz-_{i}_{l}"), vec![(vv, 1.0), (zl, m_i)], Sense::Ge, 0.0);
                    let mut up = vec![(vv, 1.0), (zl, m_i)];
                    up.extend(outputs[l].iter().map(|&(x, a)| (x, -a)));
                    b.row("product", format!("vu+_{i}_{l}"), up, Sense::Le, m_i);
                    let mut lo = vec![(vv, 1.0), (zl, -m_i)];
                    lo.extend(outputs[l].iter().map(|&(x, a)| (x, -a)));
                    b.row("product", format!("vu-_{i}_{l}"), lo, Sense::Ge, -m_i);
                    v_i.push(vv);
                }
                let mut terms = vec![(yh, 1.0)];
                terms.extend(v_i.iter().map(|&x| (x, -1.0)));
                b.row("yhat_def", format!("yd_{i}"), terms, Sense::Eq, 0.0);
                v.push(v_i);
                yhat.push(yh);
                bound.push(m_i);
            }
            let truth = ds.real_labels().expect("regression labels");
            for (i, &y) in truth.iter().enumerate() {
                let term = b.abs_split("loss_abs", format!("e_{i}"), vec![(yhat[i], 1.0)], -y, 1.0);
                b.model.add_objective(term.aux, inv_n);
                loss_terms.push(term);
            }
            (leaf_vars, PredictionVars::Value { yhat, v, bound })
        }
    };

    // fairness regularizer
    let mut fairness_terms = Vec::new();
    if cfg.lambda > 0.0 {
        let groups = ds.groups();
        let n_groups = schema.n_groups();
        let mut sizes = vec![0usize; n_groups];
        for &g in &groups {
            sizes[g] += 1;
        }
        if let Some(g) = sizes.iter().position(|&c| c == 0) {
            return Err(FairnessError::EmptyGroup(schema.group_name(g)).into());
        }
        // (reference weights column, per-group denominators) for each reference point
        let columns: Vec<Vec<f64>> = match cfg.fairness.index {
            IndexFamily::Didi => vec![vec![1.0; n]],
            IndexFamily::Dtdi => {
                let w = fairness::weights_for(ds, &cfg.fairness)?;
                (0..n).map(|j| w.column(j).to_vec()).collect()
            }
        };
        let class_vars: Vec<Vec<VarId>>;
        let (targets, var_bound): (Vec<Vec<VarId>>, f64) = match &predictions {
            PredictionVars::Class { yhat, .. } => {
                class_vars = (0..n_classes).map(|y| yhat.iter().map(|yh| yh[y]).collect()).collect();
                (class_vars, 1.0)
            }
            PredictionVars::Value { yhat, .. } => (vec![yhat.clone()], 1.0),
        };
        for (j, col) in columns.iter().enumerate() {
            let total: f64 = col.iter().sum();
            let mut group_w = vec![0.0; n_groups];
            for i in 0..n {
                group_w[groups[i]] += col[i];
            }
            for g in 0..n_groups {
                if group_w[g] <= 0.0 {
                    return Err(FairnessError::ZeroDenominator { j, group: schema.group_name(g) }.into());
                }
                for (y, vars) in targets.iter().enumerate() {
                    let coeffs: Vec<(VarId, f64)> = (0..n)
                        .filter_map(|i| {
                            let a = col[i] / total - if groups[i] == g { col[i] / group_w[g] } else { 0.0 };
                            (a != 0.0).then_some((vars[i], a))
                        })
                        .collect();
                    if coeffs.is_empty() {
                        continue;
                    }
                    let term = b.abs_split("fair_abs", format!("t_{y}_{g}_{j}"), coeffs, 0.0, var_bound);
                    b.model.add_objective(term.aux, cfg.lambda);
                    fairness_terms.push(term);
                }
            }
        }
    }

    let form = Formulation {
        shape,
        class: cfg.class,
        task: cfg.task,
        lambda: cfg.lambda,
        fairness: cfg.fairness,
        quant,
        cat,
        p,
        q,
        g_pos,
        g_neg,
        w_q,
        s,
        w_c,
        z,
        leaves,
        predictions,
        loss_terms,
        fairness_terms,
        usage,
        big_m,
        epsilon,
        var_families: b.var_families,
        row_families: b.row_families,
    };
    Ok(BuiltModel { model: b.model, form })
}
