//! Fitting, lambda sweeps, cross-validation, the exhaustive oracle and the
//! greedy warm start.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, FeatureKind, FoldPlan, Labels, NormalizationReport};
use crate::fairness::{
    self, EmptyGroups, FairnessConfig, FairnessError, IndexFamily, Outcomes, WeightMatrix, ZeroDenominatorPolicy,
};
use crate::milp::{self, BuildConfig, BuildError, BuildReport, ExtractError};
use crate::solver::{self, Incumbent, SolveStatus, SolverError, SolverOptions, TracePoint};
use crate::tree::{BranchRule, DecisionTree, LeafRule, Prediction, Task, TreeClass, TreeShape};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
    #[error("the model is infeasible")]
    Infeasible,
    #[error("the model is unbounded")]
    Unbounded,
    #[error("no feasible tree found within the solver limits")]
    NoSolution,
    #[error("instance outside the enumeration limits: {0}")]
    OutOfScope(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Loss and fairness of a set of outcomes on a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Misclassification rate or mean absolute error (normalized scale).
    pub loss: f64,
    pub index: f64,
    /// `index / |N|`.
    pub index_normalized: f64,
    /// Index of the outcomes relative to the index of the true labels, in percent.
    pub level_pct: f64,
}

fn outcomes_of(preds: &[Prediction], task: Task) -> Labels {
    match task {
        Task::Classification => Labels::Class(preds.iter().map(|p| p.label()).collect()),
        Task::Regression => Labels::Real(preds.iter().map(|p| p.value()).collect()),
    }
}

fn as_outcomes(labels: &Labels) -> Outcomes<'_> {
    match labels {
        Labels::Class(v) => Outcomes::Class(v),
        Labels::Real(v) => Outcomes::Real(v),
    }
}

/// Loss of `predicted` against the labels of `ds`.
pub fn loss(ds: &Dataset, predicted: &Labels) -> f64 {
    let n = ds.len() as f64;
    match (ds.labels(), predicted) {
        (Labels::Class(t), Labels::Class(p)) => t.iter().zip(p).filter(|(a, b)| a != b).count() as f64 / n,
        (Labels::Real(t), Labels::Real(p)) => t.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / n,
        _ => f64::NAN,
    }
}

/// Scores `predicted` on `ds`. Held-out sets (`held_out`) skip empty groups
/// and fall back to unit weights for kernel columns with a zero denominator.
pub fn evaluate(ds: &Dataset, predicted: &Labels, fairness_cfg: &FairnessConfig, held_out: bool) -> Result<Metrics> {
    let (groups_policy, cfg) = if held_out {
        (EmptyGroups::Skip, FairnessConfig { zero_denominator: ZeroDenominatorPolicy::UnitFallback, ..*fairness_cfg })
    } else {
        (EmptyGroups::Error, *fairness_cfg)
    };
    let w = match cfg.index {
        IndexFamily::Didi => None,
        IndexFamily::Dtdi => Some(weights_for_eval(ds, &cfg)?),
    };
    let index = fairness::index_value(ds, as_outcomes(predicted), cfg.index, w.as_ref(), groups_policy)?;
    let data_index = fairness::index_value(ds, as_outcomes(ds.labels()), cfg.index, w.as_ref(), groups_policy)?;
    Ok(Metrics {
        loss: loss(ds, predicted),
        index,
        index_normalized: index / ds.len() as f64,
        level_pct: fairness::discrimination_level(index, data_index),
    })
}

fn weights_for_eval(ds: &Dataset, cfg: &FairnessConfig) -> Result<WeightMatrix> {
    match cfg.kernel {
        // small held-out folds: every other record is a neighbour
        fairness::Kernel::Knn(k) if k >= ds.len() && ds.len() > 1 => {
            let mut w = fairness::knn_weights(ds, ds.len() - 1)?;
            w.resolve_zero_denominators(ds, cfg.zero_denominator)?;
            Ok(w)
        }
        _ => Ok(fairness::weights_for(ds, cfg)?),
    }
}

pub fn predict_all(tree: &DecisionTree, ds: &Dataset) -> Result<Vec<Prediction>> {
    (0..ds.len()).map(|i| tree.predict(ds.record(i), ds.schema()).map_err(|e| TrainError::Extract(e.into()))).collect()
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub build: BuildConfig,
    pub solver: SolverOptions,
    pub warm_start: bool,
}

impl FitConfig {
    pub fn new(build: BuildConfig) -> Self {
        FitConfig { build, solver: SolverOptions::default(), warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(skip)]
    pub tree: Option<DecisionTree>,
    pub lambda: f64,
    /// `train.loss + lambda * train.index`, recomputed from the tree.
    pub objective: f64,
    pub solver_objective: f64,
    pub train: Metrics,
    pub test: Option<Metrics>,
    pub status: SolveStatus,
    pub gap: f64,
    pub best_bound: f64,
    pub nodes: u64,
    pub seconds: f64,
    pub warm_start_objective: Option<f64>,
    pub trace: Vec<TracePoint>,
    pub build: BuildReport,
}

impl FitReport {
    pub fn tree(&self) -> &DecisionTree {
        self.tree.as_ref().expect("fit report carries its tree")
    }
}

/// Builds and solves the model for `ds`, warm-started from the greedy tree
/// and from `previous` when given, then re-scores the extracted tree.
pub fn fit(ds: &Dataset, shape: TreeShape, cfg: &FitConfig, previous: Option<&DecisionTree>) -> Result<FitReport> {
    let built = milp::build(ds, shape, &cfg.build)?;
    let mut incumbent: Option<Incumbent> = None;
    let mut offer = |tree: &DecisionTree| {
        let Ok(x) = milp::assignment_from_tree(&built, ds, tree) else { return };
        let Ok(inc) = solver::install_incumbent(&built.model, x) else { return };
        if incumbent.as_ref().map_or(true, |b| inc.objective < b.objective) {
            incumbent = Some(inc);
        }
    };
    if cfg.warm_start {
        offer(&greedy_tree(ds, &built.form)?);
    }
    if let Some(prev) = previous {
        offer(prev);
    }
    let warm_start_objective = incumbent.as_ref().map(|i| i.objective);
    let res = solver::branch_and_bound(&built.model, &cfg.solver, incumbent.as_ref())?;
    match res.status {
        SolveStatus::Infeasible => return Err(TrainError::Infeasible),
        SolveStatus::Unbounded => return Err(TrainError::Unbounded),
        SolveStatus::NoSolutionTimeLimit => return Err(TrainError::NoSolution),
        SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit => {}
    }
    let tree = milp::extract_tree(&built, ds, &res.values, cfg.solver.integrality_tol)?;
    let preds = outcomes_of(&predict_all(&tree, ds)?, cfg.build.task);
    let train = evaluate(ds, &preds, &cfg.build.fairness, false)?;
    Ok(FitReport {
        lambda: cfg.build.lambda,
        objective: train.loss + cfg.build.lambda * train.index,
        solver_objective: res.objective,
        train,
        test: None,
        status: res.status,
        gap: res.gap,
        best_bound: res.best_bound,
        nodes: res.nodes,
        seconds: res.wall_time,
        warm_start_objective,
        trace: res.trace,
        build: built.report(),
        tree: Some(tree),
    })
}

/// Scores a fitted tree on held-out data.
pub fn attach_test(report: &mut FitReport, test: &Dataset, fairness_cfg: &FairnessConfig) -> Result<()> {
    let preds = outcomes_of(&predict_all(report.tree(), test)?, report.tree().task);
    report.test = Some(evaluate(test, &preds, fairness_cfg, true)?);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub step: f64,
    /// Stop once the discrimination level (percent) drops below this value.
    pub threshold_pct: f64,
    pub lambda_max: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { step: 0.1, threshold_pct: 0.01, lambda_max: 10.0 }
    }
}

impl SweepConfig {
    /// `0, step, 2 step, ...` up to `lambda_max`.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.step.is_finite()) || !(self.lambda_max >= 0.0 && self.lambda_max.is_finite()) {
            return Err(TrainError::Config("sweep step must be positive and lambda_max finite".into()));
        }
        let count = (self.lambda_max / self.step + 1e-9).floor() as usize;
        Ok((0..=count).map(|k| k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThresholdMet,
    ThresholdUnmet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<FitReport>,
    pub selected: usize,
    pub lambda_star: f64,
    pub reason: StopReason,
}

impl SweepResult {
    pub fn selected(&self) -> &FitReport {
        &self.points[self.selected]
    }
}

/// Fits along the lambda grid until the training discrimination level falls
/// below the threshold. Each fit is warm-started from the previous tree. The
/// selected tree (and, with `eval`, every tried tree) is scored on `eval`.
pub fn lambda_sweep(
    train: &Dataset,
    eval: Option<&Dataset>,
    shape: TreeShape,
    cfg: &FitConfig,
    sweep: &SweepConfig,
) -> Result<SweepResult> {
    let mut points: Vec<FitReport> = Vec::new();
    let mut met = None;
    for lambda in sweep.grid()? {
        let mut c = cfg.clone();
        c.build.lambda = lambda;
        let prev = points.last().map(|p| p.tree());
        let mut report = fit(train, shape, &c, prev)?;
        if let Some(ev) = eval {
            attach_test(&mut report, ev, &cfg.build.fairness)?;
        }
        let done = report.train.level_pct < sweep.threshold_pct;
        points.push(report);
        if done {
            met = Some(points.len() - 1);
            break;
        }
    }
    let (selected, reason) = match met {
        Some(k) => (k, StopReason::ThresholdMet),
        None => {
            let mut best = 0;
            for (k, p) in points.iter().enumerate() {
                if p.train.index < points[best].train.index {
                    best = k;
                }
            }
            (best, StopReason::ThresholdUnmet)
        }
    };
    Ok(SweepResult { lambda_star: points[selected].lambda, points, selected, reason })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaPlan {
    Fixed(f64),
    Sweep(SweepConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub report: FitReport,
    pub sweep: Option<SweepResult>,
}

/// One row of the accuracy-discrimination trade-off table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub fold: usize,
    pub lambda: f64,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub train_index: f64,
    pub test_index: Option<f64>,
    pub status: SolveStatus,
    pub gap: f64,
    pub seconds: f64,
}

impl TradeoffRow {
    pub fn from_report(fold: usize, r: &FitReport) -> Self {
        TradeoffRow {
            fold,
            lambda: r.lambda,
            train_loss: r.train.loss,
            test_loss: r.test.map(|m| m.loss),
            train_index: r.train.index,
            test_index: r.test.map(|m| m.index),
            status: r.status,
            gap: r.gap,
            seconds: r.seconds,
        }
    }
}

/// CSV with header `fold,lambda,train_loss,test_loss,train_index,test_index,status,gap,seconds`.
/// Solve times are written as 0 unless `with_time`.
pub fn tradeoff_csv(rows: &[TradeoffRow], with_time: bool) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from("fold,lambda,train_loss,test_loss,train_index,test_index,status,gap,seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.fold,
            r.lambda,
            r.train_loss,
            opt(r.test_loss),
            r.train_index,
            opt(r.test_index),
            r.status.as_str(),
            r.gap,
            if with_time { r.seconds } else { 0.0 }
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldOutcome>,
    pub points: Vec<TradeoffRow>,
}

/// Runs the fit (fixed lambda) or the sweep on every training split and
/// scores the chosen tree on the matching test split.
pub fn cross_validate(ds: &Dataset, plan: &FoldPlan, shape: TreeShape, cfg: &FitConfig, lambda: &LambdaPlan) -> Result<CvResult> {
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (k, fold) in plan.folds.iter().enumerate() {
        let train = ds.subset(&fold.train);
        let test = ds.subset(&fold.test);
        let (report, sweep) = match lambda {
            LambdaPlan::Fixed(l) => {
                let mut c = cfg.clone();
                c.build.lambda = *l;
                let mut r = fit(&train, shape, &c, None)?;
                attach_test(&mut r, &test, &cfg.build.fairness)?;
                (r, None)
            }
            LambdaPlan::Sweep(s) => {
                let mut res = lambda_sweep(&train, None, shape, cfg, s)?;
                let sel = res.selected;
                attach_test(&mut res.points[sel], &test, &cfg.build.fairness)?;
                (res.points[sel].clone(), Some(res))
            }
        };
        folds.push(FoldOutcome { fold: k, report, sweep });
    }
    let points = folds.iter().map(|f| TradeoffRow::from_report(f.fold, &f.report)).collect();
    Ok(CvResult { folds, points })
}

// ---------------------------------------------------------------------------
// exhaustive oracle

pub const ORACLE_MAX_DEPTH: usize = 2;
pub const ORACLE_MAX_RECORDS: usize = 30;
pub const ORACLE_MAX_FEATURES: usize = 4;
pub const ORACLE_MAX_CLASSES: usize = 3;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub objective: f64,
    pub tree: DecisionTree,
    /// Distinct leaf partitions examined.
    pub partitions: usize,
}

#[derive(Clone)]
struct SplitChoice {
    /// Position in the branch feature list.
    slot: usize,
    rule: BranchRule,
    /// Records (bitmask over the node's records) sent left.
    left: u32,
}

/// Candidate splits of the records in `mask`, deduplicated per feature.
fn candidate_splits(ds: &Dataset, features: &[usize], mask: u32) -> Vec<SplitChoice> {
    let schema = ds.schema();
    let members: Vec<usize> = (0..ds.len()).filter(|&i| mask >> i & 1 == 1).collect();
    let mut out = Vec::new();
    for (slot, &j) in features.iter().enumerate() {
        let mut seen = HashSet::new();
        match &schema.features[j].kind {
            FeatureKind::Quantitative => {
                let mut vals: Vec<f64> = members.iter().map(|&i| ds.value(i, j).num()).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                let mut cutoffs = vec![vals.first().map_or(-1.0, |v| v - 1.0)];
                cutoffs.extend(vals.windows(2).map(|w| (w[0] + w[1]) / 2.0));
                for c in cutoffs {
                    let left = members.iter().filter(|&&i| ds.value(i, j).num() <= c).fold(0u32, |m, &i| m | 1 << i);
                    if seen.insert(left) {
                        out.push(SplitChoice { slot, rule: BranchRule::Threshold { feature: j, cutoff: c }, left });
                    }
                }
            }
            FeatureKind::Categorical { levels } => {
                for subset in 0u32..(1 << levels.len()) {
                    let left =
                        members.iter().filter(|&&i| subset >> ds.value(i, j).level() & 1 == 1).fold(0u32, |m, &i| m | 1 << i);
                    if seen.insert(left) {
                        let left_levels = (0..levels.len()).filter(|k| subset >> k & 1 == 1).collect();
                        out.push(SplitChoice { slot, rule: BranchRule::Subset { feature: j, left_levels }, left });
                    }
                }
            }
        }
    }
    out
}

/// Per-leaf statistics that make the objective of a labelling cheap.
struct LeafStats {
    /// Records of each true class.
    class_counts: Vec<f64>,
    size: f64,
    /// `[group][class]` counts (DIDI) or `[ref][group]` kernel weight sums (DTDI).
    group_counts: Vec<f64>,
}

struct Scorer<'a> {
    n: usize,
    n_groups: usize,
    n_classes: usize,
    groups: Vec<usize>,
    labels: &'a [usize],
    /// Kernel columns (DTDI) with overall and per-group sums.
    w: Option<WeightMatrix>,
    col_total: Vec<f64>,
    col_group: Vec<f64>,
    group_size: Vec<f64>,
    lambda: f64,
}

impl Scorer<'_> {
    fn leaf(&self, mask: u32) -> LeafStats {
        let mut class_counts = vec![0.0; self.n_classes];
        let mut size = 0.0;
        let mut group_counts = match &self.w {
            None => vec![0.0; self.n_groups],
            Some(_) => vec![0.0; self.n * self.n_groups],
        };
        for i in (0..self.n).filter(|&i| mask >> i & 1 == 1) {
            class_counts[self.labels[i]] += 1.0;
            size += 1.0;
            match &self.w {
                None => group_counts[self.groups[i]] += 1.0,
                Some(w) => {
                    for j in 0..self.n {
                        group_counts[j * self.n_groups + self.groups[i]] += w.get(i, j);
                    }
                }
            }
        }
        LeafStats { class_counts, size, group_counts }
    }

    /// Objective of giving leaf `l` the label `labels[l]`.
    fn objective(&self, leaves: &[LeafStats], labelling: &[usize]) -> f64 {
        let mut wrong = 0.0;
        for (leaf, &y) in leaves.iter().zip(labelling) {
            wrong += leaf.size - leaf.class_counts[y];
        }
        let loss = wrong / self.n as f64;
        if self.lambda == 0.0 {
            return loss;
        }
        let mut index = 0.0;
        let nn = self.n as f64;
        match &self.w {
            None => {
                for y in 0..self.n_classes {
                    let mut per_group = vec![0.0; self.n_groups];
                    let mut total = 0.0;
                    for (leaf, &ly) in leaves.iter().zip(labelling) {
                        if ly == y {
                            for g in 0..self.n_groups {
                                per_group[g] += leaf.group_counts[g];
                            }
                            total += leaf.size;
                        }
                    }
                    for g in 0..self.n_groups {
                        index += (total / nn - per_group[g] / self.group_size[g]).abs();
                    }
                }
            }
            Some(_) => {
                let ng = self.n_groups;
                for y in 0..self.n_classes {
                    for j in 0..self.n {
                        let mut per_group = vec![0.0; ng];
                        for (leaf, &ly) in leaves.iter().zip(labelling) {
                            if ly == y {
                                for g in 0..ng {
                                    per_group[g] += leaf.group_counts[j * ng + g];
                                }
                            }
                        }
                        let total: f64 = per_group.iter().sum();
                        for g in 0..ng {
                            index += (total / self.col_total[j] - per_group[g] / self.col_group[j * ng + g]).abs();
                        }
                    }
                }
            }
        }
        loss + self.lambda * index
    }
}

/// Exact minimum of `loss + lambda * index` over every classical tree of the
/// given depth, by enumeration of splits and leaf labels.
pub fn brute_force_optimum(ds: &Dataset, shape: TreeShape, cfg: &BuildConfig) -> Result<OracleResult> {
    let schema = ds.schema();
    let n = ds.len();
    let features: Vec<usize> = schema.unprotected_quantitative().into_iter().chain(schema.unprotected_categorical()).collect();
    let scope = |m: &str| Err(TrainError::OutOfScope(m.to_string()));
    if cfg.class != TreeClass::Classical || cfg.task != Task::Classification {
        return scope("only classical classification trees are enumerated");
    }
    if shape.depth() > ORACLE_MAX_DEPTH {
        return scope("depth above 2");
    }
    if n > ORACLE_MAX_RECORDS {
        return scope("more than 30 records");
    }
    if features.len() > ORACLE_MAX_FEATURES || features.is_empty() {
        return scope("between 1 and 4 unprotected features required");
    }
    if schema.n_classes() > ORACLE_MAX_CLASSES {
        return scope("more than 3 classes");
    }
    let labels = ds.class_labels().expect("classification labels");
    let groups = ds.groups();
    let n_groups = schema.n_groups();
    let mut group_size = vec![0.0; n_groups];
    for &g in &groups {
        group_size[g] += 1.0;
    }
    if cfg.lambda > 0.0 {
        if let Some(g) = group_size.iter().position(|&s| s == 0.0) {
            return Err(FairnessError::EmptyGroup(schema.group_name(g)).into());
        }
    }
    let w = match (cfg.lambda > 0.0, cfg.fairness.index) {
        (true, IndexFamily::Dtdi) => Some(fairness::weights_for(ds, &cfg.fairness)?),
        _ => None,
    };
    let (mut col_total, mut col_group) = (Vec::new(), Vec::new());
    if let Some(w) = &w {
        col_total = vec![0.0; n];
        col_group = vec![0.0; n * n_groups];
        for j in 0..n {
            for i in 0..n {
                col_total[j] += w.get(i, j);
                col_group[j * n_groups + groups[i]] += w.get(i, j);
            }
        }
    }
    let scorer = Scorer {
        n,
        n_groups,
        n_classes: schema.n_classes(),
        groups,
        labels,
        w,
        col_total,
        col_group,
        group_size,
        lambda: cfg.lambda,
    };

    let all: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let uses_ok = |slots: &[usize]| -> bool {
        match cfg.max_feature_uses {
            None => true,
            Some(limit) => (0..features.len()).all(|s| slots.iter().filter(|&&x| x == s).count() <= limit),
        }
    };

    // enumerate split assignments as (rules, leaf masks)
    let mut layouts: Vec<(Vec<SplitChoice>, Vec<u32>)> = Vec::new();
    let root = candidate_splits(ds, &features, all);
    match shape.depth() {
        1 => {
            for s in root {
                let leaves = vec![s.left, all & !s.left];
                layouts.push((vec![s], leaves));
            }
        }
        _ => {
            for s in &root {
                let (lm, rm) = (s.left, all & !s.left);
                let left_c = candidate_splits(ds, &features, lm);
                let right_c = candidate_splits(ds, &features, rm);
                for a in &left_c {
                    for b in &right_c {
                        if !uses_ok(&[s.slot, a.slot, b.slot]) {
                            continue;
                        }
                        let leaves = vec![a.left & lm, lm & !a.left, b.left & rm, rm & !b.left];
                        layouts.push((vec![s.clone(), a.clone(), b.clone()], leaves));
                    }
                }
            }
        }
    }
    if shape.depth() == 1 {
        layouts.retain(|(rules, _)| uses_ok(&[rules[0].slot]));
    }
    let mut seen = HashSet::new();
    layouts.retain(|(_, leaves)| seen.insert(leaves.clone()));
    if layouts.is_empty() {
        return Err(TrainError::Infeasible);
    }

    let n_classes = schema.n_classes();
    let n_leaves = shape.n_leaves();
    let mut best = (f64::INFINITY, 0usize, vec![0usize; n_leaves]);
    let mut labelling = vec![0usize; n_leaves];
    for (k, (_, leaves)) in layouts.iter().enumerate() {
        let stats: Vec<LeafStats> = leaves.iter().map(|&m| scorer.leaf(m)).collect();
        labelling.fill(0);
        loop {
            let obj = scorer.objective(&stats, &labelling);
            if obj < best.0 - 1e-12 {
                best = (obj, k, labelling.clone());
            }
            // next labelling in mixed radix
            let mut pos = 0;
            while pos < n_leaves {
                labelling[pos] += 1;
                if labelling[pos] < n_classes {
                    break;
                }
                labelling[pos] = 0;
                pos += 1;
            }
            if pos == n_leaves {
                break;
            }
        }
    }
    let (objective, k, labels) = best;
    let tree = DecisionTree {
        shape,
        class: TreeClass::Classical,
        task: Task::Classification,
        branches: layouts[k].0.iter().map(|s| s.rule.clone()).collect(),
        leaves: labels.into_iter().map(LeafRule::Label).collect(),
        schema_fingerprint: schema.fingerprint(),
        normalization: ds.normalization().cloned().unwrap_or_else(|| NormalizationReport::identity(schema)),
    };
    Ok(OracleResult { objective, tree, partitions: layouts.len() })
}

// ---------------------------------------------------------------------------
// greedy warm start

fn impurity(ds: &Dataset, members: &[usize]) -> f64 {
    match ds.labels() {
        Labels::Class(y) => {
            let mut counts = vec![0usize; ds.schema().n_classes()];
            for &i in members {
                counts[y[i]] += 1;
            }
            (members.len() - counts.iter().copied().max().unwrap_or(0)) as f64
        }
        Labels::Real(y) => {
            let m = median(members.iter().map(|&i| y[i]).collect());
            members.iter().map(|&i| (y[i] - m).abs()).sum()
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

fn leaf_rule(ds: &Dataset, members: &[usize], class: TreeClass, fallback: &[usize]) -> LeafRule {
    let members = if members.is_empty() { fallback } else { members };
    match ds.labels() {
        Labels::Class(y) => {
            let mut counts = vec![0usize; ds.schema().n_classes()];
            for &i in members {
                counts[y[i]] += 1;
            }
            let best = counts.iter().enumerate().fold(0, |b, (c, &k)| if k > counts[b] { c } else { b });
            LeafRule::Label(best)
        }
        Labels::Real(_) if class == TreeClass::LinearLeafing => LeafRule::Linear(Vec::new()),
        Labels::Real(y) => LeafRule::Value(median(members.iter().map(|&i| y[i]).collect()).clamp(-1.0, 1.0)),
    }
}

/// Top-down greedy tree over the formulation's branching features, using
/// misclassification (classification) or absolute-deviation (regression)
/// impurity. Nodes without an improving split send every record left.
pub fn greedy_tree(ds: &Dataset, form: &milp::Formulation) -> Result<DecisionTree> {
    let schema = ds.schema();
    let shape = form.shape;
    let features: Vec<usize> = form.quant.iter().chain(&form.cat).copied().collect();
    let linear = form.class == TreeClass::LinearBranching;
    let wrap = |rule: BranchRule| match (linear, rule) {
        (true, BranchRule::Threshold { feature, cutoff }) => BranchRule::Linear { weights: vec![(feature, 1.0)], cutoff },
        (_, r) => r,
    };
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut node_members: Vec<Vec<usize>> = vec![Vec::new(); shape.n_branch() + shape.n_leaves()];
    node_members[0] = all.clone();
    let mut branches = Vec::with_capacity(shape.n_branch());
    for v in 0..shape.n_branch() {
        let members = std::mem::take(&mut node_members[v]);
        let base = impurity(ds, &members);
        let mut best: Option<(f64, BranchRule, Vec<usize>, Vec<usize>)> = None;
        for &j in &features {
            let mut try_split = |rule: BranchRule| {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| rule.goes_left(ds.record(i), schema).unwrap_or(false));
                let score = impurity(ds, &l) + impurity(ds, &r);
                if score < best.as_ref().map_or(base - 1e-12, |b| b.0 - 1e-12) {
                    best = Some((score, rule, l, r));
                }
            };
            match &schema.features[j].kind {
                FeatureKind::Quantitative => {
                    let mut vals: Vec<f64> = members.iter().map(|&i| ds.value(i, j).num()).collect();
                    vals.sort_by(f64::total_cmp);
                    vals.dedup();
                    for w in vals.windows(2) {
                        try_split(wrap(BranchRule::Threshold { feature: j, cutoff: (w[0] + w[1]) / 2.0 }));
                    }
                }
                FeatureKind::Categorical { levels } => {
                    if levels.len() <= 10 {
                        for subset in 1u32..(1 << levels.len()) - 1 {
                            let left_levels = (0..levels.len()).filter(|k| subset >> k & 1 == 1).collect();
                            try_split(BranchRule::Subset { feature: j, left_levels });
                        }
                    } else {
                        for k in 0..levels.len() {
                            try_split(BranchRule::Subset { feature: j, left_levels: vec![k] });
                        }
                    }
                }
            }
        }
        let (rule, l, r) = match best {
            Some((_, rule, l, r)) => (rule, l, r),
            None => {
                // degenerate: everything left
                let j = features[0];
                let rule = match &schema.features[j].kind {
                    FeatureKind::Quantitative => wrap(BranchRule::Threshold { feature: j, cutoff: 1.0 }),
                    FeatureKind::Categorical { levels } => {
                        BranchRule::Subset { feature: j, left_levels: (0..levels.len()).collect() }
                    }
                };
                (rule, members.clone(), Vec::new())
            }
        };
        node_members[2 * v + 1] = l;
        node_members[2 * v + 2] = r;
        branches.push(rule);
    }
    let n_branch = shape.n_branch();
    let leaves = (0..shape.n_leaves())
        .map(|l| {
            let sibling = if (n_branch + l) % 2 == 1 { n_branch + l + 1 } else { n_branch + l - 1 };
            let fallback = if node_members[sibling].is_empty() { &all } else { &node_members[sibling] };
            leaf_rule(ds, &node_members[n_branch + l], form.class, fallback)
        })
        .collect();
    Ok(DecisionTree {
        shape,
        class: form.class,
        task: form.task,
        branches,
        leaves,
        schema_fingerprint: schema.fingerprint(),
        normalization: ds.normalization().cloned().unwrap_or_else(|| NormalizationReport::identity(schema)),
    })
}

/// Greedy tree encoded as a validated incumbent of `built`.
pub fn greedy_warmstart(ds: &Dataset, built: &milp::BuiltModel) -> Result<Incumbent> {
    let tree = greedy_tree(ds, &built.form)?;
    let x = milp::assignment_from_tree(built, ds, &tree)?;
    Ok(solver::install_incumbent(&built.model, x)?)
}
