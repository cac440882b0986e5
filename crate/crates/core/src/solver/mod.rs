//! LP relaxation and branch-and-bound for binary mixed-integer programs.

mod lp;
pub mod mps;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{MilpModel, ObjectiveSense, VarKind, Violation};
use lp::{DualSimplex, Limits, LpOutcome};

pub use lp::ARTIFICIAL_BOUND;
pub use mps::{export_mps, import_mps, read_mps, write_mps, MpsError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("incumbent rejected: {} violated by {:.3e}", .0.what, .0.amount)]
    InvalidIncumbent(Violation),
    #[error("incumbent has {found} values but the model has {expected} variables")]
    IncumbentLength { expected: usize, found: usize },
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("numerical failure in the simplex after {iterations} iterations (basis dimension {rows})")]
    Numerical { iterations: u64, rows: usize },
}

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped at the time, node or cancellation limit with an incumbent.
    FeasibleTimeLimit,
    /// Stopped at a limit before any feasible point was found.
    NoSolutionTimeLimit,
    Infeasible,
    Unbounded,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleTimeLimit => "feasible-time-limit",
            SolveStatus::NoSolutionTimeLimit => "no-solution-time-limit",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
        }
    }

    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchingRule {
    MostFractional,
    PseudoCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeOrder {
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Seconds.
    pub time_limit: Option<f64>,
    pub node_limit: Option<u64>,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub integrality_tol: f64,
    pub feasibility_tol: f64,
    pub branching: BranchingRule,
    pub node_order: NodeOrder,
    pub seed: u64,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            time_limit: None,
            node_limit: None,
            abs_gap: 1e-7,
            rel_gap: 1e-9,
            integrality_tol: 1e-6,
            feasibility_tol: 1e-9,
            branching: BranchingRule::MostFractional,
            node_order: NodeOrder::BestBound,
            seed: 0,
            cancel: None,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.abs_gap) && self.rel_gap >= 0.0 && positive(self.integrality_tol) && positive(self.feasibility_tol)) {
            return Err(SolverError::Options("tolerances must be positive".into()));
        }
        if self.integrality_tol >= 0.5 {
            return Err(SolverError::Options("integrality tolerance must be below 0.5".into()));
        }
        if self.time_limit.is_some_and(|t| !(t >= 0.0)) {
            return Err(SolverError::Options("time limit must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One sample of the bound trace, in the model's objective sense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub seconds: f64,
    pub nodes: u64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    /// Lower bound for minimization, upper bound for maximization.
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: u64,
    pub iterations: u64,
    pub wall_time: f64,
    pub trace: Vec<TracePoint>,
}

impl SolveResult {
    /// Bound-trace CSV. Times are written as 0 unless `with_time`.
    pub fn trace_csv(&self, with_time: bool) -> String {
        let mut out = String::from("time_s,node,lower,upper\n");
        for p in &self.trace {
            let t = if with_time { p.seconds } else { 0.0 };
            out.push_str(&format!("{},{},{},{}\n", t, p.nodes, fmt_bound(p.lower), fmt_bound(p.upper)));
        }
        out
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// A validated feasible assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub values: Vec<f64>,
    pub objective: f64,
}

/// Checks `values` against every bound, integrality mark and row of `model`.
pub fn install_incumbent(model: &MilpModel, values: Vec<f64>) -> Result<Incumbent> {
    if values.len() != model.n_vars() {
        return Err(SolverError::IncumbentLength { expected: model.n_vars(), found: values.len() });
    }
    if let Some(v) = model.first_violation(&values, 1e-6) {
        return Err(SolverError::InvalidIncumbent(v));
    }
    let objective = model.objective_value(&values);
    Ok(Incumbent { values, objective })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: u64,
}

/// Solves the linear relaxation of `model` (binaries relaxed to `[0, 1]`).
pub fn solve_lp(model: &MilpModel) -> Result<LpSolution> {
    solve_lp_with(model, 1e-9)
}

pub fn solve_lp_with(model: &MilpModel, feasibility_tol: f64) -> Result<LpSolution> {
    if let Some(status) = empty_row_status(model) {
        return Ok(LpSolution { status, values: vec![0.0; model.n_vars()], objective: f64::NAN, iterations: 0 });
    }
    let mut lp = DualSimplex::new(model, feasibility_tol);
    let outcome = lp.solve(&Limits::none());
    let sign = sense_sign(model);
    match outcome {
        LpOutcome::Optimal if lp.hits_artificial_bound() => Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: lp.values().to_vec(),
            objective: sign * f64::NEG_INFINITY,
            iterations: lp.iterations,
        }),
        LpOutcome::Optimal => {
            let values = lp.values().to_vec();
            let objective = model.objective_value(&values);
            Ok(LpSolution { status: LpStatus::Optimal, values, objective, iterations: lp.iterations })
        }
        LpOutcome::Infeasible => Ok(LpSolution {
            status: LpStatus::Infeasible,
            values: lp.values().to_vec(),
            objective: f64::NAN,
            iterations: lp.iterations,
        }),
        _ => Err(SolverError::Numerical { iterations: lp.iterations, rows: model.n_rows() }),
    }
}

fn sense_sign(model: &MilpModel) -> f64 {
    if model.sense == ObjectiveSense::Maximize {
        -1.0
    } else {
        1.0
    }
}

/// Infeasible if some row without terms cannot hold.
fn empty_row_status(model: &MilpModel) -> Option<LpStatus> {
    model.rows.iter().filter(|r| r.terms.is_empty()).any(|r| r.violation(&[]) > 1e-9).then_some(LpStatus::Infeasible)
}

struct Node {
    /// `(binary, value)` fixings relative to the root bounds.
    fixings: Vec<(usize, bool)>,
    /// Internal (minimization) LP bound.
    bound: f64,
    depth: usize,
    seq: u64,
    branch_var: usize,
    branch_value: f64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: smallest bound, then deepest, then most recent.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(self.depth.cmp(&other.depth)).then(self.seq.cmp(&other.seq))
    }
}

enum Open {
    Best(BinaryHeap<Node>),
    Stack(Vec<Node>),
}

impl Open {
    fn push(&mut self, node: Node) {
        match self {
            Open::Best(h) => h.push(node),
            Open::Stack(s) => s.push(node),
        }
    }

    fn pop(&mut self) -> Option<Node> {
        match self {
            Open::Best(h) => h.pop(),
            Open::Stack(s) => s.pop(),
        }
    }

    fn min_bound(&self) -> f64 {
        match self {
            Open::Best(h) => h.peek().map_or(f64::INFINITY, |n| n.bound),
            Open::Stack(s) => s.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Copy, Default)]
struct PseudoCost {
    down_sum: f64,
    down_n: u32,
    up_sum: f64,
    up_n: u32,
}

struct Search<'a> {
    model: &'a MilpModel,
    opts: &'a SolverOptions,
    sign: f64,
    lp: DualSimplex,
    root_lo: Vec<f64>,
    root_up: Vec<f64>,
    binaries: Vec<usize>,
    /// Tie-break rank per variable for pseudo-cost branching.
    rank: Vec<usize>,
    pseudo: Vec<PseudoCost>,
    /// Internal objective of the incumbent (no constant, minimization).
    best: f64,
    best_values: Option<Vec<f64>>,
    nodes: u64,
    seq: u64,
    start: Instant,
    deadline: Option<Instant>,
    trace: Vec<TracePoint>,
    last_lower: f64,
}

enum NodeSolve {
    Pruned,
    Integral,
    Fractional { bound: f64, var: usize, value: f64 },
    Aborted,
}

impl<'a> Search<'a> {
    fn internal(&self, x: &[f64]) -> f64 {
        self.sign * self.model.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    fn external(&self, internal: f64) -> f64 {
        self.sign * internal + self.model.objective_constant
    }

    fn cutoff(&self) -> f64 {
        if self.best.is_finite() {
            self.best - self.gap_allowance(self.best)
        } else {
            f64::INFINITY
        }
    }

    fn gap_allowance(&self, value: f64) -> f64 {
        self.opts.abs_gap.max(self.opts.rel_gap * value.abs())
    }

    fn limits(&self) -> Limits<'a> {
        Limits { deadline: self.deadline, cancel: self.opts.cancel.as_deref(), cutoff: self.cutoff() }
    }

    fn out_of_budget(&self) -> bool {
        self.opts.node_limit.is_some_and(|l| self.nodes >= l) || self.limits().expired()
    }

    fn record(&mut self, lower: f64) {
        let lower = lower.min(self.best);
        let upper = if self.best.is_finite() { self.external(self.best) } else { self.sign * f64::INFINITY };
        let lower_ext = if lower.is_finite() { self.external(lower) } else { self.sign * lower };
        let (lo, up) = if self.sign > 0.0 { (lower_ext, upper) } else { (upper, lower_ext) };
        self.last_lower = lower;
        self.trace.push(TracePoint { seconds: self.start.elapsed().as_secs_f64(), nodes: self.nodes, lower: lo, upper: up });
    }

    fn apply_fixings(&mut self, fixings: &[(usize, bool)]) {
        let mut lo = self.root_lo.clone();
        let mut up = self.root_up.clone();
        for &(j, v) in fixings {
            let b = if v { 1.0 } else { 0.0 };
            lo[j] = b;
            up[j] = b;
        }
        self.lp.set_bounds(&lo, &up);
    }

    /// Most fractional (or best pseudo-cost) binary of the current LP point.
    fn pick_branch(&self, x: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.integrality_tol;
        let frac: Vec<(usize, f64)> =
            self.binaries.iter().map(|&j| (j, x[j])).filter(|&(_, v)| (v - v.round()).abs() > tol).collect();
        if frac.is_empty() {
            return None;
        }
        match self.opts.branching {
            BranchingRule::MostFractional => {
                let mut best = frac[0];
                for &(j, v) in &frac[1..] {
                    if (v - 0.5).abs() < (best.1 - 0.5).abs() - 1e-12 {
                        best = (j, v);
                    }
                }
                Some(best)
            }
            BranchingRule::PseudoCost => {
                let (mut avg_d, mut avg_u, mut nd, mut nu) = (0.0, 0.0, 0u32, 0u32);
                for p in &self.pseudo {
                    if p.down_n > 0 {
                        avg_d += p.down_sum / p.down_n as f64;
                        nd += 1;
                    }
                    if p.up_n > 0 {
                        avg_u += p.up_sum / p.up_n as f64;
                        nu += 1;
                    }
                }
                let avg_d = if nd > 0 { avg_d / nd as f64 } else { 1.0 };
                let avg_u = if nu > 0 { avg_u / nu as f64 } else { 1.0 };
                let score = |j: usize, v: f64| {
                    let p = self.pseudo[j];
                    let d = if p.down_n > 0 { p.down_sum / p.down_n as f64 } else { avg_d };
                    let u = if p.up_n > 0 { p.up_sum / p.up_n as f64 } else { avg_u };
                    let f = v - v.floor();
                    (d * f).max(1e-6) * (u * (1.0 - f)).max(1e-6)
                };
                let mut best = frac[0];
                let mut best_s = score(best.0, best.1);
                for &(j, v) in &frac[1..] {
                    let s = score(j, v);
                    if s > best_s * (1.0 + 1e-9) || ((s - best_s).abs() <= best_s * 1e-9 && self.rank[j] < self.rank[best.0]) {
                        best = (j, v);
                        best_s = s;
                    }
                }
                Some(best)
            }
        }
    }

    /// Solves the LP under `fixings`; integral points are polished into incumbents.
    fn solve_node(&mut self, fixings: &[(usize, bool)]) -> Result<NodeSolve> {
        self.apply_fixings(fixings);
        self.nodes += 1;
        let limits = self.limits();
        let outcome = self.lp.solve(&limits);
        match outcome {
            LpOutcome::Aborted => return Ok(NodeSolve::Aborted),
            LpOutcome::Infeasible | LpOutcome::Cutoff => return Ok(NodeSolve::Pruned),
            LpOutcome::Numerical => {
                return Err(SolverError::Numerical { iterations: self.lp.iterations, rows: self.model.n_rows() })
            }
            LpOutcome::Optimal => {}
        }
        let x = self.lp.values().to_vec();
        let bound = self.internal(&x);
        if bound >= self.cutoff() {
            return Ok(NodeSolve::Pruned);
        }
        match self.pick_branch(&x) {
            Some((var, value)) => Ok(NodeSolve::Fractional { bound, var, value }),
            None => {
                self.polish(&x)?;
                Ok(NodeSolve::Integral)
            }
        }
    }

    /// Fixes every binary at its rounded value and re-solves for the
    /// continuous part; accepts the point if it passes the model check.
    fn polish(&mut self, x: &[f64]) -> Result<()> {
        let mut lo = self.root_lo.clone();
        let mut up = self.root_up.clone();
        for &j in &self.binaries {
            let v = x[j].round();
            lo[j] = v;
            up[j] = v;
        }
        self.lp.set_bounds(&lo, &up);
        let opts: &'a SolverOptions = self.opts;
        let limits = Limits { deadline: self.deadline, cancel: opts.cancel.as_deref(), cutoff: f64::INFINITY };
        if self.lp.solve(&limits) != LpOutcome::Optimal {
            return Ok(());
        }
        let mut values = self.lp.values().to_vec();
        for &j in &self.binaries {
            values[j] = values[j].round();
        }
        if self.model.first_violation(&values, 1e-6).is_some() {
            return Ok(());
        }
        let obj = self.internal(&values);
        if obj < self.best - 1e-12 || self.best_values.is_none() {
            self.best = obj;
            self.best_values = Some(values);
            let lower = self.last_lower;
            self.record(lower);
        }
        Ok(())
    }

    fn update_pseudo(&mut self, var: usize, value: f64, up: bool, parent: f64, child: Option<f64>) {
        let Some(child) = child else { return };
        let f = value - value.floor();
        let dist = if up { 1.0 - f } else { f };
        if dist <= 0.0 {
            return;
        }
        let gain = ((child - parent) / dist).max(0.0);
        let p = &mut self.pseudo[var];
        if up {
            p.up_sum += gain;
            p.up_n += 1;
        } else {
            p.down_sum += gain;
            p.down_n += 1;
        }
    }
}

/// Branch-and-bound over the binary variables of `model`, optionally
/// starting from a validated incumbent.
pub fn branch_and_bound(model: &MilpModel, opts: &SolverOptions, incumbent: Option<&Incumbent>) -> Result<SolveResult> {
    opts.validate()?;
    let start = Instant::now();
    let sign = sense_sign(model);
    let n = model.n_vars();
    let finish = |status: SolveStatus,
                  values: Vec<f64>,
                  objective: f64,
                  bound: f64,
                  nodes: u64,
                  iterations: u64,
                  trace: Vec<TracePoint>| {
        let gap = if objective.is_finite() && bound.is_finite() {
            ((objective - bound).abs() / objective.abs().max(1.0)).max(0.0)
        } else {
            f64::INFINITY
        };
        SolveResult {
            status,
            values,
            objective,
            best_bound: bound,
            gap,
            nodes,
            iterations,
            wall_time: start.elapsed().as_secs_f64(),
            trace,
        }
    };
    if empty_row_status(model).is_some() {
        return Ok(finish(SolveStatus::Infeasible, vec![0.0; n], f64::NAN, f64::NAN, 0, 0, Vec::new()));
    }

    let binaries: Vec<usize> = model.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Binary).map(|(j, _)| j).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let mut rank = vec![0; n];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    let mut s = Search {
        model,
        opts,
        sign,
        lp: DualSimplex::new(model, opts.feasibility_tol),
        root_lo: model.vars.iter().map(|v| v.lower).collect(),
        root_up: model.vars.iter().map(|v| v.upper).collect(),
        binaries,
        rank,
        pseudo: vec![PseudoCost::default(); n],
        best: f64::INFINITY,
        best_values: None,
        nodes: 0,
        seq: 0,
        start,
        deadline: opts.time_limit.map(|t| start + Duration::from_secs_f64(t)),
        trace: Vec::new(),
        last_lower: f64::NEG_INFINITY,
    };
    if let Some(inc) = incumbent {
        if inc.values.len() != n {
            return Err(SolverError::IncumbentLength { expected: n, found: inc.values.len() });
        }
        s.best = s.internal(&inc.values);
        s.best_values = Some(inc.values.clone());
    }

    let mut open = match opts.node_order {
        NodeOrder::BestBound => Open::Best(BinaryHeap::new()),
        NodeOrder::DepthFirst => Open::Stack(Vec::new()),
    };
    let mut limited = false;
    let root = s.solve_node(&[])?;
    match root {
        NodeSolve::Aborted => limited = true,
        NodeSolve::Pruned => {
            if s.best_values.is_none() {
                s.record(f64::INFINITY);
                let trace = s.trace;
                return Ok(finish(SolveStatus::Infeasible, vec![0.0; n], f64::NAN, f64::NAN, s.nodes, s.lp.iterations, trace));
            }
            s.record(s.best);
        }
        NodeSolve::Integral => {
            if s.lp.hits_artificial_bound() {
                let obj = sign * f64::NEG_INFINITY;
                return Ok(finish(SolveStatus::Unbounded, s.lp.values().to_vec(), obj, obj, s.nodes, s.lp.iterations, s.trace));
            }
            let best = s.best;
            s.record(best);
        }
        NodeSolve::Fractional { bound, var, value } => {
            if s.lp.hits_artificial_bound() {
                let obj = sign * f64::NEG_INFINITY;
                return Ok(finish(SolveStatus::Unbounded, s.lp.values().to_vec(), obj, obj, s.nodes, s.lp.iterations, s.trace));
            }
            s.record(bound);
            let seq = s.seq;
            s.seq += 1;
            open.push(Node { fixings: Vec::new(), bound, depth: 0, seq, branch_var: var, branch_value: value });
        }
    }

    while !limited {
        let Some(node) = open.pop() else { break };
        if node.bound >= s.cutoff() {
            continue;
        }
        if s.out_of_budget() {
            open.push(node);
            limited = true;
            break;
        }
        // far child first so the near child is explored first
        let near_up = node.branch_value >= 0.5;
        for up in [!near_up, near_up] {
            let mut fixings = node.fixings.clone();
            fixings.push((node.branch_var, up));
            match s.solve_node(&fixings)? {
                NodeSolve::Aborted => {
                    limited = true;
                    open.push(Node { fixings: node.fixings.clone(), ..node });
                    break;
                }
                NodeSolve::Pruned => {}
                NodeSolve::Integral => {
                    let child = s.internal(s.lp.values());
                    s.update_pseudo(node.branch_var, node.branch_value, up, node.bound, Some(child));
                }
                NodeSolve::Fractional { bound, var, value } => {
                    s.update_pseudo(node.branch_var, node.branch_value, up, node.bound, Some(bound));
                    let seq = s.seq;
                    s.seq += 1;
                    open.push(Node { fixings, bound, depth: node.depth + 1, seq, branch_var: var, branch_value: value });
                }
            }
        }
        if limited {
            break;
        }
        let lower = open.min_bound().min(s.best);
        if lower > s.last_lower + 1e-9 && lower.is_finite() {
            s.record(lower);
        }
        if s.best.is_finite() && s.best - open.min_bound() <= s.gap_allowance(s.best) {
            break;
        }
    }

    let lower = if limited { open.min_bound().min(s.best) } else { s.best };
    let iterations = s.lp.iterations;
    let nodes = s.nodes;
    match s.best_values.take() {
        Some(values) => {
            let objective = s.external(s.best);
            let bound = if lower.is_finite() { s.external(lower) } else { sign * f64::NEG_INFINITY };
            if !limited {
                let last = TracePoint { seconds: start.elapsed().as_secs_f64(), nodes, lower: objective, upper: objective };
                s.trace.push(last);
            }
            let status = if limited { SolveStatus::FeasibleTimeLimit } else { SolveStatus::Optimal };
            Ok(finish(status, values, objective, bound, nodes, iterations, s.trace))
        }
        None => {
            let status = if limited { SolveStatus::NoSolutionTimeLimit } else { SolveStatus::Infeasible };
            let bound = if limited && lower.is_finite() { s.external(lower) } else { f64::NAN };
            Ok(finish(status, vec![0.0; n], f64::NAN, bound, nodes, iterations, s.trace))
        }
    }
}
