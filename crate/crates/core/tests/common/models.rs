use fairtree::milp::{MilpModel, ObjectiveSense, Sense, VarKind};
use fairtree::solver::{solve_lp, LpStatus};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Small MILP with integer data: `n_bin` binaries, up to two bounded
/// continuous variables and a few rows whose right-hand sides are built
/// around a random binary point, so most instances are feasible.
pub fn random_model(rng: &mut ChaCha8Rng, n_bin: usize) -> MilpModel {
    let mut m = MilpModel::new("rand");
    m.sense = if rng.gen_bool(0.5) { ObjectiveSense::Minimize } else { ObjectiveSense::Maximize };
    let mut order: Vec<usize> = (0..n_bin).collect();
    let n_cont = rng.gen_range(0..=2);
    order.extend(n_bin..n_bin + n_cont);
    // binaries and continuous variables interleave
    order.shuffle(rng);
    for &k in &order {
        if k < n_bin {
            m.binary(format!("b{k}"));
        } else {
            let lo = rng.gen_range(-2..=0) as f64;
            m.continuous(format!("c{k}"), lo, lo + rng.gen_range(1..=4) as f64);
        }
    }
    for j in 0..m.n_vars() {
        m.set_objective(j, rng.gen_range(-5..=5) as f64);
    }
    m.objective_constant = rng.gen_range(-3..=3) as f64;
    let point: Vec<f64> =
        m.vars.iter().map(|v| if v.kind == VarKind::Binary { rng.gen_range(0..=1) as f64 } else { v.lower }).collect();
    for r in 0..rng.gen_range(1..=4) {
        let terms: Vec<(usize, f64)> =
            (0..m.n_vars()).filter_map(|j| rng.gen_bool(0.6).then(|| (j, rng.gen_range(-4..=4) as f64))).collect();
        let act: f64 = terms.iter().map(|&(j, a)| a * point[j]).sum();
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (Sense::Eq, act),
            1 | 2 => (Sense::Le, act + rng.gen_range(-1..=2) as f64),
            _ => (Sense::Ge, act - rng.gen_range(-1..=2) as f64),
        };
        m.add_row(format!("r{r}"), terms, sense, rhs);
    }
    m
}

/// Best objective and binary assignment over all `2^n` binary vectors, with
/// the continuous part solved as an LP. `None` when infeasible. The flag is
/// true when another binary vector attains the same objective.
pub fn enumerate_optimum(m: &MilpModel) -> Option<(f64, Vec<f64>, bool)> {
    let bins: Vec<usize> = m.binaries().collect();
    assert!(bins.len() <= 20);
    let better = |a: f64, b: f64| match m.sense {
        ObjectiveSense::Minimize => a < b,
        ObjectiveSense::Maximize => a > b,
    };
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut fixed = m.clone();
        for (k, &j) in bins.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            fixed.vars[j] = fairtree::milp::Variable { kind: VarKind::Continuous, lower: v, upper: v, ..fixed.vars[j].clone() };
        }
        let (obj, values) = if fixed.vars.iter().all(|v| v.lower == v.upper) {
            let x: Vec<f64> = fixed.vars.iter().map(|v| v.lower).collect();
            if fixed.rows.iter().any(|r| r.violation(&x) > 1e-9) {
                continue;
            }
            (m.objective_value(&x), x)
        } else {
            let sol = solve_lp(&fixed).unwrap();
            if sol.status != LpStatus::Optimal {
                assert_eq!(sol.status, LpStatus::Infeasible);
                continue;
            }
            (sol.objective, sol.values)
        };
        let bin_values: Vec<f64> = bins.iter().map(|&j| values[j]).collect();
        match &mut best {
            Some((b, _, tie)) if (obj - *b).abs() <= 1e-9 => *tie = true,
            Some((b, _, _)) if !better(obj, *b) => {}
            _ => best = Some((obj, bin_values, false)),
        }
    }
    best
}
