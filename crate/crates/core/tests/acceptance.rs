//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use fairtree::data::{Dataset, FeatureSchema, Labels, Value};
use fairtree::fairness::{self, FairnessConfig, IndexFamily, Kernel, WeightMatrix, ZeroDenominatorPolicy};
use fairtree::milp::{self, BuildConfig};
use fairtree::solver::{branch_and_bound, SolveStatus, SolverOptions};
use fairtree::training::{self, brute_force_optimum, fit, FitConfig, StopReason, SweepConfig};
use fairtree::tree::{Prediction, Task, TreeClass, TreeShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("oracle optimality", oracle_optimality),
        ("fairness-index correctness", index_correctness),
        ("zero-discrimination attainability", zero_discrimination),
        ("scalarization monotonicity", monotonicity),
        ("mistreatment-free classifier has no disparate impact", mistreatment_free),
        ("bound-trace validity", bound_trace),
        ("solver oracle", solver_oracle),
        ("routing/extraction consistency", routing_consistency),
        ("reproducibility", reproducibility),
        ("gamma-audit consistency", gamma_audit),
    ];
    let start = Instant::now();
    let results: Vec<(Result<String, String>, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|&(_, check)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
                        Err(e
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_default())
                    });
                    (r, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failed = 0;
    for (k, ((name, _), (res, secs))) in criteria.iter().zip(&results).enumerate() {
        match res {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.1}s)", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn classical(lambda: f64, fairness: FairnessConfig) -> BuildConfig {
    BuildConfig::new(TreeClass::Classical, Task::Classification).with_lambda(lambda).with_fairness(fairness)
}

fn oracle_optimality() -> Result<String, String> {
    let instances = common::oracle_instances(7, 52);
    let mut depth_two = 0;
    let mut with_cats = 0;
    for (k, inst) in instances.iter().enumerate() {
        ensure!(inst.ds.len() <= 20 && inst.ds.schema().unprotected().len() <= 3, "instance {k} out of range");
        depth_two += (inst.depth == 2) as usize;
        with_cats += (!inst.ds.schema().unprotected_categorical().is_empty()) as usize;
        let cfg = classical(inst.lambda, inst.fairness);
        let shape = TreeShape::new(inst.depth).unwrap();
        let oracle = brute_force_optimum(&inst.ds, shape, &cfg).map_err(|e| e.to_string())?;
        let rep = fit(&inst.ds, shape, &FitConfig::new(cfg), None).map_err(|e| format!("instance {k}: {e}"))?;
        ensure!(
            (oracle.objective - rep.objective).abs() <= 1e-6,
            "instance {k}: milp {} vs enumeration {}",
            rep.objective,
            oracle.objective
        );
    }
    Ok(format!("{} instances ({depth_two} of depth 2, {with_cats} with categorical features) match enumeration", instances.len()))
}

/// Random dataset with one or two protected features whose level
/// combinations all occur.
fn random_fairness_dataset(rng: &mut ChaCha8Rng, regression: bool) -> Dataset {
    let n_quant = rng.gen_range(1..=2);
    let n_cat = rng.gen_range(0..=1);
    let protected: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(2..=3)).collect();
    let combos: usize = protected.iter().product();
    let n = rng.gen_range(combos.max(5)..=50);
    let n_classes = rng.gen_range(2..=3);
    let mut text = String::new();
    for q in 0..n_quant {
        text.push_str(&format!("feature x{q} quantitative unprotected\n"));
    }
    for c in 0..n_cat {
        text.push_str(&format!("feature c{c} categorical unprotected u,v,w\n"));
    }
    for (p, &levels) in protected.iter().enumerate() {
        let names: Vec<String> = (0..levels).map(|l| format!("g{l}")).collect();
        text.push_str(&format!("feature p{p} categorical protected {}\n", names.join(",")));
    }
    if regression {
        text.push_str("label y regression\n");
    } else {
        let names: Vec<String> = (0..n_classes).map(|k| format!("k{k}")).collect();
        text.push_str(&format!("label y classification {}\n", names.join(",")));
    }
    let schema = Arc::new(FeatureSchema::parse(&text).unwrap());
    let records: Vec<Vec<Value>> = (0..n)
        .map(|i| {
            let mut r: Vec<Value> = (0..n_quant).map(|_| Value::Num(rng.gen_range(0..=8) as f64 / 8.0)).collect();
            r.extend((0..n_cat).map(|_| Value::Level(rng.gen_range(0..3))));
            let mut code = i;
            for &levels in &protected {
                r.push(Value::Level(if i < combos { code % levels } else { rng.gen_range(0..levels) }));
                code /= levels;
            }
            r
        })
        .collect();
    let labels = if regression {
        Labels::Real((0..n).map(|_| rng.gen_range(-10..=10) as f64 / 10.0).collect())
    } else {
        Labels::Class((0..n).map(|_| rng.gen_range(0..n_classes)).collect())
    };
    Dataset::new(schema, records, labels).unwrap()
}

/// Protected value tuple of every record.
fn protected_tuples(ds: &Dataset) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let prot = ds.schema().protected();
    let tuples: Vec<Vec<usize>> = (0..ds.len()).map(|i| prot.iter().map(|&f| ds.value(i, f).level()).collect()).collect();
    let mut distinct = tuples.clone();
    distinct.sort();
    distinct.dedup();
    (tuples, distinct)
}

fn oracle_knn(ds: &Dataset, k: usize) -> Vec<Vec<f64>> {
    let n = ds.len();
    let schema = ds.schema();
    let dist = |a: usize, b: usize| -> f64 {
        let mut d = 0.0;
        for &f in &schema.unprotected() {
            match (ds.value(a, f), ds.value(b, f)) {
                (Value::Num(x), Value::Num(y)) => d += (x - y) * (x - y),
                (Value::Level(x), Value::Level(y)) => d += (x != y) as u8 as f64,
                _ => unreachable!(),
            }
        }
        d
    };
    // w[j][i]
    let mut w = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        others.sort_by(|&a, &b| dist(a, j).partial_cmp(&dist(b, j)).unwrap().then(a.cmp(&b)));
        for &i in &others[..k] {
            w[j][i] = 1.0;
        }
    }
    w
}

/// Weighted means of each outcome column, overall and per protected tuple,
/// summed as absolute gaps over reference points. `None` on a zero
/// denominator.
fn oracle_treatment(tuples: &[Vec<usize>], groups: &[Vec<usize>], outcomes: &[Vec<f64>], w: &[Vec<f64>]) -> Option<f64> {
    let n = tuples.len();
    let mut total = 0.0;
    for col in outcomes {
        for g in groups {
            for wj in w.iter().take(n) {
                let all: f64 = (0..n).map(|i| wj[i]).sum();
                let in_g: f64 = (0..n).filter(|&i| &tuples[i] == g).map(|i| wj[i]).sum();
                if all == 0.0 || in_g == 0.0 {
                    return None;
                }
                let overall = (0..n).map(|i| wj[i] * col[i]).sum::<f64>() / all;
                let cond = (0..n).filter(|&i| &tuples[i] == g).map(|i| wj[i] * col[i]).sum::<f64>() / in_g;
                total += (cond - overall).abs();
            }
        }
    }
    Some(total)
}

fn oracle_impact(tuples: &[Vec<usize>], groups: &[Vec<usize>], outcomes: &[Vec<f64>]) -> f64 {
    let n = tuples.len();
    let mut total = 0.0;
    for col in outcomes {
        let overall = col.iter().sum::<f64>() / n as f64;
        for g in groups {
            let members: Vec<usize> = (0..n).filter(|&i| &tuples[i] == g).collect();
            let mean = members.iter().map(|&i| col[i]).sum::<f64>() / members.len() as f64;
            total += (mean - overall).abs();
        }
    }
    total
}

fn index_correctness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut knn_checked = 0;
    let mut zero_denominators = 0;
    for t in 0..100 {
        let regression = t % 2 == 1;
        let ds = random_fairness_dataset(&mut rng, regression);
        let n = ds.len();
        let (tuples, groups) = protected_tuples(&ds);
        let outcomes: Vec<Vec<f64>> = match ds.labels() {
            Labels::Class(y) => {
                let k = ds.schema().classes().unwrap().len();
                (0..k).map(|c| y.iter().map(|&v| (v == c) as u8 as f64).collect()).collect()
            }
            Labels::Real(v) => vec![v.clone()],
        };
        let unit = vec![vec![1.0; n]; n];
        let impact = oracle_impact(&tuples, &groups, &outcomes);
        let unit_treatment = oracle_treatment(&tuples, &groups, &outcomes, &unit).unwrap();
        let (didi, dtdi_unit) = match ds.labels() {
            Labels::Class(y) => (fairness::didi_c(&ds, y), fairness::dtdi_c(&ds, y, &WeightMatrix::unit(n))),
            Labels::Real(v) => (fairness::didi_r(&ds, v), fairness::dtdi_r(&ds, v, &WeightMatrix::unit(n))),
        };
        let didi = didi.map_err(|e| format!("dataset {t}: {e}"))?;
        let dtdi_unit = dtdi_unit.map_err(|e| format!("dataset {t}: {e}"))?;
        ensure!((didi - impact).abs() <= 1e-9, "dataset {t}: didi {didi} vs oracle {impact}");
        ensure!((dtdi_unit - unit_treatment).abs() <= 1e-9, "dataset {t}: unit dtdi {dtdi_unit} vs oracle {unit_treatment}");
        ensure!(dtdi_unit == n as f64 * didi, "dataset {t}: unit dtdi {dtdi_unit} != {n} * {didi}");

        let k = rng.gen_range(1..=(n - 1).min(6));
        let w = fairness::knn_weights(&ds, k).map_err(|e| e.to_string())?;
        let ow = oracle_knn(&ds, k);
        for (j, row) in ow.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                ensure!(w.get(i, j) == v, "dataset {t}: kernel differs at ({i}, {j})");
            }
        }
        let got = match ds.labels() {
            Labels::Class(y) => fairness::dtdi_c(&ds, y, &w),
            Labels::Real(v) => fairness::dtdi_r(&ds, v, &w),
        };
        match (oracle_treatment(&tuples, &groups, &outcomes, &ow), got) {
            (Some(expected), Ok(v)) => {
                ensure!((v - expected).abs() <= 1e-9, "dataset {t}: knn dtdi {v} vs oracle {expected}");
                knn_checked += 1;
            }
            (None, Err(_)) => zero_denominators += 1,
            (o, g) => return Err(format!("dataset {t}: oracle {o:?} vs library {g:?}")),
        }
        // unit fallback: columns with an empty group become all ones
        let mut fw = w.clone();
        fw.resolve_zero_denominators(&ds, ZeroDenominatorPolicy::UnitFallback).map_err(|e| e.to_string())?;
        let fallback: Vec<Vec<f64>> = ow
            .iter()
            .map(|col| {
                let empty = groups.iter().any(|g| (0..n).all(|i| &tuples[i] != g || col[i] == 0.0));
                if empty {
                    vec![1.0; n]
                } else {
                    col.clone()
                }
            })
            .collect();
        let expected =
            oracle_treatment(&tuples, &groups, &outcomes, &fallback).ok_or(format!("dataset {t}: fallback left a zero"))?;
        let got = match ds.labels() {
            Labels::Class(y) => fairness::dtdi_c(&ds, y, &fw),
            Labels::Real(v) => fairness::dtdi_r(&ds, v, &fw),
        }
        .map_err(|e| format!("dataset {t}: {e}"))?;
        ensure!((got - expected).abs() <= 1e-9, "dataset {t}: fallback dtdi {got} vs oracle {expected}");
    }
    Ok(format!(
        "100 datasets; unit, kNN-with-fallback and plain kNN ({knn_checked} defined, {zero_denominators} zero-denominator errors agree) match; unit identity exact"
    ))
}

fn zero_discrimination() -> Result<String, String> {
    let ds = common::biased_eight();
    let shape = TreeShape::new(1).unwrap();
    let cfg = FitConfig::new(classical(0.0, FairnessConfig::default()));
    let sweep = training::lambda_sweep(&ds, None, shape, &cfg, &SweepConfig::default()).map_err(|e| e.to_string())?;
    let sel = sweep.selected();
    ensure!(sweep.reason == StopReason::ThresholdMet, "threshold not met up to lambda {}", sweep.lambda_star);
    ensure!(sweep.lambda_star <= 10.0, "lambda* = {}", sweep.lambda_star);
    ensure!(sel.train.level_pct < 0.01, "level {}%", sel.train.level_pct);
    // the index-zero end of the frontier: lexicographic (index, loss) optimum
    let oracle = brute_force_optimum(&ds, shape, &classical(1000.0, FairnessConfig::default())).map_err(|e| e.to_string())?;
    let preds: Vec<usize> = training::predict_all(&oracle.tree, &ds).unwrap().iter().map(|p| p.label()).collect();
    let oracle_loss = training::loss(&ds, &Labels::Class(preds.clone()));
    let oracle_index = fairness::didi_c(&ds, &preds).unwrap();
    ensure!(oracle_index == 0.0, "oracle frontier end has index {oracle_index}");
    ensure!((sel.train.loss - oracle_loss).abs() <= 1e-12, "selected loss {} vs frontier {oracle_loss}", sel.train.loss);
    // at lambda = 0 the frontier's other end
    let first = &sweep.points[0];
    let acc = brute_force_optimum(&ds, shape, &classical(0.0, FairnessConfig::default())).map_err(|e| e.to_string())?;
    ensure!((first.train.loss - acc.objective).abs() <= 1e-12, "lambda 0 loss {} vs {}", first.train.loss, acc.objective);
    Ok(format!(
        "lambda* = {:.1}, level {:.4}%, loss {} equals the frontier loss at zero discrimination",
        sweep.lambda_star, sel.train.level_pct, sel.train.loss
    ))
}

fn monotonicity() -> Result<String, String> {
    let grid: Vec<f64> = (0..=15).map(|k| k as f64 * 0.1).chain([2.0, 3.0, 5.0, 10.0]).collect();
    let instances: Vec<_> = common::oracle_instances(31, 12).into_iter().filter(|i| i.depth == 1).collect();
    let mut fits = 0;
    for (k, inst) in instances.iter().enumerate() {
        let shape = TreeShape::new(1).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        let mut prev_tree = None;
        for &lambda in &grid {
            let rep = fit(&inst.ds, shape, &FitConfig::new(classical(lambda, inst.fairness)), prev_tree.as_ref())
                .map_err(|e| format!("instance {k}: {e}"))?;
            ensure!(rep.status == SolveStatus::Optimal, "instance {k} lambda {lambda}: {:?}", rep.status);
            fits += 1;
            let (loss, index) = (rep.train.loss, rep.train.index);
            if let Some((l0, i0)) = prev {
                ensure!(index <= i0 + 1e-9, "instance {k}: index rose {i0} -> {index} at lambda {lambda}");
                ensure!(loss >= l0 - 1e-9, "instance {k}: loss fell {l0} -> {loss} at lambda {lambda}");
            }
            prev = Some((loss, index));
            prev_tree = rep.tree.clone();
        }
    }
    Ok(format!("{} instances, {fits} exact solves, no violations", instances.len()))
}

fn mistreatment_free() -> Result<String, String> {
    let n = 10_000;
    let confusion = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
    let mean = fairness::simulate_mistreatment_free_classifier(n, 2, &confusion, 20, 5);
    let bound = 5.0 / (n as f64).sqrt();
    ensure!(mean <= bound, "mean didi_c {mean} > {bound}");
    Ok(format!("mean didi_c {mean:.5} <= {bound}"))
}

fn bound_trace() -> Result<String, String> {
    let mut solved = 0;
    let mut samples = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut check = |name: String, rep: &training::FitReport| -> Result<(), String> {
        ensure!(rep.status == SolveStatus::Optimal, "{name}: {:?}", rep.status);
        let opt = rep.solver_objective;
        for p in &rep.trace {
            ensure!(p.lower <= opt + 1e-9 && opt <= p.upper + 1e-9, "{name}: {p:?} around {opt}");
        }
        let first = rep.trace.first().ok_or(format!("{name}: empty trace"))?;
        ensure!(rep.warm_start_objective.is_some(), "{name}: no warm start");
        ensure!(first.upper.is_finite() && first.lower.is_finite(), "{name}: initial gap not finite: {first:?}");
        solved += 1;
        samples += rep.trace.len();
        Ok(())
    };
    for (k, inst) in common::oracle_instances(13, 16).iter().enumerate() {
        let rep =
            fit(&inst.ds, TreeShape::new(inst.depth).unwrap(), &FitConfig::new(classical(inst.lambda, inst.fairness)), None)
                .map_err(|e| e.to_string())?;
        check(format!("classification {k}"), &rep)?;
    }
    for k in 0..6 {
        let ds = common::random_regression(&mut rng, 7, 2);
        let class = [TreeClass::Classical, TreeClass::LinearBranching, TreeClass::LinearLeafing][k % 3];
        let cfg = BuildConfig::new(class, Task::Regression).with_lambda(0.5).with_fairness(common::fairness_variant(k));
        let rep = fit(&ds, TreeShape::new(1).unwrap(), &FitConfig::new(cfg), None).map_err(|e| e.to_string())?;
        check(format!("regression {k}"), &rep)?;
    }
    Ok(format!("{solved} warm-started solves, {samples} trace samples inside the bounds"))
}

fn solver_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut optimal = 0;
    let mut infeasible = 0;
    let mut largest = 0;
    for t in 0..120 {
        let n_bin = 1 + t % 14;
        let m = common::models::random_model(&mut rng, n_bin);
        largest = largest.max(n_bin);
        let res = branch_and_bound(&m, &SolverOptions::default(), None).map_err(|e| format!("model {t}: {e}"))?;
        match common::models::enumerate_optimum(&m) {
            None => {
                ensure!(res.status == SolveStatus::Infeasible, "model {t}: {:?} on an infeasible model", res.status);
                infeasible += 1;
            }
            Some((obj, bins, tie)) => {
                ensure!(res.status == SolveStatus::Optimal, "model {t}: {:?}", res.status);
                ensure!((res.objective - obj).abs() <= 1e-6, "model {t}: {} vs {obj}", res.objective);
                let got: Vec<f64> = m.binaries().map(|j| res.values[j]).collect();
                ensure!(got.iter().all(|&v| v == 0.0 || v == 1.0), "model {t}: fractional binaries {got:?}");
                ensure!(tie || got == bins, "model {t}: binaries {got:?} vs {bins:?}");
                let x = &res.values;
                ensure!(m.rows.iter().all(|r| r.violation(x) <= 1e-6), "model {t}: infeasible point");
                ensure!((m.objective_value(x) - obj).abs() <= 1e-6, "model {t}: objective of point differs");
                optimal += 1;
            }
        }
    }
    Ok(format!("120 models up to {largest} binaries: {optimal} optimal, {infeasible} infeasible, all match enumeration"))
}

fn routing_consistency() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut records = 0;
    let mut solves = 0;
    for k in 0..24 {
        let class = [TreeClass::Classical, TreeClass::LinearBranching, TreeClass::LinearLeafing][k % 3];
        let regression = k % 2 == 1 || class == TreeClass::LinearLeafing;
        let depth = if k % 6 == 5 { 2 } else { 1 };
        let n = if depth == 2 { 5 } else { rng.gen_range(5..=9) };
        let ds =
            if regression { common::random_regression(&mut rng, n, 2) } else { common::random_dataset(&mut rng, n, 1, &[2], 2) };
        let task = if regression { Task::Regression } else { Task::Classification };
        let cfg = BuildConfig::new(class, task).with_lambda([0.0, 0.5][k % 2]).with_fairness(common::fairness_variant(k));
        let built = milp::build(&ds, TreeShape::new(depth).unwrap(), &cfg).map_err(|e| e.to_string())?;
        let res = branch_and_bound(&built.model, &SolverOptions::default(), None).map_err(|e| e.to_string())?;
        ensure!(res.status == SolveStatus::Optimal, "instance {k}: {:?}", res.status);
        solves += 1;
        let tree = milp::extract_tree(&built, &ds, &res.values, 1e-6).map_err(|e| format!("instance {k}: {e}"))?;
        let solver_preds = milp::solution_predictions(&built.form, &res.values);
        for i in 0..ds.len() {
            let z: Vec<usize> = (0..tree.shape.n_leaves()).filter(|&l| res.values[built.form.z[i][l]] > 0.5).collect();
            let leaf = tree.route(ds.record(i), ds.schema()).map_err(|e| e.to_string())?;
            ensure!(z == [leaf], "instance {k}: record {i} routes to {leaf}, solver assigns {z:?}");
            let p = tree.predict(ds.record(i), ds.schema()).map_err(|e| e.to_string())?;
            match (p, &solver_preds[i]) {
                (Prediction::Label(a), Prediction::Label(b)) => ensure!(a == *b, "instance {k} record {i}: {a} vs {b}"),
                (Prediction::Value(a), Prediction::Value(b)) => {
                    ensure!((a - b).abs() <= 1e-6, "instance {k} record {i}: {a} vs {b}")
                }
                other => return Err(format!("instance {k}: mixed predictions {other:?}")),
            }
            records += 1;
        }
    }
    Ok(format!("{solves} solves over all tree classes, {records} records route to the solver's predictions"))
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run_cli(args: &[&str]) -> i32 {
    fairtree::cli::run(std::iter::once("fairtree").chain(args.iter().copied()))
}

/// Output files of one command run, manifest excluded, with the manifest's
/// artifact list.
fn run_outputs(args: &[&str]) -> Result<(Vec<(String, Vec<u8>)>, serde_json::Value), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap().to_string();
    let mut full: Vec<&str> = args.to_vec();
    if args[0] == "predict" {
        full.extend(["--predictions", &out]);
        let p = format!("{out}/predictions.csv");
        *full.last_mut().unwrap() = Box::leak(p.into_boxed_str());
    } else {
        full.extend(["--out", &out]);
    }
    let code = run_cli(&full);
    ensure!(code == 0, "{args:?} exited {code}");
    let mut files = Vec::new();
    let mut manifest = serde_json::Value::Null;
    for e in std::fs::read_dir(dir.path()).map_err(|e| e.to_string())? {
        let path = e.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        if name == "manifest.json" {
            manifest = serde_json::from_slice::<serde_json::Value>(&bytes).map_err(|e| e.to_string())?["artifacts"].clone();
        } else {
            files.push((name, bytes));
        }
    }
    files.sort();
    Ok((files, manifest))
}

fn reproducibility() -> Result<String, String> {
    let model_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model_out = model_dir.path().to_str().unwrap();
    let (data, schema) = (fixture("biased8.csv"), fixture("eight.schema"));
    let common_args =
        ["--data", &data, "--schema", &schema, "--depth", "1", "--seed", "3", "--index", "dtdi", "--knn", "2", "--unit-fallback"];
    ensure!(
        run_cli(&[&["train", "--lambda", "0.4"][..], &common_args, &["--out", model_out]].concat()) == 0,
        "model training failed"
    );
    let model = format!("{model_out}/model.json");
    let commands: Vec<Vec<&str>> = vec![
        [&["train", "--lambda", "0.4"][..], &common_args].concat(),
        [&["sweep"][..], &common_args].concat(),
        [&["cv", "--folds", "2"][..], &common_args].concat(),
        [&["cv", "--folds", "2", "--lambda", "0.2"][..], &common_args].concat(),
        [&["export-mps", "--lambda", "0.4"][..], &common_args].concat(),
        vec!["audit", "--data", &data, "--schema", &schema, "--knn", "2", "--unit-fallback", "--model", &model],
        vec!["predict", "--model", &model, "--data", &data, "--schema", &schema],
    ];
    let mut files = 0;
    for cmd in &commands {
        let a = run_outputs(cmd)?;
        let b = run_outputs(cmd)?;
        ensure!(!a.0.is_empty(), "{:?} wrote nothing", cmd[0]);
        for ((na, ba), (nb, bb)) in a.0.iter().zip(&b.0) {
            ensure!(na == nb && ba == bb, "{}: {na} differs between runs", cmd[0]);
        }
        ensure!(a.0.len() == b.0.len() && a.1 == b.1, "{}: manifests differ", cmd[0]);
        files += a.0.len();
    }
    Ok(format!("{} commands, {files} output files byte-identical across runs", commands.len()))
}

fn gamma_counts(path: &Path) -> Result<(usize, usize), String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut zero = 0;
    let mut other = 0;
    for line in text.lines().skip(1) {
        let v: Vec<&str> = line.split(',').collect();
        let c: usize = v[2].parse().map_err(|_| format!("bad line {line}"))?;
        if v[0] == "0" && v[1] == "0" {
            zero += c;
        } else {
            other += c;
        }
    }
    Ok((zero, other))
}

fn gamma_audit() -> Result<String, String> {
    let (data, schema) = (fixture("biased8.csv"), fixture("eight.schema"));
    let train = |lambda: &str| -> Result<(tempfile::TempDir, serde_json::Value), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let args = [
            "train",
            "--data",
            &data,
            "--schema",
            &schema,
            "--depth",
            "1",
            "--index",
            "dtdi",
            "--knn",
            "2",
            "--unit-fallback",
            "--lambda",
            lambda,
            "--out",
            dir.path().to_str().unwrap(),
        ];
        ensure!(run_cli(&args) == 0, "train at lambda {lambda} failed");
        let report = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit_report.json")).unwrap()).unwrap();
        Ok((dir, report))
    };
    let (fair_dir, fair) = train("10")?;
    let fair_index = fair["train"]["index"].as_f64().unwrap();
    ensure!(fair_index == 0.0, "fair model dtdi {fair_index}");
    let (zero, other) = gamma_counts(&fair_dir.path().join("gamma_histogram.csv"))?;
    ensure!(other == 0 && zero > 0, "fair model histogram has {other} non-zero entries");
    let (plain_dir, plain) = train("0")?;
    let (pz, po) = gamma_counts(&plain_dir.path().join("gamma_histogram.csv"))?;
    ensure!(po > 0, "lambda=0 model histogram is all zero");
    // the histogram agrees with the kernel estimate recomputed here
    let ds = {
        let schema = Arc::new(FeatureSchema::from_file(&schema).map_err(|e| e.to_string())?);
        fairtree::data::normalize(&Dataset::load_csv(&data, schema).map_err(|e| e.to_string())?).0
    };
    let cfg = FairnessConfig {
        index: IndexFamily::Dtdi,
        kernel: Kernel::Knn(2),
        zero_denominator: ZeroDenominatorPolicy::UnitFallback,
    };
    let w = fairness::weights_for(&ds, &cfg).map_err(|e| e.to_string())?;
    let tree = fairtree::tree::DecisionTree::from_json(
        &std::fs::read_to_string(plain_dir.path().join("model.json")).unwrap(),
        ds.schema(),
    )
    .map_err(|e| e.to_string())?;
    let preds: Vec<usize> = training::predict_all(&tree, &ds).unwrap().iter().map(|p| p.label()).collect();
    let gamma = fairness::gamma_distribution(&ds, &preds, &w, 1).map_err(|e| e.to_string())?;
    let nonzero = gamma.values.iter().filter(|(_, g)| g.abs() > fairness::GAMMA_ZERO_TOL).count();
    ensure!(nonzero == po && gamma.values.len() - nonzero == pz, "histogram {pz}/{po} vs recomputed {nonzero} non-zero");
    Ok(format!(
        "fair model (dtdi 0): {zero} of {zero} in the zero bin; lambda=0 model (dtdi {:.3}): {po} of {} off zero",
        plain["train"]["index"].as_f64().unwrap(),
        pz + po
    ))
}
