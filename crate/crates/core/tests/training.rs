mod common;

use fairtree::data::{make_folds, Dataset, Labels, Value};
use fairtree::fairness::{FairnessConfig, IndexFamily};
use fairtree::milp::{self, BuildConfig};
use fairtree::solver;
use fairtree::training::{
    brute_force_optimum, cross_validate, evaluate, fit, greedy_tree, greedy_warmstart, lambda_sweep, predict_all, tradeoff_csv,
    FitConfig, LambdaPlan, StopReason, SweepConfig, TrainError,
};
use fairtree::tree::{Task, TreeClass, TreeShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clf(lambda: f64) -> BuildConfig {
    BuildConfig::new(TreeClass::Classical, Task::Classification).with_lambda(lambda)
}

fn k1() -> TreeShape {
    TreeShape::new(1).unwrap()
}

fn labels_of(ds: &Dataset, tree: &fairtree::tree::DecisionTree) -> Labels {
    Labels::Class(predict_all(tree, ds).unwrap().iter().map(|p| p.label()).collect())
}

#[test]
fn separable_set_is_fit_exactly() {
    let ds = common::separable_eight();
    let oracle = brute_force_optimum(&ds, k1(), &clf(0.0)).unwrap();
    assert_eq!(oracle.objective, 0.0);
    let rep = fit(&ds, k1(), &FitConfig::new(clf(0.0)), None).unwrap();
    assert_eq!(rep.train.loss, 0.0);
    assert_eq!(rep.status, solver::SolveStatus::Optimal);
}

#[test]
fn large_lambda_removes_disparate_impact() {
    let ds = common::biased_eight();
    let base = fit(&ds, k1(), &FitConfig::new(clf(0.0)), None).unwrap();
    let fair = fit(&ds, k1(), &FitConfig::new(clf(10.0)), None).unwrap();
    assert!(base.train.index > 0.0);
    assert!(fair.train.index.abs() < 1e-12);
    assert!(fair.train.loss >= base.train.loss);
    let oracle = brute_force_optimum(&ds, k1(), &clf(10.0)).unwrap();
    assert!((oracle.objective - fair.objective).abs() < 1e-6);
}

#[test]
fn constant_labels_are_free() {
    let pts: Vec<(f64, usize, usize)> = (0..6).map(|i| (i as f64 / 5.0, i % 2, 1)).collect();
    let ds = common::one_feature(&pts);
    for lambda in [0.0, 1.0] {
        let rep = fit(&ds, k1(), &FitConfig::new(clf(lambda)), None).unwrap();
        assert_eq!(rep.train.loss, 0.0);
        assert_eq!(rep.train.index, 0.0);
        assert_eq!(rep.objective, 0.0);
    }
}

#[test]
fn report_objective_is_recomputed() {
    for (k, inst) in common::oracle_instances(21, 12).into_iter().enumerate() {
        if inst.depth > 1 {
            continue;
        }
        let cfg = clf(inst.lambda).with_fairness(inst.fairness);
        let rep = fit(&inst.ds, k1(), &FitConfig::new(cfg), None).unwrap();
        let m = evaluate(&inst.ds, &labels_of(&inst.ds, rep.tree()), &inst.fairness, false).unwrap();
        assert!((rep.objective - (m.loss + inst.lambda * m.index)).abs() < 1e-6, "instance {k}");
        assert!((rep.solver_objective - rep.objective).abs() < 1e-6, "instance {k}");
        assert_eq!(rep.train, m);
    }
}

#[test]
fn optimum_dominates_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let ds = common::random_dataset(&mut rng, 7, 1, &[3], 2);
        let shape = TreeShape::new(2).unwrap();
        let built = milp::build(&ds, shape, &clf(0.0)).unwrap();
        let greedy = greedy_tree(&ds, &built.form).unwrap();
        let m = evaluate(&ds, &labels_of(&ds, &greedy), &FairnessConfig::default(), false).unwrap();
        let inc = greedy_warmstart(&ds, &built).unwrap();
        assert!((inc.objective - m.loss).abs() < 1e-9);
        let rep = fit(&ds, shape, &FitConfig::new(clf(0.0)), None).unwrap();
        assert!(rep.objective <= m.loss + 1e-9);
        assert!(rep.warm_start_objective.is_some());
    }
}

#[test]
fn greedy_handles_separable_and_constant_data() {
    let ds = common::separable_eight();
    let built = milp::build(&ds, k1(), &clf(0.0)).unwrap();
    let inc = greedy_warmstart(&ds, &built).unwrap();
    assert_eq!(inc.objective, 0.0);

    let pts: Vec<(f64, usize, usize)> = (0..5).map(|i| (i as f64 / 4.0, i % 2, 0)).collect();
    let ds = common::one_feature(&pts);
    let built = milp::build(&ds, TreeShape::new(2).unwrap(), &clf(0.0)).unwrap();
    let tree = greedy_tree(&ds, &built.form).unwrap();
    // nothing to split on: every record lands in the leftmost leaf
    for i in 0..ds.len() {
        assert_eq!(tree.route(ds.record(i), ds.schema()).unwrap(), 0);
    }
    assert_eq!(greedy_warmstart(&ds, &built).unwrap().objective, 0.0);
}

#[test]
fn oracle_enumerates_tiny_space() {
    // one binary feature, four points: two distinct partitions
    let schema = common::schema(1, &[], 2, false);
    let records = [0.0, 0.0, 1.0, 1.0].iter().zip([0, 1, 0, 1]).map(|(&x, g)| vec![Value::Num(x), Value::Level(g)]).collect();
    let ds = Dataset::new(schema, records, Labels::Class(vec![0, 1, 1, 1])).unwrap();
    let res = brute_force_optimum(&ds, k1(), &clf(0.0)).unwrap();
    assert_eq!(res.partitions, 2);
    assert_eq!(res.objective, 0.25);
}

#[test]
fn oracle_rejects_out_of_scope() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let big = common::random_dataset(&mut rng, 31, 1, &[], 2);
    assert!(matches!(brute_force_optimum(&big, k1(), &clf(0.0)), Err(TrainError::OutOfScope(_))));
    let ds = common::random_dataset(&mut rng, 8, 1, &[], 2);
    assert!(matches!(brute_force_optimum(&ds, TreeShape::new(3).unwrap(), &clf(0.0)), Err(TrainError::OutOfScope(_))));
    let lin = BuildConfig::new(TreeClass::LinearBranching, Task::Classification);
    assert!(matches!(brute_force_optimum(&ds, k1(), &lin), Err(TrainError::OutOfScope(_))));
    let wide = common::random_dataset(&mut rng, 8, 5, &[], 2);
    assert!(matches!(brute_force_optimum(&wide, k1(), &clf(0.0)), Err(TrainError::OutOfScope(_))));
}

#[test]
fn oracle_on_constant_feature_has_one_split() {
    let pts: Vec<(f64, usize, usize)> = (0..4).map(|i| (0.5, i % 2, i / 2)).collect();
    let ds = common::one_feature(&pts);
    let res = brute_force_optimum(&ds, k1(), &clf(0.0)).unwrap();
    assert_eq!(res.partitions, 1);
    assert_eq!(res.objective, 0.5);
}

#[test]
fn sweep_stops_immediately_without_discrimination() {
    // labels independent of the group
    let ds = common::separable_eight();
    let res = lambda_sweep(&ds, None, k1(), &FitConfig::new(clf(0.0)), &SweepConfig::default()).unwrap();
    assert_eq!(res.lambda_star, 0.0);
    assert_eq!(res.reason, StopReason::ThresholdMet);
    assert_eq!(res.points.len(), 1);
}

#[test]
fn sweep_matches_oracle_sweep() {
    let ds = common::biased_eight();
    let sweep = SweepConfig { step: 0.1, ..SweepConfig::default() };
    let res = lambda_sweep(&ds, Some(&ds), k1(), &FitConfig::new(clf(0.0)), &sweep).unwrap();
    assert_eq!(res.reason, StopReason::ThresholdMet);
    let mut expected = None;
    let data_index = evaluate(&ds, ds.labels(), &FairnessConfig::default(), false).unwrap().index;
    for lambda in sweep.grid().unwrap() {
        let o = brute_force_optimum(&ds, k1(), &clf(lambda)).unwrap();
        let m = evaluate(&ds, &labels_of(&ds, &o.tree), &FairnessConfig::default(), false).unwrap();
        if 100.0 * m.index / data_index < sweep.threshold_pct {
            expected = Some(lambda);
            break;
        }
    }
    assert_eq!(Some(res.lambda_star), expected);
    // grid strictly increasing from zero
    assert_eq!(res.points[0].lambda, 0.0);
    assert!(res.points.windows(2).all(|w| w[1].lambda > w[0].lambda));
    assert!(res.selected().test.is_some());
}

#[test]
fn sweep_reports_exhaustion() {
    let ds = common::biased_eight();
    let sweep = SweepConfig { step: 0.1, threshold_pct: 0.01, lambda_max: 0.2 };
    let res = lambda_sweep(&ds, None, k1(), &FitConfig::new(clf(0.0)), &sweep).unwrap();
    assert_eq!(res.reason, StopReason::ThresholdUnmet);
    assert_eq!(res.points.len(), 3);
    let best = res.points.iter().map(|p| p.train.index).fold(f64::INFINITY, f64::min);
    assert_eq!(res.selected().train.index, best);
}

#[test]
fn cross_validation_points() {
    let ds = common::biased_eight();
    let plan = make_folds(ds.len(), 2, 3).unwrap();
    let cfg = FitConfig::new(clf(0.0));
    let cv = cross_validate(&ds, &plan, k1(), &cfg, &LambdaPlan::Fixed(0.0)).unwrap();
    assert_eq!(cv.points.len(), 2);
    for (k, fold) in plan.folds.iter().enumerate() {
        let train = ds.subset(&fold.train);
        let rep = fit(&train, k1(), &cfg, None).unwrap();
        assert_eq!(cv.points[k].train_loss, rep.train.loss);
        assert_eq!(cv.points[k].train_index, rep.train.index);
        assert!(cv.points[k].test_loss.is_some());
    }
    let csv = tradeoff_csv(&cv.points, false);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("fold,lambda,train_loss,test_loss,train_index,test_index,status,gap,seconds\n"));

    let swept = cross_validate(&ds, &plan, k1(), &cfg, &LambdaPlan::Sweep(SweepConfig::default())).unwrap();
    assert_eq!(swept.points.len(), 2);
    assert!(swept.folds.iter().all(|f| f.sweep.is_some()));
}

#[test]
fn symmetric_folds_give_identical_reports() {
    // two copies of the same four records
    let base = [(0.0, 0, 0), (0.25, 1, 0), (0.75, 0, 1), (1.0, 1, 1)];
    let pts: Vec<_> = base.iter().chain(base.iter()).copied().collect();
    let ds = common::one_feature(&pts);
    let plan = fairtree::data::FoldPlan {
        folds: vec![
            fairtree::data::Fold { train: vec![0, 1, 2, 3], test: vec![4, 5, 6, 7] },
            fairtree::data::Fold { train: vec![4, 5, 6, 7], test: vec![0, 1, 2, 3] },
        ],
        k: 2,
        seed: 0,
    };
    let cv = cross_validate(&ds, &plan, k1(), &FitConfig::new(clf(0.0)), &LambdaPlan::Fixed(0.5)).unwrap();
    let (a, b) = (&cv.points[0], &cv.points[1]);
    assert_eq!(
        (a.train_loss, a.test_loss, a.train_index, a.test_index),
        (b.train_loss, b.test_loss, b.train_index, b.test_index)
    );
}

#[test]
fn monotone_along_lambda_grid() {
    for (k, inst) in common::oracle_instances(99, 12).into_iter().enumerate() {
        let shape = TreeShape::new(inst.depth).unwrap();
        let (mut prev_index, mut prev_loss) = (f64::INFINITY, f64::NEG_INFINITY);
        for lambda in [0.0, 0.5, 1.0, 2.0] {
            let cfg = clf(lambda).with_fairness(inst.fairness);
            let o = brute_force_optimum(&inst.ds, shape, &cfg).unwrap();
            let m = evaluate(&inst.ds, &labels_of(&inst.ds, &o.tree), &inst.fairness, false).unwrap();
            assert!(m.index <= prev_index + 1e-9, "instance {k} lambda {lambda}");
            assert!(m.loss >= prev_loss - 1e-9, "instance {k} lambda {lambda}");
            prev_index = m.index;
            prev_loss = m.loss;
        }
    }
}

#[test]
fn dtdi_fit_matches_oracle() {
    let ds = common::biased_eight();
    let fairness = FairnessConfig { index: IndexFamily::Dtdi, ..FairnessConfig::default() };
    let cfg = clf(0.3).with_fairness(fairness);
    let rep = fit(&ds, k1(), &FitConfig::new(cfg.clone()), None).unwrap();
    let o = brute_force_optimum(&ds, k1(), &cfg).unwrap();
    assert!((rep.objective - o.objective).abs() < 1e-6);
}
