//! Command-line front end: audit, train, sweep, cv, predict and export-mps.
//!
//! Every option can also be set through an environment variable named
//! `FAIRTREE_<OPTION>` (for example `FAIRTREE_DEPTH=2`).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{self, DataError, Dataset, FeatureSchema, Labels};
use crate::fairness::{self, FairnessConfig, FairnessError, IndexFamily, Kernel, Outcomes, ZeroDenominatorPolicy};
use crate::milp::{self, BuildConfig, BuildError};
use crate::solver::{self, MpsError, SolveStatus, SolverOptions};
use crate::training::{self, FitConfig, FitReport, LambdaPlan, SweepConfig, TradeoffRow, TrainError};
use crate::tree::{DecisionTree, Prediction, Task, TreeClass, TreeError, TreeShape};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_TIME_LIMIT: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Other(_) => EXIT_OTHER,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Infeasible(_) => "infeasible",
            CliError::Other(_) => "error",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => CliError::Other(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FairnessError> for CliError {
    fn from(e: FairnessError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MpsError> for CliError {
    fn from(e: MpsError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Build(b) => b.into(),
            TrainError::Fairness(f) => f.into(),
            TrainError::Config(_) | TrainError::OutOfScope(_) => CliError::Validation(e.to_string()),
            TrainError::Infeasible | TrainError::Unbounded => CliError::Infeasible(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "fairtree", version, about = "Optimal fairness-regularized decision trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fairness indices, mistreatment table and gamma histogram of a dataset.
    Audit(AuditArgs),
    /// Fit one tree at a fixed lambda.
    Train(TrainArgs),
    /// Fit along the lambda grid until the discrimination threshold is met.
    Sweep(SweepArgs),
    /// Cross-validated accuracy/discrimination trade-off points.
    Cv(CvArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Write the model of a training problem in MPS format.
    ExportMps(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    Classical,
    Linbranch,
    Linleaf,
}

impl From<ClassArg> for TreeClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Classical => TreeClass::Classical,
            ClassArg::Linbranch => TreeClass::LinearBranching,
            ClassArg::Linleaf => TreeClass::LinearLeafing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Clf,
    Reg,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Clf => Task::Classification,
            TaskArg::Reg => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexArg {
    Didi,
    Dtdi,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, env = "FAIRTREE_DATA")]
    pub data: PathBuf,
    /// Schema file (`feature` and `label` directives).
    #[arg(long, env = "FAIRTREE_SCHEMA")]
    pub schema: PathBuf,
    /// Output directory.
    #[arg(long, env = "FAIRTREE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FairnessArgs {
    /// Kernel neighbours for the treatment index; unit weights when absent.
    #[arg(long, env = "FAIRTREE_KNN")]
    pub knn: Option<usize>,
    /// Replace kernel columns with a zero group denominator by unit weights.
    #[arg(long, env = "FAIRTREE_UNIT_FALLBACK")]
    pub unit_fallback: bool,
}

impl FairnessArgs {
    fn kernel(&self) -> Kernel {
        self.knn.map_or(Kernel::Unit, Kernel::Knn)
    }

    fn policy(&self) -> ZeroDenominatorPolicy {
        if self.unit_fallback {
            ZeroDenominatorPolicy::UnitFallback
        } else {
            ZeroDenominatorPolicy::Error
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub io: DataArgs,
    /// Tree depth K.
    #[arg(long, env = "FAIRTREE_DEPTH", default_value_t = 2)]
    pub depth: usize,
    #[arg(long, value_enum, env = "FAIRTREE_CLASS", default_value = "classical")]
    pub class: ClassArg,
    #[arg(long, value_enum, env = "FAIRTREE_TASK", default_value = "clf")]
    pub task: TaskArg,
    #[arg(long, value_enum, env = "FAIRTREE_INDEX", default_value = "didi")]
    pub index: IndexArg,
    #[command(flatten)]
    pub fairness: FairnessArgs,
    /// Maximum number of nodes branching on any one feature.
    #[arg(long, env = "FAIRTREE_MAX_FEATURE_USES")]
    pub max_feature_uses: Option<usize>,
    /// Maximum number of features in one linear branching rule.
    #[arg(long, env = "FAIRTREE_MAX_FEATURES_PER_RULE")]
    pub max_features_per_rule: Option<usize>,
    /// Solver time limit in seconds.
    #[arg(long, env = "FAIRTREE_TIME_LIMIT")]
    pub time_limit: Option<f64>,
    /// Branch-and-bound node limit.
    #[arg(long, env = "FAIRTREE_NODE_LIMIT")]
    pub node_limit: Option<u64>,
    #[arg(long, env = "FAIRTREE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Write measured solve times instead of zeros.
    #[arg(long, env = "FAIRTREE_TIMING")]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepOpts {
    #[arg(long, env = "FAIRTREE_SWEEP_STEP", default_value_t = 0.1)]
    pub sweep_step: f64,
    /// Stop once the discrimination level falls below this percentage.
    #[arg(long, env = "FAIRTREE_SWEEP_THRESHOLD", default_value_t = 0.01)]
    pub sweep_threshold: f64,
    #[arg(long, env = "FAIRTREE_LAMBDA_MAX", default_value_t = 10.0)]
    pub lambda_max: f64,
}

impl SweepOpts {
    fn config(&self) -> Result<SweepConfig> {
        let cfg = SweepConfig { step: self.sweep_step, threshold_pct: self.sweep_threshold, lambda_max: self.lambda_max };
        if !(cfg.threshold_pct >= 0.0) {
            return Err(CliError::Validation("--sweep-threshold must be non-negative".into()));
        }
        cfg.grid().map_err(CliError::from)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub io: DataArgs,
    #[command(flatten)]
    pub fairness: FairnessArgs,
    /// Expected label kind; a mismatch with the schema is a validation error.
    #[arg(long, value_enum, env = "FAIRTREE_TASK")]
    pub task: Option<TaskArg>,
    /// Audit this model's predictions instead of the labels.
    #[arg(long, env = "FAIRTREE_MODEL")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = "FAIRTREE_LAMBDA", default_value_t = 0.0)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sweep: SweepOpts,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = "FAIRTREE_FOLDS", default_value_t = 5)]
    pub folds: usize,
    /// Fixed lambda on every fold; without it each fold runs the sweep.
    #[arg(long, env = "FAIRTREE_LAMBDA")]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub sweep: SweepOpts,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long, env = "FAIRTREE_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "FAIRTREE_DATA")]
    pub data: PathBuf,
    #[arg(long, env = "FAIRTREE_SCHEMA")]
    pub schema: PathBuf,
    /// Predictions CSV path.
    #[arg(long, env = "FAIRTREE_PREDICTIONS")]
    pub predictions: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = "FAIRTREE_LAMBDA", default_value_t = 0.0)]
    pub lambda: f64,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are printed to stderr as JSON.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Audit(a) => cmd_audit(a),
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Predict(a) => cmd_predict(a),
        Command::ExportMps(a) => cmd_export_mps(a),
    }
}

fn load(data_path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = Arc::new(FeatureSchema::from_file(schema_path)?);
    let raw = Dataset::load_csv(data_path, schema)?;
    Ok(data::normalize(&raw).0)
}

fn check_task(ds: &Dataset, task: Task) -> Result<()> {
    let clf = ds.schema().is_classification();
    if clf != (task == Task::Classification) {
        let kind = if clf { "classification" } else { "regression" };
        return Err(CliError::Validation(format!("--task does not match the {kind} label in the schema")));
    }
    Ok(())
}

/// Collects artifacts and writes them with a hashed manifest.
struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String, usize)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
        self.record(name, content.as_bytes());
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        self.written.push((name.to_string(), hex::encode(Sha256::digest(bytes)), bytes.len()));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn finish(self, command: &str, seed: Option<u64>) -> Result<()> {
        let artifacts: Vec<_> = self
            .written
            .iter()
            .map(|(path, sha, bytes)| serde_json::json!({ "path": path, "sha256": sha, "bytes": bytes }))
            .collect();
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "created_at": chrono::Utc::now().to_rfc3339(),
            "artifacts": artifacts,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))? + "\n";
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
    }
}

fn cmd_audit(a: &AuditArgs) -> Result<i32> {
    let ds = load(&a.io.data, &a.io.schema)?;
    if let Some(t) = a.task {
        check_task(&ds, t.into())?;
    }
    let preds = match &a.model {
        Some(path) => Some(predict_labels(&read_model(path, ds.schema())?, &ds)?),
        None => None,
    };
    let outcomes = preds.as_ref().map(|p| match p {
        Labels::Class(v) => Outcomes::Class(v),
        Labels::Real(v) => Outcomes::Real(v),
    });
    let report = fairness::audit(&ds, outcomes, a.fairness.kernel(), a.fairness.policy())?;
    let mut out = Artifacts::new(&a.io.out)?;
    out.json("audit.json", &report)?;
    if let Some(h) = &report.gamma {
        out.write("gamma_histogram.csv", &h.to_csv())?;
    }
    out.finish("audit", None)?;
    Ok(EXIT_OK)
}

fn read_model(path: &Path, schema: &FeatureSchema) -> Result<DecisionTree> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Other(format!("cannot read {}: {e}", path.display())))?;
    Ok(DecisionTree::from_json(&text, schema)?)
}

fn predict_labels(tree: &DecisionTree, ds: &Dataset) -> Result<Labels> {
    let preds = training::predict_all(tree, ds).map_err(CliError::from)?;
    Ok(match tree.task {
        Task::Classification => Labels::Class(preds.iter().map(|p| p.label()).collect()),
        Task::Regression => Labels::Real(preds.iter().map(|p| p.value()).collect()),
    })
}

impl ModelArgs {
    fn shape(&self) -> Result<TreeShape> {
        TreeShape::new(self.depth).map_err(|e| CliError::Validation(e.to_string()))
    }

    fn fairness(&self) -> FairnessConfig {
        FairnessConfig {
            index: match self.index {
                IndexArg::Didi => IndexFamily::Didi,
                IndexArg::Dtdi => IndexFamily::Dtdi,
            },
            kernel: self.fairness.kernel(),
            zero_denominator: self.fairness.policy(),
        }
    }

    fn fit_config(&self, lambda: f64) -> Result<FitConfig> {
        if let Some(t) = self.time_limit {
            if !(t > 0.0) {
                return Err(CliError::Validation("--time-limit must be positive".into()));
            }
        }
        let mut build = BuildConfig::new(self.class.into(), self.task.into()).with_lambda(lambda).with_fairness(self.fairness());
        build.max_feature_uses = self.max_feature_uses;
        build.max_features_per_rule = self.max_features_per_rule;
        let solver = SolverOptions {
            time_limit: self.time_limit,
            node_limit: self.node_limit,
            seed: self.seed,
            ..SolverOptions::default()
        };
        Ok(FitConfig { build, solver, warm_start: true })
    }

    fn load(&self) -> Result<Dataset> {
        let ds = load(&self.io.data, &self.io.schema)?;
        check_task(&ds, self.task.into())?;
        Ok(ds)
    }
}

/// Drops wall-clock measurements so repeated runs produce identical files.
fn scrub_times(report: &mut FitReport) {
    report.seconds = 0.0;
    for p in &mut report.trace {
        p.seconds = 0.0;
    }
}

fn status_code(reports: &[&FitReport]) -> i32 {
    if reports.iter().any(|r| r.status == SolveStatus::FeasibleTimeLimit) {
        EXIT_TIME_LIMIT
    } else {
        EXIT_OK
    }
}

/// Writes the model, its reports, the bound trace and the gamma histogram of
/// the training predictions.
fn write_fit(out: &mut Artifacts, ds: &Dataset, report: &FitReport, args: &ModelArgs) -> Result<()> {
    let tree = report.tree();
    out.write("model.json", &tree.to_json(ds.schema())?)?;
    let mut shown = report.clone();
    if !args.timing {
        scrub_times(&mut shown);
    }
    out.json("fit_report.json", &shown)?;
    out.json("build_report.json", &report.build)?;
    let result = solver::SolveResult {
        status: report.status,
        values: Vec::new(),
        objective: report.solver_objective,
        best_bound: report.best_bound,
        gap: report.gap,
        nodes: report.nodes,
        iterations: 0,
        wall_time: report.seconds,
        trace: report.trace.clone(),
    };
    out.write("bound_trace.csv", &result.trace_csv(args.timing))?;
    if let Labels::Class(p) = predict_labels(tree, ds)? {
        // the kernel can be undefined on tiny training sets; the histogram is optional then
        if let Ok(audit) = fairness::audit(ds, Some(Outcomes::Class(&p)), args.fairness.kernel(), args.fairness.policy()) {
            if let Some(h) = &audit.gamma {
                out.write("gamma_histogram.csv", &h.to_csv())?;
            }
            out.json("prediction_audit.json", &audit)?;
        }
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let ds = a.model.load()?;
    let cfg = a.model.fit_config(a.lambda)?;
    let report = training::fit(&ds, a.model.shape()?, &cfg, None)?;
    let mut out = Artifacts::new(&a.model.io.out)?;
    write_fit(&mut out, &ds, &report, &a.model)?;
    out.finish("train", Some(a.model.seed))?;
    Ok(status_code(&[&report]))
}

fn tradeoff(rows: &[TradeoffRow], timing: bool) -> String {
    training::tradeoff_csv(rows, timing)
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let ds = a.model.load()?;
    let sweep = a.sweep.config()?;
    let cfg = a.model.fit_config(0.0)?;
    let mut res = training::lambda_sweep(&ds, None, a.model.shape()?, &cfg, &sweep)?;
    let mut out = Artifacts::new(&a.model.io.out)?;
    write_fit(&mut out, &ds, res.selected(), &a.model)?;
    let rows: Vec<TradeoffRow> = res.points.iter().map(|p| TradeoffRow::from_report(0, p)).collect();
    out.write("tradeoff.csv", &tradeoff(&rows, a.model.timing))?;
    let code = status_code(&res.points.iter().collect::<Vec<_>>());
    if !a.model.timing {
        res.points.iter_mut().for_each(scrub_times);
    }
    out.json("sweep.json", &res)?;
    out.finish("sweep", Some(a.model.seed))?;
    Ok(code)
}

fn cmd_cv(a: &CvArgs) -> Result<i32> {
    let ds = a.model.load()?;
    let plan = data::make_folds(ds.len(), a.folds, a.model.seed)?;
    let lambda = match a.lambda {
        Some(l) => LambdaPlan::Fixed(l),
        None => LambdaPlan::Sweep(a.sweep.config()?),
    };
    let cfg = a.model.fit_config(a.lambda.unwrap_or(0.0))?;
    let mut res = training::cross_validate(&ds, &plan, a.model.shape()?, &cfg, &lambda)?;
    let mut out = Artifacts::new(&a.model.io.out)?;
    out.write("tradeoff.csv", &tradeoff(&res.points, a.model.timing))?;
    let code = status_code(&res.folds.iter().map(|f| &f.report).collect::<Vec<_>>());
    if !a.model.timing {
        for f in &mut res.folds {
            scrub_times(&mut f.report);
            if let Some(s) = &mut f.sweep {
                s.points.iter_mut().for_each(scrub_times);
            }
        }
        res.points.iter_mut().for_each(|p| p.seconds = 0.0);
    }
    out.json("folds.json", &plan)?;
    out.json("cv.json", &res)?;
    out.finish("cv", Some(a.model.seed))?;
    Ok(code)
}

fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let schema = FeatureSchema::from_file(&a.schema)?;
    let tree = read_model(&a.model, &schema)?;
    let rows = data::read_records_lenient(&a.data, &schema)?;
    if rows.is_empty() {
        return Err(DataError::EmptyDataset.into());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Other(e.to_string());
    w.write_record(["row", "prediction", "error"]).map_err(err)?;
    let mut failures = 0;
    for (i, row) in rows.iter().enumerate() {
        let outcome = match row {
            Ok(r) => tree.predict_raw(r, &schema).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        let (pred, msg) = match outcome {
            Ok(Prediction::Label(k)) => (schema.classes().map_or(k.to_string(), |c| c[k].clone()), String::new()),
            Ok(Prediction::Value(v)) => (v.to_string(), String::new()),
            Err(m) => {
                failures += 1;
                (String::new(), m)
            }
        };
        w.write_record([(i + 1).to_string(), pred, msg]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    if let Some(dir) = a.predictions.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(e.to_string()))?;
    }
    std::fs::write(&a.predictions, bytes)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", a.predictions.display())))?;
    if failures > 0 {
        return Err(CliError::Validation(format!("{failures} of {} rows could not be predicted", rows.len())));
    }
    Ok(EXIT_OK)
}

fn cmd_export_mps(a: &ExportArgs) -> Result<i32> {
    let ds = a.model.load()?;
    let cfg = a.model.fit_config(a.lambda)?;
    let built = milp::build(&ds, a.model.shape()?, &cfg.build)?;
    let mut out = Artifacts::new(&a.model.io.out)?;
    let (text, names) = solver::write_mps(&built.model);
    out.write("model.mps", &text)?;
    let stale = out.dir.join("model.mps.names");
    if names.is_empty() {
        let _ = std::fs::remove_file(stale);
    } else {
        let mut map = String::from("kind\tmps\toriginal\n");
        for (kind, mps, original) in &names {
            map.push_str(&format!("{kind}\t{mps}\t{original}\n"));
        }
        out.write("model.mps.names", &map)?;
    }
    out.json("build_report.json", &built.report())?;
    out.finish("export-mps", Some(a.model.seed))?;
    Ok(EXIT_OK)
}
