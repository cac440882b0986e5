//! Decision trees of fixed depth: classical single-feature trees, trees with
//! linear branching scores and trees with linear scoring rules at the leaves.
//!
//! Branching nodes are numbered breadth-first (root 0, children `2v+1`,
//! `2v+2`); leaves are numbered left to right. A record goes left at a
//! score-based node iff `cutoff >= score`, and left at a categorical node iff
//! its level is in the node's left set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureKind, FeatureSchema, NormalizationReport, Record, Value};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("unknown level index {level} for feature `{feature}`")]
    UnknownLevel { feature: String, level: usize },
    #[error("unsupported model format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("schema fingerprint mismatch: model was trained on {expected}, data has {found}")]
    Fingerprint { expected: String, found: String },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("json error: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, TreeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeClass {
    Classical,
    LinearBranching,
    LinearLeafing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// Complete binary tree of depth `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    depth: usize,
}

impl TreeShape {
    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(TreeError::ZeroDepth);
        }
        Ok(TreeShape { depth })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_branch(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.depth
    }

    fn node_depth(node: usize) -> usize {
        (usize::BITS - 1 - (node + 1).leading_zeros()) as usize
    }

    /// Leaves (as a contiguous range) below heap node `node`, which may be a
    /// branching node or a leaf position.
    fn leaves_under(&self, node: usize) -> std::ops::Range<usize> {
        let d = Self::node_depth(node);
        let span = 1 << (self.depth - d);
        let first_at_level = (1 << d) - 1;
        let start = (node - first_at_level) * span;
        start..start + span
    }

    pub fn left_leaves(&self, node: usize) -> std::ops::Range<usize> {
        self.leaves_under(2 * node + 1)
    }

    pub fn right_leaves(&self, node: usize) -> std::ops::Range<usize> {
        self.leaves_under(2 * node + 2)
    }

    /// Branching nodes on the path to `leaf`, with `true` when the path goes left.
    pub fn path_to_leaf(&self, leaf: usize) -> Vec<(usize, bool)> {
        let mut node = 0;
        let mut out = Vec::with_capacity(self.depth);
        for level in (0..self.depth).rev() {
            let left = (leaf >> level) & 1 == 0;
            out.push((node, left));
            node = if left { 2 * node + 1 } else { 2 * node + 2 };
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchRule {
    /// Left iff `cutoff >= x[feature]`.
    Threshold { feature: usize, cutoff: f64 },
    /// Left iff `x[feature]` is one of `left_levels`.
    Subset { feature: usize, left_levels: Vec<usize> },
    /// Left iff `cutoff >= sum_j w_j x[j]`.
    Linear { weights: Vec<(usize, f64)>, cutoff: f64 },
}

impl BranchRule {
    pub fn goes_left(&self, x: &[Value], schema: &FeatureSchema) -> Result<bool> {
        match self {
            BranchRule::Threshold { feature, cutoff } => Ok(*cutoff >= x[*feature].num()),
            BranchRule::Subset { feature, left_levels } => {
                let level = x[*feature].level();
                let n_levels = schema.features[*feature].levels().map_or(0, <[String]>::len);
                if level >= n_levels {
                    return Err(TreeError::UnknownLevel { feature: schema.features[*feature].name.clone(), level });
                }
                Ok(left_levels.contains(&level))
            }
            BranchRule::Linear { weights, cutoff } => {
                let score: f64 = weights.iter().map(|&(j, w)| w * x[j].num()).sum();
                Ok(*cutoff >= score)
            }
        }
    }

    pub fn features(&self) -> Vec<usize> {
        match self {
            BranchRule::Threshold { feature, .. } | BranchRule::Subset { feature, .. } => vec![*feature],
            BranchRule::Linear { weights, .. } => weights.iter().filter(|w| w.1 != 0.0).map(|w| w.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeafRule {
    Label(usize),
    Value(f64),
    /// `sum_j u_j x[j]`, clamped to `[-1, 1]`.
    Linear(Vec<(usize, f64)>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Label(usize),
    Value(f64),
}

impl Prediction {
    pub fn label(self) -> usize {
        match self {
            Prediction::Label(l) => l,
            Prediction::Value(_) => panic!("regression prediction used as a label"),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Prediction::Value(v) => v,
            Prediction::Label(_) => panic!("class prediction used as a value"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub shape: TreeShape,
    pub class: TreeClass,
    pub task: Task,
    pub branches: Vec<BranchRule>,
    pub leaves: Vec<LeafRule>,
    pub schema_fingerprint: String,
    pub normalization: NormalizationReport,
}

impl DecisionTree {
    /// Checks structural invariants against `schema`.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let bad = |m: String| Err(TreeError::Invalid(m));
        if self.branches.len() != self.shape.n_branch() || self.leaves.len() != self.shape.n_leaves() {
            return bad("rule counts do not match the shape".into());
        }
        let d = schema.features.len();
        for rule in &self.branches {
            for j in rule.features() {
                if j >= d {
                    return bad(format!("feature index {j} out of range"));
                }
                if schema.features[j].is_protected() {
                    return bad(format!("protected feature `{}` used for branching", schema.features[j].name));
                }
            }
            match rule {
                BranchRule::Threshold { feature, .. } if !schema.features[*feature].is_quantitative() => {
                    return bad("threshold on a categorical feature".into())
                }
                BranchRule::Subset { feature, left_levels } => {
                    let n = schema.features[*feature].levels().map_or(0, <[String]>::len);
                    if n == 0 || left_levels.iter().any(|&k| k >= n) {
                        return bad("subset rule on a non-categorical feature or unknown level".into());
                    }
                }
                BranchRule::Linear { weights, .. } => {
                    if weights.iter().any(|&(j, _)| !schema.features[j].is_quantitative()) {
                        return bad("linear rule on a categorical feature".into());
                    }
                    let s: f64 = weights.iter().map(|w| w.1).sum();
                    if (s - 1.0).abs() > 1e-6 {
                        return bad(format!("linear branching weights sum to {s}"));
                    }
                }
                _ => {}
            }
        }
        for leaf in &self.leaves {
            match (leaf, self.task) {
                (LeafRule::Label(c), Task::Classification) if *c < schema.n_classes() => {}
                (LeafRule::Value(_), Task::Regression) => {}
                (LeafRule::Linear(u), Task::Regression)
                    if u.iter().all(|&(j, _)| j < d && schema.features[j].is_quantitative()) => {}
                _ => return bad("leaf rule does not match the task".into()),
            }
        }
        Ok(())
    }

    /// Leaf reached by a normalized record.
    pub fn route(&self, x: &[Value], schema: &FeatureSchema) -> Result<usize> {
        let mut node = 0;
        let n_branch = self.shape.n_branch();
        while node < n_branch {
            node = if self.branches[node].goes_left(x, schema)? { 2 * node + 1 } else { 2 * node + 2 };
        }
        Ok(node - n_branch)
    }

    pub fn predict(&self, x: &[Value], schema: &FeatureSchema) -> Result<Prediction> {
        let leaf = self.route(x, schema)?;
        Ok(self.leaf_output(leaf, x))
    }

    pub fn leaf_output(&self, leaf: usize, x: &[Value]) -> Prediction {
        match &self.leaves[leaf] {
            LeafRule::Label(c) => Prediction::Label(*c),
            LeafRule::Value(v) => Prediction::Value(*v),
            LeafRule::Linear(u) => Prediction::Value(u.iter().map(|&(j, c)| c * x[j].num()).sum::<f64>().clamp(-1.0, 1.0)),
        }
    }

    /// Predicts a raw (un-normalized) record and maps regression output back
    /// to the original label scale.
    pub fn predict_raw(&self, raw: &Record, schema: &FeatureSchema) -> Result<Prediction> {
        let x = self.normalization.apply_record(raw);
        Ok(match self.predict(&x, schema)? {
            Prediction::Value(v) => Prediction::Value(self.normalization.denormalize_label(v)),
            p => p,
        })
    }

    /// Number of branching nodes that use each feature (nonzero weight).
    pub fn feature_usage(&self, n_features: usize) -> Vec<usize> {
        let mut counts = vec![0; n_features];
        for rule in &self.branches {
            for j in rule.features() {
                counts[j] += 1;
            }
        }
        counts
    }

    pub fn to_json(&self, schema: &FeatureSchema) -> Result<String> {
        let doc = TreeDocument::from_tree(self, schema);
        serde_json::to_string_pretty(&doc)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| TreeError::Json(e.to_string()))
    }

    /// Parses a model and checks its format version and schema fingerprint.
    pub fn from_json(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let doc: TreeDocument = serde_json::from_str(text).map_err(|e| TreeError::Json(e.to_string()))?;
        doc.into_tree(schema)
    }
}

// JSON document form: features, levels and classes by name.

#[derive(Debug, Serialize, Deserialize)]
struct TreeDocument {
    format_version: u32,
    schema_fingerprint: String,
    depth: usize,
    class: TreeClass,
    task: Task,
    branches: Vec<BranchDoc>,
    leaves: Vec<LeafDoc>,
    normalization: NormalizationReport,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BranchDoc {
    Threshold { feature: String, cutoff: f64 },
    Subset { feature: String, left_levels: Vec<String> },
    Linear { weights: Vec<(String, f64)>, cutoff: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LeafDoc {
    Label { label: String },
    Value { value: f64 },
    Linear { coefficients: Vec<(String, f64)> },
}

impl TreeDocument {
    fn from_tree(t: &DecisionTree, schema: &FeatureSchema) -> Self {
        let fname = |j: usize| schema.features[j].name.clone();
        let branches = t
            .branches
            .iter()
            .map(|b| match b {
                BranchRule::Threshold { feature, cutoff } => BranchDoc::Threshold { feature: fname(*feature), cutoff: *cutoff },
                BranchRule::Subset { feature, left_levels } => {
                    let levels = schema.features[*feature].levels().unwrap_or(&[]);
                    BranchDoc::Subset {
                        feature: fname(*feature),
                        left_levels: left_levels.iter().map(|&k| levels[k].clone()).collect(),
                    }
                }
                BranchRule::Linear { weights, cutoff } => {
                    BranchDoc::Linear { weights: weights.iter().map(|&(j, w)| (fname(j), w)).collect(), cutoff: *cutoff }
                }
            })
            .collect();
        let leaves = t
            .leaves
            .iter()
            .map(|l| match l {
                LeafRule::Label(c) => LeafDoc::Label { label: schema.classes().map_or(String::new(), |cs| cs[*c].clone()) },
                LeafRule::Value(v) => LeafDoc::Value { value: *v },
                LeafRule::Linear(u) => LeafDoc::Linear { coefficients: u.iter().map(|&(j, c)| (fname(j), c)).collect() },
            })
            .collect();
        TreeDocument {
            format_version: FORMAT_VERSION,
            schema_fingerprint: t.schema_fingerprint.clone(),
            depth: t.shape.depth(),
            class: t.class,
            task: t.task,
            branches,
            leaves,
            normalization: t.normalization.clone(),
        }
    }

    fn into_tree(self, schema: &FeatureSchema) -> Result<DecisionTree> {
        if self.format_version != FORMAT_VERSION {
            return Err(TreeError::Version { found: self.format_version });
        }
        let found = schema.fingerprint();
        if self.schema_fingerprint != found {
            return Err(TreeError::Fingerprint { expected: self.schema_fingerprint, found });
        }
        let feature =
            |name: &str| schema.feature_index(name).ok_or_else(|| TreeError::Invalid(format!("unknown feature `{name}`")));
        let mut branches = Vec::with_capacity(self.branches.len());
        for b in self.branches {
            branches.push(match b {
                BranchDoc::Threshold { feature: f, cutoff } => BranchRule::Threshold { feature: feature(&f)?, cutoff },
                BranchDoc::Subset { feature: f, left_levels } => {
                    let j = feature(&f)?;
                    let levels = schema.features[j].levels().unwrap_or(&[]);
                    let mut idx = Vec::with_capacity(left_levels.len());
                    for l in left_levels {
                        idx.push(
                            levels
                                .iter()
                                .position(|x| *x == l)
                                .ok_or_else(|| TreeError::Invalid(format!("unknown level `{l}`")))?,
                        );
                    }
                    BranchRule::Subset { feature: j, left_levels: idx }
                }
                BranchDoc::Linear { weights, cutoff } => {
                    let mut w = Vec::with_capacity(weights.len());
                    for (f, v) in weights {
                        w.push((feature(&f)?, v));
                    }
                    BranchRule::Linear { weights: w, cutoff }
                }
            });
        }
        let mut leaves = Vec::with_capacity(self.leaves.len());
        for l in self.leaves {
            leaves.push(match l {
                LeafDoc::Label { label } => LeafRule::Label(
                    schema
                        .classes()
                        .and_then(|cs| cs.iter().position(|c| *c == label))
                        .ok_or_else(|| TreeError::Invalid(format!("unknown class `{label}`")))?,
                ),
                LeafDoc::Value { value } => LeafRule::Value(value),
                LeafDoc::Linear { coefficients } => {
                    let mut u = Vec::with_capacity(coefficients.len());
                    for (f, c) in coefficients {
                        u.push((feature(&f)?, c));
                    }
                    LeafRule::Linear(u)
                }
            });
        }
        let tree = DecisionTree {
            shape: TreeShape::new(self.depth)?,
            class: self.class,
            task: self.task,
            branches,
            leaves,
            schema_fingerprint: self.schema_fingerprint,
            normalization: self.normalization,
        };
        tree.validate(schema)?;
        Ok(tree)
    }
}

/// Checks that a categorical value is known to the schema before routing a raw record.
pub fn check_record(record: &[Value], schema: &FeatureSchema) -> Result<()> {
    for (f, v) in schema.features.iter().zip(record) {
        if let (FeatureKind::Categorical { levels }, Value::Level(k)) = (&f.kind, v) {
            if *k >= levels.len() {
                return Err(TreeError::UnknownLevel { feature: f.name.clone(), level: *k });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::parse(
            "feature x1 quantitative unprotected\nfeature c categorical unprotected A,B,C\n\
             feature x2 quantitative unprotected\nfeature g categorical protected M,F\n\
             label y classification -1,1\n",
        )
        .unwrap()
    }

    fn stump(rule: BranchRule, leaves: Vec<LeafRule>, task: Task) -> DecisionTree {
        let s = schema();
        DecisionTree {
            shape: TreeShape::new(1).unwrap(),
            class: TreeClass::Classical,
            task,
            branches: vec![rule],
            leaves,
            schema_fingerprint: s.fingerprint(),
            normalization: NormalizationReport::identity(&s),
        }
    }

    fn rec(x1: f64, c: usize, x2: f64) -> Vec<Value> {
        vec![Value::Num(x1), Value::Level(c), Value::Num(x2), Value::Level(0)]
    }

    #[test]
    fn shape_sets() {
        let s = TreeShape::new(2).unwrap();
        assert_eq!(s.n_branch(), 3);
        assert_eq!(s.n_leaves(), 4);
        assert_eq!(s.left_leaves(0), 0..2);
        assert_eq!(s.right_leaves(0), 2..4);
        assert_eq!(s.left_leaves(2), 2..3);
        assert_eq!(s.right_leaves(1), 1..2);
        assert_eq!(s.path_to_leaf(2), vec![(0, false), (2, true)]);
        let s3 = TreeShape::new(3).unwrap();
        for v in 0..s3.n_branch() {
            let l = s3.left_leaves(v);
            let r = s3.right_leaves(v);
            assert_eq!(l.end, r.start);
            assert_eq!(l.len(), r.len());
        }
        assert!(TreeShape::new(0).is_err());
    }

    #[test]
    fn routing_boundaries() {
        let s = schema();
        let t = stump(
            BranchRule::Threshold { feature: 0, cutoff: 0.5 },
            vec![LeafRule::Label(0), LeafRule::Label(1)],
            Task::Classification,
        );
        assert_eq!(t.route(&rec(0.3, 0, 0.0), &s).unwrap(), 0);
        assert_eq!(t.route(&rec(0.5, 0, 0.0), &s).unwrap(), 0);
        assert_eq!(t.route(&rec(0.51, 0, 0.0), &s).unwrap(), 1);
        let t = stump(
            BranchRule::Subset { feature: 1, left_levels: vec![0] },
            vec![LeafRule::Label(1), LeafRule::Label(1)],
            Task::Classification,
        );
        assert_eq!(t.route(&rec(0.0, 1, 0.0), &s).unwrap(), 1);
        assert_eq!(t.predict(&rec(0.0, 0, 0.0), &s).unwrap(), Prediction::Label(1));
        let err = t.route(&rec(0.0, 7, 0.0), &s).unwrap_err();
        assert!(matches!(err, TreeError::UnknownLevel { .. }));
    }

    #[test]
    fn linear_leaf_predictions_clamp() {
        let s = schema();
        let t = stump(
            BranchRule::Threshold { feature: 0, cutoff: 0.5 },
            vec![LeafRule::Linear(vec![(0, 1.0)]), LeafRule::Linear(vec![(0, 1.0), (2, 1.0)])],
            Task::Regression,
        );
        assert_eq!(t.predict(&rec(0.4, 0, 0.0), &s).unwrap(), Prediction::Value(0.4));
        assert_eq!(t.predict(&rec(0.8, 0, 0.9), &s).unwrap(), Prediction::Value(1.0));
    }

    #[test]
    fn usage_counts() {
        let s = schema();
        let mut t = stump(
            BranchRule::Linear { weights: vec![(0, 0.5), (2, 0.5)], cutoff: 0.2 },
            vec![LeafRule::Label(0), LeafRule::Label(1)],
            Task::Classification,
        );
        assert_eq!(t.feature_usage(4), vec![1, 0, 1, 0]);
        t.shape = TreeShape::new(2).unwrap();
        t.branches = vec![BranchRule::Threshold { feature: 0, cutoff: 0.1 }; 3];
        t.leaves = vec![LeafRule::Label(0); 4];
        assert_eq!(t.feature_usage(4), vec![3, 0, 0, 0]);
        assert!(t.validate(&s).is_ok());
    }

    #[test]
    fn json_round_trip_and_tamper() {
        let s = schema();
        let t = stump(
            BranchRule::Subset { feature: 1, left_levels: vec![0, 2] },
            vec![LeafRule::Label(0), LeafRule::Label(1)],
            Task::Classification,
        );
        let text = t.to_json(&s).unwrap();
        assert_eq!(DecisionTree::from_json(&text, &s).unwrap(), t);
        let tampered = text.replace(&s.fingerprint(), &"0".repeat(64));
        assert!(matches!(DecisionTree::from_json(&tampered, &s), Err(TreeError::Fingerprint { .. })));
        let old = text.replace("\"format_version\": 1", "\"format_version\": 0");
        assert!(matches!(DecisionTree::from_json(&old, &s), Err(TreeError::Version { found: 0 })));
    }

    #[test]
    fn protected_features_are_rejected() {
        let s = schema();
        let t = stump(
            BranchRule::Subset { feature: 3, left_levels: vec![0] },
            vec![LeafRule::Label(0), LeafRule::Label(1)],
            Task::Classification,
        );
        assert!(t.validate(&s).is_err());
    }
}
