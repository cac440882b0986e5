//! Disparate impact and disparate treatment indices.
//!
//! All indices are computed over protected groups, the cross product of the
//! protected features' level sets. Disparate treatment compares kernel-weighted
//! label frequencies (or means) around each reference record `j`, overall versus
//! restricted to one group; weights come from a [`WeightMatrix`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, FeatureKind};

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("protected group `{0}` is empty")]
    EmptyGroup(String),
    #[error("zero kernel denominator at reference record {j} for group `{group}`")]
    ZeroDenominator { j: usize, group: String },
    #[error("k = {k} must satisfy 1 <= k < {n}")]
    InvalidK { k: usize, n: usize },
    #[error("no unprotected features to measure distances on")]
    NoUnprotectedFeatures,
    #[error("{0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, FairnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFamily {
    Didi,
    Dtdi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `d == 1` for every pair.
    Unit,
    /// 1 if `i` is among the `k` nearest neighbours of `j`, else 0.
    Knn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDenominatorPolicy {
    #[default]
    Error,
    /// Replace every offending reference column by unit weights.
    UnitFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessConfig {
    pub index: IndexFamily,
    pub kernel: Kernel,
    pub zero_denominator: ZeroDenominatorPolicy,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig { index: IndexFamily::Didi, kernel: Kernel::Unit, zero_denominator: ZeroDenominatorPolicy::Error }
    }
}

/// Dense kernel weights `w[i][j]`, stored column-major by reference record `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn unit(n: usize) -> Self {
        WeightMatrix { n, data: vec![1.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                data.push(f(i, j));
            }
        }
        WeightMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight of record `i` relative to reference record `j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    /// Columns `j` for which some group gets zero total weight.
    pub fn zero_denominator_columns(&self, groups: &[usize], n_groups: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.n {
            let mut per_group = vec![0.0; n_groups];
            for (i, &g) in groups.iter().enumerate() {
                per_group[g] += self.get(i, j);
            }
            if let Some(g) = per_group.iter().position(|&w| w <= 0.0) {
                out.push((j, g));
            }
        }
        out
    }

    /// Applies `policy` to columns with a zero group denominator. Returns the
    /// replaced column indices.
    pub fn resolve_zero_denominators(&mut self, ds: &Dataset, policy: ZeroDenominatorPolicy) -> Result<Vec<usize>> {
        let groups = ds.groups();
        let bad = self.zero_denominator_columns(&groups, ds.schema().n_groups());
        match (policy, bad.first()) {
            (_, None) => Ok(Vec::new()),
            (ZeroDenominatorPolicy::Error, Some(&(j, g))) => {
                Err(FairnessError::ZeroDenominator { j, group: ds.schema().group_name(g) })
            }
            (ZeroDenominatorPolicy::UnitFallback, Some(_)) => {
                let cols: Vec<usize> = bad.iter().map(|&(j, _)| j).collect();
                for &j in &cols {
                    self.data[j * self.n..(j + 1) * self.n].fill(1.0);
                }
                Ok(cols)
            }
        }
    }
}

/// Squared distance over unprotected features: squared differences of
/// quantitative values plus 1 per categorical mismatch.
pub fn squared_distance(ds: &Dataset, a: usize, b: usize) -> f64 {
    let schema = ds.schema();
    let mut d = 0.0;
    for j in schema.unprotected() {
        match schema.features[j].kind {
            FeatureKind::Quantitative => {
                let diff = ds.value(a, j).num() - ds.value(b, j).num();
                d += diff * diff;
            }
            FeatureKind::Categorical { .. } => {
                if ds.value(a, j).level() != ds.value(b, j).level() {
                    d += 1.0;
                }
            }
        }
    }
    d
}

/// kNN kernel: `w[i][j] = 1` iff `i` is one of the `k` nearest neighbours of
/// `j`, excluding `j` itself; distance ties go to the smaller index.
pub fn knn_weights(ds: &Dataset, k: usize) -> Result<WeightMatrix> {
    let n = ds.len();
    if k == 0 || k >= n {
        return Err(FairnessError::InvalidK { k, n });
    }
    if ds.schema().unprotected().is_empty() {
        return Err(FairnessError::NoUnprotectedFeatures);
    }
    let mut data = vec![0.0; n * n];
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for j in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&i| i != j).map(|i| (squared_distance(ds, i, j), i)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &cand[..k] {
            data[j * n + i] = 1.0;
        }
    }
    Ok(WeightMatrix { n, data })
}

/// Builds the weight matrix requested by `cfg` and applies its zero-denominator policy.
pub fn weights_for(ds: &Dataset, cfg: &FairnessConfig) -> Result<WeightMatrix> {
    let mut w = match cfg.kernel {
        Kernel::Unit => WeightMatrix::unit(ds.len()),
        Kernel::Knn(k) => knn_weights(ds, k)?,
    };
    w.resolve_zero_denominators(ds, cfg.zero_denominator)?;
    Ok(w)
}

/// How empty protected groups are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyGroups {
    #[default]
    Error,
    /// Sum only over groups that occur (used for held-out evaluation).
    Skip,
}

struct GroupCounts {
    groups: Vec<usize>,
    sizes: Vec<usize>,
}

fn group_counts(ds: &Dataset, policy: EmptyGroups) -> Result<GroupCounts> {
    let groups = ds.groups();
    let mut sizes = vec![0usize; ds.schema().n_groups()];
    for &g in &groups {
        sizes[g] += 1;
    }
    if policy == EmptyGroups::Error {
        if let Some(g) = sizes.iter().position(|&c| c == 0) {
            return Err(FairnessError::EmptyGroup(ds.schema().group_name(g)));
        }
    }
    Ok(GroupCounts { groups, sizes })
}

fn check_len(ds: &Dataset, len: usize) -> Result<()> {
    if len != ds.len() {
        return Err(FairnessError::Mismatch(format!("{} values for {} records", len, ds.len())));
    }
    Ok(())
}

/// Per-group contributions to DIDI_c; their sum is the index.
pub fn didi_c_breakdown(ds: &Dataset, labels: &[usize], policy: EmptyGroups) -> Result<Vec<f64>> {
    check_len(ds, labels.len())?;
    let n_classes = ds.schema().n_classes().max(labels.iter().map(|&c| c + 1).max().unwrap_or(0));
    let gc = group_counts(ds, policy)?;
    let n = labels.len() as f64;
    let mut overall = vec![0usize; n_classes];
    let mut per_group = vec![vec![0usize; n_classes]; gc.sizes.len()];
    for (i, &y) in labels.iter().enumerate() {
        overall[y] += 1;
        per_group[gc.groups[i]][y] += 1;
    }
    Ok(gc
        .sizes
        .iter()
        .enumerate()
        .map(|(g, &size)| {
            if size == 0 {
                return 0.0;
            }
            (0..n_classes).map(|y| (overall[y] as f64 / n - per_group[g][y] as f64 / size as f64).abs()).sum()
        })
        .collect())
}

pub fn didi_c(ds: &Dataset, labels: &[usize]) -> Result<f64> {
    Ok(didi_c_breakdown(ds, labels, EmptyGroups::Error)?.iter().sum())
}

pub fn didi_r_breakdown(ds: &Dataset, values: &[f64], policy: EmptyGroups) -> Result<Vec<f64>> {
    check_len(ds, values.len())?;
    let gc = group_counts(ds, policy)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sums = vec![0.0; gc.sizes.len()];
    for (i, &v) in values.iter().enumerate() {
        sums[gc.groups[i]] += v;
    }
    Ok(sums.iter().zip(&gc.sizes).map(|(&s, &size)| if size == 0 { 0.0 } else { (s / size as f64 - mean).abs() }).collect())
}

pub fn didi_r(ds: &Dataset, values: &[f64]) -> Result<f64> {
    Ok(didi_r_breakdown(ds, values, EmptyGroups::Error)?.iter().sum())
}

/// Sums per-column group gaps over reference points. `column` fills the gap
/// of every group for one kernel column and returns false on a zero
/// denominator. Runs of identical columns are evaluated once and weighted
/// by their length, which makes unit weights give exactly `n` times the
/// impact index. Returns the per-group breakdown and the total.
fn treatment_sum(
    ds: &Dataset,
    w: &WeightMatrix,
    sizes: &[usize],
    mut column: impl FnMut(&[f64], &mut [f64]) -> Option<usize>,
) -> Result<(Vec<f64>, f64)> {
    let n = ds.len();
    let n_groups = sizes.len();
    let mut out = vec![0.0; n_groups];
    let mut total = 0.0;
    let mut terms = vec![0.0; n_groups];
    let mut j = 0;
    while j < n {
        let col = w.column(j);
        let mut run = 1;
        while j + run < n && w.column(j + run) == col {
            run += 1;
        }
        if let Some(g) = column(col, &mut terms) {
            return Err(FairnessError::ZeroDenominator { j, group: ds.schema().group_name(g) });
        }
        let mult = run as f64;
        for g in 0..n_groups {
            out[g] += mult * terms[g];
        }
        total += mult * terms.iter().sum::<f64>();
        j += run;
    }
    Ok((out, total))
}

fn dtdi_c_parts(ds: &Dataset, labels: &[usize], w: &WeightMatrix, policy: EmptyGroups) -> Result<(Vec<f64>, f64)> {
    check_len(ds, labels.len())?;
    let n_classes = ds.schema().n_classes().max(labels.iter().map(|&c| c + 1).max().unwrap_or(0));
    let gc = group_counts(ds, policy)?;
    let n_groups = gc.sizes.len();
    let mut total_y = vec![0.0; n_classes];
    let mut group_w = vec![0.0; n_groups];
    let mut group_y = vec![0.0; n_groups * n_classes];
    treatment_sum(ds, w, &gc.sizes, |col, terms| {
        total_y.fill(0.0);
        group_w.fill(0.0);
        group_y.fill(0.0);
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let g = gc.groups[i];
            total += col[i];
            total_y[y] += col[i];
            group_w[g] += col[i];
            group_y[g * n_classes + y] += col[i];
        }
        for g in 0..n_groups {
            terms[g] = 0.0;
            if gc.sizes[g] == 0 {
                continue;
            }
            if group_w[g] <= 0.0 || total <= 0.0 {
                return Some(g);
            }
            terms[g] = (0..n_classes).map(|y| (total_y[y] / total - group_y[g * n_classes + y] / group_w[g]).abs()).sum();
        }
        None
    })
}

/// Per-group contributions to DTDI_c.
pub fn dtdi_c_breakdown(ds: &Dataset, labels: &[usize], w: &WeightMatrix, policy: EmptyGroups) -> Result<Vec<f64>> {
    Ok(dtdi_c_parts(ds, labels, w, policy)?.0)
}

pub fn dtdi_c(ds: &Dataset, labels: &[usize], w: &WeightMatrix) -> Result<f64> {
    Ok(dtdi_c_parts(ds, labels, w, EmptyGroups::Error)?.1)
}

fn dtdi_r_parts(ds: &Dataset, values: &[f64], w: &WeightMatrix, policy: EmptyGroups) -> Result<(Vec<f64>, f64)> {
    check_len(ds, values.len())?;
    let gc = group_counts(ds, policy)?;
    let n_groups = gc.sizes.len();
    let mut group_w = vec![0.0; n_groups];
    let mut group_v = vec![0.0; n_groups];
    treatment_sum(ds, w, &gc.sizes, |col, terms| {
        group_w.fill(0.0);
        group_v.fill(0.0);
        let (mut total, mut total_v) = (0.0, 0.0);
        for (i, &v) in values.iter().enumerate() {
            total += col[i];
            total_v += col[i] * v;
            group_w[gc.groups[i]] += col[i];
            group_v[gc.groups[i]] += col[i] * v;
        }
        for g in 0..n_groups {
            terms[g] = 0.0;
            if gc.sizes[g] == 0 {
                continue;
            }
            if group_w[g] <= 0.0 || total <= 0.0 {
                return Some(g);
            }
            terms[g] = (group_v[g] / group_w[g] - total_v / total).abs();
        }
        None
    })
}

/// Per-group contributions to DTDI_r.
pub fn dtdi_r_breakdown(ds: &Dataset, values: &[f64], w: &WeightMatrix, policy: EmptyGroups) -> Result<Vec<f64>> {
    Ok(dtdi_r_parts(ds, values, w, policy)?.0)
}

pub fn dtdi_r(ds: &Dataset, values: &[f64], w: &WeightMatrix) -> Result<f64> {
    Ok(dtdi_r_parts(ds, values, w, EmptyGroups::Error)?.1)
}

/// Label or real-valued outcomes whose fairness is measured.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes<'a> {
    Class(&'a [usize]),
    Real(&'a [f64]),
}

/// Evaluates the configured index (classification or regression variant
/// chosen by the outcome kind).
pub fn index_value(
    ds: &Dataset,
    outcomes: Outcomes<'_>,
    family: IndexFamily,
    w: Option<&WeightMatrix>,
    policy: EmptyGroups,
) -> Result<f64> {
    let unit;
    let weights = match w {
        Some(w) => w,
        None => {
            unit = WeightMatrix::unit(ds.len());
            &unit
        }
    };
    Ok(match (outcomes, family) {
        (Outcomes::Class(l), IndexFamily::Didi) => didi_c_breakdown(ds, l, policy)?.iter().sum(),
        (Outcomes::Real(v), IndexFamily::Didi) => didi_r_breakdown(ds, v, policy)?.iter().sum(),
        (Outcomes::Class(l), IndexFamily::Dtdi) => dtdi_c_parts(ds, l, weights, policy)?.1,
        (Outcomes::Real(v), IndexFamily::Dtdi) => dtdi_r_parts(ds, v, weights, policy)?.1,
    })
}

fn with_sum(parts: Vec<f64>) -> (Vec<f64>, f64) {
    let total = parts.iter().sum();
    (parts, total)
}

/// Discrimination level in percent: index of the outcomes relative to the
/// index of the training labels. Zero-discrimination data yields 0 when the
/// outcomes are also non-discriminating and infinity otherwise.
pub fn discrimination_level(outcome_index: f64, data_index: f64) -> f64 {
    const ZERO: f64 = 1e-12;
    if data_index > ZERO {
        100.0 * outcome_index / data_index
    } else if outcome_index <= ZERO {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Empirical `P(predicted | true, group)`; `None` marks an absent `(true, group)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistreatmentTable {
    pub classes: Vec<String>,
    pub groups: Vec<String>,
    /// `rows[group][true_class]` is a distribution over predicted classes.
    pub rows: Vec<Vec<Option<Vec<f64>>>>,
}

impl MistreatmentTable {
    /// Largest absolute difference between any two groups' rows for the same true class.
    pub fn max_group_gap(&self) -> f64 {
        let mut gap: f64 = 0.0;
        let n_classes = self.classes.len();
        for y in 0..n_classes {
            let present: Vec<&Vec<f64>> = self.rows.iter().filter_map(|r| r[y].as_ref()).collect();
            for a in &present {
                for b in &present {
                    for (x, z) in a.iter().zip(b.iter()) {
                        gap = gap.max((x - z).abs());
                    }
                }
            }
        }
        gap
    }
}

pub fn mistreatment_table(ds: &Dataset, predictions: &[usize]) -> Result<MistreatmentTable> {
    check_len(ds, predictions.len())?;
    let truth =
        ds.class_labels().ok_or_else(|| FairnessError::Mismatch("mistreatment table needs classification labels".into()))?;
    let schema = ds.schema();
    let n_classes = schema.n_classes();
    let n_groups = schema.n_groups();
    let mut counts = vec![vec![vec![0usize; n_classes]; n_classes]; n_groups];
    for i in 0..ds.len() {
        counts[ds.group_of(i)][truth[i]][predictions[i]] += 1;
    }
    let rows = counts
        .iter()
        .map(|per_true| {
            per_true
                .iter()
                .map(|c| {
                    let total: usize = c.iter().sum();
                    (total > 0).then(|| c.iter().map(|&x| x as f64 / total as f64).collect())
                })
                .collect()
        })
        .collect();
    Ok(MistreatmentTable {
        classes: schema.classes().unwrap_or(&[]).to_vec(),
        groups: (0..n_groups).map(|g| schema.group_name(g)).collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaDistribution {
    /// `(record index, gamma)` for every record with positive denominators.
    pub values: Vec<(usize, f64)>,
    pub excluded: usize,
}

/// Kernel estimate of `P(y+ | unprotected, own group) - P(y+ | unprotected)` at
/// every record, where `y+` is class `positive`.
pub fn gamma_distribution(ds: &Dataset, predictions: &[usize], w: &WeightMatrix, positive: usize) -> Result<GammaDistribution> {
    check_len(ds, predictions.len())?;
    let groups = ds.groups();
    let mut values = Vec::new();
    let mut excluded = 0;
    for j in 0..ds.len() {
        let col = w.column(j);
        let own = groups[j];
        let (mut tot, mut tot_pos, mut grp, mut grp_pos) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..ds.len() {
            let pos = if predictions[i] == positive { col[i] } else { 0.0 };
            tot += col[i];
            tot_pos += pos;
            if groups[i] == own {
                grp += col[i];
                grp_pos += pos;
            }
        }
        if tot <= 0.0 || grp <= 0.0 {
            excluded += 1;
            continue;
        }
        values.push((j, grp_pos / grp - tot_pos / tot));
    }
    Ok(GammaDistribution { values, excluded })
}

/// Histogram over `[-1, 1]` with a dedicated bin for exact zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaHistogram {
    pub zero: usize,
    /// `(lo, hi, count)` for non-zero values, `n_side` bins per sign.
    pub bins: Vec<(f64, f64, usize)>,
}

pub const GAMMA_ZERO_TOL: f64 = 1e-12;

impl GammaHistogram {
    pub fn new(gamma: &GammaDistribution, n_side: usize) -> Self {
        let width = 1.0 / n_side as f64;
        let mut bins: Vec<(f64, f64, usize)> = (0..2 * n_side)
            .map(|b| {
                let lo = -1.0 + b as f64 * width;
                (lo, lo + width, 0)
            })
            .collect();
        let mut zero = 0;
        for &(_, g) in &gamma.values {
            if g.abs() <= GAMMA_ZERO_TOL {
                zero += 1;
                continue;
            }
            let b = (((g + 1.0) / width).floor() as isize).clamp(0, 2 * n_side as isize - 1) as usize;
            bins[b].2 += 1;
        }
        GammaHistogram { zero, bins }
    }

    pub fn total(&self) -> usize {
        self.zero + self.bins.iter().map(|b| b.2).sum::<usize>()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        let half = self.bins.len() / 2;
        for (k, (lo, hi, c)) in self.bins.iter().enumerate() {
            if k == half {
                out.push_str(&format!("0,0,{}\n", self.zero));
            }
            out.push_str(&format!("{lo},{hi},{c}\n"));
        }
        out
    }
}

/// Monte-Carlo check that group-independent error rates preserve zero
/// disparate impact: a balanced dataset with independent labels is passed
/// through a classifier whose confusion matrix depends only on the true label.
/// Returns the mean DIDI_c of the outputs over `trials`.
pub fn simulate_mistreatment_free_classifier(n: usize, n_groups: usize, confusion: &[Vec<f64>], trials: usize, seed: u64) -> f64 {
    let n_classes = confusion.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        // every (group, label) cell gets the same number of records, so the
        // ground truth has DIDI_c = 0 exactly
        let mut counts = vec![vec![0usize; n_classes]; n_groups];
        let mut sizes = vec![0usize; n_groups];
        for i in 0..n {
            let g = i % n_groups;
            let y = (i / n_groups) % n_classes;
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pred = n_classes - 1;
            for (c, p) in confusion[y].iter().enumerate() {
                acc += p;
                if u < acc {
                    pred = c;
                    break;
                }
            }
            counts[g][pred] += 1;
            sizes[g] += 1;
        }
        let mut overall = vec![0usize; n_classes];
        for row in &counts {
            for (c, &k) in row.iter().enumerate() {
                overall[c] += k;
            }
        }
        let mut didi = 0.0;
        for g in 0..n_groups {
            for c in 0..n_classes {
                didi += (overall[c] as f64 / n as f64 - counts[g][c] as f64 / sizes[g] as f64).abs();
            }
        }
        total += didi;
    }
    total / trials as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub name: String,
    pub raw: f64,
    pub normalized: f64,
    pub per_group: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub records: usize,
    pub kernel: Kernel,
    pub replaced_kernel_columns: Vec<usize>,
    pub indices: Vec<IndexReport>,
    pub mistreatment: Option<MistreatmentTable>,
    pub gamma: Option<GammaHistogram>,
    pub gamma_excluded: usize,
}

/// Computes every index applicable to the label kind of `ds`. When
/// `predictions` is given, the outcomes audited are the predictions and the
/// mistreatment table compares them with the true labels.
pub fn audit(
    ds: &Dataset,
    predictions: Option<Outcomes<'_>>,
    kernel: Kernel,
    policy: ZeroDenominatorPolicy,
) -> Result<AuditReport> {
    let schema = ds.schema();
    let mut w = match kernel {
        Kernel::Unit => WeightMatrix::unit(ds.len()),
        Kernel::Knn(k) => knn_weights(ds, k)?,
    };
    let replaced = w.resolve_zero_denominators(ds, policy)?;
    let n = ds.len() as f64;
    let names: Vec<String> = (0..schema.n_groups()).map(|g| schema.group_name(g)).collect();
    let mk = |name: &str, (parts, raw): (Vec<f64>, f64)| IndexReport {
        name: name.to_string(),
        raw,
        normalized: raw / n,
        per_group: names.iter().cloned().zip(parts).collect(),
    };
    let mut indices = Vec::new();
    let mut mistreatment = None;
    let mut gamma = None;
    let mut gamma_excluded = 0;
    match (ds.labels(), predictions) {
        (crate::data::Labels::Class(truth), pred) => {
            let outcomes: &[usize] = match pred {
                Some(Outcomes::Class(p)) => {
                    mistreatment = Some(mistreatment_table(ds, p)?);
                    p
                }
                Some(Outcomes::Real(_)) => {
                    return Err(FairnessError::Mismatch("real-valued predictions for a classification dataset".into()))
                }
                None => truth,
            };
            indices.push(mk("didi_c", with_sum(didi_c_breakdown(ds, outcomes, EmptyGroups::Error)?)));
            indices.push(mk("dtdi_c", dtdi_c_parts(ds, outcomes, &w, EmptyGroups::Error)?));
            let positive = schema.n_classes() - 1;
            let dist = gamma_distribution(ds, outcomes, &w, positive)?;
            gamma_excluded = dist.excluded;
            gamma = Some(GammaHistogram::new(&dist, 10));
        }
        (crate::data::Labels::Real(truth), pred) => {
            let outcomes: &[f64] = match pred {
                Some(Outcomes::Real(p)) => p,
                Some(Outcomes::Class(_)) => {
                    return Err(FairnessError::Mismatch("class predictions for a regression dataset".into()))
                }
                None => truth,
            };
            indices.push(mk("didi_r", with_sum(didi_r_breakdown(ds, outcomes, EmptyGroups::Error)?)));
            indices.push(mk("dtdi_r", dtdi_r_parts(ds, outcomes, &w, EmptyGroups::Error)?));
        }
    }
    Ok(AuditReport { records: ds.len(), kernel, replaced_kernel_columns: replaced, indices, mistreatment, gamma, gamma_excluded })
}
