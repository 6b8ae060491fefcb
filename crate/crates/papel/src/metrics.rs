//! Scoring: multi-label confusion counts, per-category and micro-averaged
//! precision/recall/F1, annotator agreement, and policy-level bootstrap
//! confidence intervals.
//!
//! Conventions, applied uniformly:
//!
//! * A segment may carry several labels; each label is counted
//!   independently (true positive when in both gold and prediction, false
//!   positive when predicted only, false negative when gold only).
//! * Micro F1 is `2·ΣTP / (2·ΣTP + ΣFP + ΣFN)` over all scored labels.
//! * Every `0/0` ratio is defined as `0.0`.
//! * The catch-all `Other` category is excluded from scoring unless
//!   [`ScoreOptions::include_other`] is set.
//! * Segments whose records carry an `error` are excluded from the counts;
//!   the exclusion is reported, never silent.
//!
//! Bootstrap confidence intervals resample whole policies: the subset
//! sequence is generated single-threaded from a seeded RNG (or enumerated
//! exhaustively when there are at most `n_subsets` possible subsets), then
//! each subset is scored. Identical seeds yield identical reports.

use crate::annotate::PredictionRecord;
use crate::corpus::Corpus;
use crate::label::CategoryLabel;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("duplicate prediction record for {policy_id:?} segment {segment_index}")]
    DuplicateRecord { policy_id: String, segment_index: usize },
    #[error("prediction record references unknown segment {policy_id:?} #{segment_index}")]
    UnknownSegment { policy_id: String, segment_index: usize },
    #[error("bootstrap needs {required} policies but the run covers only {available}")]
    ScopeTooSmall { available: usize, required: usize },
    #[error("corpus hash mismatch: run was annotated against {expected} but scoring corpus hashes to {found}")]
    CorpusMismatch { expected: String, found: String },
    #[error("invalid metrics configuration: {0}")]
    Config(String),
}

/// Scoring switches. Defaults follow the headline evaluation: `Other`
/// excluded, empty-gold segments kept (they can still contribute false
/// positives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub include_other: bool,
    pub exclude_empty_gold: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { include_other: false, exclude_empty_gold: false }
    }
}

/// The set of labels that participate in scoring under `options`.
pub fn scored_labels(options: ScoreOptions) -> Vec<CategoryLabel> {
    CategoryLabel::ALL
        .iter()
        .copied()
        .filter(|l| options.include_other || *l != CategoryLabel::Other)
        .collect()
}

/// Raw counts for one label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Per-label confusion counts over a set of segments. Counting is additive:
/// merging the counts of two disjoint segment sets equals counting their
/// union, which is what makes policy-level bootstrap resampling cheap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_label: BTreeMap<CategoryLabel, ConfusionCell>,
}

impl ConfusionCounts {
    pub fn new(labels: &[CategoryLabel]) -> ConfusionCounts {
        ConfusionCounts {
            per_label: labels.iter().map(|l| (*l, ConfusionCell::default())).collect(),
        }
    }

    /// Count one `(gold, predicted)` pair. Labels absent from the map (for
    /// example `Other` under default options) are ignored entirely.
    pub fn add_pair(
        &mut self,
        gold: &BTreeSet<CategoryLabel>,
        predicted: &BTreeSet<CategoryLabel>,
    ) {
        for (label, cell) in self.per_label.iter_mut() {
            match (gold.contains(label), predicted.contains(label)) {
                (true, true) => cell.true_positives += 1,
                (false, true) => cell.false_positives += 1,
                (true, false) => cell.false_negatives += 1,
                (false, false) => {}
            }
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (label, cell) in &other.per_label {
            let mine = self.per_label.entry(*label).or_default();
            mine.true_positives += cell.true_positives;
            mine.false_positives += cell.false_positives;
            mine.false_negatives += cell.false_negatives;
        }
    }

    /// Counts summed over all labels (the micro-average basis).
    pub fn micro(&self) -> ConfusionCell {
        let mut total = ConfusionCell::default();
        for cell in self.per_label.values() {
            total.true_positives += cell.true_positives;
            total.false_positives += cell.false_positives;
            total.false_negatives += cell.false_negatives;
        }
        total
    }
}

/// Precision / recall / F1 with the `0/0 → 0` convention.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_cell(cell: &ConfusionCell) -> Prf {
        let tp = cell.true_positives as f64;
        let fp = cell.false_positives as f64;
        let fnn = cell.false_negatives as f64;
        Prf {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fnn),
            f1: ratio(2.0 * tp, 2.0 * tp + fp + fnn),
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// What was scored and what was left out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeSummary {
    pub policies: usize,
    pub segments_scored: usize,
    pub excluded_errors: usize,
    pub excluded_empty_gold: usize,
}

/// A full scoring result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub options: ScoreOptions,
    pub scope: ScopeSummary,
    pub counts: ConfusionCounts,
    pub per_category: BTreeMap<CategoryLabel, Prf>,
    pub micro: Prf,
}

fn evaluation_from_counts(
    options: ScoreOptions,
    scope: ScopeSummary,
    counts: ConfusionCounts,
) -> Evaluation {
    let per_category = counts
        .per_label
        .iter()
        .map(|(label, cell)| (*label, Prf::from_cell(cell)))
        .collect();
    let micro = Prf::from_cell(&counts.micro());
    Evaluation { options, scope, counts, per_category, micro }
}

/// Score bare `(gold, predicted)` pairs. The effective gold set (after
/// dropping unscored labels) decides empty-gold handling.
pub fn score_pairs(
    pairs: &[(BTreeSet<CategoryLabel>, BTreeSet<CategoryLabel>)],
    options: ScoreOptions,
) -> Evaluation {
    let labels = scored_labels(options);
    let mut counts = ConfusionCounts::new(&labels);
    let mut scope = ScopeSummary::default();
    for (gold, predicted) in pairs {
        if options.exclude_empty_gold && effective_gold_is_empty(gold, options) {
            scope.excluded_empty_gold += 1;
            continue;
        }
        counts.add_pair(gold, predicted);
        scope.segments_scored += 1;
    }
    evaluation_from_counts(options, scope, counts)
}

fn effective_gold_is_empty(gold: &BTreeSet<CategoryLabel>, options: ScoreOptions) -> bool {
    gold.iter()
        .all(|l| !options.include_other && *l == CategoryLabel::Other)
}

/// Score an annotation run against a corpus gold standard. Records are
/// validated (no duplicates, no unknown segments); errored records are
/// excluded from the counts and tallied in the scope summary.
pub fn score_records(
    records: &[PredictionRecord],
    corpus: &Corpus,
    options: ScoreOptions,
) -> Result<Evaluation, MetricsError> {
    let known: BTreeSet<(&str, usize)> = corpus
        .segments()
        .iter()
        .map(|s| (s.policy_id.as_str(), s.segment_index))
        .collect();
    let mut seen = BTreeSet::new();
    let labels = scored_labels(options);
    let mut counts = ConfusionCounts::new(&labels);
    let mut scope = ScopeSummary::default();
    let mut policies = BTreeSet::new();
    for record in records {
        let key = (record.policy_id.as_str(), record.segment_index);
        if !known.contains(&key) {
            return Err(MetricsError::UnknownSegment {
                policy_id: record.policy_id.clone(),
                segment_index: record.segment_index,
            });
        }
        if !seen.insert(key) {
            return Err(MetricsError::DuplicateRecord {
                policy_id: record.policy_id.clone(),
                segment_index: record.segment_index,
            });
        }
        policies.insert(record.policy_id.clone());
        if record.error.is_some() {
            scope.excluded_errors += 1;
            continue;
        }
        let gold = corpus.gold(&record.policy_id, record.segment_index);
        if options.exclude_empty_gold && effective_gold_is_empty(&gold, options) {
            scope.excluded_empty_gold += 1;
            continue;
        }
        counts.add_pair(&gold, &record.predicted);
        scope.segments_scored += 1;
    }
    scope.policies = policies.len();
    Ok(evaluation_from_counts(options, scope, counts))
}

/// Fail if a corpus is not the one a run manifest was recorded against.
pub fn verify_corpus_hash(expected: &str, corpus: &Corpus) -> Result<(), MetricsError> {
    let found = corpus.content_hash();
    if found != expected {
        return Err(MetricsError::CorpusMismatch { expected: expected.to_string(), found });
    }
    Ok(())
}

/// Score a whole annotation run against a gold corpus, first verifying
/// that the corpus is the one the run was annotated against.
pub fn score(
    run: &crate::annotate::AnnotationRun,
    gold: &Corpus,
    options: ScoreOptions,
) -> Result<Evaluation, MetricsError> {
    verify_corpus_hash(&run.manifest.corpus_hash, gold)?;
    score_records(&run.predictions, gold, options)
}

/// Per-category and micro precision/recall/F1 from raw counts.
pub fn f1_from_counts(counts: &ConfusionCounts) -> (BTreeMap<CategoryLabel, Prf>, Prf) {
    let per_category = counts
        .per_label
        .iter()
        .map(|(label, cell)| (*label, Prf::from_cell(cell)))
        .collect();
    (per_category, Prf::from_cell(&counts.micro()))
}

/// Per-annotator agreement with the majority-vote gold standard, measured
/// as micro F1 over the whole corpus (a missing annotation counts as an
/// empty label set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub options: ScoreOptions,
    pub per_annotator: BTreeMap<String, f64>,
    pub mean_f1: f64,
}

pub fn annotator_agreement(corpus: &Corpus, options: ScoreOptions) -> AgreementReport {
    let labels = scored_labels(options);
    let mut per_annotator = BTreeMap::new();
    for annotator in corpus.annotator_ids() {
        let mut counts = ConfusionCounts::new(&labels);
        for segment in corpus.segments() {
            let gold = corpus.gold(&segment.policy_id, segment.segment_index);
            let assigned =
                corpus.annotator_labels(annotator, &segment.policy_id, segment.segment_index);
            counts.add_pair(&gold, &assigned);
        }
        per_annotator.insert(annotator.clone(), Prf::from_cell(&counts.micro()).f1);
    }
    let mean_f1 = if per_annotator.is_empty() {
        0.0
    } else {
        per_annotator.values().sum::<f64>() / per_annotator.len() as f64
    };
    AgreementReport { options, per_annotator, mean_f1 }
}

/// Bootstrap configuration. Defaults match the headline methodology:
/// 1,000 subsets of 50 policies each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_subsets: usize,
    pub subset_size: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_subsets: 1000, subset_size: 50, seed: 42 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Every possible subset was enumerated exactly once.
    Exhaustive,
    /// `n_subsets` subsets were drawn from the seeded RNG.
    Random,
}

/// Mean and symmetric half-width of one statistic over all subsets. The
/// half-width covers both the 2.5th and the 97.5th percentile and is
/// clamped so that `mean + half_width` never exceeds `1.0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub config: BootstrapConfig,
    pub sampling: SamplingMode,
    pub subsets_used: usize,
    pub policies: Vec<String>,
    pub micro_f1: StatSummary,
    pub per_category_f1: BTreeMap<CategoryLabel, StatSummary>,
}

/// Policy-level bootstrap over an annotation run.
pub fn bootstrap_ci(
    records: &[PredictionRecord],
    corpus: &Corpus,
    config: BootstrapConfig,
    options: ScoreOptions,
) -> Result<BootstrapReport, MetricsError> {
    if config.subset_size == 0 {
        return Err(MetricsError::Config("subset_size must be at least 1".into()));
    }
    if config.n_subsets == 0 {
        return Err(MetricsError::Config("n_subsets must be at least 1".into()));
    }
    // Validate the records once; the per-subset scoring below reuses the
    // per-policy counts.
    score_records(records, corpus, options)?;

    let labels = scored_labels(options);
    let mut per_policy: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    for record in records {
        if record.error.is_some() {
            per_policy
                .entry(record.policy_id.clone())
                .or_insert_with(|| ConfusionCounts::new(&labels));
            continue;
        }
        let gold = corpus.gold(&record.policy_id, record.segment_index);
        if options.exclude_empty_gold && effective_gold_is_empty(&gold, options) {
            per_policy
                .entry(record.policy_id.clone())
                .or_insert_with(|| ConfusionCounts::new(&labels));
            continue;
        }
        per_policy
            .entry(record.policy_id.clone())
            .or_insert_with(|| ConfusionCounts::new(&labels))
            .add_pair(&gold, &record.predicted);
    }
    let policies: Vec<String> = per_policy.keys().cloned().collect();
    let policy_counts: Vec<&ConfusionCounts> = per_policy.values().collect();
    let n = policies.len();
    if n < config.subset_size {
        return Err(MetricsError::ScopeTooSmall { available: n, required: config.subset_size });
    }

    // Subset generation is strictly single-threaded and depends only on
    // (n, subset_size, n_subsets, seed), never on thread scheduling.
    let (subsets, sampling) = generate_subsets(n, config);
    let subsets_used = subsets.len();

    // Scoring the subsets can fan out; `collect` preserves order.
    let stats: Vec<(f64, Vec<f64>)> = subsets
        .par_iter()
        .map(|subset| {
            let mut merged = ConfusionCounts::new(&labels);
            for &i in subset {
                merged.merge(policy_counts[i]);
            }
            let micro = Prf::from_cell(&merged.micro()).f1;
            let per_label = merged
                .per_label
                .values()
                .map(|cell| Prf::from_cell(cell).f1)
                .collect();
            (micro, per_label)
        })
        .collect();

    let micro_values: Vec<f64> = stats.iter().map(|(m, _)| *m).collect();
    let micro_f1 = summarize(&micro_values);
    let mut per_category_f1 = BTreeMap::new();
    for (column, label) in labels.iter().enumerate() {
        let values: Vec<f64> = stats.iter().map(|(_, v)| v[column]).collect();
        per_category_f1.insert(*label, summarize(&values));
    }

    Ok(BootstrapReport {
        config,
        sampling,
        subsets_used,
        policies,
        micro_f1,
        per_category_f1,
    })
}

/// All index subsets to score: exhaustive enumeration when there are at
/// most `n_subsets` distinct subsets, seeded random draws otherwise.
fn generate_subsets(n: usize, config: BootstrapConfig) -> (Vec<Vec<usize>>, SamplingMode) {
    let k = config.subset_size;
    if combinations_at_most(n, k, config.n_subsets as u128) {
        return (enumerate_combinations(n, k), SamplingMode::Exhaustive);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut subsets = Vec::with_capacity(config.n_subsets);
    for _ in 0..config.n_subsets {
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            indices.swap(i, j);
        }
        indices.truncate(k);
        indices.sort_unstable();
        subsets.push(indices);
    }
    (subsets, SamplingMode::Random)
}

/// Whether `C(n, k) <= cap`, computed without overflow.
fn combinations_at_most(n: usize, k: usize, cap: u128) -> bool {
    let k = k.min(n - k);
    let mut count: u128 = 1;
    for i in 0..k {
        count = count * (n - i) as u128 / (i + 1) as u128;
        if count > cap {
            return false;
        }
    }
    count <= cap
}

/// Lexicographic enumeration of all `k`-combinations of `0..n`.
fn enumerate_combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < n - (k - i) {
                break;
            }
        }
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

fn summarize(values: &[f64]) -> StatSummary {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let p2_5 = percentile(&sorted, 2.5);
    let p97_5 = percentile(&sorted, 97.5);
    let mut half_width = (mean - p2_5).max(p97_5 - mean).max(0.0);
    if mean + half_width > 1.0 {
        half_width = 1.0 - mean;
    }
    StatSummary { mean, p2_5, p97_5, half_width }
}

/// Linear-interpolation percentile over a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
