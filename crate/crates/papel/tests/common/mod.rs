//! Helpers shared by the integration-test targets: an exact rational
//! scoring oracle (independent of the library's f64 arithmetic) and small
//! fixture builders.

use num_rational::Rational64;
use papel::label::CategoryLabel;
use papel::metrics::{scored_labels, Evaluation, ScoreOptions};
use std::collections::{BTreeMap, BTreeSet};

pub type LabelSet = BTreeSet<CategoryLabel>;

/// Exact integer counts for one label, with ratios computed through
/// `num_rational` so reduction happens in exact arithmetic. The final f64 is
/// a single correctly rounded division, which is the same value the library
/// computes from the same integers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCell {
    pub tp: i64,
    pub fp: i64,
    pub fnn: i64,
}

pub fn exact_ratio(num: i64, den: i64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let reduced = Rational64::new(num, den);
    (*reduced.numer() as f64) / (*reduced.denom() as f64)
}

impl OracleCell {
    pub fn precision(&self) -> f64 {
        exact_ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        exact_ratio(self.tp, self.tp + self.fnn)
    }

    pub fn f1(&self) -> f64 {
        exact_ratio(2 * self.tp, 2 * self.tp + self.fp + self.fnn)
    }
}

/// Brute-force scoring of bare `(gold, predicted)` pairs: per-label integer
/// counts, the number of scored segments, and the number of segments dropped
/// for having an empty effective gold set.
pub struct OracleEvaluation {
    pub per_label: BTreeMap<CategoryLabel, OracleCell>,
    pub segments_scored: usize,
    pub excluded_empty_gold: usize,
}

impl OracleEvaluation {
    pub fn micro(&self) -> OracleCell {
        let mut total = OracleCell::default();
        for cell in self.per_label.values() {
            total.tp += cell.tp;
            total.fp += cell.fp;
            total.fnn += cell.fnn;
        }
        total
    }
}

pub fn oracle_score(pairs: &[(LabelSet, LabelSet)], options: ScoreOptions) -> OracleEvaluation {
    let labels = scored_labels(options);
    let mut per_label: BTreeMap<CategoryLabel, OracleCell> =
        labels.iter().map(|l| (*l, OracleCell::default())).collect();
    let mut segments_scored = 0;
    let mut excluded_empty_gold = 0;

    for (gold, predicted) in pairs {
        let effective_gold: LabelSet =
            gold.iter().copied().filter(|l| labels.contains(l)).collect();
        if options.exclude_empty_gold && effective_gold.is_empty() {
            excluded_empty_gold += 1;
            continue;
        }
        segments_scored += 1;
        for label in &labels {
            let cell = per_label.get_mut(label).unwrap();
            match (gold.contains(label), predicted.contains(label)) {
                (true, true) => cell.tp += 1,
                (false, true) => cell.fp += 1,
                (true, false) => cell.fnn += 1,
                (false, false) => {}
            }
        }
    }

    OracleEvaluation { per_label, segments_scored, excluded_empty_gold }
}

/// Assert that a library evaluation matches the oracle exactly: integer
/// counts must be equal and every ratio must be bit-identical.
pub fn assert_matches_oracle(
    evaluation: &Evaluation,
    pairs: &[(LabelSet, LabelSet)],
    options: ScoreOptions,
) {
    let oracle = oracle_score(pairs, options);

    assert_eq!(evaluation.scope.segments_scored, oracle.segments_scored);
    assert_eq!(evaluation.scope.excluded_empty_gold, oracle.excluded_empty_gold);
    assert_eq!(
        evaluation.counts.per_label.len(),
        oracle.per_label.len(),
        "label sets under scoring differ"
    );

    for (label, expected) in &oracle.per_label {
        let cell = evaluation
            .counts
            .per_label
            .get(label)
            .unwrap_or_else(|| panic!("{label} missing from evaluation counts"));
        assert_eq!(cell.true_positives as i64, expected.tp, "{label} tp");
        assert_eq!(cell.false_positives as i64, expected.fp, "{label} fp");
        assert_eq!(cell.false_negatives as i64, expected.fnn, "{label} fn");

        let prf = evaluation.per_category[label];
        assert_eq!(prf.precision, expected.precision(), "{label} precision");
        assert_eq!(prf.recall, expected.recall(), "{label} recall");
        assert_eq!(prf.f1, expected.f1(), "{label} f1");
    }

    let micro = oracle.micro();
    assert_eq!(evaluation.micro.precision, micro.precision(), "micro precision");
    assert_eq!(evaluation.micro.recall, micro.recall(), "micro recall");
    assert_eq!(evaluation.micro.f1, micro.f1(), "micro f1");
}
