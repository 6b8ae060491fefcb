//! Property-based tests for the library invariants: majority voting,
//! scoring against an exact rational oracle, prompt render/parse round
//! trips, and keyword normalization.

mod common;

use common::{assert_matches_oracle, LabelSet};
use papel::corpus::majority_vote;
use papel::label::CategoryLabel;
use papel::metrics::{score_pairs, ScoreOptions};
use papel::normalize::{normalize_annotation, KeywordTable, MatchSpan};
use papel::prompt::{
    parse_sections, render, CategorySpec, CotBlock, CotExample, PromptTemplate, Section,
    ShotLevel, TaskKind,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn label_set() -> impl Strategy<Value = LabelSet> {
    prop::collection::btree_set(prop::sample::select(&CategoryLabel::ALL[..]), 0..=5)
}

fn votes() -> impl Strategy<Value = Vec<LabelSet>> {
    prop::collection::vec(label_set(), 0..=7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// A label survives the vote exactly when at least `quorum` of the sets
    /// contain it.
    #[test]
    fn majority_vote_matches_quorum_definition(votes in votes(), quorum in 1usize..=8) {
        let result = majority_vote(&votes, quorum);
        for label in CategoryLabel::ALL {
            let support = votes.iter().filter(|v| v.contains(&label)).count();
            prop_assert_eq!(
                result.contains(&label),
                support >= quorum,
                "label {} with support {} against quorum {}",
                label,
                support,
                quorum
            );
        }
    }

    /// The vote is a function of the multiset of ballots, not their order.
    #[test]
    fn majority_vote_is_permutation_invariant(
        votes in votes(),
        quorum in 1usize..=8,
        seed in any::<u64>(),
    ) {
        let mut shuffled = votes.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(majority_vote(&votes, quorum), majority_vote(&shuffled, quorum));
    }

    /// Quorum one degenerates to the union of all ballots.
    #[test]
    fn majority_vote_quorum_one_is_union(votes in votes()) {
        let mut union = LabelSet::new();
        for vote in &votes {
            union.extend(vote.iter().copied());
        }
        prop_assert_eq!(majority_vote(&votes, 1), union);
    }

    /// Quorum equal to the ballot count degenerates to the intersection.
    #[test]
    fn majority_vote_full_quorum_is_intersection(votes in votes()) {
        let result = majority_vote(&votes, votes.len().max(1));
        match votes.split_first() {
            None => prop_assert!(result.is_empty()),
            Some((first, rest)) => {
                let intersection: LabelSet = first
                    .iter()
                    .copied()
                    .filter(|label| rest.iter().all(|v| v.contains(label)))
                    .collect();
                prop_assert_eq!(result, intersection);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Scoring random small fixtures agrees exactly (integer counts and
    /// bit-identical ratios) with an independent rational brute force.
    #[test]
    fn score_pairs_matches_rational_oracle(
        pairs in prop::collection::vec((label_set(), label_set()), 1..=10),
        include_other in any::<bool>(),
        exclude_empty_gold in any::<bool>(),
    ) {
        let options = ScoreOptions { include_other, exclude_empty_gold };
        let evaluation = score_pairs(&pairs, options);
        assert_matches_oracle(&evaluation, &pairs, options);
    }
}

fn sentence() -> impl Strategy<Value = String> {
    "[a-z]{2,8}( [a-z]{2,8}){0,5}\\."
}

fn identifier() -> impl Strategy<Value = String> {
    "[a-z]{3,8}\\.[a-z]{1,6}"
}

fn arbitrary_template() -> impl Strategy<Value = PromptTemplate> {
    let kind = prop_oneof![Just(TaskKind::Annotation), Just(TaskKind::Contradiction)];
    let shot = prop_oneof![Just(ShotLevel::Zero), Just(ShotLevel::One), Just(ShotLevel::Few)];
    let cot = prop::option::of((
        sentence(),
        prop::collection::vec((sentence(), sentence(), sentence()), 0..=2),
    ));
    (
        identifier(),
        kind,
        shot,
        sentence(),
        sentence(),
        prop::collection::btree_set("[a-z]{3,10}", 1..=4),
        prop::collection::vec(prop::option::of(sentence()), 4),
        cot,
        sentence(),
    )
        .prop_flat_map(
            |(id, kind, shot, intro, definition, labels, descriptions, cot, task)| {
                let per_category = match shot {
                    ShotLevel::Zero => 0..=0usize,
                    ShotLevel::One => 1..=1usize,
                    ShotLevel::Few => 2..=3usize,
                };
                let categories: Vec<(String, Option<String>)> = labels
                    .into_iter()
                    .zip(descriptions)
                    .collect();
                (
                    Just((id, kind, shot, intro, definition, cot, task)),
                    prop::collection::vec(
                        prop::collection::vec(sentence(), per_category),
                        categories.len(),
                    ),
                    Just(categories),
                )
            },
        )
        .prop_map(|((id, kind, shot, intro, definition, cot, task), examples, categories)| {
            PromptTemplate {
                template_id: id,
                task_kind: kind,
                shot_level: shot,
                introduction: intro,
                definition,
                categories: categories
                    .into_iter()
                    .zip(examples)
                    .map(|((label, description), examples)| CategorySpec {
                        label,
                        description,
                        examples,
                    })
                    .collect(),
                cot: cot.map(|(methodology, worked)| CotBlock {
                    methodology,
                    worked_examples: worked
                        .into_iter()
                        .map(|(statement, reasoning, conclusion)| CotExample {
                            statement,
                            reasoning,
                            conclusion,
                        })
                        .collect(),
                }),
                task_description: task,
                reconstructed: false,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Rendering then parsing recovers the section structure: the
    /// free-text sections come back verbatim and the category and worked
    /// example blocks come back with one entry per item.
    #[test]
    fn render_then_parse_recovers_sections(template in arbitrary_template()) {
        let rendered = render(&template, "The payload sentence.").unwrap();
        prop_assert_eq!(rendered.user_text.as_str(), "The payload sentence.");
        prop_assert!(!rendered.system_text.contains("\n\n\n"));

        let sections = parse_sections(&rendered.system_text)
            .map_err(|e| TestCaseError::fail(format!("parse_sections failed: {e}")))?;

        let mut iter = sections.into_iter();
        prop_assert_eq!(iter.next(), Some(Section::Introduction(template.introduction.clone())));
        prop_assert_eq!(iter.next(), Some(Section::Definition(template.definition.clone())));

        let categories = iter.next();
        match categories {
            Some(Section::Categories(block)) => {
                for (i, category) in template.categories.iter().enumerate() {
                    let number = format!("{}. {}", i + 1, category.label);
                    prop_assert!(
                        block.lines().any(|line| line.starts_with(&number)),
                        "category block is missing entry {}",
                        number
                    );
                }
                let example_lines =
                    block.lines().filter(|l| l.starts_with("Example: ")).count();
                let expected: usize =
                    template.categories.iter().map(|c| c.examples.len()).sum();
                prop_assert_eq!(example_lines, expected);
            }
            other => return Err(TestCaseError::fail(format!(
                "expected a category section, found {other:?}"
            ))),
        }

        if let Some(cot) = &template.cot {
            prop_assert_eq!(
                iter.next(),
                Some(Section::CotMethodology(cot.methodology.clone()))
            );
            if !cot.worked_examples.is_empty() {
                match iter.next() {
                    Some(Section::CotExamples(block)) => {
                        let statements =
                            block.lines().filter(|l| l.starts_with("Statement: ")).count();
                        prop_assert_eq!(statements, cot.worked_examples.len());
                    }
                    other => return Err(TestCaseError::fail(format!(
                        "expected a worked-example section, found {other:?}"
                    ))),
                }
            }
        }

        prop_assert_eq!(
            iter.next(),
            Some(Section::TaskDescription(template.task_description.clone()))
        );
        prop_assert_eq!(iter.next(), None);
    }
}

fn phrase_pool() -> Vec<(CategoryLabel, String)> {
    let table = KeywordTable::builtin();
    let mut pool = Vec::new();
    for category in &table.categories {
        pool.push((category.label, category.canonical.clone()));
        for alias in &category.aliases {
            pool.push((category.label, alias.clone()));
        }
        for keyword in &category.keywords {
            pool.push((category.label, keyword.clone()));
        }
    }
    pool
}

/// Recompute the ambiguity flag naively: any two occurrences with distinct
/// labels whose character ranges overlap.
fn naive_overlap(trace: &[MatchSpan]) -> bool {
    for (i, a) in trace.iter().enumerate() {
        for b in &trace[i + 1..] {
            let a_end = a.char_offset + a.char_len;
            let b_end = b.char_offset + b.char_len;
            if a.char_offset < b_end && b.char_offset < a_end && a.label != b.label {
                return true;
            }
        }
    }
    false
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every planted table phrase is recognized, labels only grow when more
    /// text is appended, and the review flag matches its definition.
    #[test]
    fn normalization_invariants(
        planted_picks in prop::collection::vec(prop::sample::select(phrase_pool()), 0..=3),
        noise in prop::collection::vec("[qz]{2,6}", 0..=3),
        extra_pick in prop::sample::select(phrase_pool()),
        seed in any::<u64>(),
    ) {
        let table = KeywordTable::builtin();
        let mut fragments: Vec<String> = planted_picks.iter().map(|(_, p)| p.clone()).collect();
        fragments.extend(noise);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fragments.shuffle(&mut rng);
        let answer = fragments.join(" ");

        let normalized = normalize_annotation(&answer, table);

        for (label, phrase) in &planted_picks {
            prop_assert!(
                normalized.labels.contains(label),
                "planted phrase {phrase:?} for {label} was not recognized in {answer:?}"
            );
        }

        prop_assert_eq!(
            normalized.needs_review,
            normalized.labels.is_empty() || naive_overlap(&normalized.match_trace),
            "review flag diverges from its definition for {:?}",
            &answer
        );

        let (extra_label, extra_phrase) = extra_pick;
        let longer = if answer.is_empty() {
            extra_phrase.clone()
        } else {
            format!("{answer} {extra_phrase}")
        };
        let renormalized = normalize_annotation(&longer, table);
        prop_assert!(
            normalized.labels.is_subset(&renormalized.labels),
            "labels shrank when text was appended"
        );
        prop_assert!(renormalized.labels.contains(&extra_label));
    }
}

#[test]
fn empty_answer_is_flagged_with_no_labels() {
    let normalized = normalize_annotation("", KeywordTable::builtin());
    assert!(normalized.labels.is_empty());
    assert!(normalized.needs_review);
    assert_eq!(normalized.review_reason(), Some("no_match"));
}
