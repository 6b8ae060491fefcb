//! The eleven built-in prompt templates.
//!
//! Prompts I through III are transcribed from their published text with
//! whitespace canonicalized (one category per line, sections separated by a
//! single blank line). Prompts IV through XI carry `reconstructed: true`:
//! only their structural recipes are published (which sections they add and
//! how many examples per category), so their example and methodology texts
//! were written for this crate following those recipes.

use super::{CategorySpec, CotBlock, CotExample, PromptTemplate, ShotLevel, TaskKind};
use crate::label::CategoryLabel;

const ANNOTATION_INTRO: &str = "Websites and digital products have privacy policies. I will \
give you a dataset of privacy policies, where privacy policies are divided into paragraph \
length segments and each segment is annotated with one or more data practice.";

const ANNOTATION_DEFINITION: &str = "A data practice means how the data is used and processed \
by an organization. In current context, a data practice belongs to one of the following data \
practice category.";

const ANNOTATION_TASK: &str = "I have a specific task for you: The user will give you a \
sentence from some privacy contents, and you tell them which category of practices this \
sentence may contain. Please only respond with the category.";

const COT_TASK: &str = "I have a specific task for you: The user will give you a sentence \
from some privacy contents. Apply the step-by-step methodology above to decide which category \
of practices this sentence may contain, then respond with the category.";

const CONTRADICTION_INTRO: &str = "Websites and digital products have privacy policies. I \
will give you the full text of a privacy policy, divided into numbered statements. Privacy \
policies sometimes contain statements that are inconsistent with each other.";

const CONTRADICTION_DEFINITION: &str = "A contradiction means two or more statements in the \
same privacy policy that cannot all be true at once, for example statements that make \
conflicting claims about how user data is collected, used, shared, or retained.";

/// Phase-one task description, including the line-oriented output contract
/// that the finding parser understands.
pub const CONTRADICTION_TASK: &str = "I have a specific task for you: The user will give you \
a privacy policy as a list of numbered statements, where each statement begins with its \
number in square brackets. Examine the whole policy and report every pair of statements that \
contradict each other. Report each finding on its own line, in exactly this format: \
FINDING | seg=<first statement number> | seg=<second statement number> | \
type=<contradiction type or unspecified> | quote_a=\"<exact words copied from the first \
statement>\" | quote_b=\"<exact words copied from the second statement>\" | because <one \
sentence explaining the conflict>. If you find no contradictions, respond with exactly: \
NO FINDINGS.";

/// The canonical wording of the model answer that reports no findings.
pub const NO_FINDINGS: &str = "NO FINDINGS.";

fn brief_description(label: CategoryLabel) -> &'static str {
    match label {
        CategoryLabel::FirstPartyCollectionUse => {
            "how and why a service provider collects user information."
        }
        CategoryLabel::ThirdPartySharingCollection => {
            "how user information may be shared with or collected by third parties."
        }
        CategoryLabel::UserChoiceControl => "choices and control options available to users.",
        CategoryLabel::UserAccessEditDeletion => {
            "if and how users may access, edit, or delete their information."
        }
        CategoryLabel::DataRetention => "how long user information is stored.",
        CategoryLabel::DataSecurity => "how user information is protected.",
        CategoryLabel::PolicyChange => {
            "if and how users will be informed about changes to the privacy policy."
        }
        CategoryLabel::DoNotTrack => {
            "if and how Do Not Track signals for online tracking and advertising are honored."
        }
        CategoryLabel::InternationalSpecificAudiences => {
            "practices that pertain only to a specific group of users (e.g., children, \
             Europeans, or California residents)."
        }
        CategoryLabel::Other => {
            "additional sub-labels for introductory or general text, contact information, and \
             practices not covered by the other categories."
        }
    }
}

fn detailed_description(label: CategoryLabel) -> String {
    let extension = match label {
        CategoryLabel::FirstPartyCollectionUse => {
            " In first party collection the service provider that owns or operates the \
             website/platform/service directly collect data from individuals."
        }
        CategoryLabel::ThirdPartySharingCollection => {
            " In third party sharing/collection an entity other than the service provider \
             collects data from users through the service provider's platform. Third parties \
             could include advertisers, analytic companies, or partner services that have \
             their own data collection and privacy practices."
        }
        CategoryLabel::UserChoiceControl => {
            " Choice means giving individuals options as to how their personal information may \
             be used. Specifically, choice relates to secondary uses of information\u{2014}that \
             is, uses beyond those necessary to complete the contemplated transaction. Control \
             means privacy controls that allow individuals to manage use and sharing of their \
             data."
        }
        CategoryLabel::DataRetention => {
            " All data should have retention period associated with it, retention period means \
             maximum period the data will be stored."
        }
        CategoryLabel::DataSecurity => {
            " In particular, it means the security measures that ensures security of personal \
             data, including encryption or storage of data on secure servers."
        }
        _ => "",
    };
    format!("{}{extension}", brief_description(label))
}

/// Up to three example sentences per category. Prompt IV uses the first,
/// Prompt V all three.
fn category_examples(label: CategoryLabel) -> [&'static str; 3] {
    match label {
        CategoryLabel::FirstPartyCollectionUse => [
            "We collect your name and email address when you register for an account.",
            "When you place an order, we ask for your shipping address and payment details.",
            "We use your search history to personalize the content you see on our homepage.",
        ],
        CategoryLabel::ThirdPartySharingCollection => [
            "We share your browsing activity with advertising partners so they can show you \
             relevant offers.",
            "We allow analytics providers to set cookies that collect information about your \
             visits.",
            "Your profile information may be disclosed to our business partners for joint \
             promotions.",
        ],
        CategoryLabel::UserChoiceControl => [
            "You may opt out of receiving marketing emails at any time in your account settings.",
            "You can disable location tracking in the app settings whenever you wish.",
            "To stop receiving push notifications, adjust your device preferences.",
        ],
        CategoryLabel::UserAccessEditDeletion => [
            "You can review, correct, or delete the personal information in your profile at \
             any time.",
            "Registered users may download a copy of the data we hold about them.",
            "To request deletion of your account data, submit a request through our help center.",
        ],
        CategoryLabel::DataRetention => [
            "We retain your order history for five years after your last purchase.",
            "Log data is automatically deleted after ninety days.",
            "We keep backup copies of your records only as long as required by law.",
        ],
        CategoryLabel::DataSecurity => [
            "We use SSL encryption to protect your personal information during transmission.",
            "Access to personal data is restricted to employees who need it to perform their \
             duties.",
            "All stored passwords are hashed and salted on secure servers.",
        ],
        CategoryLabel::PolicyChange => [
            "We will notify you by email before any material changes to this policy take effect.",
            "If we update this policy, the revised version will be posted on this page with a \
             new effective date.",
            "Significant changes to our practices will be announced on our homepage thirty \
             days in advance.",
        ],
        CategoryLabel::DoNotTrack => [
            "Our services do not respond to Do Not Track signals from your browser.",
            "Because there is no industry standard, we currently do not honor Do Not Track \
             requests.",
            "When your browser sends a Do Not Track signal, we disable interest-based \
             advertising for your session.",
        ],
        CategoryLabel::InternationalSpecificAudiences => [
            "Our services are not directed to children under the age of 13.",
            "If you are a resident of the European Economic Area, you have additional rights \
             under the GDPR.",
            "California residents may request a notice describing the categories of \
             information we share.",
        ],
        CategoryLabel::Other => [
            "If you have any questions about this privacy policy, you can contact us at \
             privacy@example.com.",
            "This privacy policy explains how we handle your information across all of our \
             services.",
            "This policy was last updated in January and applies to all visitors.",
        ],
    }
}

const COT_METHODOLOGY: &str = "Use the following step-by-step methodology to classify a \
sentence.\nStep 1: Identify who collects, uses, shares, or manages the data mentioned in the \
sentence.\nStep 2: Identify what happens to the data or what right the user is given.\nStep \
3: Match the actor and the action against the category list above and pick the closest \
category.\nStep 4: If several categories apply, pick every category that is directly \
supported by the sentence.\nStep 5: If no category fits, choose Other.";

fn cot_examples() -> Vec<CotExample> {
    let reasoning: [(&str, CategoryLabel); 9] = [
        (
            "The service provider itself collects personal information directly from the \
             user, which is first party data collection.",
            CategoryLabel::FirstPartyCollectionUse,
        ),
        (
            "An entity other than the service provider receives user data, which is sharing \
             with third parties.",
            CategoryLabel::ThirdPartySharingCollection,
        ),
        (
            "The user is offered an option to limit a secondary use of their data, which is a \
             user choice.",
            CategoryLabel::UserChoiceControl,
        ),
        (
            "The user may access, edit, or delete stored information about them.",
            CategoryLabel::UserAccessEditDeletion,
        ),
        (
            "The sentence states how long user information is stored, which is a retention \
             period.",
            CategoryLabel::DataRetention,
        ),
        (
            "Encryption is a security measure that protects user information.",
            CategoryLabel::DataSecurity,
        ),
        (
            "The sentence describes how users are informed about changes to the privacy policy.",
            CategoryLabel::PolicyChange,
        ),
        (
            "The sentence states how Do Not Track signals are honored.",
            CategoryLabel::DoNotTrack,
        ),
        (
            "The practice pertains to a specific group of users, namely children.",
            CategoryLabel::InternationalSpecificAudiences,
        ),
    ];
    reasoning
        .into_iter()
        .map(|(reasoning, label)| CotExample {
            statement: collapse_ws(category_examples(label)[0]),
            reasoning: collapse_ws(reasoning),
            conclusion: label.display_name().to_string(),
        })
        .collect()
}

/// The two built-in contradiction types with their published definitions.
pub fn contradiction_types() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "Logical Contradiction",
            "pairs of statements that either directly contradict each other or discuss the \
             non-collection of broad data types alongside the collection of specific or \
             narrower data types.",
        ),
        (
            "Narrowing Definition",
            "statements that announce the collection of broad data categories but explicitly \
             exclude certain specific data types from the data collection.",
        ),
    ]
}

fn contradiction_type_examples(name: &str) -> [&'static str; 2] {
    match name {
        "Logical Contradiction" => [
            "The statement \"We do not collect your precise location\" contradicts the \
             statement \"We collect your GPS coordinates to suggest nearby stores\", because \
             GPS coordinates are precise location data.",
            "The statement \"We never share personal information with advertisers\" \
             contradicts the statement \"We share your email address with our advertising \
             partners\", because an email address is personal information.",
        ],
        "Narrowing Definition" => [
            "The statement \"We collect your device information\" is narrowed by the \
             statement \"We do not collect device serial numbers\", because the broad \
             category is announced while a specific member of it is excluded.",
            "The statement \"We collect usage data about your visits\" is narrowed by the \
             statement \"We do not record the pages you view\", because page views are usage \
             data excluded from the announced collection.",
        ],
        other => panic!("no examples for contradiction type {other:?}"),
    }
}

fn annotation_categories(
    describe: Option<fn(CategoryLabel) -> String>,
    examples_per_category: usize,
) -> Vec<CategorySpec> {
    CategoryLabel::ALL
        .iter()
        .map(|&label| CategorySpec {
            label: label.display_name().to_string(),
            description: describe.map(|f| f(label)),
            examples: category_examples(label)[..examples_per_category]
                .iter()
                .map(|s| collapse_ws(s))
                .collect(),
        })
        .collect()
}

fn contradiction_categories(examples_per_type: usize) -> Vec<CategorySpec> {
    contradiction_types()
        .into_iter()
        .map(|(name, definition)| CategorySpec {
            label: name.to_string(),
            description: Some(collapse_ws(definition)),
            examples: contradiction_type_examples(name)[..examples_per_type]
                .iter()
                .map(|s| collapse_ws(s))
                .collect(),
        })
        .collect()
}

/// String literals above are wrapped for source readability; collapse the
/// line-continuation whitespace back to single spaces.
fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub(super) fn builtin_templates() -> Vec<PromptTemplate> {
    let annotation = |id: &str,
                      shot_level: ShotLevel,
                      categories: Vec<CategorySpec>,
                      cot: Option<CotBlock>,
                      task: &str,
                      reconstructed: bool| PromptTemplate {
        template_id: id.to_string(),
        task_kind: TaskKind::Annotation,
        shot_level,
        introduction: collapse_ws(ANNOTATION_INTRO),
        definition: collapse_ws(ANNOTATION_DEFINITION),
        categories,
        cot,
        task_description: collapse_ws(task),
        reconstructed,
    };
    let contradiction = |id: &str,
                         shot_level: ShotLevel,
                         categories: Vec<CategorySpec>,
                         reconstructed: bool| PromptTemplate {
        template_id: id.to_string(),
        task_kind: TaskKind::Contradiction,
        shot_level,
        introduction: collapse_ws(CONTRADICTION_INTRO),
        definition: collapse_ws(CONTRADICTION_DEFINITION),
        categories,
        cot: None,
        task_description: collapse_ws(CONTRADICTION_TASK),
        reconstructed,
    };

    fn brief_fixed(label: CategoryLabel) -> String {
        collapse_ws(brief_description(label))
    }
    fn detailed_fixed(label: CategoryLabel) -> String {
        collapse_ws(&detailed_description(label))
    }

    vec![
        annotation(
            "annotation.I",
            ShotLevel::Zero,
            annotation_categories(None, 0),
            None,
            ANNOTATION_TASK,
            false,
        ),
        annotation(
            "annotation.II",
            ShotLevel::Zero,
            annotation_categories(Some(brief_fixed), 0),
            None,
            ANNOTATION_TASK,
            false,
        ),
        annotation(
            "annotation.III",
            ShotLevel::Zero,
            annotation_categories(Some(detailed_fixed), 0),
            None,
            ANNOTATION_TASK,
            false,
        ),
        annotation(
            "annotation.IV",
            ShotLevel::One,
            annotation_categories(Some(detailed_fixed), 1),
            None,
            ANNOTATION_TASK,
            true,
        ),
        annotation(
            "annotation.V",
            ShotLevel::Few,
            annotation_categories(Some(detailed_fixed), 3),
            None,
            ANNOTATION_TASK,
            true,
        ),
        annotation(
            "annotation.VI",
            ShotLevel::Zero,
            annotation_categories(None, 0),
            Some(CotBlock {
                methodology: COT_METHODOLOGY.to_string(),
                worked_examples: cot_examples().into_iter().take(2).collect(),
            }),
            COT_TASK,
            true,
        ),
        annotation(
            "annotation.VII",
            ShotLevel::Zero,
            annotation_categories(None, 0),
            Some(CotBlock {
                methodology: COT_METHODOLOGY.to_string(),
                worked_examples: cot_examples(),
            }),
            COT_TASK,
            true,
        ),
        contradiction("contradiction.VIII", ShotLevel::Zero, Vec::new(), true),
        contradiction(
            "contradiction.IX",
            ShotLevel::Zero,
            contradiction_categories(0),
            true,
        ),
        contradiction(
            "contradiction.X",
            ShotLevel::One,
            contradiction_categories(1),
            true,
        ),
        contradiction(
            "contradiction.XI",
            ShotLevel::Few,
            contradiction_categories(2),
            true,
        ),
    ]
}
