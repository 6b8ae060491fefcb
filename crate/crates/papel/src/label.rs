//! The ten data-practice categories used throughout the toolkit.
//!
//! Every category has exactly one canonical display string (the string used
//! in prompts, reports, and serialized files). Parsing is case-insensitive
//! and accepts a small, explicit set of alternate spellings seen in the
//! wild; anything else is rejected so that corpus ingestion fails loudly
//! instead of silently inventing labels.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// A data-practice category. Ordering follows the numbered list used by the
/// annotation prompts (`Other` last), so sorted label sets always print in
/// catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CategoryLabel {
    FirstPartyCollectionUse,
    ThirdPartySharingCollection,
    UserChoiceControl,
    UserAccessEditDeletion,
    DataRetention,
    DataSecurity,
    PolicyChange,
    DoNotTrack,
    InternationalSpecificAudiences,
    Other,
}

/// Raised when a string does not name any known category.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown category: {0:?}")]
pub struct UnknownCategory(pub String);

impl CategoryLabel {
    /// All categories in catalog order.
    pub const ALL: [CategoryLabel; 10] = [
        CategoryLabel::FirstPartyCollectionUse,
        CategoryLabel::ThirdPartySharingCollection,
        CategoryLabel::UserChoiceControl,
        CategoryLabel::UserAccessEditDeletion,
        CategoryLabel::DataRetention,
        CategoryLabel::DataSecurity,
        CategoryLabel::PolicyChange,
        CategoryLabel::DoNotTrack,
        CategoryLabel::InternationalSpecificAudiences,
        CategoryLabel::Other,
    ];

    /// The canonical display string, as it appears in prompt category lists.
    pub fn display_name(self) -> &'static str {
        match self {
            CategoryLabel::FirstPartyCollectionUse => "First Party Collection/Use",
            CategoryLabel::ThirdPartySharingCollection => "Third Party Sharing/Collection",
            CategoryLabel::UserChoiceControl => "User Choice/Control",
            CategoryLabel::UserAccessEditDeletion => "User Access, Edit, and Deletion",
            CategoryLabel::DataRetention => "Data Retention",
            CategoryLabel::DataSecurity => "Data Security",
            CategoryLabel::PolicyChange => "Policy Change",
            CategoryLabel::DoNotTrack => "Do Not Track",
            CategoryLabel::InternationalSpecificAudiences => {
                "International and Specific Audiences"
            }
            CategoryLabel::Other => "Other",
        }
    }

    /// Accepted alternate spellings (exact strings, compared
    /// case-insensitively after trimming). These cover the label variants
    /// found in existing annotation exports; they are deliberately few.
    fn aliases(self) -> &'static [&'static str] {
        match self {
            CategoryLabel::UserAccessEditDeletion => &["User Access, Edit and Deletion"],
            CategoryLabel::InternationalSpecificAudiences => &["International & Specific Audiences"],
            _ => &[],
        }
    }

    /// Parse a display string. Leading/trailing whitespace is ignored and the
    /// comparison is case-insensitive, but no other variance is tolerated.
    pub fn from_display(raw: &str) -> Result<CategoryLabel, UnknownCategory> {
        let wanted = raw.trim();
        for label in CategoryLabel::ALL {
            if wanted.eq_ignore_ascii_case(label.display_name()) {
                return Ok(label);
            }
            for alias in label.aliases() {
                if wanted.eq_ignore_ascii_case(alias) {
                    return Ok(label);
                }
            }
        }
        Err(UnknownCategory(raw.to_string()))
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl Serialize for CategoryLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.display_name())
    }
}

impl<'de> Deserialize<'de> for CategoryLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        CategoryLabel::from_display(&raw).map_err(D::Error::custom)
    }
}
