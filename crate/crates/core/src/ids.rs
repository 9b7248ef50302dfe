//! String-backed identifier newtypes.

use serde::{Deserialize, Serialize};
use std::fmt;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Lifecycle phase identifier, e.g. `data`.
    PhaseId
);
string_id!(
    /// Lifecycle step identifier, qualified by its phase: `data.curation`.
    StepId
);
string_id!(QuestionId);
string_id!(EvidenceId);
string_id!(TestId);
string_id!(NodeId);
string_id!(MitigationId);
string_id!(AuditId);
string_id!(EntryId);
string_id!(TriggerId);
string_id!(SpecItemId);
string_id!(
    /// Whoever performed an action. No identity management beyond this.
    ActorId
);
