use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// A participant in the federation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Role {
    /// Holds the task labels and the task head.
    Task,
    /// Holds the aggregator, mappers and contrastive discriminators.
    Server,
    /// Fairness-insensitive platform `i`: a feature slice and its encoder.
    Insensitive(usize),
    /// Fairness-sensitive platform `i`: one sensitive label column and its
    /// bias discriminator.
    Sensitive(usize),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Task => write!(f, "task"),
            Role::Server => write!(f, "server"),
            Role::Insensitive(i) => write!(f, "insensitive:{i}"),
            Role::Sensitive(i) => write!(f, "sensitive:{i}"),
        }
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Protocol(format!("unknown role `{s}`"));
        match s {
            "task" => Ok(Role::Task),
            "server" => Ok(Role::Server),
            _ => {
                let (kind, idx) = s.split_once(':').ok_or_else(bad)?;
                let idx: usize = idx.parse().map_err(|_| bad())?;
                match kind {
                    "insensitive" => Ok(Role::Insensitive(idx)),
                    "sensitive" => Ok(Role::Sensitive(idx)),
                    _ => Err(bad()),
                }
            }
        }
    }
}

impl From<Role> for String {
    fn from(r: Role) -> Self {
        r.to_string()
    }
}

impl TryFrom<String> for Role {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

/// What a message carries. The last three kinds never have a legal edge;
/// they exist so that leaks can be named in transcripts and audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    SampleIds,
    LocalRepUpload,
    UnifiedRepToTask,
    TaskGradDown,
    ProtectedRepUpload,
    BiasDiscGradDown,
    AdvGradDown,
    LocalRepGradDown,
    RawFeatures,
    SensitiveLabels,
    TaskLabels,
}

impl PayloadKind {
    /// Traffic that exists only because of the fairness machinery.
    pub fn is_fairness(self) -> bool {
        matches!(
            self,
            PayloadKind::ProtectedRepUpload | PayloadKind::BiasDiscGradDown | PayloadKind::AdvGradDown
        )
    }
}

/// The edge table: which kinds may travel from `sender` to `receiver`.
pub fn edge_allowed(sender: Role, receiver: Role, kind: PayloadKind) -> bool {
    use PayloadKind::*;
    use Role::*;
    matches!(
        (sender, receiver, kind),
        (Task, Insensitive(_), SampleIds)
            | (Task, Sensitive(_), SampleIds)
            | (Insensitive(_), Server, LocalRepUpload)
            | (Server, Task, UnifiedRepToTask)
            | (Task, Server, TaskGradDown)
            | (Server, Sensitive(_), ProtectedRepUpload)
            | (Sensitive(_), Server, BiasDiscGradDown)
            | (Sensitive(_), Server, AdvGradDown)
            | (Server, Insensitive(_), LocalRepGradDown)
    )
}
