use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descriptor::{parse_descriptor, serialize_descriptor, ComponentDescriptor};
use crate::registry::ComponentId;

/// Lifecycle of a component instance under the executive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LifecycleState {
    Registered,
    Unsatisfied,
    Satisfied,
    Active,
    Suspended,
    Uninstalled,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 6] = [
        LifecycleState::Registered,
        LifecycleState::Unsatisfied,
        LifecycleState::Satisfied,
        LifecycleState::Active,
        LifecycleState::Suspended,
        LifecycleState::Uninstalled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleState::Registered => "REGISTERED",
            LifecycleState::Unsatisfied => "UNSATISFIED",
            LifecycleState::Satisfied => "SATISFIED",
            LifecycleState::Active => "ACTIVE",
            LifecycleState::Suspended => "SUSPENDED",
            LifecycleState::Uninstalled => "UNINSTALLED",
        }
    }

    /// The transition relation.
    pub fn can_transition_to(self, to: LifecycleState) -> bool {
        use LifecycleState::*;
        matches!(
            (self, to),
            (Registered, Unsatisfied | Satisfied | Uninstalled)
                | (Unsatisfied, Satisfied | Registered | Uninstalled)
                | (Satisfied, Active | Unsatisfied | Registered | Uninstalled)
                | (Active, Suspended | Satisfied | Unsatisfied | Uninstalled)
                | (Suspended, Active | Satisfied | Unsatisfied | Uninstalled)
        )
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LifecycleState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LifecycleState::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown lifecycle state {s:?}"))
    }
}

mod xml_descriptor {
    use super::*;
    use serde::{de::Error, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &ComponentDescriptor, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&serialize_descriptor(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComponentDescriptor, D::Error> {
        let xml = String::deserialize(d)?;
        parse_descriptor(&xml).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    Install {
        #[serde(with = "xml_descriptor")]
        descriptor: ComponentDescriptor,
    },
    Enable { id: ComponentId },
    Disable { id: ComponentId },
    Start { id: ComponentId },
    Stop { id: ComponentId },
    Uninstall { id: ComponentId },
    Suspend { id: ComponentId },
    Resume { id: ComponentId },
    SetProperty { id: ComponentId, name: String, value: String },
    ProviderAppeared { id: ComponentId },
    ProviderDeparted { id: ComponentId },
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Install { .. } => "install",
            EventKind::Enable { .. } => "enable",
            EventKind::Disable { .. } => "disable",
            EventKind::Start { .. } => "start",
            EventKind::Stop { .. } => "stop",
            EventKind::Uninstall { .. } => "uninstall",
            EventKind::Suspend { .. } => "suspend",
            EventKind::Resume { .. } => "resume",
            EventKind::SetProperty { .. } => "set-property",
            EventKind::ProviderAppeared { .. } => "provider-appeared",
            EventKind::ProviderDeparted { .. } => "provider-departed",
        }
    }

    /// Instance the event is about; `None` for installs.
    pub fn subject(&self) -> Option<ComponentId> {
        match self {
            EventKind::Install { .. } => None,
            EventKind::Enable { id }
            | EventKind::Disable { id }
            | EventKind::Start { id }
            | EventKind::Stop { id }
            | EventKind::Uninstall { id }
            | EventKind::Suspend { id }
            | EventKind::Resume { id }
            | EventKind::SetProperty { id, .. }
            | EventKind::ProviderAppeared { id }
            | EventKind::ProviderDeparted { id } => Some(*id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleEvent {
    pub sequence_no: u64,
    pub kind: EventKind,
}

/// One edge taken by one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub id: ComponentId,
    pub name: String,
    pub from: LifecycleState,
    pub to: LifecycleState,
    pub reason: String,
}

impl fmt::Display for StateChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} -> {} ({})",
            self.id, self.name, self.from, self.to, self.reason
        )
    }
}
