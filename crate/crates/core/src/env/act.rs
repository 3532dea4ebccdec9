use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Size of the agent's action catalogue.
pub const NUM_AGENT_ACTIONS: usize = 11;
/// Number of user intents.
pub const NUM_USER_INTENTS: usize = 6;

/// Placeholder value carried by request acts.
pub const REQUESTED: &str = "?";

/// System intents. The discriminant is the action index used by every Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentIntent {
    Greeting = 0,
    Thanks = 1,
    Deny = 2,
    ConfirmQuestion = 3,
    ConfirmAnswer = 4,
    Closing = 5,
    RequestConstraintSlot = 6,
    RequestBookingInfo = 7,
    InformRequestedSlot = 8,
    InformMatchFound = 9,
    InformNoMatch = 10,
}

impl AgentIntent {
    pub const ALL: [AgentIntent; NUM_AGENT_ACTIONS] = [
        AgentIntent::Greeting,
        AgentIntent::Thanks,
        AgentIntent::Deny,
        AgentIntent::ConfirmQuestion,
        AgentIntent::ConfirmAnswer,
        AgentIntent::Closing,
        AgentIntent::RequestConstraintSlot,
        AgentIntent::RequestBookingInfo,
        AgentIntent::InformRequestedSlot,
        AgentIntent::InformMatchFound,
        AgentIntent::InformNoMatch,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserIntent {
    Inform = 0,
    Request = 1,
    Confirm = 2,
    Deny = 3,
    Thanks = 4,
    Closing = 5,
}

impl UserIntent {
    pub const ALL: [UserIntent; NUM_USER_INTENTS] = [
        UserIntent::Inform,
        UserIntent::Request,
        UserIntent::Confirm,
        UserIntent::Deny,
        UserIntent::Thanks,
        UserIntent::Closing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// An intent with slot arguments. The actor is carried by the intent type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogAct<I> {
    pub intent: I,
    #[serde(default)]
    pub slots: BTreeMap<String, String>,
}

pub type AgentAct = DialogAct<AgentIntent>;
pub type UserAct = DialogAct<UserIntent>;

impl<I> DialogAct<I> {
    pub fn new(intent: I) -> Self {
        Self {
            intent,
            slots: BTreeMap::new(),
        }
    }

    pub fn with_slot(mut self, slot: impl Into<String>, value: impl Into<String>) -> Self {
        self.slots.insert(slot.into(), value.into());
        self
    }

    /// The single slot of a one-slot act.
    pub fn only_slot(&self) -> Option<(&str, &str)> {
        if self.slots.len() == 1 {
            self.slots
                .iter()
                .next()
                .map(|(k, v)| (k.as_str(), v.as_str()))
        } else {
            None
        }
    }
}

impl<I: fmt::Debug> fmt::Display for DialogAct<I> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}(", self.intent)?;
        for (i, (k, v)) in self.slots.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for (i, a) in AgentIntent::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(AgentIntent::from_index(i), Some(*a));
        }
        assert_eq!(AgentIntent::from_index(11), None);
        for (i, u) in UserIntent::ALL.iter().enumerate() {
            assert_eq!(UserIntent::from_index(i), Some(*u));
        }
    }

    #[test]
    fn display() {
        let act = UserAct::new(UserIntent::Inform).with_slot("movie", "titanic");
        assert_eq!(act.to_string(), "Inform(movie=titanic)");
    }
}
