use super::act::{AgentIntent, UserIntent};
use super::tracker::{StateVector, TrackerState};
use super::Policy;

/// Hand-written policy: collect every constraint, book, answer requests, close.
///
/// The agent needs the ontology only through the tracker: an unknown slot is
/// one whose belief still puts most of its mass on "unknown".
#[derive(Debug, Clone, Default)]
pub struct RuleAgent {
    booked: bool,
}

impl Policy for RuleAgent {
    fn begin_dialog(&mut self) {
        self.booked = false;
    }

    fn act(&mut self, tracker: &TrackerState, _state: &StateVector) -> usize {
        let last_agent = tracker.last_agent_act.as_ref().map(|a| a.intent);
        let last_user = tracker.last_user_act.as_ref().map(|a| a.intent);
        if last_agent == Some(AgentIntent::InformMatchFound) && last_user != Some(UserIntent::Deny) {
            self.booked = true;
        }
        let any_unknown = tracker.beliefs.iter().any(|b| b[0] >= 0.5);
        let intent = if last_user == Some(UserIntent::Request) {
            AgentIntent::InformRequestedSlot
        } else if any_unknown {
            AgentIntent::RequestConstraintSlot
        } else if !self.booked {
            AgentIntent::InformMatchFound
        } else {
            AgentIntent::Thanks
        };
        intent.index()
    }
}
