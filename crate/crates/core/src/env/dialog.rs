use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::act::{AgentAct, AgentIntent, UserAct, UserIntent};
use super::tracker::{StateVector, TrackerState, DECODED_FILL};
use crate::error::{Error, Result};
use crate::ontology::{Goal, Ontology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
    Ongoing,
}

/// Where a dialog's experience came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Simulated,
    Hindsight,
}

/// One exchange `(s, a, r, s', done)` plus the tracker around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub s: StateVector,
    pub a: usize,
    pub r: f64,
    pub s_next: StateVector,
    pub done: bool,
    /// Tracker before the agent acted.
    pub tracker_snapshot: Arc<TrackerState>,
    /// Tracker after the user replied.
    pub tracker_next: Arc<TrackerState>,
    pub agent_act: AgentAct,
    pub user_act: UserAct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialog {
    pub id: u64,
    pub goal: Goal,
    pub turns: Vec<Turn>,
    pub outcome: Outcome,
    pub source: Source,
}

impl Dialog {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.turns.iter().map(|t| t.r).sum()
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome != Outcome::Ongoing
    }

    /// Check the structural invariants: at most one terminal turn, placed last,
    /// and a terminal outcome exactly when that turn exists.
    pub fn check_invariants(&self) -> Result<()> {
        let terminal: Vec<usize> = (0..self.turns.len()).filter(|&i| self.turns[i].done).collect();
        match terminal.as_slice() {
            [] if self.outcome == Outcome::Ongoing => Ok(()),
            [i] if *i + 1 == self.turns.len() && self.outcome != Outcome::Ongoing => Ok(()),
            _ => Err(Error::Usage(format!(
                "dialog {} has terminal turns at {terminal:?} with outcome {:?}",
                self.id, self.outcome
            ))),
        }
    }
}

/// Success means a booking was accepted and every request slot was filled
/// with a value consistent with the goal's constraints.
pub fn dialog_success(d: &Dialog, ontology: &Ontology) -> Result<bool> {
    let Some(last) = d.turns.last().filter(|t| t.done) else {
        return Err(Error::Usage(format!("dialog {} has not ended", d.id)));
    };
    let booked = d.turns.iter().any(|t| {
        t.agent_act.intent == AgentIntent::InformMatchFound && t.user_act.intent != UserIntent::Deny
    });
    let filled = &last.tracker_next.filled_requests;
    let requests_ok = d.goal.requests.iter().all(|slot| match filled.get(slot) {
        Some(v) if v == DECODED_FILL => true,
        Some(v) => d.goal.answer(ontology, slot) == Some(v.as_str()),
        None => false,
    });
    Ok(booked && requests_ok)
}
