//! Rule-based "real" user driven by an agenda built from its goal.

use rand::Rng;

use super::act::{AgentAct, AgentIntent, UserAct, UserIntent, REQUESTED};
use crate::ontology::{Goal, Ontology, SlotKind, DONT_CARE};

/// What the user did in reply to one agent act.
#[derive(Debug, Clone, PartialEq)]
pub struct UserReply {
    pub act: UserAct,
    /// A request slot the user accepted as answered in this exchange.
    pub accepted_fill: Option<(String, String)>,
    /// The user accepted a booking in this exchange.
    pub booked: bool,
}

/// Agenda state of the scripted user.
#[derive(Debug, Clone)]
pub struct ScriptedUser {
    goal: Goal,
    /// Request slots not yet answered, in ontology order.
    pending_requests: Vec<String>,
    booked: bool,
    last_act: UserAct,
    noise: f64,
}

impl ScriptedUser {
    /// Start an agenda for `goal` and produce the opening act.
    ///
    /// The user opens by informing its first constraint (ontology order), or
    /// by requesting its first request slot when it has no constraints.
    pub fn new<R: Rng + ?Sized>(
        ontology: &Ontology,
        goal: Goal,
        noise: f64,
        rng: &mut R,
    ) -> (Self, UserAct) {
        let pending_requests: Vec<String> = ontology
            .informable_slots()
            .filter(|s| goal.requests.contains(&s.name))
            .map(|s| s.name.clone())
            .collect();
        let mut user = Self {
            goal,
            pending_requests,
            booked: false,
            last_act: UserAct::new(UserIntent::Inform),
            noise,
        };
        let first = ontology
            .constraint_slots()
            .find(|s| user.goal.constraints.contains_key(&s.name))
            .map(|s| s.name.clone());
        let opening = match first {
            Some(slot) => {
                let value = user.noisy_value(ontology, &slot, rng);
                UserAct::new(UserIntent::Inform).with_slot(slot, value)
            }
            None => UserAct::new(UserIntent::Request)
                .with_slot(user.pending_requests[0].clone(), REQUESTED),
        };
        user.last_act = opening.clone();
        (user, opening)
    }

    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn booked(&self) -> bool {
        self.booked
    }

    /// Booked and every request answered.
    pub fn is_satisfied(&self) -> bool {
        self.booked && self.pending_requests.is_empty()
    }

    pub fn last_act(&self) -> &UserAct {
        &self.last_act
    }

    fn noisy_value<R: Rng + ?Sized>(&self, ontology: &Ontology, slot: &str, rng: &mut R) -> String {
        let truth = self
            .goal
            .constraints
            .get(slot)
            .cloned()
            .unwrap_or_else(|| DONT_CARE.to_owned());
        if self.noise <= 0.0 || truth == DONT_CARE {
            return truth;
        }
        if rng.gen::<f64>() >= self.noise {
            return truth;
        }
        let pool = &ontology.slot(slot).expect("valid slot").values;
        let others: Vec<&String> = pool.iter().filter(|v| **v != truth).collect();
        if others.is_empty() {
            truth
        } else {
            others[rng.gen_range(0..others.len())].clone()
        }
    }

    fn valid_for(ontology: &Ontology, act: &AgentAct) -> bool {
        act.slots.iter().all(|(k, v)| {
            let Some(s) = ontology.slot(k) else {
                return false;
            };
            v == REQUESTED
                || s.values.iter().any(|x| x == v)
                || (s.kind == SlotKind::Constraint && v == DONT_CARE)
        })
    }

    /// The user's next agenda item once the current exchange is settled.
    fn next_agenda_act(&self) -> UserAct {
        if self.booked {
            match self.pending_requests.first() {
                Some(slot) => UserAct::new(UserIntent::Request).with_slot(slot.clone(), REQUESTED),
                None => UserAct::new(UserIntent::Closing),
            }
        } else if self.pending_requests.is_empty() {
            UserAct::new(UserIntent::Thanks)
        } else {
            UserAct::new(UserIntent::Request)
                .with_slot(self.pending_requests[0].clone(), REQUESTED)
        }
    }

    fn repeat(&self) -> UserReply {
        UserReply {
            act: self.last_act.clone(),
            accepted_fill: None,
            booked: false,
        }
    }

    /// React to `agent_act` according to the agenda rules.
    pub fn respond<R: Rng + ?Sized>(
        &mut self,
        ontology: &Ontology,
        agent_act: &AgentAct,
        rng: &mut R,
    ) -> UserReply {
        if !Self::valid_for(ontology, agent_act) {
            return self.repeat();
        }
        let reply = match agent_act.intent {
            AgentIntent::Greeting | AgentIntent::ConfirmAnswer | AgentIntent::Deny => self.repeat(),
            AgentIntent::Thanks => {
                if self.is_satisfied() {
                    self.say(UserAct::new(UserIntent::Closing))
                } else {
                    self.repeat()
                }
            }
            AgentIntent::Closing => self.say(UserAct::new(UserIntent::Closing)),
            AgentIntent::InformNoMatch => self.say(UserAct::new(UserIntent::Deny)),
            AgentIntent::RequestConstraintSlot => match agent_act.only_slot() {
                Some((slot, _)) if ontology.slot(slot).map(|s| s.kind) == Some(SlotKind::Constraint) => {
                    let value = self.noisy_value(ontology, slot, rng);
                    self.say(UserAct::new(UserIntent::Inform).with_slot(slot, value))
                }
                _ => self.repeat(),
            },
            AgentIntent::ConfirmQuestion => match agent_act.only_slot() {
                Some((slot, value)) => match self.goal.constraints.get(slot) {
                    Some(truth) if truth == value => {
                        self.say(UserAct::new(UserIntent::Confirm).with_slot(slot, value))
                    }
                    Some(truth) => {
                        let truth = truth.clone();
                        self.say(UserAct::new(UserIntent::Deny).with_slot(slot, truth))
                    }
                    None => self.say(UserAct::new(UserIntent::Inform).with_slot(slot, DONT_CARE)),
                },
                None => self.repeat(),
            },
            AgentIntent::RequestBookingInfo => {
                let act = self.next_agenda_act();
                self.say(act)
            }
            AgentIntent::InformMatchFound => {
                let matches = self
                    .goal
                    .constraints
                    .iter()
                    .all(|(k, v)| agent_act.slots.get(k) == Some(v));
                if matches {
                    self.booked = true;
                    let act = self.next_agenda_act();
                    let mut r = self.say(act);
                    r.booked = true;
                    r
                } else {
                    self.say(UserAct::new(UserIntent::Deny))
                }
            }
            AgentIntent::InformRequestedSlot => match agent_act.only_slot() {
                Some((slot, value)) => {
                    let pending = self.pending_requests.iter().position(|s| s == slot);
                    let consistent = self.goal.answer(ontology, slot) == Some(value);
                    match pending {
                        Some(i) if consistent => {
                            self.pending_requests.remove(i);
                            let act = self.next_agenda_act();
                            let mut r = self.say(act);
                            r.accepted_fill = Some((slot.to_owned(), value.to_owned()));
                            r
                        }
                        _ => self.say(UserAct::new(UserIntent::Deny).with_slot(slot, value)),
                    }
                }
                None => self.repeat(),
            },
        };
        reply
    }

    fn say(&mut self, act: UserAct) -> UserReply {
        self.last_act = act.clone();
        UserReply {
            act,
            accepted_fill: None,
            booked: false,
        }
    }
}
