//! Dialog state tracking and the fixed-length numeric state encoding.

use std::collections::BTreeMap;
use std::ops::{Deref, Range};

use serde::{Deserialize, Serialize};

use super::act::{AgentAct, AgentIntent, UserAct, UserIntent, NUM_AGENT_ACTIONS, NUM_USER_INTENTS};
use crate::ontology::{Ontology, DONT_CARE};

/// Cap applied to the database match count before scaling it into `[0, 1]`.
pub const DB_COUNT_CAP: u64 = 100;

/// Value recorded for a request slot recovered from a state vector, where the
/// actual value is not representable.
pub const DECODED_FILL: &str = "<filled>";

/// Mass a belief must exceed on one value for the slot to count as known.
const KNOWN_MASS: f64 = 0.5;

/// What the tracker currently believes about one constraint slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotStatus<'a> {
    Unknown,
    DontCare,
    Known(&'a str),
}

/// Structured dialog state.
///
/// `beliefs[i]` is a distribution over `{unknown} ∪ values` of the `i`-th
/// constraint slot (ontology order); index 0 is the unknown outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub last_agent_act: Option<AgentAct>,
    pub last_user_act: Option<UserAct>,
    pub beliefs: Vec<Vec<f64>>,
    pub filled_requests: BTreeMap<String, String>,
    pub turn_count: usize,
    pub db_match_count: u64,
}

impl TrackerState {
    /// Every constraint slot unknown, nothing said yet.
    pub fn new(ontology: &Ontology) -> Self {
        let beliefs: Vec<Vec<f64>> = ontology
            .constraint_slots()
            .map(|s| {
                let mut b = vec![0.0; s.values.len() + 1];
                b[0] = 1.0;
                b
            })
            .collect();
        let mut t = Self {
            last_agent_act: None,
            last_user_act: None,
            beliefs,
            filled_requests: BTreeMap::new(),
            turn_count: 0,
            db_match_count: 0,
        };
        t.refresh_match_count(ontology);
        t
    }

    fn constraint_position(ontology: &Ontology, slot: &str) -> Option<usize> {
        ontology.constraint_slots().position(|s| s.name == slot)
    }

    pub fn belief(&self, ontology: &Ontology, slot: &str) -> Option<&[f64]> {
        Self::constraint_position(ontology, slot).map(|i| self.beliefs[i].as_slice())
    }

    /// Mass the belief of `slot` puts on `value`.
    pub fn mass_on(&self, ontology: &Ontology, slot: &str, value: &str) -> f64 {
        let Some(i) = Self::constraint_position(ontology, slot) else {
            return 0.0;
        };
        let s = ontology.slot(slot).expect("position implies slot");
        s.values
            .iter()
            .position(|v| v == value)
            .map_or(0.0, |j| self.beliefs[i][j + 1])
    }

    pub fn status<'o>(&self, ontology: &'o Ontology, slot: &str) -> SlotStatus<'o> {
        let Some(i) = Self::constraint_position(ontology, slot) else {
            return SlotStatus::Unknown;
        };
        let b = &self.beliefs[i];
        if b[0] >= KNOWN_MASS {
            return SlotStatus::Unknown;
        }
        let s = ontology.slot(slot).expect("position implies slot");
        let (j, &m) = b[1..]
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if m > KNOWN_MASS {
            SlotStatus::Known(&s.values[j])
        } else {
            SlotStatus::DontCare
        }
    }

    /// Constraint values the tracker is confident about, in slot-name order.
    pub fn known_constraints(&self, ontology: &Ontology) -> BTreeMap<String, String> {
        ontology
            .constraint_slots()
            .filter_map(|s| match self.status(ontology, &s.name) {
                SlotStatus::Known(v) => Some((s.name.clone(), v.to_owned())),
                _ => None,
            })
            .collect()
    }

    pub fn unknown_slots<'o>(&self, ontology: &'o Ontology) -> Vec<&'o str> {
        ontology
            .constraint_slots()
            .filter(|s| self.status(ontology, &s.name) == SlotStatus::Unknown)
            .map(|s| s.name.as_str())
            .collect()
    }

    /// Constraint slot with the most mass on "unknown"; ties go to ontology order.
    pub fn most_uncertain_slot<'o>(&self, ontology: &'o Ontology) -> &'o str {
        let mut best = 0;
        for (i, b) in self.beliefs.iter().enumerate() {
            if b[0] > self.beliefs[best][0] {
                best = i;
            }
        }
        &ontology
            .constraint_slots()
            .nth(best)
            .expect("at least one constraint slot")
            .name
    }

    /// Known constraint slot with the least confident belief.
    pub fn least_confident_known<'o>(&self, ontology: &'o Ontology) -> Option<(&'o str, &'o str)> {
        let mut best: Option<(&str, &str, f64)> = None;
        for s in ontology.constraint_slots() {
            if let SlotStatus::Known(v) = self.status(ontology, &s.name) {
                let m = self.mass_on(ontology, &s.name, v);
                if best.is_none_or(|(_, _, bm)| m < bm) {
                    best = Some((&s.name, v, m));
                }
            }
        }
        best.map(|(k, v, _)| (k, v))
    }

    fn set_point_mass(&mut self, ontology: &Ontology, slot: &str, value: &str) {
        let Some(i) = Self::constraint_position(ontology, slot) else {
            return;
        };
        let s = ontology.slot(slot).expect("position implies slot");
        let b = &mut self.beliefs[i];
        if value == DONT_CARE {
            let p = 1.0 / s.values.len() as f64;
            b[0] = 0.0;
            b[1..].iter_mut().for_each(|x| *x = p);
        } else if let Some(j) = s.values.iter().position(|v| v == value) {
            b.iter_mut().for_each(|x| *x = 0.0);
            b[j + 1] = 1.0;
        }
    }

    /// Fold one exchange into the state. `accepted_fill` is the request slot
    /// the user acknowledged in this exchange, if any.
    pub fn update(
        &mut self,
        ontology: &Ontology,
        agent_act: Option<&AgentAct>,
        user_act: &UserAct,
        accepted_fill: Option<(&str, &str)>,
    ) {
        match user_act.intent {
            UserIntent::Inform | UserIntent::Deny | UserIntent::Confirm => {
                for (slot, value) in &user_act.slots {
                    self.set_point_mass(ontology, slot, value);
                }
            }
            _ => {}
        }
        if let Some((slot, value)) = accepted_fill {
            self.filled_requests.insert(slot.to_owned(), value.to_owned());
        }
        self.last_agent_act = agent_act.cloned();
        self.last_user_act = Some(user_act.clone());
        self.refresh_match_count(ontology);
    }

    pub fn refresh_match_count(&mut self, ontology: &Ontology) {
        let unknown = self.unknown_slots(ontology);
        self.db_match_count = ontology.match_count(unknown);
    }

    /// Recover an approximate tracker from an encoded state vector.
    ///
    /// Belief blocks are clipped to be nonnegative and renormalized; request
    /// bits above one half become [`DECODED_FILL`] entries.
    pub fn decode(ontology: &Ontology, layout: &StateLayout, v: &[f64]) -> Self {
        let argmax = |r: Range<usize>| {
            let block = &v[r];
            let (i, m) = block
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
            (m >= KNOWN_MASS).then_some(i)
        };
        let last_agent_act = argmax(layout.agent_intent.clone())
            .and_then(AgentIntent::from_index)
            .map(AgentAct::new);
        let last_user_act = argmax(layout.user_intent.clone())
            .and_then(UserIntent::from_index)
            .map(UserAct::new);
        let beliefs = layout
            .belief_blocks
            .iter()
            .map(|r| {
                let mut b: Vec<f64> = v[r.clone()].iter().map(|x| x.max(0.0)).collect();
                let total: f64 = b.iter().sum();
                if total > 0.0 {
                    b.iter_mut().for_each(|x| *x /= total);
                } else {
                    b.iter_mut().for_each(|x| *x = 0.0);
                    b[0] = 1.0;
                }
                b
            })
            .collect();
        let filled_requests = ontology
            .informable_slots()
            .zip(layout.requests.clone())
            .filter(|(_, i)| v[*i] > 0.5)
            .map(|(s, _)| (s.name.clone(), DECODED_FILL.to_owned()))
            .collect();
        let turn_count = (v[layout.turn] * layout.max_turns as f64).round().max(0.0) as usize;
        let db_match_count = (v[layout.db] * DB_COUNT_CAP as f64).round().max(0.0) as u64;
        Self {
            last_agent_act,
            last_user_act,
            beliefs,
            filled_requests,
            turn_count: turn_count.min(layout.max_turns),
            db_match_count,
        }
    }
}

/// Where each feature group lives inside a [`StateVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub agent_intent: Range<usize>,
    pub user_intent: Range<usize>,
    pub beliefs: Range<usize>,
    pub belief_blocks: Vec<Range<usize>>,
    pub requests: Range<usize>,
    pub turn: usize,
    pub db: usize,
    pub len: usize,
    pub max_turns: usize,
}

impl StateLayout {
    pub fn new(ontology: &Ontology, max_turns: usize) -> Self {
        let agent_intent = 0..NUM_AGENT_ACTIONS;
        let user_intent = agent_intent.end..agent_intent.end + NUM_USER_INTENTS;
        let mut at = user_intent.end;
        let start = at;
        let belief_blocks: Vec<Range<usize>> = ontology
            .constraint_slots()
            .map(|s| {
                let r = at..at + s.values.len() + 1;
                at = r.end;
                r
            })
            .collect();
        let beliefs = start..at;
        let requests = at..at + ontology.num_informable_slots();
        let turn = requests.end;
        let db = turn + 1;
        Self {
            agent_intent,
            user_intent,
            beliefs,
            belief_blocks,
            requests,
            turn,
            db,
            len: db + 1,
            max_turns,
        }
    }
}

/// Dense state encoding; every component lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

/// Encode a tracker: one-hot last agent intent, one-hot last user intent,
/// flattened beliefs, request-filled bits, `turn/L`, and `min(db, 100)/100`.
pub fn encode_state(ontology: &Ontology, layout: &StateLayout, tracker: &TrackerState) -> StateVector {
    let mut v = vec![0.0; layout.len];
    if let Some(a) = &tracker.last_agent_act {
        v[layout.agent_intent.start + a.intent.index()] = 1.0;
    }
    if let Some(u) = &tracker.last_user_act {
        v[layout.user_intent.start + u.intent.index()] = 1.0;
    }
    for (block, b) in layout.belief_blocks.iter().zip(&tracker.beliefs) {
        v[block.clone()].copy_from_slice(b);
    }
    for (s, i) in ontology.informable_slots().zip(layout.requests.clone()) {
        if tracker.filled_requests.contains_key(&s.name) {
            v[i] = 1.0;
        }
    }
    v[layout.turn] = (tracker.turn_count as f64 / layout.max_turns as f64).min(1.0);
    v[layout.db] = tracker.db_match_count.min(DB_COUNT_CAP) as f64 / DB_COUNT_CAP as f64;
    StateVector(v)
}
