//! The dialog MDP: scripted user, state tracker, rewards, and state encoding.

mod act;
mod dialog;
mod rule;
mod tracker;
mod user;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use act::{
    AgentAct, AgentIntent, DialogAct, UserAct, UserIntent, NUM_AGENT_ACTIONS, NUM_USER_INTENTS,
    REQUESTED,
};
pub use dialog::{dialog_success, Dialog, Outcome, Source, Turn};
pub use rule::RuleAgent;
pub use tracker::{
    encode_state, SlotStatus, StateLayout, StateVector, TrackerState, DB_COUNT_CAP, DECODED_FILL,
};
pub use user::{ScriptedUser, UserReply};

use crate::error::{Error, Result};
use crate::ontology::{Domain, Goal, Ontology};

/// Reward scheme: unit turn cost, `2L` success bonus, `−L` failure penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScheme {
    pub max_turns: usize,
}

impl RewardScheme {
    pub fn turn_cost(&self) -> f64 {
        -1.0
    }

    /// Reward of a turn that ends the dialog successfully: bonus plus the turn's cost.
    pub fn success(&self) -> f64 {
        2.0 * self.max_turns as f64 - 1.0
    }

    /// Reward of a turn that ends the dialog in failure: penalty plus the turn's cost.
    pub fn failure(&self) -> f64 {
        -(self.max_turns as f64) - 1.0
    }

    pub fn min_return(&self) -> f64 {
        -2.0 * self.max_turns as f64
    }

    pub fn max_return(&self) -> f64 {
        self.success()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Maximum number of turns `L`.
    pub max_turns: usize,
    /// Probability that the user mis-states a constraint value.
    pub noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_turns: 40,
            noise: 0.0,
        }
    }
}

/// Chooses an action index from the current dialog state.
pub trait Policy {
    fn begin_dialog(&mut self) {}

    fn act(&mut self, tracker: &TrackerState, state: &StateVector) -> usize;
}

/// The environment: immutable, shareable description of the dialog task.
#[derive(Debug, Clone)]
pub struct DialogEnv {
    domain: Domain,
    layout: StateLayout,
    config: EnvConfig,
}

/// One dialog in progress against the scripted user.
#[derive(Debug, Clone)]
pub struct Session {
    goal: Goal,
    user: ScriptedUser,
    tracker: Arc<TrackerState>,
    state: StateVector,
    turns: Vec<Turn>,
    outcome: Outcome,
}

impl Session {
    pub fn tracker(&self) -> &TrackerState {
        &self.tracker
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn goal(&self) -> &Goal {
        &self.goal
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome != Outcome::Ongoing
    }

    pub fn into_dialog(self, id: u64, source: Source) -> Dialog {
        Dialog {
            id,
            goal: self.goal,
            turns: self.turns,
            outcome: self.outcome,
            source,
        }
    }
}

impl DialogEnv {
    pub fn new(domain: Domain, config: EnvConfig) -> Result<Self> {
        if config.max_turns == 0 {
            return Err(Error::Config("max_turns must be positive".into()));
        }
        if !(0.0..=1.0).contains(&config.noise) {
            return Err(Error::Config(format!("noise rate {} outside [0, 1]", config.noise)));
        }
        let layout = StateLayout::new(&domain.ontology, config.max_turns);
        Ok(Self {
            domain,
            layout,
            config,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn ontology(&self) -> &Ontology {
        &self.domain.ontology
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn rewards(&self) -> RewardScheme {
        RewardScheme {
            max_turns: self.config.max_turns,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.layout.len
    }

    pub fn encode(&self, tracker: &TrackerState) -> StateVector {
        encode_state(self.ontology(), &self.layout, tracker)
    }

    /// Tracker state right after the user's opening act for `goal`, without a session.
    pub fn initial_tracker<R: Rng + ?Sized>(&self, goal: &Goal, rng: &mut R) -> TrackerState {
        let (_, opening) = ScriptedUser::new(self.ontology(), goal.clone(), self.config.noise, rng);
        let mut tracker = TrackerState::new(self.ontology());
        tracker.update(self.ontology(), None, &opening, None);
        tracker
    }

    /// Begin a dialog: the user opens per its agenda and the tracker absorbs it.
    pub fn reset<R: Rng + ?Sized>(&self, goal: Goal, rng: &mut R) -> Result<Session> {
        goal.validate(self.ontology())?;
        let (user, opening) =
            ScriptedUser::new(self.ontology(), goal.clone(), self.config.noise, rng);
        let mut tracker = TrackerState::new(self.ontology());
        tracker.update(self.ontology(), None, &opening, None);
        let state = self.encode(&tracker);
        Ok(Session {
            goal,
            user,
            tracker: Arc::new(tracker),
            state,
            turns: Vec::new(),
            outcome: Outcome::Ongoing,
        })
    }

    /// Resolve an action index into a concrete act using the slot heuristics.
    pub fn realize_action(&self, tracker: &TrackerState, action: usize) -> Result<AgentAct> {
        let intent = AgentIntent::from_index(action)
            .ok_or_else(|| Error::Usage(format!("action index {action} out of range")))?;
        let ont = self.ontology();
        let act = AgentAct::new(intent);
        Ok(match intent {
            AgentIntent::RequestConstraintSlot => {
                act.with_slot(tracker.most_uncertain_slot(ont), REQUESTED)
            }
            AgentIntent::ConfirmQuestion => match tracker.least_confident_known(ont) {
                Some((slot, value)) => act.with_slot(slot, value),
                None => act,
            },
            AgentIntent::InformRequestedSlot => {
                let asked = tracker
                    .last_user_act
                    .as_ref()
                    .filter(|u| u.intent == UserIntent::Request)
                    .and_then(|u| u.slots.keys().next().cloned())
                    .filter(|s| !tracker.filled_requests.contains_key(s));
                let slot = asked.or_else(|| {
                    ont.informable_slots()
                        .find(|s| !tracker.filled_requests.contains_key(&s.name))
                        .map(|s| s.name.clone())
                });
                match slot {
                    Some(slot) => {
                        let known = tracker.known_constraints(ont);
                        let value = ont.lookup(&known, &slot).expect("informable slot");
                        let value = value.to_owned();
                        act.with_slot(slot, value)
                    }
                    None => act,
                }
            }
            AgentIntent::InformMatchFound => AgentAct {
                intent,
                slots: tracker.known_constraints(ont),
            },
            _ => act,
        })
    }

    /// Execute one agent action.
    pub fn step<R: Rng + ?Sized>(
        &self,
        session: &mut Session,
        action: usize,
        rng: &mut R,
    ) -> Result<Turn> {
        if session.is_terminal() {
            return Err(Error::Usage("step called on a finished dialog".into()));
        }
        let agent_act = self.realize_action(&session.tracker, action)?;
        let reply = session.user.respond(self.ontology(), &agent_act, rng);
        let mut next = (*session.tracker).clone();
        next.turn_count += 1;
        let fill = reply
            .accepted_fill
            .as_ref()
            .map(|(k, v)| (k.as_str(), v.as_str()));
        next.update(self.ontology(), Some(&agent_act), &reply.act, fill);

        let rewards = self.rewards();
        let ended_by_closing = reply.act.intent == UserIntent::Closing;
        let (reward, outcome) = if ended_by_closing && session.user.is_satisfied() {
            (rewards.success(), Outcome::Success)
        } else if ended_by_closing || next.turn_count >= self.config.max_turns {
            (rewards.failure(), Outcome::Failure)
        } else {
            (rewards.turn_cost(), Outcome::Ongoing)
        };
        let next = Arc::new(next);
        let s_next = self.encode(&next);
        let turn = Turn {
            s: std::mem::replace(&mut session.state, s_next.clone()),
            a: action,
            r: reward,
            s_next,
            done: outcome != Outcome::Ongoing,
            tracker_snapshot: Arc::clone(&session.tracker),
            tracker_next: Arc::clone(&next),
            agent_act,
            user_act: reply.act,
        };
        session.tracker = next;
        session.outcome = outcome;
        session.turns.push(turn.clone());
        Ok(turn)
    }

    /// Run a full dialog with `policy` on `goal`.
    pub fn run_dialog<P: Policy + ?Sized, R: Rng + ?Sized>(
        &self,
        goal: Goal,
        policy: &mut P,
        rng: &mut R,
    ) -> Result<Session> {
        let mut session = self.reset(goal, rng)?;
        policy.begin_dialog();
        while !session.is_terminal() {
            let a = policy.act(&session.tracker, &session.state);
            self.step(&mut session, a, rng)?;
        }
        Ok(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::sample_goal;
    use crate::seed::{stream, Stream};
    use std::collections::BTreeSet;

    fn titanic() -> Goal {
        Goal::new(
            [("ticket", "one"), ("movie", "titanic"), ("time", "eve")]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .collect(),
            ["theater".to_owned()].into_iter().collect::<BTreeSet<_>>(),
        )
    }

    fn env() -> DialogEnv {
        DialogEnv::new(Domain::desk(), EnvConfig::default()).unwrap()
    }

    struct Always(usize);

    impl Policy for Always {
        fn act(&mut self, _: &TrackerState, _: &StateVector) -> usize {
            self.0
        }
    }

    #[test]
    fn reset_reflects_opening_act() {
        let env = env();
        let mut rng = stream(1, Stream::User);
        let s = env.reset(titanic(), &mut rng).unwrap();
        let t = s.tracker();
        assert_eq!(t.turn_count, 0);
        assert!(t.mass_on(env.ontology(), "movie", "titanic") >= 0.99);
        for slot in ["ticket", "time", "date", "city"] {
            assert_eq!(t.belief(env.ontology(), slot).unwrap()[0], 1.0);
        }
        let again = env.reset(titanic(), &mut stream(1, Stream::User)).unwrap();
        assert_eq!(s.state(), again.state());
    }

    #[test]
    fn successful_booking_pays_bonus() {
        let env = env();
        let mut rng = stream(1, Stream::User);
        let s = env.run_dialog(titanic(), &mut RuleAgent::default(), &mut rng).unwrap();
        assert_eq!(s.outcome(), Outcome::Success);
        let turns = s.turns();
        assert_eq!(turns.last().unwrap().r, 79.0);
        assert!(turns[..turns.len() - 1].iter().all(|t| t.r == -1.0 && !t.done));
    }

    #[test]
    fn truncation_at_max_turns_fails() {
        let env = env();
        let mut rng = stream(1, Stream::User);
        let s = env.run_dialog(titanic(), &mut Always(0), &mut rng).unwrap();
        assert_eq!(s.outcome(), Outcome::Failure);
        assert_eq!(s.turns().len(), 40);
        assert_eq!(s.turns().last().unwrap().r, -41.0);
        let ret: f64 = s.turns().iter().map(|t| t.r).sum();
        assert_eq!(ret, -80.0);
    }

    #[test]
    fn stepping_a_finished_dialog_is_an_error() {
        let env = env();
        let mut rng = stream(1, Stream::User);
        let mut s = env.run_dialog(titanic(), &mut Always(5), &mut rng).unwrap();
        assert_eq!(s.turns().len(), 1);
        assert!(matches!(env.step(&mut s, 0, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn mid_dialog_inform_costs_one() {
        let env = env();
        let mut rng = stream(1, Stream::User);
        let mut s = env.reset(titanic(), &mut rng).unwrap();
        let t = env
            .step(&mut s, AgentIntent::RequestConstraintSlot.index(), &mut rng)
            .unwrap();
        assert_eq!(t.r, -1.0);
        assert!(!t.done);
        assert_eq!(t.user_act.intent, UserIntent::Inform);
    }

    #[test]
    fn returns_stay_in_range_for_random_policies() {
        let env = env();
        let mut rng = stream(9, Stream::User);
        let mut goals = stream(9, Stream::Goals);
        let rewards = env.rewards();
        struct Random(crate::seed::Rng);
        impl Policy for Random {
            fn act(&mut self, _: &TrackerState, _: &StateVector) -> usize {
                self.0.gen_range(0..NUM_AGENT_ACTIONS)
            }
        }
        let mut p = Random(stream(9, Stream::Exploration));
        for _ in 0..300 {
            let g = sample_goal(&env.domain().templates, &mut goals).unwrap();
            let s = env.run_dialog(g, &mut p, &mut rng).unwrap();
            let d = s.into_dialog(0, Source::Real);
            let ret = d.total_reward();
            assert!(ret >= rewards.min_return() && ret <= rewards.max_return());
            assert_eq!(d.turns.iter().filter(|t| t.done).count(), 1);
            assert!(d.turns.last().unwrap().done);
            assert_eq!(d.outcome == Outcome::Success, dialog_success(&d, env.ontology()).unwrap());
        }
    }
}
