use std::collections::VecDeque;

use lhua::agent::{BufferLabel, ReplayBuffer};
use lhua::coordinator::{adaptation_state, coordinator_reward, normalize_avg_reward};
use lhua::env::{
    DialogEnv, EnvConfig, Outcome, Policy, RuleAgent, Source, StateVector, TrackerState, NUM_AGENT_ACTIONS,
};
use lhua::harness::{auc, read_run_csv, write_run_csv, EpisodeRecord, LearningCurve, RunConfig, Variant};
use lhua::hindsight::{kl_divergence, relabel_rewards};
use lhua::ontology::{enumerate_subgoals, is_subgoal, sample_goal, Domain};
use lhua::seed::{stream, Stream};
use lhua::worldmodel::WorldModel;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct RandomPolicy(StdRng);

impl Policy for RandomPolicy {
    fn act(&mut self, _tracker: &TrackerState, _state: &StateVector) -> usize {
        self.0.gen_range(0..NUM_AGENT_ACTIONS)
    }
}

fn env(max_turns: usize, user_noise: f64) -> DialogEnv {
    DialogEnv::new(
        Domain::desk(),
        EnvConfig {
            max_turns,
            noise: user_noise,
            ..Default::default()
        },
    )
    .unwrap()
}

fn distribution(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dialogs_respect_state_and_reward_bounds(seed in any::<u64>(), max_turns in 2usize..30, noise in 0.0f64..0.5) {
        let env = env(max_turns, noise);
        let mut user = stream(seed, Stream::User);
        let goal = sample_goal(&env.domain().templates, &mut user).unwrap();
        let mut policy = RandomPolicy(StdRng::seed_from_u64(seed));
        let session = env.run_dialog(goal, &mut policy, &mut user).unwrap();
        let turns = session.turns();
        prop_assert!(!turns.is_empty() && turns.len() <= max_turns);
        let rewards = env.rewards();
        for (i, t) in turns.iter().enumerate() {
            let last = i + 1 == turns.len();
            prop_assert_eq!(t.done, last);
            for v in t.s.iter().chain(t.s_next.iter()) {
                prop_assert!(v.is_finite() && (0.0..=1.0).contains(v));
            }
            prop_assert_eq!(t.s.len(), env.state_dim());
            if !last {
                prop_assert_eq!(t.r, rewards.turn_cost());
            }
        }
        let last = turns.last().unwrap().r;
        match session.outcome() {
            Outcome::Success => prop_assert_eq!(last, rewards.success()),
            Outcome::Failure => prop_assert_eq!(last, rewards.failure()),
            Outcome::Ongoing => prop_assert!(false, "finished dialog reported as ongoing"),
        }
        let total: f64 = turns.iter().map(|t| t.r).sum();
        prop_assert!(total >= rewards.min_return() && total <= rewards.max_return());
    }

    #[test]
    fn replay_buffer_is_fifo(capacity in 1usize..40, items in proptest::collection::vec(any::<u32>(), 0..120)) {
        let mut buffer = ReplayBuffer::new(BufferLabel::Real, capacity);
        let mut model = VecDeque::new();
        for &x in &items {
            buffer.push(x);
            model.push_back(x);
            if model.len() > capacity {
                model.pop_front();
            }
        }
        prop_assert_eq!(buffer.len(), items.len().min(capacity));
        prop_assert_eq!(buffer.total_pushed(), items.len() as u64);
        prop_assert!(buffer.iter().copied().eq(model.iter().copied()));
        prop_assert_eq!(buffer.pop_oldest(), model.pop_front());
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_itself(
        raw in proptest::collection::vec((0.01f64..10.0, 0.01f64..10.0), 1..20)
    ) {
        let p = distribution(&raw.iter().map(|x| x.0).collect::<Vec<_>>());
        let q = distribution(&raw.iter().map(|x| x.1).collect::<Vec<_>>());
        prop_assert!(kl_divergence(&p, &q) >= 0.0);
        prop_assert!(kl_divergence(&p, &p).abs() < 1e-12);
    }

    #[test]
    fn relabelled_dialogs_end_in_success(seed in any::<u64>(), noise in 0.0f64..0.5) {
        let env = env(20, noise);
        let mut user = stream(seed, Stream::User);
        let goal = sample_goal(&env.domain().templates, &mut user).unwrap();
        let mut policy = RandomPolicy(StdRng::seed_from_u64(seed ^ 1));
        let dialog = env.run_dialog(goal, &mut policy, &mut user).unwrap().into_dialog(seed, Source::Real);
        let n = dialog.turns.len();
        let rewards = env.rewards();
        let relabelled = relabel_rewards(dialog.clone(), rewards).unwrap();
        prop_assert_eq!(relabelled.outcome, Outcome::Success);
        prop_assert_eq!(relabelled.turns.len(), n);
        let expected = (n as f64 - 1.0) * rewards.turn_cost() + rewards.success();
        prop_assert!((relabelled.total_reward() - expected).abs() < 1e-9);
        for (a, b) in relabelled.turns.iter().zip(&dialog.turns) {
            prop_assert_eq!(&a.s, &b.s);
            prop_assert_eq!(a.a, b.a);
        }
    }

    #[test]
    fn world_model_predictions_stay_in_range(seed in any::<u64>(), a in 0usize..NUM_AGENT_ACTIONS) {
        let env = env(40, 0.0);
        let mut rng = stream(seed, Stream::NetInit);
        let model = WorldModel::new(env.state_dim(), 40, 16, &mut rng);
        let s: Vec<f64> = (0..env.state_dim()).map(|_| rng.gen()).collect();
        let p = model.predict(&s, a, &mut rng).unwrap();
        prop_assert_eq!(p.s_next.len(), env.state_dim());
        prop_assert!(p.s_next.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(p.reward.is_finite() && p.reward >= -41.0 && p.reward <= 80.0);
        prop_assert!((p.termination.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        match p.outcome {
            Outcome::Success => prop_assert_eq!(p.reward, 79.0),
            Outcome::Failure => prop_assert_eq!(p.reward, -41.0),
            Outcome::Ongoing => prop_assert!(!p.done),
        }
    }

    #[test]
    fn normalised_reward_is_a_monotone_unit_map(x in -500.0f64..500.0, y in -500.0f64..500.0, l in 1usize..100) {
        let (nx, ny) = (normalize_avg_reward(x, l), normalize_avg_reward(y, l));
        prop_assert!((0.0..=1.0).contains(&nx));
        if x <= y {
            prop_assert!(nx <= ny);
        }
    }

    #[test]
    fn coordinator_signals_are_bounded(sr in 0.0f64..=1.0, prev in 0.0f64..=1.0, r in 0.0f64..=1.0, k in 1usize..=20) {
        let reward = coordinator_reward(sr, prev, k);
        prop_assert!(reward <= k as f64 / (k as f64 + 1.0) + 1e-12);
        let s = adaptation_state(sr, r, prev, r, 3);
        prop_assert_eq!(s.0[0], sr);
        prop_assert_eq!(s.0[3], 0.0);
        prop_assert_eq!(adaptation_state(sr, r, prev, r, 0).0, [0.0; 4]);
    }

    #[test]
    fn auc_of_unit_curves_is_a_unit_value(values in proptest::collection::vec(0.0f64..=1.0, 2..60)) {
        let curve = curve(&values);
        let a = auc(&curve, values.len()).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0, f64::max);
        prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
    }

    #[test]
    fn sampled_goals_have_consistent_subgoals(seed in any::<u64>()) {
        let domain = Domain::desk();
        let goal = sample_goal(&domain.templates, &mut StdRng::seed_from_u64(seed)).unwrap();
        goal.validate(&domain.ontology).unwrap();
        let subgoals = enumerate_subgoals(&goal);
        prop_assert_eq!(subgoals.len(), (1usize << goal.size()) - 1);
        for g in &subgoals {
            prop_assert!(is_subgoal(g, &goal));
            prop_assert!(g.size() >= 1 && g.size() <= goal.size());
        }
    }

    #[test]
    fn run_csv_round_trips(values in proptest::collection::vec(0.0f64..=1.0, 1..30), seed in any::<u64>()) {
        let mut c = curve(&values);
        for r in &mut c.records {
            r.seed = seed;
        }
        let mut bytes = Vec::new();
        write_run_csv(&mut bytes, &c).unwrap();
        prop_assert_eq!(read_run_csv(bytes.as_slice()).unwrap(), c);
    }

    #[test]
    fn run_config_json_round_trips(seed in any::<u64>(), episodes in 1usize..1000, k in 1usize..20) {
        let c = RunConfig { seed, episodes, k, variant: Variant::Lhu, ..Default::default() };
        let text = serde_json::to_string(&c).unwrap();
        prop_assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }
}

fn curve(values: &[f64]) -> LearningCurve {
    LearningCurve {
        records: values
            .iter()
            .enumerate()
            .map(|(i, &v)| EpisodeRecord {
                variant: Variant::Lhu,
                seed: 0,
                episode: i + 1,
                eval_success_rate: v,
                eval_avg_reward: -10.0 + v,
                train_success_rate: v,
                train_avg_reward: 3.5 * v,
                k_chosen: 10,
                real_buffer: i,
                sim_buffer: 2 * i,
                hindsight_dialogs: 0,
            })
            .collect(),
    }
}

#[test]
fn rule_agent_succeeds_without_noise() {
    let env = env(40, 0.0);
    let mut user = stream(5, Stream::User);
    for _ in 0..50 {
        let goal = sample_goal(&env.domain().templates, &mut user).unwrap();
        let session = env.run_dialog(goal, &mut RuleAgent::default(), &mut user).unwrap();
        assert_eq!(session.outcome(), Outcome::Success);
    }
}
