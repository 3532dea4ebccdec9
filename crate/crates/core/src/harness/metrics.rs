use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Variant;
use crate::agent::{EpsilonGreedy, QAgent};
use crate::env::{DialogEnv, Outcome};
use crate::error::{Error, Result};
use crate::ontology::sample_goal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub success_rate: f64,
    pub avg_reward: f64,
    pub avg_turns: f64,
}

/// Run `n` greedy dialogs on freshly sampled goals.
pub fn evaluate_policy<R: Rng + ?Sized>(env: &DialogEnv, agent: &QAgent, n: usize, rng: &mut R) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::Usage("evaluation needs at least one dialog".into()));
    }
    let (mut successes, mut reward, mut turns) = (0usize, 0.0, 0usize);
    for _ in 0..n {
        let goal = sample_goal(&env.domain().templates, rng)?;
        // Greedy: the exploration draw is never consulted at ε = 0.
        let mut no_explore = rand::rngs::mock::StepRng::new(0, 0);
        let mut policy = EpsilonGreedy {
            agent,
            epsilon: 0.0,
            rng: &mut no_explore,
        };
        let session = env.run_dialog(goal, &mut policy, rng)?;
        successes += usize::from(session.outcome() == Outcome::Success);
        reward += session.turns().iter().map(|t| t.r).sum::<f64>();
        turns += session.turns().len();
    }
    let n = n as f64;
    Ok(Evaluation {
        success_rate: successes as f64 / n,
        avg_reward: reward / n,
        avg_turns: turns as f64 / n,
    })
}

/// One row of a run's learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub variant: Variant,
    pub seed: u64,
    pub episode: usize,
    pub eval_success_rate: f64,
    pub eval_avg_reward: f64,
    pub train_success_rate: f64,
    pub train_avg_reward: f64,
    pub k_chosen: usize,
    pub real_buffer: usize,
    pub sim_buffer: usize,
    pub hindsight_dialogs: usize,
}

impl EpisodeRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eval_success_rate", self.eval_success_rate),
            ("train_success_rate", self.train_success_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !self.eval_avg_reward.is_finite() || !self.train_avg_reward.is_finite() {
            return Err(Error::Config("non-finite reward in record".into()));
        }
        if self.episode == 0 {
            return Err(Error::Config("episodes are numbered from 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub records: Vec<EpisodeRecord>,
}

impl LearningCurve {
    pub fn eval_success(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eval_success_rate).collect()
    }

    pub fn variant(&self) -> Option<Variant> {
        self.records.first().map(|r| r.variant)
    }

    pub fn seed(&self) -> Option<u64> {
        self.records.first().map(|r| r.seed)
    }
}

/// Trapezoid area under the eval success curve over the first `horizon`
/// records, divided by the episode span so that a constant curve `c` gives `c`.
pub fn auc(curve: &LearningCurve, horizon: usize) -> Result<f64> {
    let points: Vec<(f64, f64)> = curve
        .records
        .iter()
        .take(horizon)
        .map(|r| (r.episode as f64, r.eval_success_rate))
        .collect();
    if points.len() < 2 {
        return Err(Error::Usage(format!("auc needs at least two points, got {}", points.len())));
    }
    let area: f64 = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
    let span = points[points.len() - 1].0 - points[0].0;
    if span <= 0.0 {
        return Err(Error::Usage("episode indices must increase".into()));
    }
    Ok(area / span)
}

/// Mean and sample standard deviation; the deviation is zero for fewer than two values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, RuleAgent};
    use crate::ontology::Domain;
    use crate::seed::{stream, Stream};

    pub(crate) fn curve(values: &[f64]) -> LearningCurve {
        LearningCurve {
            records: values
                .iter()
                .enumerate()
                .map(|(i, &v)| EpisodeRecord {
                    variant: Variant::Dqn,
                    seed: 0,
                    episode: i + 1,
                    eval_success_rate: v,
                    eval_avg_reward: 0.0,
                    train_success_rate: v,
                    train_avg_reward: 0.0,
                    k_chosen: 0,
                    real_buffer: 0,
                    sim_buffer: 0,
                    hindsight_dialogs: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&curve(&[1.0; 10]), 10).unwrap(), 1.0);
        assert_eq!(auc(&curve(&[0.5; 10]), 10).unwrap(), 0.5);
        let ramp: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        assert!((auc(&curve(&ramp), 11).unwrap() - 0.5).abs() < 1e-12);
        assert!(auc(&curve(&[1.0]), 5).is_err());
        assert!(auc(&curve(&[1.0, 1.0, 0.0]), 1).is_err());
        assert_eq!(auc(&curve(&[1.0, 1.0, 0.0]), 2).unwrap(), 1.0);
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn evaluation_of_untrained_agent() {
        let env = DialogEnv::new(Domain::desk(), EnvConfig::default()).unwrap();
        let agent = QAgent::new(env.state_dim(), &Default::default(), &mut stream(0, Stream::NetInit)).unwrap();
        let mut rng = stream(0, Stream::Evaluation);
        assert!(evaluate_policy(&env, &agent, 0, &mut rng).is_err());
        let e = evaluate_policy(&env, &agent, 20, &mut rng).unwrap();
        assert!((0.0..=1.0).contains(&e.success_rate));
        assert!(e.avg_turns >= 1.0 && e.avg_turns <= 40.0);
        // The rule agent sanity-checks the protocol itself.
        let mut rule = RuleAgent::default();
        let mut wins = 0;
        for _ in 0..50 {
            let goal = sample_goal(&env.domain().templates, &mut rng).unwrap();
            wins += usize::from(env.run_dialog(goal, &mut rule, &mut rng).unwrap().outcome() == Outcome::Success);
        }
        assert!(wins >= 45);
    }
}
