//! RL-agent policy: tabular Q-learning over accumulated cost states.
//!
//! A state is the weighted sum of the CO2 and run time accumulated by the
//! actions of the current episode, rounded half-up to two decimals. The reward
//! is the product of the observed confidences divided by the episode length.
//! An episode ends on the first autonomous action or after `steady_duration`
//! human actions.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::wsm::Weights;
use crate::error::{Error, Result};
use crate::evaluator::ActionKind;

/// A state rounded to hundredths, stored as an integer so it can key a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct StateKey(pub i64);

impl StateKey {
    /// Rounds half-up to two decimals. The small bias absorbs representation
    /// error such as `1.655 * 100 = 165.49999…`.
    pub fn round(x: f64) -> Self {
        StateKey((x * 100.0 + 0.5 + 1e-9).floor() as i64)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        write!(f, "{sign}{}.{:02}", self.0.unsigned_abs() / 100, self.0.unsigned_abs() % 100)
    }
}

/// One observed step: what was done, what it cost, how confident the model was.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvEntry {
    pub action: ActionKind,
    pub co2: f64,
    pub run_time: f64,
    pub p_hat: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionVector(Vec<AvEntry>);

impl ActionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: AvEntry) {
        self.0.push(entry);
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[AvEntry] {
        &self.0
    }
}

impl From<Vec<AvEntry>> for ActionVector {
    fn from(v: Vec<AvEntry>) -> Self {
        Self(v)
    }
}

/// `w_g·Σc + w_r·Σt`, rounded. An empty vector is state 0.
pub fn rl_state(av: &[AvEntry], weights: Weights) -> StateKey {
    let c: f64 = av.iter().map(|e| e.co2).sum();
    let t: f64 = av.iter().map(|e| e.run_time).sum();
    StateKey::round(weights.greenness * c + weights.resilience * t)
}

/// `(Π p̂) / |av|`.
pub fn rl_reward(av: &[AvEntry]) -> Result<f64> {
    if av.is_empty() {
        return Err(Error::Empty("action vector"));
    }
    Ok(av.iter().map(|e| e.p_hat).product::<f64>() / av.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlParams {
    /// Q-learning step size.
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub state_weights: Weights,
}

impl Default for RlParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9,
            epsilon: 0.1,
            state_weights: Weights::default(),
        }
    }
}

impl RlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("rl.alpha", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("rl.gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("rl.epsilon", "must lie in [0, 1]"));
        }
        self.state_weights.validate("rl.state_weights")
    }
}

/// State-action values; unseen entries read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    values: BTreeMap<StateKey, [f64; 2]>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: StateKey, a: ActionKind) -> f64 {
        self.values.get(&s).map_or(0.0, |q| q[a.index()])
    }

    pub fn set(&mut self, s: StateKey, a: ActionKind, value: f64) {
        self.values.entry(s).or_insert([0.0; 2])[a.index()] = value;
    }

    pub fn max_value(&self, s: StateKey) -> f64 {
        self.values.get(&s).map_or(0.0, |q| q[0].max(q[1]))
    }

    /// Greedy action; ties go to the autonomous action.
    pub fn best_action(&self, s: StateKey) -> ActionKind {
        if self.get(s, ActionKind::Human) > self.get(s, ActionKind::Autonomous) {
            ActionKind::Human
        } else {
            ActionKind::Autonomous
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateKey, [f64; 2])> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    /// CSV with header `state,q_autonomous,q_human`, states ascending.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "q_autonomous", "q_human"])?;
        for (s, q) in self.iter() {
            w.write_record([s.to_string(), q[0].to_string(), q[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Temporal-difference update of `Q(s, a)`; returns the new value.
pub fn q_update(table: &mut QTable, s: StateKey, a: ActionKind, r: f64, s_next: StateKey, alpha: f64, gamma: f64) -> f64 {
    let q = table.get(s, a);
    let target = r + gamma * table.max_value(s_next);
    let updated = q + alpha * (target - q);
    table.set(s, a, updated);
    updated
}

/// What one observed step did to the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: StateKey,
    pub next_state: StateKey,
    pub reward: f64,
    pub episode_ended: bool,
}

/// Episode/step bookkeeping around a persistent Q-table.
#[derive(Debug, Clone)]
pub struct RlAgent {
    params: RlParams,
    steady_duration: usize,
    table: QTable,
    av: ActionVector,
    state: StateKey,
    steps: usize,
    episodes: u64,
}

impl RlAgent {
    pub fn new(params: RlParams, steady_duration: usize) -> Result<Self> {
        params.validate()?;
        if steady_duration == 0 {
            return Err(Error::config("steady_len", "must be positive"));
        }
        Ok(Self {
            params,
            steady_duration,
            table: QTable::new(),
            av: ActionVector::new(),
            state: StateKey::default(),
            steps: 0,
            episodes: 0,
        })
    }

    pub fn params(&self) -> &RlParams {
        &self.params
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn state(&self) -> StateKey {
        self.state
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn action_vector(&self) -> &ActionVector {
        &self.av
    }

    /// Starts recovery from the actions taken while performance degraded.
    pub fn begin(&mut self, pd: &[AvEntry]) {
        self.state = rl_state(pd, self.params.state_weights);
        self.av.clear();
        self.steps = 0;
    }

    /// ε-greedy choice in the current state.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionKind {
        if rng.random::<f64>() < self.params.epsilon {
            ActionKind::ALL[rng.random_range(0..ActionKind::ALL.len())]
        } else {
            self.table.best_action(self.state)
        }
    }

    /// Records the actuated step and learns from it.
    pub fn observe(&mut self, entry: AvEntry) -> StepOutcome {
        self.av.push(entry);
        let next = rl_state(self.av.entries(), self.params.state_weights);
        let reward = rl_reward(self.av.entries()).expect("vector was just extended");
        let state = self.state;
        q_update(&mut self.table, state, entry.action, reward, next, self.params.alpha, self.params.gamma);
        self.state = next;

        let episode_ended = match entry.action {
            ActionKind::Autonomous => true,
            ActionKind::Human => {
                self.steps += 1;
                self.steps >= self.steady_duration
            }
        };
        if episode_ended {
            self.av.clear();
            self.steps = 0;
            self.episodes += 1;
        }
        StepOutcome {
            state,
            next_state: next,
            reward,
            episode_ended,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(action: ActionKind, co2: f64, run_time: f64, p_hat: f64) -> AvEntry {
        AvEntry {
            action,
            co2,
            run_time,
            p_hat,
        }
    }

    #[test]
    fn state_examples() {
        let w = Weights::default();
        assert_eq!(rl_state(&[], w), StateKey(0));
        let av = [
            entry(ActionKind::Autonomous, 0.1, 2.0, 0.9),
            entry(ActionKind::Human, 0.2, 1.0, 0.9),
        ];
        assert_eq!(rl_state(&av, w), StateKey(165));
        assert_eq!(StateKey::round(1.654999), StateKey(165));
        assert_eq!(StateKey::round(1.655), StateKey(166));
        assert_eq!(StateKey(165).to_string(), "1.65");
        assert_eq!(StateKey(-5).to_string(), "-0.05");
    }

    #[test]
    fn reward_examples() {
        let one = [entry(ActionKind::Human, 0.0, 1.0, 0.8)];
        assert!((rl_reward(&one).unwrap() - 0.8).abs() < 1e-15);
        let two = [entry(ActionKind::Human, 0.0, 1.0, 0.5), entry(ActionKind::Human, 0.0, 1.0, 0.8)];
        assert!((rl_reward(&two).unwrap() - 0.2).abs() < 1e-15);
        let zero = [entry(ActionKind::Human, 0.0, 1.0, 0.0), entry(ActionKind::Human, 0.0, 1.0, 0.8)];
        assert_eq!(rl_reward(&zero).unwrap(), 0.0);
        assert!(matches!(rl_reward(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn update_examples() {
        let mut q = QTable::new();
        let v = q_update(&mut q, StateKey(0), ActionKind::Human, 1.0, StateKey(1), 0.5, 0.9);
        assert_eq!(v, 0.5);
        let mut q = QTable::new();
        q.set(StateKey(1), ActionKind::Autonomous, 7.0);
        let v = q_update(&mut q, StateKey(0), ActionKind::Human, 0.25, StateKey(1), 1.0, 0.0);
        assert_eq!(v, 0.25);
    }

    #[test]
    fn two_state_chain_matches_value_iteration() {
        // transitions[s][a] = (next state, reward)
        let transitions = [[(1usize, 1.0), (0usize, 0.5)], [(0, 0.0), (1, 0.2)]];
        let gamma = 0.9;
        let mut v = [[0.0f64; 2]; 2];
        for _ in 0..5000 {
            let mut next = v;
            for s in 0..2 {
                for a in 0..2 {
                    let (s2, r) = transitions[s][a];
                    next[s][a] = r + gamma * v[s2][0].max(v[s2][1]);
                }
            }
            v = next;
        }

        let mut q = QTable::new();
        for _ in 0..500 {
            for s in 0..2 {
                for a in ActionKind::ALL {
                    let (s2, r) = transitions[s][a.index()];
                    q_update(&mut q, StateKey(s as i64), a, r, StateKey(s2 as i64), 0.5, gamma);
                }
            }
        }
        for s in 0..2 {
            for a in ActionKind::ALL {
                assert!((q.get(StateKey(s as i64), a) - v[s][a.index()]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn greedy_follows_table() {
        let params = RlParams {
            epsilon: 0.0,
            ..RlParams::default()
        };
        let mut agent = RlAgent::new(params, 30).unwrap();
        agent.begin(&[]);
        agent.table.set(StateKey(0), ActionKind::Human, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(agent.select(&mut rng), ActionKind::Human);
        agent.table.set(StateKey(0), ActionKind::Autonomous, 0.3);
        assert_eq!(agent.select(&mut rng), ActionKind::Autonomous);
    }

    #[test]
    fn exploration_is_reproducible() {
        let params = RlParams {
            epsilon: 1.0,
            ..RlParams::default()
        };
        let agent = RlAgent::new(params, 30).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| agent.select(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert!(draw(11).contains(&ActionKind::Human) && draw(11).contains(&ActionKind::Autonomous));
    }

    #[test]
    fn scripted_episode_ends_on_first_autonomous() {
        let mut agent = RlAgent::new(RlParams::default(), 30).unwrap();
        agent.begin(&[entry(ActionKind::Human, 1e-6, 5.0, 0.1)]);
        assert_eq!(agent.state(), StateKey(250));
        let script = [ActionKind::Human, ActionKind::Human, ActionKind::Human, ActionKind::Autonomous];
        let mut lengths = vec![];
        for (k, a) in script.into_iter().enumerate() {
            let out = agent.observe(entry(a, 1e-6, 1.0, 0.9));
            lengths.push(agent.action_vector().len());
            assert_eq!(out.episode_ended, k == 3);
        }
        assert_eq!(lengths, vec![1, 2, 3, 0]);
        assert_eq!(agent.episodes(), 1);
        // Four steps were learned from; the last one paid 0.9^4 / 4.
        assert!(agent.table().len() >= 4);
    }

    #[test]
    fn human_steps_cap_episode() {
        let mut agent = RlAgent::new(RlParams::default(), 3).unwrap();
        agent.begin(&[]);
        let ended: Vec<bool> = (0..4)
            .map(|_| agent.observe(entry(ActionKind::Human, 0.0, 5.0, 0.5)).episode_ended)
            .collect();
        assert_eq!(ended, vec![false, false, true, false]);
    }

    #[test]
    fn csv_export_has_header_and_sorted_states() {
        let mut q = QTable::new();
        q.set(StateKey(250), ActionKind::Human, 0.5);
        q.set(StateKey(50), ActionKind::Autonomous, 0.25);
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "state,q_autonomous,q_human\n0.50,0.25,0\n2.50,0,0.5\n");
    }

    proptest! {
        #[test]
        fn q_values_stay_bounded(
            steps in prop::collection::vec((0i64..20, 0usize..2, 0.0f64..=1.0, 0i64..20), 1..400),
            gamma in 0.0f64..0.99,
            alpha in 0.01f64..=1.0,
        ) {
            let mut q = QTable::new();
            let bound = 1.0 / (1.0 - gamma) + 1e-9;
            for (s, a, r, s2) in steps {
                q_update(&mut q, StateKey(s), ActionKind::ALL[a], r, StateKey(s2), alpha, gamma);
            }
            for (_, v) in q.iter() {
                prop_assert!(v[0].abs() <= bound && v[1].abs() <= bound);
            }
        }
    }
}
