//! Tabular cooperative Markov games, joint-action indexing, factored policies
//! and value tables.
//!
//! States and actions are dense indices. Joint actions are encoded in
//! mixed radix with agent 0 as the most significant digit, so for two agents
//! with two actions each the order is `(0,0), (0,1), (1,0), (1,1)`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Probabilities below this are treated as zero (out of support), and every
/// log is taken of `max(p, PROB_FLOOR)`.
pub const PROB_FLOOR: f64 = 1e-12;

const ROW_TOL: f64 = 1e-9;

/// `ln(max(p, PROB_FLOOR))`.
#[inline]
pub fn floored_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

#[inline]
pub fn in_support(p: f64) -> bool {
    p >= PROB_FLOOR
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointAction {
    pub per_agent: Vec<usize>,
    pub flat_index: usize,
}

/// Mixed-radix codec for joint actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointActionSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    count: usize,
}

impl JointActionSpace {
    pub fn new(sizes: &[usize]) -> Self {
        let mut strides = vec![1; sizes.len()];
        for i in (0..sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let count = sizes.iter().product();
        JointActionSpace {
            sizes: sizes.to_vec(),
            strides,
            count,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn encode(&self, per_agent: &[usize]) -> Result<usize> {
        if per_agent.len() != self.sizes.len() {
            return Err(Error::IndexOutOfRange {
                what: "joint action length",
                index: per_agent.len(),
                limit: self.sizes.len(),
            });
        }
        let mut flat = 0;
        for ((&a, &n), &stride) in per_agent.iter().zip(&self.sizes).zip(&self.strides) {
            if a >= n {
                return Err(Error::IndexOutOfRange {
                    what: "agent action",
                    index: a,
                    limit: n,
                });
            }
            flat += a * stride;
        }
        Ok(flat)
    }

    pub fn decode(&self, flat: usize) -> Result<JointAction> {
        if flat >= self.count {
            return Err(Error::IndexOutOfRange {
                what: "joint action index",
                index: flat,
                limit: self.count,
            });
        }
        let per_agent = (0..self.sizes.len())
            .map(|i| self.agent_action(flat, i))
            .collect();
        Ok(JointAction {
            per_agent,
            flat_index: flat,
        })
    }

    /// Action of `agent` inside the flat joint index. No bounds check.
    #[inline]
    pub fn agent_action(&self, flat: usize, agent: usize) -> usize {
        (flat / self.strides[agent]) % self.sizes[agent]
    }

    /// Flat index obtained by replacing `agent`'s action inside `flat`.
    #[inline]
    pub fn with_agent_action(&self, flat: usize, agent: usize, action: usize) -> usize {
        let current = self.agent_action(flat, agent);
        flat - current * self.strides[agent] + action * self.strides[agent]
    }

    pub fn iter(&self) -> impl Iterator<Item = JointAction> + '_ {
        (0..self.count).map(move |flat| JointAction {
            per_agent: (0..self.sizes.len())
                .map(|i| self.agent_action(flat, i))
                .collect(),
            flat_index: flat,
        })
    }
}

/// Human-readable side metadata. Never consulted by the solvers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameLabels {
    pub name: String,
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
}

/// Full enumeration of a cooperative Markov game.
#[derive(Clone, Debug)]
pub struct TabularGame {
    n_states: usize,
    space: JointActionSpace,
    /// `[s * n_joint + a]`
    reward: Vec<f64>,
    /// Sparse rows `[s * n_joint + a] -> [(s_next, p)]`.
    transition: Vec<Vec<(usize, f64)>>,
    gamma: f64,
    initial_dist: Vec<f64>,
    terminal: Vec<bool>,
    horizon: Option<usize>,
    labels: GameLabels,
}

/// Raw parts of a game, before validation.
#[derive(Clone, Debug)]
pub struct GameSpec {
    pub actions: Vec<usize>,
    pub n_states: usize,
    /// `reward[s][a_flat]`
    pub reward: Vec<Vec<f64>>,
    /// `transition[s][a_flat]` as sparse `(s_next, p)` lists.
    pub transition: Vec<Vec<Vec<(usize, f64)>>>,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
    pub terminal: Vec<usize>,
    pub horizon: Option<usize>,
    pub labels: GameLabels,
}

impl TabularGame {
    /// Builds and validates a game. Fails with the full validation report.
    pub fn new(spec: GameSpec) -> Result<Self> {
        let game = Self::from_spec_unchecked(spec)?;
        let report = validate_game(&game);
        if !report.is_valid() {
            return Err(Error::InvalidGame(report.to_string()));
        }
        Ok(game)
    }

    /// Builds a game checking only shapes, so that `validate_game` can
    /// diagnose the remaining invariants.
    pub fn from_spec_unchecked(spec: GameSpec) -> Result<Self> {
        if spec.actions.is_empty() || spec.actions.contains(&0) {
            return Err(Error::InvalidGame(
                "every agent needs at least one action".into(),
            ));
        }
        if spec.n_states == 0 {
            return Err(Error::InvalidGame("game has no states".into()));
        }
        let space = JointActionSpace::new(&spec.actions);
        let n_joint = space.len();
        let ns = spec.n_states;
        if spec.reward.len() != ns || spec.reward.iter().any(|r| r.len() != n_joint) {
            return Err(Error::InvalidGame(format!(
                "reward table must be {ns} x {n_joint}"
            )));
        }
        if spec.transition.len() != ns || spec.transition.iter().any(|r| r.len() != n_joint) {
            return Err(Error::InvalidGame(format!(
                "transition table must be {ns} x {n_joint} x {ns}"
            )));
        }
        if spec.initial_dist.len() != ns {
            return Err(Error::InvalidGame(format!(
                "initial_dist must have {ns} entries"
            )));
        }
        let mut terminal = vec![false; ns];
        for &t in &spec.terminal {
            if t >= ns {
                return Err(Error::InvalidGame(format!("terminal state {t} out of range")));
            }
            terminal[t] = true;
        }
        let mut transition = Vec::with_capacity(ns * n_joint);
        for rows in spec.transition {
            for row in rows {
                if let Some(&(s2, _)) = row.iter().find(|(s2, _)| *s2 >= ns) {
                    return Err(Error::InvalidGame(format!(
                        "transition target {s2} out of range"
                    )));
                }
                transition.push(row);
            }
        }
        Ok(TabularGame {
            n_states: ns,
            space,
            reward: spec.reward.into_iter().flatten().collect(),
            transition,
            gamma: spec.gamma,
            initial_dist: spec.initial_dist,
            terminal,
            horizon: spec.horizon,
            labels: spec.labels,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.space.n_agents()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self, agent: usize) -> usize {
        self.space.sizes()[agent]
    }

    pub fn action_counts(&self) -> &[usize] {
        self.space.sizes()
    }

    pub fn n_joint(&self) -> usize {
        self.space.len()
    }

    pub fn space(&self) -> &JointActionSpace {
        &self.space
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.space.len() + a]
    }

    #[inline]
    pub fn transitions(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transition[s * self.space.len() + a]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.terminal[s]).collect()
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn labels(&self) -> &GameLabels {
        &self.labels
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Short content hash over the canonical document form.
    pub fn fingerprint(&self) -> String {
        let mut doc = self.to_document();
        // labels are cosmetic
        doc.name = None;
        doc.action_labels = None;
        doc.states = (0..self.n_states).map(|s| s.to_string()).collect();
        let bytes = serde_json::to_vec(&doc).expect("game document serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(&digest[..8])
    }

    pub fn to_document(&self) -> GameDocument {
        let nj = self.space.len();
        let ns = self.n_states;
        let reward = (0..ns)
            .map(|s| self.reward[s * nj..(s + 1) * nj].to_vec())
            .collect();
        let transition = (0..ns)
            .map(|s| {
                (0..nj)
                    .map(|a| {
                        let mut row = vec![0.0; ns];
                        for &(s2, p) in self.transitions(s, a) {
                            row[s2] += p;
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        let states = if self.labels.states.len() == ns {
            self.labels.states.clone()
        } else {
            (0..ns).map(|s| s.to_string()).collect()
        };
        GameDocument {
            name: (!self.labels.name.is_empty()).then(|| self.labels.name.clone()),
            n_agents: self.n_agents(),
            gamma: self.gamma,
            states,
            actions: self.space.sizes().to_vec(),
            action_labels: (!self.labels.actions.is_empty()).then(|| self.labels.actions.clone()),
            reward,
            transition,
            initial_dist: self.initial_dist.clone(),
            terminal: self.terminal_states(),
            horizon: self.horizon,
        }
    }

    pub fn from_document(doc: GameDocument) -> Result<Self> {
        if doc.actions.len() != doc.n_agents {
            return Err(Error::InvalidGame(format!(
                "n_agents is {} but actions lists {} agents",
                doc.n_agents,
                doc.actions.len()
            )));
        }
        let ns = doc.states.len();
        let transition = doc
            .transition
            .into_iter()
            .map(|rows| {
                rows.into_iter()
                    .map(|dense| {
                        dense
                            .into_iter()
                            .enumerate()
                            .filter(|(_, p)| *p != 0.0)
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        // dense rows must have exactly ns columns
        let labels = GameLabels {
            name: doc.name.unwrap_or_default(),
            states: doc.states,
            actions: doc.action_labels.unwrap_or_default(),
        };
        TabularGame::new(GameSpec {
            actions: doc.actions,
            n_states: ns,
            reward: doc.reward,
            transition,
            gamma: doc.gamma,
            initial_dist: doc.initial_dist,
            terminal: doc.terminal,
            horizon: doc.horizon,
            labels,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GameDocument = serde_json::from_str(text)?;
        for (s, rows) in doc.transition.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                if row.len() != doc.states.len() {
                    return Err(Error::InvalidGame(format!(
                        "transition[{s}][{a}] has {} entries, expected {}",
                        row.len(),
                        doc.states.len()
                    )));
                }
            }
        }
        Self::from_document(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("game document serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| Error::io(&path, e))
    }
}

/// Structured text form of a game (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_agents: usize,
    pub gamma: f64,
    pub states: Vec<String>,
    pub actions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_labels: Option<Vec<Vec<String>>>,
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial_dist: Vec<f64>,
    pub terminal: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.issues.join("; "))
    }
}

/// Lists every violated game invariant; empty iff the game is valid.
pub fn validate_game(game: &TabularGame) -> ValidationReport {
    let mut issues = Vec::new();
    if !(0.0..1.0).contains(&game.gamma) {
        issues.push(format!("gamma {} outside [0, 1)", game.gamma));
    }
    let init_sum: f64 = game.initial_dist.iter().sum();
    if (init_sum - 1.0).abs() > ROW_TOL {
        issues.push(format!("initial_dist sums to {init_sum}"));
    }
    for (s, &p) in game.initial_dist.iter().enumerate() {
        if p < 0.0 || !p.is_finite() {
            issues.push(format!("initial_dist[{s}] = {p}"));
        }
    }
    for s in 0..game.n_states {
        for a in 0..game.n_joint() {
            let r = game.reward(s, a);
            if !r.is_finite() {
                issues.push(format!("reward[{s}][{a}] = {r} is not finite"));
            }
            let row = game.transitions(s, a);
            let mut sum = 0.0;
            for &(s2, p) in row {
                if p < 0.0 || !p.is_finite() {
                    issues.push(format!("transition[{s}][{a}][{s2}] = {p}"));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_TOL {
                issues.push(format!("transition[{s}][{a}] sums to {sum}"));
            }
            if game.terminal[s] {
                if r != 0.0 {
                    issues.push(format!("terminal state {s} has reward {r} for action {a}"));
                }
                let self_loop: f64 = row.iter().filter(|(s2, _)| *s2 == s).map(|(_, p)| p).sum();
                if (self_loop - 1.0).abs() > ROW_TOL {
                    issues.push(format!("terminal state {s} does not self-loop under action {a}"));
                }
            }
        }
    }
    ValidationReport { issues }
}

/// Per-agent, per-state action distributions; the joint policy is their product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactoredPolicy {
    /// `tables[agent][state][action]`
    tables: Vec<Vec<Vec<f64>>>,
}

impl FactoredPolicy {
    pub fn new(tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for (i, agent) in tables.iter().enumerate() {
            for (s, row) in agent.iter().enumerate() {
                check_distribution(row).map_err(|msg| {
                    Error::Config(format!("policy row agent {i} state {s}: {msg}"))
                })?;
            }
        }
        Ok(FactoredPolicy { tables })
    }

    pub(crate) fn from_tables_unchecked(tables: Vec<Vec<Vec<f64>>>) -> Self {
        FactoredPolicy { tables }
    }

    pub fn uniform(game: &TabularGame) -> Self {
        let tables = (0..game.n_agents())
            .map(|i| {
                let n = game.n_actions(i);
                vec![vec![1.0 / n as f64; n]; game.n_states()]
            })
            .collect();
        FactoredPolicy { tables }
    }

    /// `choice[agent][state]` is the action taken with probability one.
    pub fn deterministic(game: &TabularGame, choice: &[Vec<usize>]) -> Result<Self> {
        let mut tables = Vec::with_capacity(game.n_agents());
        for (i, picks) in choice.iter().enumerate() {
            let n = game.n_actions(i);
            let mut agent = Vec::with_capacity(picks.len());
            for &a in picks {
                if a >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "agent action",
                        index: a,
                        limit: n,
                    });
                }
                let mut row = vec![0.0; n];
                row[a] = 1.0;
                agent.push(row);
            }
            tables.push(agent);
        }
        Ok(FactoredPolicy { tables })
    }

    pub fn n_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn n_states(&self) -> usize {
        self.tables.first().map_or(0, |t| t.len())
    }

    #[inline]
    pub fn row(&self, agent: usize, state: usize) -> &[f64] {
        &self.tables[agent][state]
    }

    #[cfg(test)]
    pub(crate) fn set_row(&mut self, agent: usize, state: usize, row: Vec<f64>) {
        self.tables[agent][state] = row;
    }

    pub fn agent_table(&self, agent: usize) -> &[Vec<f64>] {
        &self.tables[agent]
    }

    pub(crate) fn set_agent_table(&mut self, agent: usize, table: Vec<Vec<f64>>) {
        self.tables[agent] = table;
    }

    pub fn tables(&self) -> &[Vec<Vec<f64>>] {
        &self.tables
    }

    /// Product distribution over flat joint actions at `state`.
    pub fn joint_row(&self, space: &JointActionSpace, state: usize) -> Vec<f64> {
        (0..space.len())
            .map(|flat| {
                (0..self.tables.len())
                    .map(|i| self.tables[i][state][space.agent_action(flat, i)])
                    .product()
            })
            .collect()
    }

    /// Greedy action per agent and state (lowest index on ties).
    pub fn greedy(&self) -> Vec<Vec<usize>> {
        self.tables
            .iter()
            .map(|agent| agent.iter().map(|row| argmax(row)).collect())
            .collect()
    }

    /// Deterministic policy putting all mass on each row's argmax.
    pub fn greedy_policy(&self) -> FactoredPolicy {
        let tables = self
            .tables
            .iter()
            .map(|agent| {
                agent
                    .iter()
                    .map(|row| {
                        let mut out = vec![0.0; row.len()];
                        out[argmax(row)] = 1.0;
                        out
                    })
                    .collect()
            })
            .collect();
        FactoredPolicy { tables }
    }

    /// Largest total-variation distance between corresponding rows.
    pub fn max_row_tv(&self, other: &FactoredPolicy) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in self.tables.iter().zip(&other.tables) {
            for (ra, rb) in a.iter().zip(b) {
                worst = worst.max(total_variation(ra, rb));
            }
        }
        worst
    }

    /// Swaps the roles of agents 0 and 1 (two-agent games with equal action sets).
    pub fn swap_agents(&self) -> FactoredPolicy {
        let mut tables = self.tables.clone();
        tables.swap(0, 1);
        FactoredPolicy { tables }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FactoredPolicy = serde_json::from_str(text)?;
        FactoredPolicy::new(raw.tables)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    /// Checks that the policy's shape matches `game`.
    pub fn check_shape(&self, game: &TabularGame) -> Result<()> {
        if self.n_agents() != game.n_agents() {
            return Err(Error::Config(format!(
                "policy has {} agents, game has {}",
                self.n_agents(),
                game.n_agents()
            )));
        }
        for (i, agent) in self.tables.iter().enumerate() {
            if agent.len() != game.n_states() {
                return Err(Error::Config(format!(
                    "policy agent {i} has {} states, game has {}",
                    agent.len(),
                    game.n_states()
                )));
            }
            if agent.iter().any(|row| row.len() != game.n_actions(i)) {
                return Err(Error::Config(format!(
                    "policy agent {i} rows must have {} actions",
                    game.n_actions(i)
                )));
            }
        }
        Ok(())
    }
}

/// `prod_i pi^i(a^i | s)`.
pub fn joint_policy_prob(policy: &FactoredPolicy, state: usize, a: &JointAction) -> Result<f64> {
    if a.per_agent.len() != policy.n_agents() {
        return Err(Error::IndexOutOfRange {
            what: "joint action length",
            index: a.per_agent.len(),
            limit: policy.n_agents(),
        });
    }
    if state >= policy.n_states() {
        return Err(Error::IndexOutOfRange {
            what: "state",
            index: state,
            limit: policy.n_states(),
        });
    }
    let mut p = 1.0;
    for (i, &ai) in a.per_agent.iter().enumerate() {
        let row = policy.row(i, state);
        let pi = *row.get(ai).ok_or(Error::IndexOutOfRange {
            what: "agent action",
            index: ai,
            limit: row.len(),
        })?;
        p *= pi;
    }
    Ok(p)
}

/// All joint actions in mixed-radix order.
pub fn enumerate_joint_actions(game: &TabularGame) -> Vec<JointAction> {
    game.space().iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalQTable {
    /// `values[s][a_flat]`
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalQTable {
    pub agent: usize,
    /// `values[s][own action]`
    pub values: Vec<Vec<f64>>,
}

impl LocalQTable {
    pub fn zeros(agent: usize, n_states: usize, n_actions: usize) -> Self {
        LocalQTable {
            agent,
            values: vec![vec![0.0; n_actions]; n_states],
        }
    }
}

pub(crate) fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if row.is_empty() {
        return Err("empty row".into());
    }
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("invalid probability {p}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
