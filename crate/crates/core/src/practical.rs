//! Dataset-driven solver: per-agent local Q tables fitted by TD with a CQL
//! penalty on importance-resampled data, weighted-likelihood policy
//! extraction over tabular softmax logits, soft targets and auto-tuned alpha.
//!
//! Only the dataset and the behavior model are consulted; the game's reward
//! and transition tables are never read.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BehaviorModel, OfflineDataset, TransitionRecord};
use crate::error::{Error, Result};
use crate::exact::{
    draw_order, entropy_row, expected_max_advantage, kl_row, policy_stats, regularizer, Ablation, IterationRecord,
    OrderMode, SolverTrace, TemperatureSchedule, Temps,
};
use crate::game::{in_support, FactoredPolicy, LocalQTable, PROB_FLOOR};

/// Tabular softmax logits; entries off the behavior support are masked out.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxPolicyParams {
    /// `logits[agent][state][action]`, meaningful only where `mask` is set.
    pub logits: Vec<Vec<Vec<f64>>>,
    pub mask: Vec<Vec<Vec<bool>>>,
}

fn softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

impl SoftmaxPolicyParams {
    /// Logits reproducing `policy` on the support of `mu`. Policy entries
    /// below the floor inside the support start at `ln(PROB_FLOOR)`.
    pub fn from_policy(policy: &FactoredPolicy, mu: &BehaviorModel) -> Self {
        let n = policy.n_agents();
        let ns = policy.n_states();
        let mut logits = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..n {
            let mut lt = Vec::with_capacity(ns);
            let mut mt = Vec::with_capacity(ns);
            for s in 0..ns {
                let m: Vec<bool> = mu.mu(i, s).iter().map(|&p| in_support(p)).collect();
                lt.push(policy.row(i, s).iter().map(|&p| p.max(PROB_FLOOR).ln()).collect());
                mt.push(m);
            }
            logits.push(lt);
            mask.push(mt);
        }
        SoftmaxPolicyParams { logits, mask }
    }

    pub fn probs(&self, agent: usize, state: usize) -> Vec<f64> {
        softmax_masked(&self.logits[agent][state], &self.mask[agent][state])
    }

    pub fn agent_table(&self, agent: usize) -> Vec<Vec<f64>> {
        (0..self.logits[agent].len()).map(|s| self.probs(agent, s)).collect()
    }

    pub fn policy(&self) -> FactoredPolicy {
        FactoredPolicy::from_tables_unchecked((0..self.logits.len()).map(|i| self.agent_table(i)).collect())
    }
}

/// `(pi^{-i}(a^{-i}|s) / mu^{-i}(a^{-i}|s))^{1/(N-1)}`, where `team` holds
/// the teammates' current policies and `mu^{-i}` is the empirical joint with
/// the agent's own action summed out.
pub fn compute_rho(team: &FactoredPolicy, mu: &BehaviorModel, record: &TransitionRecord, agent: usize, n_agents: usize) -> Result<f64> {
    if n_agents <= 1 {
        return Ok(1.0);
    }
    let s = record.state;
    let a = &record.joint_action;
    let num: f64 = (0..n_agents)
        .filter(|&j| j != agent)
        .map(|j| team.row(j, s)[a.per_agent[j]])
        .product();
    let den = mu.teammate_marginal(s, agent, a.flat_index);
    if !in_support(den) {
        return Err(Error::Config(format!(
            "record at state {s} has teammate actions outside the behavior support"
        )));
    }
    Ok((num / den).powf(1.0 / (n_agents - 1) as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResampledDataset {
    /// Resample count of every base record.
    pub multiplicities: Vec<usize>,
    pub rho_values: Vec<f64>,
}

impl ResampledDataset {
    pub fn size(&self) -> usize {
        self.multiplicities.iter().sum()
    }
}

/// Multinomial draw of `size` records with probabilities proportional to
/// `weight * rho`.
pub fn resample(dataset: &OfflineDataset, rho: &[f64], size: usize, rng: &mut impl Rng) -> Result<ResampledDataset> {
    if rho.len() != dataset.len() {
        return Err(Error::Config("one ratio per record required".into()));
    }
    if let Some(r) = rho.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(Error::Config(format!("invalid importance ratio {r}")));
    }
    let probs: Vec<f64> = dataset.records.iter().zip(rho).map(|(r, p)| r.weight * p).collect();
    let dist = WeightedIndex::new(&probs).map_err(|_| Error::Config("all importance ratios are zero".into()))?;
    let mut multiplicities = vec![0; dataset.len()];
    for _ in 0..size {
        multiplicities[dist.sample(rng)] += 1;
    }
    Ok(ResampledDataset {
        multiplicities,
        rho_values: rho.to_vec(),
    })
}

pub fn resample_seeded(dataset: &OfflineDataset, rho: &[f64], size: usize, seed: u64) -> Result<ResampledDataset> {
    resample(dataset, rho, size, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Resampled transitions of one agent, aggregated by `(s, a^i, r, s', done)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QBatch {
    pub agent: usize,
    pub entries: Vec<QEntry>,
    /// Resampled record count per state.
    pub state_counts: Vec<(usize, f64)>,
    pub size: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QEntry {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
    pub count: f64,
}

impl QBatch {
    pub fn new(dataset: &OfflineDataset, resampled: &ResampledDataset, agent: usize) -> Self {
        let mut map: BTreeMap<(usize, usize, u64, usize, bool), f64> = BTreeMap::new();
        let mut states: BTreeMap<usize, f64> = BTreeMap::new();
        for (r, &m) in dataset.records.iter().zip(&resampled.multiplicities) {
            if m == 0 {
                continue;
            }
            let key = (r.state, r.joint_action.per_agent[agent], r.reward.to_bits(), r.next_state, r.done);
            *map.entry(key).or_insert(0.0) += m as f64;
            *states.entry(r.state).or_insert(0.0) += m as f64;
        }
        let entries = map
            .into_iter()
            .map(|((state, action, r, next_state, done), count)| QEntry {
                state,
                action,
                reward: f64::from_bits(r),
                next_state,
                done,
                count,
            })
            .collect();
        QBatch {
            agent,
            entries,
            state_counts: states.into_iter().collect(),
            size: resampled.size() as f64,
        }
    }

    /// `(state, action, count)` triples for policy extraction.
    pub fn state_actions(&self) -> Vec<(usize, usize, f64)> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for e in &self.entries {
            *map.entry((e.state, e.action)).or_insert(0.0) += e.count;
        }
        map.into_iter().map(|((s, a), c)| (s, a, c)).collect()
    }
}

/// Bootstrapped targets `y = r + gamma (1 - done) [E_{pi_old} Qbar(s') - alpha KL + beta H]`,
/// with only the updating agent's regularizer at `s'`.
pub fn td_targets(batch: &QBatch, target: &LocalQTable, pi_old: &[Vec<f64>], mu: &BehaviorModel, t: Temps, gamma: f64) -> Vec<f64> {
    let i = batch.agent;
    batch
        .entries
        .iter()
        .map(|e| {
            if e.done {
                return e.reward;
            }
            let s2 = e.next_state;
            let p = &pi_old[s2];
            let ev: f64 = p.iter().zip(&target.values[s2]).map(|(p, q)| p * q).sum();
            e.reward + gamma * (ev - t.alpha * kl_row(p, mu.mu(i, s2)) + t.beta * entropy_row(p))
        })
        .collect()
}

fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean squared TD error plus `cql_weight` times the mean over resampled
/// states of `logsumexp_a Q(s,a) - E_{mu^i} Q(s,.)`.
pub fn q_loss(q: &LocalQTable, batch: &QBatch, y: &[f64], mu: &BehaviorModel, cql_weight: f64) -> f64 {
    let n = batch.size;
    let td: f64 = batch
        .entries
        .iter()
        .zip(y)
        .map(|(e, y)| e.count * (q.values[e.state][e.action] - y).powi(2))
        .sum();
    let cql: f64 = batch
        .state_counts
        .iter()
        .map(|&(s, c)| {
            let row = &q.values[s];
            let ev: f64 = row.iter().zip(mu.mu(batch.agent, s)).map(|(q, m)| q * m).sum();
            c * (logsumexp(row) - ev)
        })
        .sum();
    (td + cql_weight * cql) / n
}

pub fn q_loss_grad(q: &LocalQTable, batch: &QBatch, y: &[f64], mu: &BehaviorModel, cql_weight: f64) -> Vec<Vec<f64>> {
    let n = batch.size;
    let mut g: Vec<Vec<f64>> = q.values.iter().map(|r| vec![0.0; r.len()]).collect();
    for (e, y) in batch.entries.iter().zip(y) {
        g[e.state][e.action] += 2.0 * e.count * (q.values[e.state][e.action] - y) / n;
    }
    if cql_weight != 0.0 {
        for &(s, c) in &batch.state_counts {
            let row = &q.values[s];
            let lse = logsumexp(row);
            for (a, (qa, m)) in row.iter().zip(mu.mu(batch.agent, s)).enumerate() {
                g[s][a] += cql_weight * c * ((qa - lse).exp() - m) / n;
            }
        }
    }
    g
}

/// `exp(clip((A(s,a) - beta ln mu(a|s)) / (alpha + beta)))` per `(s, a, count)`
/// triple, with `A = Qbar - E_{pi_old} Qbar`.
pub fn extraction_weights(
    triples: &[(usize, usize, f64)],
    qbar: &LocalQTable,
    pi_old: &[Vec<f64>],
    mu: &BehaviorModel,
    agent: usize,
    t: Temps,
    clip: f64,
) -> Vec<f64> {
    triples
        .iter()
        .map(|&(s, a, _)| {
            let row = &qbar.values[s];
            let base: f64 = pi_old[s].iter().zip(row).map(|(p, q)| p * q).sum();
            let m = mu.mu(agent, s)[a].max(PROB_FLOOR);
            let z = (row[a] - base - t.beta * m.ln()) / t.total();
            z.clamp(-clip, clip).exp()
        })
        .collect()
}

/// `-(1/n) sum_k w_k ln pi_theta(a_k | s_k)`.
pub fn extraction_loss(params: &SoftmaxPolicyParams, agent: usize, triples: &[(usize, usize, f64)], weights: &[f64], n: f64) -> f64 {
    triples
        .iter()
        .zip(weights)
        .map(|(&(s, a, c), w)| -c * w * params.probs(agent, s)[a].ln())
        .sum::<f64>()
        / n
}

/// Gradient of [`extraction_loss`] with respect to the agent's logits; masked
/// entries get zero.
pub fn extraction_grad(params: &SoftmaxPolicyParams, agent: usize, triples: &[(usize, usize, f64)], weights: &[f64], n: f64) -> Vec<Vec<f64>> {
    let mut g: Vec<Vec<f64>> = params.logits[agent].iter().map(|r| vec![0.0; r.len()]).collect();
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (&(s, a, c), w) in triples.iter().zip(weights) {
        let p = cache.entry(s).or_insert_with(|| params.probs(agent, s));
        let scale = c * w / n;
        for (b, pb) in p.iter().enumerate() {
            if params.mask[agent][s][b] {
                g[s][b] += scale * (pb - if b == a { 1.0 } else { 0.0 });
            }
        }
    }
    g
}

/// `target <- (1 - tau) target + tau online`.
pub fn soft_target_update(target: &mut LocalQTable, online: &LocalQTable, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must lie in (0, 1], got {tau}")));
    }
    if target.values.len() != online.values.len()
        || target.values.iter().zip(&online.values).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::Config("target and online tables differ in shape".into()));
    }
    for (tr, or) in target.values.iter_mut().zip(&online.values) {
        for (t, o) in tr.iter_mut().zip(or) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoAlphaState {
    pub alpha: f64,
    pub target_kl: f64,
    pub step_size: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for AutoAlphaState {
    fn default() -> Self {
        AutoAlphaState {
            alpha: 0.5,
            target_kl: 0.18,
            step_size: 0.01,
            alpha_min: 1e-3,
            alpha_max: 10.0,
        }
    }
}

/// Gradient step on `sum_i alpha (KL_i - target)`: alpha grows while the
/// summed KL exceeds `N * target_kl`.
pub fn auto_alpha_step(state: AutoAlphaState, kl_per_agent: &[f64]) -> Result<AutoAlphaState> {
    if kl_per_agent.iter().any(|k| !k.is_finite()) {
        return Err(Error::Config("KL must be finite".into()));
    }
    if !(state.alpha_min > 0.0 && state.alpha_min <= state.alpha_max) {
        return Err(Error::Config("auto-alpha bounds must satisfy 0 < min <= max".into()));
    }
    let excess: f64 = kl_per_agent.iter().sum::<f64>() - kl_per_agent.len() as f64 * state.target_kl;
    Ok(AutoAlphaState {
        alpha: (state.alpha + state.step_size * excess).clamp(state.alpha_min, state.alpha_max),
        ..state
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    #[default]
    Adam,
    /// Gradient descent with each state's gradient divided by that state's
    /// share of the batch.
    StateNormalized,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "state-normalized" => Ok(OptimizerKind::StateNormalized),
            _ => Err(Error::Config(format!("unknown optimizer '{s}' (sgd|adam|state-normalized)"))),
        }
    }
}

/// Adam over a table of parameters; with `kind = Sgd` it takes plain
/// gradient steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(shape: &[Vec<f64>], lr: f64) -> Self {
        Self::with_kind(OptimizerKind::Adam, shape, lr)
    }

    pub fn with_kind(kind: OptimizerKind, shape: &[Vec<f64>], lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = shape.iter().map(|r| vec![0.0; r.len()]).collect();
        Adam {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Vec<f64>], grad: &[Vec<f64>]) {
        if self.kind != OptimizerKind::Adam {
            for (row, g) in params.iter_mut().zip(grad) {
                for (p, g) in row.iter_mut().zip(g) {
                    *p -= self.lr * g;
                }
            }
            return;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (s, row) in params.iter_mut().enumerate() {
            for (a, p) in row.iter_mut().enumerate() {
                let g = grad[s][a];
                if g == 0.0 && self.m[s][a] == 0.0 {
                    continue;
                }
                self.m[s][a] = self.beta1 * self.m[s][a] + (1.0 - self.beta1) * g;
                self.v[s][a] = self.beta2 * self.v[s][a] + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (self.m[s][a] / c1) / ((self.v[s][a] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PracticalConfig {
    pub schedule: TemperatureSchedule,
    /// Replaces the fixed alpha when set.
    pub auto_alpha: Option<AutoAlphaState>,
    pub ablation: Ablation,
    pub order: OrderMode,
    pub seed: u64,
    pub gamma: f64,
    pub cql_weight: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Gradient steps per agent per outer iteration, for each of Q and policy.
    pub inner_steps: usize,
    pub max_iters: usize,
    /// Records drawn per resample; the dataset size when `None`.
    pub resample_size: Option<usize>,
    pub clip: f64,
    /// Stop once no policy row moves more than this (0 disables).
    pub converge_tol: f64,
    pub initial: Option<FactoredPolicy>,
}

impl Default for PracticalConfig {
    fn default() -> Self {
        PracticalConfig {
            schedule: TemperatureSchedule::default(),
            auto_alpha: None,
            ablation: Ablation::None,
            order: OrderMode::Random,
            seed: 0,
            gamma: 0.99,
            cql_weight: 0.1,
            tau: 0.01,
            learning_rate: 0.05,
            optimizer: OptimizerKind::Adam,
            inner_steps: 50,
            max_iters: 500,
            resample_size: None,
            clip: 20.0,
            converge_tol: 0.0,
            initial: None,
        }
    }
}

impl PracticalConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.cql_weight >= 0.0) {
            return Err(Error::Config("cql_weight must be nonnegative".into()));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config("clip must be positive".into()));
        }
        if self.resample_size == Some(0) {
            return Err(Error::Config("resample_size must be positive".into()));
        }
        if let Some(a) = &self.auto_alpha {
            if !(a.alpha_min > 0.0 && a.alpha_min <= a.alpha && a.alpha <= a.alpha_max) {
                return Err(Error::Config("auto-alpha start must lie within its bounds".into()));
            }
        }
        Ok(())
    }
}

/// Final state of a practical run.
#[derive(Clone, Debug)]
pub struct PracticalOutput {
    pub policy: FactoredPolicy,
    pub trace: SolverTrace,
    pub local_q: Vec<LocalQTable>,
    pub alpha: f64,
}

fn value_estimate(policy: &FactoredPolicy, qbar: &[LocalQTable], mu: &BehaviorModel, t: Temps) -> Vec<f64> {
    let n = policy.n_agents() as f64;
    (0..policy.n_states())
        .map(|s| {
            let ev: f64 = qbar
                .iter()
                .enumerate()
                .map(|(i, q)| policy.row(i, s).iter().zip(&q.values[s]).map(|(p, q)| p * q).sum::<f64>())
                .sum::<f64>()
                / n;
            ev - regularizer(policy, mu, s, t)
        })
        .collect()
}

/// The practical solver loop.
fn normalize_rows(kind: OptimizerKind, grad: &mut [Vec<f64>], batch: &QBatch) {
    if kind != OptimizerKind::StateNormalized {
        return;
    }
    for &(s, c) in &batch.state_counts {
        let scale = batch.size / c;
        grad[s].iter_mut().for_each(|g| *g *= scale);
    }
}

pub fn practical_solve(dataset: &OfflineDataset, mu: &BehaviorModel, cfg: &PracticalConfig) -> Result<PracticalOutput> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = mu.n_agents();
    let ns = mu.n_states();
    let space = mu.space();
    for (k, r) in dataset.records.iter().enumerate() {
        let ok = r.state < ns && r.next_state < ns && space.encode(&r.joint_action.per_agent).ok() == Some(r.joint_action.flat_index);
        if !ok {
            return Err(Error::Parse {
                line: k + 2,
                msg: "record does not match the behavior model".into(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = cfg.initial.clone().unwrap_or_else(|| mu.factored.clone());
    let mut params = SoftmaxPolicyParams::from_policy(&init, mu);
    let mut q: Vec<LocalQTable> = (0..n).map(|i| LocalQTable::zeros(i, ns, space.sizes()[i])).collect();
    let mut qbar = q.clone();
    let mut q_opt: Vec<Adam> = q.iter().map(|t| Adam::with_kind(cfg.optimizer, &t.values, cfg.learning_rate)).collect();
    let mut pi_opt: Vec<Adam> = params.logits.iter().map(|t| Adam::with_kind(cfg.optimizer, t, cfg.learning_rate)).collect();
    let mut auto = cfg.auto_alpha;
    let d = mu.state_distribution();
    let size = cfg.resample_size.unwrap_or(dataset.len());
    let mut trace = SolverTrace::default();
    for k in 0..cfg.max_iters {
        let mut t = cfg.schedule.at(k);
        if let Some(a) = &auto {
            t.alpha = a.alpha;
        }
        if cfg.ablation == Ablation::NoEntropy {
            t.beta = 0.0;
        }
        let old = params.policy();
        let values_before = value_estimate(&old, &qbar, mu, t);
        let order = draw_order(cfg.order, n, &mut rng, || {
            (0..n)
                .map(|i| expected_max_advantage(&qbar[i].values, &old, mu, i, &d))
                .collect()
        });
        let mut team = old.clone();
        let (mut rho_sum, mut rho_w) = (0.0, 0.0);
        for &agent in &order {
            let basis = if cfg.ablation == Ablation::Simultaneous { &old } else { &team };
            let rho = dataset
                .records
                .iter()
                .map(|r| compute_rho(basis, mu, r, agent, n))
                .collect::<Result<Vec<f64>>>()?;
            for (r, p) in dataset.records.iter().zip(&rho) {
                rho_sum += r.weight * p;
                rho_w += r.weight;
            }
            let res = resample(dataset, &rho, size, &mut rng)?;
            let batch = QBatch::new(dataset, &res, agent);
            let pi_old = old.agent_table(agent);
            for _ in 0..cfg.inner_steps {
                let y = td_targets(&batch, &qbar[agent], pi_old, mu, t, cfg.gamma);
                let mut g = q_loss_grad(&q[agent], &batch, &y, mu, cfg.cql_weight);
                normalize_rows(cfg.optimizer, &mut g, &batch);
                q_opt[agent].step(&mut q[agent].values, &g);
                soft_target_update(&mut qbar[agent], &q[agent], cfg.tau)?;
            }
            let triples = batch.state_actions();
            let w = extraction_weights(&triples, &qbar[agent], pi_old, mu, agent, t, cfg.clip);
            for _ in 0..cfg.inner_steps {
                let mut g = extraction_grad(&params, agent, &triples, &w, batch.size);
                normalize_rows(cfg.optimizer, &mut g, &batch);
                pi_opt[agent].step(&mut params.logits[agent], &g);
            }
            let finite = q[agent].values.iter().flatten().chain(params.logits[agent].iter().flatten()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonConvergence {
                    what: "practical solver (non-finite parameters)",
                    iters: k,
                    residual: f64::NAN,
                });
            }
            team.set_agent_table(agent, params.agent_table(agent));
        }
        let policy = params.policy();
        let (kl, entropy) = policy_stats(&policy, mu);
        if let Some(a) = auto {
            let avg: Vec<f64> = kl
                .iter()
                .map(|row| row.iter().zip(&d).map(|(k, d)| k * d).sum())
                .collect();
            auto = Some(auto_alpha_step(a, &avg)?);
        }
        let change = policy.max_row_tv(&old);
        trace.iterations.push(IterationRecord {
            iter: k,
            order,
            alpha: t.alpha,
            beta: t.beta,
            values_before,
            values: value_estimate(&policy, &qbar, mu, t),
            kl,
            entropy,
            qre_residual: None,
            policy_change: change,
            mean_rho: Some(if rho_w > 0.0 { rho_sum / rho_w } else { 1.0 }),
        });
        if cfg.converge_tol > 0.0 && change < cfg.converge_tol {
            trace.converged = true;
            break;
        }
    }
    let alpha = auto.map_or(cfg.schedule.alpha, |a| a.alpha);
    Ok(PracticalOutput {
        policy: params.policy(),
        trace,
        local_q: qbar,
        alpha,
    })
}
