//! Exact tabular solver: regularized policy evaluation, marginal local Q,
//! closed-form in-sample best responses and the sequential outer loop.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::qre_residual;
use crate::data::BehaviorModel;
use crate::error::{Error, Result};
use crate::game::{floored_ln, in_support, FactoredPolicy, GlobalQTable, LocalQTable, TabularGame};

/// KL and entropy temperatures in effect for one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Temps {
    pub alpha: f64,
    pub beta: f64,
}

impl Temps {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Temps { alpha, beta }
    }

    pub fn total(self) -> f64 {
        self.alpha + self.beta
    }
}

/// `beta_k = beta0 * beta_decay^k`, alpha fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub alpha: f64,
    pub beta0: f64,
    pub beta_decay: f64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            alpha: 0.5,
            beta0: 5.0,
            beta_decay: 0.995,
        }
    }
}

impl TemperatureSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta0 >= 0.0) || !self.beta0.is_finite() {
            return Err(Error::Config(format!("beta0 must be nonnegative, got {}", self.beta0)));
        }
        if !(self.beta_decay > 0.0 && self.beta_decay <= 1.0) {
            return Err(Error::Config(format!("beta_decay must lie in (0, 1], got {}", self.beta_decay)));
        }
        Ok(())
    }

    pub fn beta_at(&self, k: usize) -> f64 {
        self.beta0 * self.beta_decay.powi(k.min(i32::MAX as usize) as i32)
    }

    pub fn at(&self, k: usize) -> Temps {
        Temps::new(self.alpha, self.beta_at(k))
    }
}

/// Fails if some policy row puts mass outside its behavior row's support.
pub fn check_support(policy: &FactoredPolicy, mu: &BehaviorModel) -> Result<()> {
    for i in 0..policy.n_agents() {
        for s in 0..policy.n_states() {
            let (p, m) = (policy.row(i, s), mu.mu(i, s));
            if let Some(a) = (0..p.len()).find(|&a| in_support(p[a]) && !in_support(m[a])) {
                return Err(Error::SupportViolation { agent: i, state: s, action: a });
            }
        }
    }
    Ok(())
}

/// `KL(pi^i || mu^i)` at one state, ignoring entries below the floor.
pub fn kl_row(p: &[f64], mu: &[f64]) -> f64 {
    p.iter()
        .zip(mu)
        .filter(|(pi, _)| in_support(**pi))
        .map(|(pi, m)| pi * (floored_ln(*pi) - floored_ln(*m)))
        .sum()
}

pub fn entropy_row(p: &[f64]) -> f64 {
    -p.iter().filter(|pi| in_support(**pi)).map(|pi| pi * pi.ln()).sum::<f64>()
}

/// Regularizer of the agents in `agents` at `s`:
/// `sum_i [alpha KL(pi^i||mu^i) - beta H(pi^i)]`.
pub fn regularizer_of(policy: &FactoredPolicy, mu: &BehaviorModel, s: usize, t: Temps, agents: impl Iterator<Item = usize>) -> f64 {
    agents
        .map(|i| {
            let p = policy.row(i, s);
            t.alpha * kl_row(p, mu.mu(i, s)) - t.beta * entropy_row(p)
        })
        .sum()
}

pub fn regularizer(policy: &FactoredPolicy, mu: &BehaviorModel, s: usize, t: Temps) -> f64 {
    regularizer_of(policy, mu, s, t, 0..policy.n_agents())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub q: GlobalQTable,
    pub v: Vec<f64>,
}

fn state_value(game: &TabularGame, policy: &FactoredPolicy, mu: &BehaviorModel, t: Temps, q: &[f64], s: usize) -> f64 {
    if game.is_terminal(s) {
        return 0.0;
    }
    let joint = policy.joint_row(game.space(), s);
    joint.iter().zip(q).map(|(p, q)| p * q).sum::<f64>() - regularizer(policy, mu, s, t)
}

fn backup(game: &TabularGame, v: &[f64]) -> GlobalQTable {
    let values = (0..game.n_states())
        .map(|s| {
            (0..game.n_joint())
                .map(|a| {
                    game.reward(s, a)
                        + game.gamma() * game.transitions(s, a).iter().map(|&(s2, p)| p * v[s2]).sum::<f64>()
                })
                .collect()
        })
        .collect();
    GlobalQTable { values }
}

/// One application of the regularized evaluation operator `T_pi` to `q`.
pub fn apply_evaluation_operator(game: &TabularGame, policy: &FactoredPolicy, mu: &BehaviorModel, t: Temps, q: &GlobalQTable) -> GlobalQTable {
    let v: Vec<f64> = (0..game.n_states())
        .map(|s| state_value(game, policy, mu, t, &q.values[s], s))
        .collect();
    backup(game, &v)
}

fn sup_diff(a: &GlobalQTable, b: &GlobalQTable) -> f64 {
    a.values
        .iter()
        .flatten()
        .zip(b.values.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Exact regularized evaluation of `policy`: a direct linear solve for `V`,
/// confirmed (or refined by fixed-point iteration) to sup-norm `tol`.
pub fn policy_evaluation(
    game: &TabularGame,
    policy: &FactoredPolicy,
    mu: &BehaviorModel,
    t: Temps,
    tol: f64,
    max_iters: usize,
) -> Result<Evaluation> {
    policy.check_shape(game)?;
    check_support(policy, mu)?;
    let ns = game.n_states();
    let space = game.space();
    let mut m = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    for s in (0..ns).filter(|&s| !game.is_terminal(s)) {
        let joint = policy.joint_row(space, s);
        let mut r = 0.0;
        for (a, &p) in joint.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            r += p * game.reward(s, a);
            for &(s2, pt) in game.transitions(s, a) {
                m[(s, s2)] -= game.gamma() * p * pt;
            }
        }
        rhs[s] = r - regularizer(policy, mu, s, t);
    }
    let v: Vec<f64> = match m.lu().solve(&rhs) {
        Some(x) => x.iter().copied().collect(),
        None => vec![0.0; ns],
    };
    let mut q = backup(game, &v);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters.max(1) {
        let next = apply_evaluation_operator(game, policy, mu, t, &q);
        residual = sup_diff(&next, &q);
        q = next;
        if residual <= tol {
            break;
        }
    }
    if !(residual <= tol) {
        return Err(Error::NonConvergence {
            what: "policy evaluation",
            iters: max_iters,
            residual,
        });
    }
    let v = (0..ns)
        .map(|s| state_value(game, policy, mu, t, &q.values[s], s))
        .collect();
    Ok(Evaluation { q, v })
}

/// Plain fixed-point iteration of `T_pi` from `q0`, returning every iterate's
/// sup-norm step size.
pub fn iterate_evaluation(
    game: &TabularGame,
    policy: &FactoredPolicy,
    mu: &BehaviorModel,
    t: Temps,
    q0: GlobalQTable,
    tol: f64,
    max_iters: usize,
) -> Result<GlobalQTable> {
    let mut q = q0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = apply_evaluation_operator(game, policy, mu, t, &q);
        residual = sup_diff(&next, &q);
        q = next;
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence {
        what: "iterative policy evaluation",
        iters: max_iters,
        residual,
    })
}

/// Local Q of `agent`: expectation of `q` with agents in `new_agents` drawn from
/// `new_policy` and every other teammate from `old_policy`.
pub fn marginal_q(
    game: &TabularGame,
    q: &GlobalQTable,
    new_policy: &FactoredPolicy,
    new_agents: &[usize],
    old_policy: &FactoredPolicy,
    agent: usize,
) -> Result<LocalQTable> {
    let n = game.n_agents();
    if agent >= n {
        return Err(Error::IndexOutOfRange { what: "agent", index: agent, limit: n });
    }
    let mut seen = vec![false; n];
    for &j in new_agents {
        if j >= n {
            return Err(Error::IndexOutOfRange { what: "agent", index: j, limit: n });
        }
        if j == agent || seen[j] {
            return Err(Error::Config(format!("agent {j} appears twice in the update partition")));
        }
        seen[j] = true;
    }
    let space = game.space();
    let na = game.n_actions(agent);
    let mut local = LocalQTable::zeros(agent, game.n_states(), na);
    for s in 0..game.n_states() {
        let row = &mut local.values[s];
        for a in 0..space.len() {
            let mut w = 1.0;
            for j in (0..n).filter(|&j| j != agent) {
                let p = if seen[j] { new_policy } else { old_policy };
                w *= p.row(j, s)[space.agent_action(a, j)];
                if w == 0.0 {
                    break;
                }
            }
            if w != 0.0 {
                row[space.agent_action(a, agent)] += w * q.values[s][a];
            }
        }
    }
    Ok(local)
}

/// `pi(a) ∝ mu(a) exp((Q(a) - beta ln mu(a)) / (alpha + beta))` over the
/// support of `mu`, evaluated in log space.
pub fn closed_form_update(q: &[f64], mu: &[f64], t: Temps) -> Result<Vec<f64>> {
    let temp = t.total();
    if !(temp > 0.0) {
        return Err(Error::Config(format!("alpha + beta must be positive, got {temp}")));
    }
    if q.len() != mu.len() {
        return Err(Error::Config("local Q and behavior row lengths differ".into()));
    }
    let logits: Vec<Option<f64>> = q
        .iter()
        .zip(mu)
        .map(|(&qa, &m)| in_support(m).then(|| m.ln() + (qa - t.beta * m.ln()) / temp))
        .collect();
    let max = logits.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Config("behavior row has empty support".into()));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .map(|l| l.map_or(0.0, |l| (l - max).exp()))
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderMode {
    #[default]
    Random,
    Fixed,
    SemiGreedy,
}

impl FromStr for OrderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(OrderMode::Random),
            "fixed" => Ok(OrderMode::Fixed),
            "semi-greedy" | "semi_greedy" => Ok(OrderMode::SemiGreedy),
            _ => Err(Error::Config(format!("unknown order mode '{s}' (random|fixed|semi-greedy)"))),
        }
    }
}

impl fmt::Display for OrderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderMode::Random => "random",
            OrderMode::Fixed => "fixed",
            OrderMode::SemiGreedy => "semi-greedy",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// beta forced to 0.
    NoEntropy,
    /// Every agent responds to the old joint policy; updates applied together.
    Simultaneous,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no-entropy" | "no_entropy" => Ok(Ablation::NoEntropy),
            "simultaneous" => Ok(Ablation::Simultaneous),
            _ => Err(Error::Config(format!("unknown ablation '{s}' (none|no-entropy|simultaneous)"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::None => "none",
            Ablation::NoEntropy => "no-entropy",
            Ablation::Simultaneous => "simultaneous",
        })
    }
}

/// Order in which agents are updated this iteration.
pub(crate) fn draw_order(mode: OrderMode, n: usize, rng: &mut ChaCha8Rng, scores: impl FnOnce() -> Vec<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        OrderMode::Fixed => {}
        OrderMode::Random => order.shuffle(rng),
        OrderMode::SemiGreedy => {
            let s = scores();
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        }
    }
    order
}

/// `E_{s~D}[max_{a in supp mu} (Q^i(s,a) - E_{pi^i} Q^i(s,.))]`.
pub(crate) fn expected_max_advantage(local: &[Vec<f64>], policy: &FactoredPolicy, mu: &BehaviorModel, agent: usize, d: &[f64]) -> f64 {
    let mut total = 0.0;
    for (s, &ds) in d.iter().enumerate() {
        if ds == 0.0 {
            continue;
        }
        let p = policy.row(agent, s);
        let base: f64 = p.iter().zip(&local[s]).map(|(p, q)| p * q).sum();
        let best = local[s]
            .iter()
            .zip(mu.mu(agent, s))
            .filter(|(_, m)| in_support(**m))
            .map(|(q, _)| q - base)
            .fold(f64::NEG_INFINITY, f64::max);
        total += ds * best;
    }
    total
}

#[derive(Clone, Debug)]
pub struct ExactConfig {
    pub schedule: TemperatureSchedule,
    /// Outer iterations K.
    pub max_iters: usize,
    pub order: OrderMode,
    pub seed: u64,
    pub ablation: Ablation,
    /// Stop once no policy row moves by more than this in total variation.
    pub converge_tol: f64,
    pub eval_tol: f64,
    pub eval_max_iters: usize,
    /// Re-evaluate Q after each agent's update instead of once per iteration.
    pub reevaluate_each_agent: bool,
    /// Record the QRE residual every this many iterations (0 = never; the
    /// final iteration is always recorded when nonzero).
    pub qre_every: usize,
    /// Starting policy; the behavior policy when `None`.
    pub initial: Option<FactoredPolicy>,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig {
            schedule: TemperatureSchedule::default(),
            max_iters: 500,
            order: OrderMode::Random,
            seed: 0,
            ablation: Ablation::None,
            converge_tol: 1e-8,
            eval_tol: 1e-10,
            eval_max_iters: 100_000,
            reevaluate_each_agent: false,
            qre_every: 0,
            initial: None,
        }
    }
}

impl ExactConfig {
    pub fn temps_at(&self, k: usize) -> Temps {
        let mut t = self.schedule.at(k);
        if self.ablation == Ablation::NoEntropy {
            t.beta = 0.0;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub order: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    /// Regularized values of the policy entering the iteration.
    pub values_before: Vec<f64>,
    /// Regularized values after the update, at the same temperatures.
    pub values: Vec<f64>,
    /// `kl[agent][state]`
    pub kl: Vec<Vec<f64>>,
    /// Joint entropy per state.
    pub entropy: Vec<f64>,
    /// Max over agents of the QRE gap per state, when computed.
    pub qre_residual: Option<Vec<f64>>,
    pub policy_change: f64,
    pub mean_rho: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    fn practical(&self) -> bool {
        self.iterations.iter().any(|r| r.mean_rho.is_some())
    }

    /// One row per (iteration, state). Practical traces carry three extra columns.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let practical = self.practical();
        write!(out, "iter,state,V,kl,entropy,qre_residual")?;
        if practical {
            write!(out, ",alpha,beta,mean_rho")?;
        }
        writeln!(out)?;
        for rec in &self.iterations {
            for s in 0..rec.values.len() {
                let kl: f64 = rec.kl.iter().map(|k| k[s]).sum();
                write!(out, "{},{},{},{},{},", rec.iter, s, rec.values[s], kl, rec.entropy[s])?;
                if let Some(q) = &rec.qre_residual {
                    write!(out, "{}", q[s])?;
                }
                if practical {
                    write!(out, ",{},{},{}", rec.alpha, rec.beta, rec.mean_rho.unwrap_or(f64::NAN))?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|e| Error::io(&path, e))
    }
}

/// Per-state KL of every agent and joint entropy.
pub(crate) fn policy_stats(policy: &FactoredPolicy, mu: &BehaviorModel) -> (Vec<Vec<f64>>, Vec<f64>) {
    let ns = policy.n_states();
    let kl = (0..policy.n_agents())
        .map(|i| (0..ns).map(|s| kl_row(policy.row(i, s), mu.mu(i, s))).collect())
        .collect();
    let entropy = (0..ns)
        .map(|s| (0..policy.n_agents()).map(|i| entropy_row(policy.row(i, s))).sum())
        .collect();
    (kl, entropy)
}

/// One improvement step from `old` given its evaluation `q`.
#[allow(clippy::too_many_arguments)]
pub fn improvement_step(
    game: &TabularGame,
    q: &GlobalQTable,
    old: &FactoredPolicy,
    mu: &BehaviorModel,
    t: Temps,
    order: &[usize],
    simultaneous: bool,
    reevaluate: Option<(f64, usize)>,
) -> Result<FactoredPolicy> {
    let mut new = old.clone();
    let mut q_cur = q.clone();
    for (n, &agent) in order.iter().enumerate() {
        let local = if simultaneous {
            marginal_q(game, q, old, &[], old, agent)?
        } else {
            if let (Some((tol, iters)), true) = (reevaluate, n > 0) {
                q_cur = policy_evaluation(game, &new, mu, t, tol, iters)?.q;
            }
            marginal_q(game, &q_cur, &new, &order[..n], old, agent)?
        };
        let table = (0..game.n_states())
            .map(|s| closed_form_update(&local.values[s], mu.mu(agent, s), t))
            .collect::<Result<Vec<_>>>()?;
        new.set_agent_table(agent, table);
    }
    Ok(new)
}

/// The sequential in-sample policy iteration loop.
pub fn inspo_iterate(game: &TabularGame, mu: &BehaviorModel, cfg: &ExactConfig) -> Result<(FactoredPolicy, SolverTrace)> {
    cfg.schedule.validate()?;
    if mu.n_states() != game.n_states() || mu.space() != game.space() {
        return Err(Error::Config("behavior model does not match the game".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = cfg.initial.clone().unwrap_or_else(|| mu.factored.clone());
    policy.check_shape(game)?;
    let d = mu.state_distribution();
    let n = game.n_agents();
    let reeval = cfg.reevaluate_each_agent.then_some((cfg.eval_tol, cfg.eval_max_iters));
    let mut trace = SolverTrace::default();
    let mut cached: Option<(Temps, Evaluation)> = None;
    for k in 0..cfg.max_iters {
        let t = cfg.temps_at(k);
        let eval = match cached.take() {
            Some((ct, e)) if ct == t => e,
            _ => policy_evaluation(game, &policy, mu, t, cfg.eval_tol, cfg.eval_max_iters)?,
        };
        let order = draw_order(cfg.order, n, &mut rng, || {
            (0..n)
                .map(|i| {
                    let local = marginal_q(game, &eval.q, &policy, &[], &policy, i).expect("valid agent");
                    expected_max_advantage(&local.values, &policy, mu, i, &d)
                })
                .collect()
        });
        let simultaneous = cfg.ablation == Ablation::Simultaneous;
        let new = improvement_step(game, &eval.q, &policy, mu, t, &order, simultaneous, reeval)?;
        let after = policy_evaluation(game, &new, mu, t, cfg.eval_tol, cfg.eval_max_iters)?;
        let change = new.max_row_tv(&policy);
        let done = change < cfg.converge_tol;
        let last = done || k + 1 == cfg.max_iters;
        let qre = if cfg.qre_every > 0 && (k % cfg.qre_every == 0 || last) {
            let report = qre_residual(game, &new, mu, t, cfg.eval_tol, cfg.eval_max_iters)?;
            Some(report.per_state_max())
        } else {
            None
        };
        let (kl, entropy) = policy_stats(&new, mu);
        trace.iterations.push(IterationRecord {
            iter: k,
            order,
            alpha: t.alpha,
            beta: t.beta,
            values_before: eval.v,
            values: after.v.clone(),
            kl,
            entropy,
            qre_residual: qre,
            policy_change: change,
            mean_rho: None,
        });
        policy = new;
        cached = Some((t, after));
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok((policy, trace))
}

/// Max over `(s, a)` of `|A(s,a) - sum_n A^{i_n}(s, a^{i_{1:n-1}}, a^{i_n})|`,
/// with every prefix expectation taken by brute force.
pub fn advantage_decomposition_check(game: &TabularGame, q: &GlobalQTable, policy: &FactoredPolicy, order: &[usize]) -> Result<f64> {
    let n = game.n_agents();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::Config(format!("{order:?} is not a permutation of the agents")));
    }
    let space = game.space();
    let mut worst: f64 = 0.0;
    for s in 0..game.n_states() {
        // Q^{i_{1:m}}(s, a^{i_{1:m}}): average of Q over the agents outside the prefix
        let prefix_q = |a: usize, m: usize| -> f64 {
            let fixed = &order[..m];
            (0..space.len())
                .filter(|&b| fixed.iter().all(|&j| space.agent_action(b, j) == space.agent_action(a, j)))
                .map(|b| {
                    let w: f64 = (0..n)
                        .filter(|j| !fixed.contains(j))
                        .map(|j| policy.row(j, s)[space.agent_action(b, j)])
                        .product();
                    w * q.values[s][b]
                })
                .sum()
        };
        let base = prefix_q(0, 0);
        for a in 0..space.len() {
            let total = q.values[s][a] - base;
            let sum: f64 = (1..=n).map(|m| prefix_q(a, m) - prefix_q(a, m - 1)).sum();
            worst = worst.max((total - sum).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{estimate_behavior, make_matrix_dataset, Preset};
    use crate::envs::build_xor;
    use crate::game::GameSpec;

    fn xor_mu(p: Preset) -> (TabularGame, BehaviorModel) {
        let g = build_xor();
        let d = make_matrix_dataset(&g, &p.matrix_weights().unwrap()).unwrap();
        let mu = estimate_behavior(&g, &d).unwrap();
        (g, mu)
    }

    #[test]
    fn uniform_xor_value_is_zero() {
        let (g, mu) = xor_mu(Preset::XorC);
        let e = policy_evaluation(&g, &FactoredPolicy::uniform(&g), &mu, Temps::new(0.0, 0.0), 1e-12, 100).unwrap();
        assert!(e.v[0].abs() < 1e-12);
        assert_eq!(e.v[1], 0.0);
    }

    #[test]
    fn behavior_policy_has_no_kl_cost() {
        let (g, mu) = xor_mu(Preset::XorB);
        let e = policy_evaluation(&g, &mu.factored, &mu, Temps::new(0.7, 0.0), 1e-12, 100).unwrap();
        let joint = mu.factored.joint_row(g.space(), 0);
        let expect: f64 = joint.iter().zip(&e.q.values[0]).map(|(p, q)| p * q).sum();
        assert!((e.v[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn support_violation_reported() {
        let (g, mu) = xor_mu(Preset::XorA);
        let mut bad = mu.factored.clone();
        bad.set_row(0, 0, vec![0.5, 0.5]);
        assert!(policy_evaluation(&g, &bad, &mu, Temps::new(1.0, 0.0), 1e-12, 10).is_ok());
        let d = make_matrix_dataset(&g, &[(vec![0, 1], 1.0)]).unwrap();
        let mu = estimate_behavior(&g, &d).unwrap();
        let err = policy_evaluation(&g, &FactoredPolicy::uniform(&g), &mu, Temps::new(1.0, 0.0), 1e-12, 10);
        assert!(matches!(err, Err(Error::SupportViolation { agent: 0, state: 0, action: 1 })));
    }

    #[test]
    fn marginal_q_xor_half_teammate() {
        let (g, mu) = xor_mu(Preset::XorC);
        let e = policy_evaluation(&g, &mu.factored, &mu, Temps::new(1.0, 0.0), 1e-12, 10).unwrap();
        let local = marginal_q(&g, &e.q, &mu.factored, &[], &mu.factored, 0).unwrap();
        assert!((local.values[0][0] - 0.5).abs() < 1e-12);
        assert!((local.values[0][1] + 0.5).abs() < 1e-12);
        assert!(marginal_q(&g, &e.q, &mu.factored, &[0], &mu.factored, 0).is_err());
        assert!(marginal_q(&g, &e.q, &mu.factored, &[1, 1], &mu.factored, 0).is_err());
    }

    #[test]
    fn marginal_q_deterministic_teammate_is_slice() {
        let (g, _) = xor_mu(Preset::XorC);
        let q = GlobalQTable { values: vec![vec![0.0, 1.0, 1.0, -2.0], vec![0.0; 4]] };
        let det = FactoredPolicy::deterministic(&g, &[vec![0, 0], vec![1, 0]]).unwrap();
        let local = marginal_q(&g, &q, &det, &[], &det, 0).unwrap();
        assert_eq!(local.values[0], vec![1.0, -2.0]);
    }

    #[test]
    fn closed_form_examples() {
        let p = closed_form_update(&[0.0, 1.0], &[0.5, 0.5], Temps::new(1.0, 0.0)).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-12);
        let p = closed_form_update(&[3.0, 1.0, 2.0], &[0.0, 0.3, 0.7], Temps::new(0.5, 0.2)).unwrap();
        assert_eq!(p[0], 0.0);
        assert!(closed_form_update(&[1.0], &[0.0], Temps::new(1.0, 0.0)).is_err());
        assert!(closed_form_update(&[1.0], &[1.0], Temps::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn closed_form_identity() {
        let q = [0.3, -1.2, 2.5, 0.0];
        let mu = [0.1, 0.2, 0.3, 0.4];
        for beta in [0.0, 0.1, 1.0, 7.0] {
            let t = Temps::new(0.6, beta);
            let p = closed_form_update(&q, &mu, t).unwrap();
            let raw: Vec<f64> = q
                .iter()
                .zip(&mu)
                .map(|(q, m): (&f64, &f64)| m.powf(t.alpha / t.total()) * (q / t.total()).exp())
                .collect();
            let z: f64 = raw.iter().sum();
            for (a, b) in p.iter().zip(raw.iter().map(|r| r / z)) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn xor_b_sequential_reaches_optimum() {
        let (g, mu) = xor_mu(Preset::XorB);
        let cfg = ExactConfig {
            schedule: TemperatureSchedule { alpha: 0.5, beta0: 1.0, beta_decay: 0.98 },
            ..ExactConfig::default()
        };
        let (pi, trace) = inspo_iterate(&g, &mu, &cfg).unwrap();
        let greedy = pi.greedy();
        let ga = (greedy[0][0], greedy[1][0]);
        assert!(ga == (0, 1) || ga == (1, 0), "{ga:?}");
        assert!(!trace.is_empty());
    }

    #[test]
    fn trace_csv_shape() {
        let (g, mu) = xor_mu(Preset::XorB);
        let cfg = ExactConfig { max_iters: 3, qre_every: 2, converge_tol: 0.0, ..ExactConfig::default() };
        let (_, trace) = inspo_iterate(&g, &mu, &cfg).unwrap();
        assert_eq!(trace.len(), 3);
        let csv = trace.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "iter,state,V,kl,entropy,qre_residual");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[3].ends_with(',') || lines[3].split(',').count() == 6);
    }

    #[test]
    fn single_agent_decomposition_is_plain_advantage() {
        let g = TabularGame::new(GameSpec {
            actions: vec![3],
            n_states: 1,
            reward: vec![vec![1.0, 2.0, 0.5]],
            transition: vec![vec![vec![(0, 1.0)]; 3]],
            gamma: 0.5,
            initial_dist: vec![1.0],
            terminal: vec![],
            horizon: None,
            labels: Default::default(),
        })
        .unwrap();
        let pi = FactoredPolicy::new(vec![vec![vec![0.2, 0.5, 0.3]]]).unwrap();
        let q = GlobalQTable { values: vec![vec![1.0, 4.0, -2.0]] };
        assert!(advantage_decomposition_check(&g, &q, &pi, &[0]).unwrap() < 1e-12);
        assert!(advantage_decomposition_check(&g, &q, &pi, &[0, 0]).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("semi-greedy".parse::<OrderMode>().unwrap(), OrderMode::SemiGreedy);
        assert_eq!("no-entropy".parse::<Ablation>().unwrap(), Ablation::NoEntropy);
        assert!("sideways".parse::<OrderMode>().is_err());
    }
}
