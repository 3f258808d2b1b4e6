//! Returns, equilibrium and monotonicity diagnostics, and the value
//! decomposition (IGM) failure demonstrator.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{run_episode, BehaviorModel, OfflineDataset};
use crate::error::{Error, Result};
use crate::exact::{policy_evaluation, regularizer_of, SolverTrace, Temps};
use crate::game::{in_support, FactoredPolicy, GlobalQTable, TabularGame};

fn solve_values(game: &TabularGame, rhs_of: impl Fn(usize) -> f64, policy: &FactoredPolicy) -> Vec<f64> {
    let ns = game.n_states();
    let mut m = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    for s in (0..ns).filter(|&s| !game.is_terminal(s)) {
        for (a, p) in policy.joint_row(game.space(), s).into_iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &(s2, pt) in game.transitions(s, a) {
                m[(s, s2)] -= game.gamma() * p * pt;
            }
        }
        rhs[s] = rhs_of(s);
    }
    m.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|| vec![f64::NAN; ns])
}

/// Unregularized discounted value of every state.
pub fn state_returns(game: &TabularGame, policy: &FactoredPolicy) -> Result<Vec<f64>> {
    policy.check_shape(game)?;
    Ok(solve_values(
        game,
        |s| {
            policy
                .joint_row(game.space(), s)
                .iter()
                .enumerate()
                .map(|(a, p)| p * game.reward(s, a))
                .sum()
        },
        policy,
    ))
}

/// `E_{s0~d}[sum_t gamma^t r_t]` under `policy`.
pub fn exact_return(game: &TabularGame, policy: &FactoredPolicy) -> Result<f64> {
    let v = state_returns(game, policy)?;
    Ok(game.initial_dist().iter().zip(&v).map(|(d, v)| d * v).sum())
}

/// Expected undiscounted return of an episode cut off at the game's
/// horizon, by backward induction. Games without a horizon fall back to the
/// discounted [`exact_return`].
pub fn episode_return(game: &TabularGame, policy: &FactoredPolicy) -> Result<f64> {
    policy.check_shape(game)?;
    let Some(h) = game.horizon() else {
        return exact_return(game, policy);
    };
    let rows: Vec<Vec<f64>> = (0..game.n_states()).map(|s| policy.joint_row(game.space(), s)).collect();
    let v = backward_induction(game, h, |s, q| rows[s].iter().zip(q).map(|(p, q)| p * q).sum());
    Ok(game.initial_dist().iter().zip(&v).map(|(d, v)| d * v).sum())
}

/// Best expected undiscounted return within the game's horizon. Games
/// without a horizon fall back to the discounted [`optimal_return`].
pub fn optimal_episode_return(game: &TabularGame) -> Result<f64> {
    let Some(h) = game.horizon() else {
        return optimal_return(game);
    };
    let v = backward_induction(game, h, |_, q| q.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    Ok(game.initial_dist().iter().zip(&v).map(|(d, v)| d * v).sum())
}

/// Values with `steps` decisions left; `backup` turns a state's joint-action
/// values into its state value.
fn backward_induction(game: &TabularGame, steps: usize, backup: impl Fn(usize, &[f64]) -> f64) -> Vec<f64> {
    let ns = game.n_states();
    let mut v = vec![0.0; ns];
    for _ in 0..steps {
        v = (0..ns)
            .map(|s| {
                if game.is_terminal(s) {
                    return 0.0;
                }
                let q: Vec<f64> = (0..game.n_joint())
                    .map(|a| game.reward(s, a) + game.transitions(s, a).iter().map(|&(s2, p)| p * v[s2]).sum::<f64>())
                    .collect();
                backup(s, &q)
            })
            .collect();
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl ReturnStats {
    pub fn from_samples(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        ReturnStats {
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Monte Carlo mean of the undiscounted episode return.
pub fn rollout_return(game: &TabularGame, policy: &FactoredPolicy, n_episodes: usize, seed: u64) -> Result<ReturnStats> {
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be positive".into()));
    }
    policy.check_shape(game)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let returns = (0..n_episodes)
        .map(|_| {
            let mut total = 0.0;
            run_episode(game, policy, &mut rng, |_, _, r, _, _, _| total += r);
            total
        })
        .collect();
    Ok(ReturnStats::from_samples(returns))
}

/// Unregularized optimal joint Q by value iteration.
pub fn optimal_joint_q(game: &TabularGame, tol: f64, max_iters: usize) -> Result<GlobalQTable> {
    let ns = game.n_states();
    let mut v = vec![0.0; ns];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let q = q_from_v(game, &v);
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                if game.is_terminal(s) {
                    0.0
                } else {
                    q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if residual <= tol {
            return Ok(GlobalQTable { values: q_from_v(game, &v) });
        }
    }
    Err(Error::NonConvergence {
        what: "value iteration",
        iters: max_iters,
        residual,
    })
}

fn q_from_v(game: &TabularGame, v: &[f64]) -> Vec<Vec<f64>> {
    (0..game.n_states())
        .map(|s| {
            (0..game.n_joint())
                .map(|a| {
                    game.reward(s, a)
                        + game.gamma() * game.transitions(s, a).iter().map(|&(s2, p)| p * v[s2]).sum::<f64>()
                })
                .collect()
        })
        .collect()
}

/// Optimal unregularized return from the initial distribution.
pub fn optimal_return(game: &TabularGame) -> Result<f64> {
    let q = optimal_joint_q(game, 1e-12, 1_000_000)?;
    Ok(game
        .initial_dist()
        .iter()
        .enumerate()
        .map(|(s, d)| {
            if game.is_terminal(s) {
                0.0
            } else {
                d * q.values[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QreResidualReport {
    /// `gaps[agent][state] = V_BR(s) - V_pi(s)`
    pub gaps: Vec<Vec<f64>>,
    pub max_gap: f64,
}

impl QreResidualReport {
    pub fn per_state_max(&self) -> Vec<f64> {
        let ns = self.gaps.first().map_or(0, |g| g.len());
        (0..ns)
            .map(|s| self.gaps.iter().map(|g| g[s]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Best regularized response of each agent with teammates frozen, by soft
/// value iteration, compared with the policy's own regularized values.
pub fn qre_residual(game: &TabularGame, policy: &FactoredPolicy, mu: &BehaviorModel, t: Temps, tol: f64, max_iters: usize) -> Result<QreResidualReport> {
    let own = policy_evaluation(game, policy, mu, t, tol, max_iters)?;
    let n = game.n_agents();
    let ns = game.n_states();
    let space = game.space();
    let temp = t.total();
    if !(temp > 0.0) {
        return Err(Error::Config("alpha + beta must be positive".into()));
    }
    let mut gaps = Vec::with_capacity(n);
    for i in 0..n {
        let others = |s: usize| regularizer_of(policy, mu, s, t, (0..n).filter(move |&j| j != i));
        let teammate_cost: Vec<f64> = (0..ns).map(others).collect();
        // weight of each joint action under the frozen teammates
        let weights: Vec<Vec<f64>> = (0..ns)
            .map(|s| {
                (0..space.len())
                    .map(|a| {
                        (0..n)
                            .filter(|&j| j != i)
                            .map(|j| policy.row(j, s)[space.agent_action(a, j)])
                            .product()
                    })
                    .collect()
            })
            .collect();
        let mut v = own.v.clone();
        let mut residual = f64::INFINITY;
        let mut iters = 0;
        while residual > tol {
            if iters >= max_iters {
                return Err(Error::NonConvergence {
                    what: "best-response value iteration",
                    iters,
                    residual,
                });
            }
            iters += 1;
            let q = q_from_v(game, &v);
            let next: Vec<f64> = (0..ns)
                .map(|s| {
                    if game.is_terminal(s) {
                        return 0.0;
                    }
                    let mut local = vec![0.0; game.n_actions(i)];
                    for (a, &w) in weights[s].iter().enumerate() {
                        local[space.agent_action(a, i)] += w * q[s][a];
                    }
                    let mu_row = mu.mu(i, s);
                    let z: Vec<f64> = local
                        .iter()
                        .zip(mu_row)
                        .filter(|(_, m)| in_support(**m))
                        .map(|(q, m)| (t.alpha * m.ln() + q) / temp)
                        .collect();
                    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    temp * (max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln()) - teammate_cost[s]
                })
                .collect();
            residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if game.gamma() == 0.0 {
                break;
            }
        }
        gaps.push(v.iter().zip(&own.v).map(|(b, o)| b - o).collect::<Vec<f64>>());
    }
    let max_gap = gaps.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(QreResidualReport { gaps, max_gap })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub iter: usize,
    pub state: usize,
    pub drop: f64,
}

/// Every `(k, s)` whose regularized value fell by more than `tol` within
/// iteration `k` (temperatures are fixed inside an iteration).
pub fn monotonicity_audit(trace: &SolverTrace, tol: f64) -> Vec<MonotonicityViolation> {
    let mut out = Vec::new();
    for rec in &trace.iterations {
        for (s, (after, before)) in rec.values.iter().zip(&rec.values_before).enumerate() {
            if *after < before - tol {
                out.push(MonotonicityViolation {
                    iter: rec.iter,
                    state: s,
                    drop: before - after,
                });
            }
        }
    }
    out
}

/// Iterations whose recorded QRE gap rose by more than `tol` over the
/// previous recorded one while beta stayed put.
pub fn qre_gap_audit(trace: &SolverTrace, tol: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for rec in &trace.iterations {
        let Some(gaps) = &rec.qre_residual else { continue };
        let gap = gaps.iter().cloned().fold(0.0, f64::max);
        if let Some((g, beta)) = prev {
            if beta == rec.beta && gap > g + tol {
                out.push(rec.iter);
            }
        }
        prev = Some((gap, rec.beta));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingFit {
    /// `ranks[agent][action]`: higher rank means preferred.
    pub ranks: Vec<Vec<usize>>,
    /// Fitted joint values over the flat joint-action grid.
    pub fitted: Vec<f64>,
    pub td_error: f64,
    pub greedy: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgmFitResult {
    pub best: OrderingFit,
    pub all: Vec<OrderingFit>,
}

impl IgmFitResult {
    pub fn greedy(&self) -> &[usize] {
        &self.best.greedy
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Weighted isotonic regression over a partial order given by `leq`, via the
/// min-max formula over upper and lower sets.
fn isotonic_fit(values: &[f64], weights: &[f64], leq: impl Fn(usize, usize) -> bool) -> Vec<f64> {
    let n = values.len();
    let subsets = 1usize << n;
    let closed = |mask: usize, up: bool| -> bool {
        (0..n).filter(|&x| mask >> x & 1 == 1).all(|x| {
            (0..n).all(|y| {
                let related = if up { leq(x, y) } else { leq(y, x) };
                !related || mask >> y & 1 == 1
            })
        })
    };
    let uppers: Vec<usize> = (1..subsets).filter(|&m| closed(m, true)).collect();
    let lowers: Vec<usize> = (1..subsets).filter(|&m| closed(m, false)).collect();
    let avg = |mask: usize| -> f64 {
        let (mut sw, mut sv) = (0.0, 0.0);
        for x in (0..n).filter(|&x| mask >> x & 1 == 1) {
            sw += weights[x];
            sv += weights[x] * values[x];
        }
        sv / sw
    };
    (0..n)
        .map(|x| {
            uppers
                .iter()
                .filter(|&&u| u >> x & 1 == 1)
                .map(|&u| {
                    lowers
                        .iter()
                        .filter(|&&l| l >> x & 1 == 1)
                        .map(|&l| avg(u & l))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Largest number of distinct dataset joint actions the demonstrator accepts.
pub const IGM_MAX_POINTS: usize = 12;

/// Best fit of a joint Q that is monotone in every agent's action ranking,
/// over all rankings, to a one-shot dataset.
pub fn igm_failure_demo(game: &TabularGame, dataset: &OfflineDataset) -> Result<IgmFitResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dataset.validate(game)?;
    let state = dataset.records[0].state;
    if dataset.records.iter().any(|r| r.state != state || !r.done) {
        return Err(Error::Config("the monotone-fit demonstrator needs a one-shot single-state dataset".into()));
    }
    let space = game.space();
    let mut points: Vec<(usize, f64, f64)> = Vec::new();
    for r in &dataset.records {
        let a = r.joint_action.flat_index;
        match points.iter_mut().find(|p| p.0 == a) {
            Some(p) => {
                p.1 += r.weight * r.reward;
                p.2 += r.weight;
            }
            None => points.push((a, r.weight * r.reward, r.weight)),
        }
    }
    let mut sq_offset = 0.0;
    for p in points.iter_mut() {
        p.1 /= p.2;
    }
    for r in &dataset.records {
        let mean = points.iter().find(|p| p.0 == r.joint_action.flat_index).expect("point").1;
        sq_offset += r.weight * (r.reward - mean).powi(2);
    }
    if points.len() > IGM_MAX_POINTS {
        return Err(Error::Config(format!(
            "dataset has {} distinct joint actions, demonstrator supports {IGM_MAX_POINTS}",
            points.len()
        )));
    }
    let total_w: f64 = points.iter().map(|p| p.2).sum();
    let n = game.n_agents();
    let perms: Vec<Vec<Vec<usize>>> = (0..n).map(|i| permutations(game.n_actions(i))).collect();
    let mut combos: Vec<Vec<usize>> = vec![vec![]];
    for p in &perms {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                (0..p.len()).map(move |k| {
                    let mut c = c.clone();
                    c.push(k);
                    c
                })
            })
            .collect();
    }
    let mut all = Vec::with_capacity(combos.len());
    for combo in combos {
        let ranks: Vec<Vec<usize>> = combo.iter().enumerate().map(|(i, &k)| perms[i][k].clone()).collect();
        let rank_of = |flat: usize| -> Vec<usize> { (0..n).map(|i| ranks[i][space.agent_action(flat, i)]).collect() };
        let dominated = |x: usize, y: usize| -> bool {
            let (rx, ry) = (rank_of(x), rank_of(y));
            rx.iter().zip(&ry).all(|(a, b)| a <= b)
        };
        let values: Vec<f64> = points.iter().map(|p| p.1).collect();
        let weights: Vec<f64> = points.iter().map(|p| p.2).collect();
        let fit = isotonic_fit(&values, &weights, |x, y| dominated(points[x].0, points[y].0));
        let td_error = (points
            .iter()
            .zip(&fit)
            .map(|(p, f)| p.2 * (f - p.1).powi(2))
            .sum::<f64>()
            + sq_offset)
            / total_w;
        let floor = fit.iter().cloned().fold(f64::INFINITY, f64::min);
        let fitted: Vec<f64> = (0..space.len())
            .map(|a| match points.iter().position(|p| p.0 == a) {
                Some(k) => fit[k],
                None => points
                    .iter()
                    .zip(&fit)
                    .filter(|(p, _)| dominated(p.0, a))
                    .map(|(_, f)| *f)
                    .fold(floor, f64::max),
            })
            .collect();
        let greedy: Vec<usize> = ranks
            .iter()
            .map(|r| r.iter().position(|&x| x == r.len() - 1).expect("top rank"))
            .collect();
        all.push(OrderingFit {
            ranks,
            fitted,
            td_error,
            greedy,
        });
    }
    let min_err = all.iter().map(|f| f.td_error).fold(f64::INFINITY, f64::min);
    let in_data = |f: &OrderingFit| {
        let flat = space.encode(&f.greedy).expect("greedy in range");
        points.iter().any(|p| p.0 == flat)
    };
    let tied = |f: &&OrderingFit| f.td_error <= min_err + 1e-12;
    let best = all
        .iter()
        .filter(tied)
        .find(|f| in_data(f))
        .or_else(|| all.iter().find(tied))
        .expect("at least one ordering")
        .clone();
    Ok(IgmFitResult { best, all })
}
