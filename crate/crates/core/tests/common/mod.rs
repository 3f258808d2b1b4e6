#![allow(dead_code)]

use inspo::data::{estimate_behavior, BehaviorModel, OfflineDataset, TransitionRecord};
use inspo::game::{FactoredPolicy, GameSpec, TabularGame};
use inspo::GlobalQTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, f64)> {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.6) { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
    if w.iter().all(|x| *x == 0.0) {
        w[rng.random_range(0..n)] = 1.0;
    }
    let z: f64 = w.iter().sum();
    w.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(s, p)| (s, p / z)).collect()
}

/// Random cooperative game with 2-3 agents, 1-4 states and 2-3 actions per
/// agent. Some games carry an absorbing terminal state.
pub fn random_game(rng: &mut ChaCha8Rng) -> TabularGame {
    let n_agents = rng.random_range(2..=3);
    let actions: Vec<usize> = (0..n_agents).map(|_| rng.random_range(2..=3)).collect();
    let n_states = rng.random_range(1..=4);
    let terminal = if n_states > 1 && rng.random_bool(0.3) { vec![n_states - 1] } else { vec![] };
    let nj: usize = actions.iter().product();
    let mut reward = Vec::new();
    let mut transition = Vec::new();
    for s in 0..n_states {
        if terminal.contains(&s) {
            reward.push(vec![0.0; nj]);
            transition.push(vec![vec![(s, 1.0)]; nj]);
        } else {
            reward.push((0..nj).map(|_| rng.random_range(-1.0..1.0)).collect());
            transition.push((0..nj).map(|_| random_distribution(rng, n_states)).collect());
        }
    }
    let live = n_states - terminal.len();
    let initial_dist = (0..n_states).map(|s| if s < live { 1.0 / live as f64 } else { 0.0 }).collect();
    TabularGame::new(GameSpec {
        actions,
        n_states,
        reward,
        transition,
        gamma: rng.random_range(0.3..0.95),
        initial_dist,
        terminal,
        horizon: None,
        labels: Default::default(),
    })
    .unwrap()
}

/// Weighted dataset covering a random subset of joint actions in every
/// non-terminal state.
pub fn random_dataset(game: &TabularGame, rng: &mut ChaCha8Rng) -> OfflineDataset {
    let mut d = OfflineDataset::empty(game, "random");
    let space = game.space().clone();
    for s in (0..game.n_states()).filter(|&s| !game.is_terminal(s)) {
        let mut chosen: Vec<usize> = (0..space.len()).filter(|_| rng.random_bool(0.5)).collect();
        if chosen.is_empty() {
            chosen.push(rng.random_range(0..space.len()));
        }
        for a in chosen {
            let row = game.transitions(s, a);
            let next = row[rng.random_range(0..row.len())].0;
            d.records.push(TransitionRecord {
                state: s,
                joint_action: space.decode(a).unwrap(),
                reward: game.reward(s, a),
                next_state: next,
                done: game.is_terminal(next),
                weight: rng.random_range(0.1..1.0),
                trajectory_id: d.records.len(),
                step_index: 0,
            });
        }
    }
    d
}

pub fn random_instance(seed: u64) -> (TabularGame, OfflineDataset, BehaviorModel) {
    let mut r = rng(seed);
    let g = random_game(&mut r);
    let d = random_dataset(&g, &mut r);
    let mu = estimate_behavior(&g, &d).unwrap();
    (g, d, mu)
}

/// Random policy supported exactly on the behavior support.
pub fn random_policy_in_support(mu: &BehaviorModel, rng: &mut ChaCha8Rng) -> FactoredPolicy {
    let tables = mu
        .factored
        .tables()
        .iter()
        .map(|t| {
            t.iter()
                .map(|row| {
                    let w: Vec<f64> = row.iter().map(|&m| if m > 1e-12 { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
                    let z: f64 = w.iter().sum();
                    w.iter().map(|x| x / z).collect()
                })
                .collect()
        })
        .collect();
    FactoredPolicy::new(tables).unwrap()
}

pub fn random_q(game: &TabularGame, rng: &mut ChaCha8Rng, scale: f64) -> GlobalQTable {
    GlobalQTable {
        values: (0..game.n_states())
            .map(|_| (0..game.n_joint()).map(|_| rng.random_range(-scale..scale)).collect())
            .collect(),
    }
}

pub fn random_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut o: Vec<usize> = (0..n).collect();
    o.shuffle(rng);
    o
}
