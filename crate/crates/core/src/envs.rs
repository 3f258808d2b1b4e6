//! Benchmark games: the XOR and multi-equilibrium matrix games and the
//! two-agent Bridge grid world.

use serde::{Deserialize, Serialize};

use crate::analysis::optimal_joint_q;
use crate::error::{Error, Result};
use crate::game::{FactoredPolicy, GameLabels, GameSpec, TabularGame};

/// Default off-diagonal payoff of the multi-equilibrium game.
pub const MNE_OFF_DIAGONAL: f64 = -20.5;

/// One-shot matrix game: state 0 is the decision state, state 1 the absorbing
/// terminal. `payoff[a_flat]` is in mixed-radix joint order.
pub fn matrix_game(name: &str, action_labels: Vec<Vec<String>>, payoff: Vec<f64>) -> Result<TabularGame> {
    let actions: Vec<usize> = action_labels.iter().map(Vec::len).collect();
    let nj: usize = actions.iter().product();
    if payoff.len() != nj {
        return Err(Error::InvalidGame(format!(
            "payoff has {} entries, expected {nj}",
            payoff.len()
        )));
    }
    TabularGame::new(GameSpec {
        actions,
        n_states: 2,
        reward: vec![payoff, vec![0.0; nj]],
        transition: vec![vec![vec![(1, 1.0)]; nj], vec![vec![(1, 1.0)]; nj]],
        gamma: 0.0,
        initial_dist: vec![1.0, 0.0],
        terminal: vec![1],
        horizon: Some(1),
        labels: GameLabels {
            name: name.to_string(),
            states: vec!["play".into(), "done".into()],
            actions: action_labels,
        },
    })
}

fn labels(names: &[&str], agents: usize) -> Vec<Vec<String>> {
    vec![names.iter().map(|s| s.to_string()).collect(); agents]
}

/// XOR game: r(A,B) = r(B,A) = 1, r(A,A) = 0, r(B,B) = -2.
pub fn build_xor() -> TabularGame {
    matrix_game("xor", labels(&["A", "B"], 2), vec![0.0, 1.0, 1.0, -2.0]).expect("xor is valid")
}

/// Three-action coordination game with Nash equilibria (A,A), (B,B), (C,C)
/// paying 5, 10 and 20; every miscoordinated pair pays `off_diagonal`.
pub fn build_mne(off_diagonal: f64) -> Result<TabularGame> {
    if !(off_diagonal < 5.0) || !off_diagonal.is_finite() {
        return Err(Error::Config(format!(
            "off-diagonal payoff {off_diagonal} must be below 5 for the diagonal to stay Nash"
        )));
    }
    let diag = [5.0, 10.0, 20.0];
    let payoff = (0..9)
        .map(|flat| {
            let (a, b) = (flat / 3, flat % 3);
            if a == b {
                diag[a]
            } else {
                off_diagonal
            }
        })
        .collect();
    matrix_game("mne", labels(&["A", "B", "C"], 2), payoff)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionRule {
    /// Any contested cell blocks every agent contending for it.
    Block,
    /// Swaps are blocked; a cell targeted by both goes to agent 0.
    SwapForbidden,
}

pub type Cell = (usize, usize);

pub const BRIDGE_ACTIONS: [&str; 5] = ["up", "down", "left", "right", "stay"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeLayout {
    pub grid_width: usize,
    pub grid_height: usize,
    /// Single-file cells, ordered left to right; every other cell in the
    /// columns they span is wall.
    pub bridge_cells: Vec<Cell>,
    pub start_positions: [Cell; 2],
    pub goal_positions: [Cell; 2],
    pub step_reward: f64,
    pub collision_rule: CollisionRule,
    pub max_steps: usize,
    pub gamma: f64,
}

impl Default for BridgeLayout {
    fn default() -> Self {
        BridgeLayout {
            grid_width: 8,
            grid_height: 3,
            bridge_cells: (2..=5).map(|x| (x, 1)).collect(),
            start_positions: [(3, 1), (4, 1)],
            goal_positions: [(7, 1), (0, 1)],
            step_reward: -0.1,
            collision_rule: CollisionRule::Block,
            max_steps: 50,
            gamma: 0.99,
        }
    }
}

impl BridgeLayout {
    fn span(&self) -> (usize, usize) {
        let min = self.bridge_cells.iter().map(|c| c.0).min().unwrap_or(0);
        let max = self.bridge_cells.iter().map(|c| c.0).max().unwrap_or(0);
        (min, max)
    }

    pub fn walkable(&self, cell: Cell) -> bool {
        let (x, y) = cell;
        if x >= self.grid_width || y >= self.grid_height {
            return false;
        }
        let (lo, hi) = self.span();
        if (lo..=hi).contains(&x) {
            self.bridge_cells.contains(&cell)
        } else {
            true
        }
    }

    pub fn on_bridge(&self, cell: Cell) -> bool {
        self.bridge_cells.contains(&cell)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("bridge layout: {msg}")));
        if self.bridge_cells.is_empty() {
            return fail("no bridge cells".into());
        }
        if self.max_steps == 0 {
            return fail("max_steps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !self.step_reward.is_finite() {
            return fail("step_reward must be finite".into());
        }
        for &(x, y) in &self.bridge_cells {
            if x >= self.grid_width || y >= self.grid_height {
                return fail(format!("bridge cell ({x},{y}) outside grid"));
            }
        }
        for w in self.bridge_cells.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.0.abs_diff(b.0) + a.1.abs_diff(b.1) != 1 {
                return fail(format!("bridge cells {a:?} and {b:?} are not adjacent"));
            }
        }
        let mut sorted = self.bridge_cells.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.bridge_cells.len() {
            return fail("bridge path revisits a cell".into());
        }
        let [s0, s1] = self.start_positions;
        if s0 == s1 {
            return fail("start positions coincide".into());
        }
        if !self.on_bridge(s0) || !self.on_bridge(s1) {
            return fail("start positions must be on the bridge".into());
        }
        let (lo, hi) = self.span();
        for g in self.goal_positions {
            if !self.walkable(g) || self.on_bridge(g) {
                return fail(format!("goal {g:?} must be a free cell off the bridge"));
            }
        }
        let [g0, g1] = self.goal_positions;
        let left = |c: Cell| c.0 < lo;
        let right = |c: Cell| c.0 > hi;
        if !((left(g0) && right(g1)) || (right(g0) && left(g1))) {
            return fail("goals must lie on opposite sides of the bridge".into());
        }
        Ok(())
    }

    fn step(&self, cell: Cell, action: usize) -> Cell {
        let (x, y) = cell;
        let target = match action {
            0 if y > 0 => (x, y - 1),
            1 => (x, y + 1),
            2 if x > 0 => (x - 1, y),
            3 => (x + 1, y),
            _ => cell,
        };
        if self.walkable(target) {
            target
        } else {
            cell
        }
    }

    /// Simultaneous move resolution; agents never share a cell afterwards.
    pub fn resolve(&self, pos: [Cell; 2], actions: [usize; 2]) -> [Cell; 2] {
        let mut next = [0, 1].map(|i| {
            if pos[i] == self.goal_positions[i] {
                pos[i]
            } else {
                self.step(pos[i], actions[i])
            }
        });
        loop {
            let before = next;
            let moving = [next[0] != pos[0], next[1] != pos[1]];
            if next[0] == next[1] {
                match self.collision_rule {
                    CollisionRule::Block => {
                        for i in 0..2 {
                            if moving[i] {
                                next[i] = pos[i];
                            }
                        }
                    }
                    CollisionRule::SwapForbidden => {
                        // a stationary occupant keeps its cell, otherwise agent 0 wins
                        if !moving[1] || (moving[0] && moving[1]) {
                            next[if moving[1] && !moving[0] { 1 } else { 0 }] = pos
                                [if moving[1] && !moving[0] { 1 } else { 0 }];
                            if moving[0] && moving[1] {
                                next[0] = before[0];
                                next[1] = pos[1];
                            }
                        } else {
                            next[1] = pos[1];
                        }
                    }
                }
            } else if moving[0] && moving[1] && next[0] == pos[1] && next[1] == pos[0] {
                next = pos;
            } else {
                for i in 0..2 {
                    let j = 1 - i;
                    if moving[i] && next[i] == pos[j] && next[j] == pos[j] {
                        next[i] = pos[i];
                    }
                }
            }
            if next == before {
                return next;
            }
        }
    }
}

/// Bridge game together with its state encoding.
#[derive(Clone, Debug)]
pub struct Bridge {
    pub layout: BridgeLayout,
    pub game: TabularGame,
    /// Position pair of every non-terminal state.
    pub positions: Vec<[Cell; 2]>,
    pub terminal: usize,
    pub start: usize,
}

impl Bridge {
    pub fn state_of(&self, pos: [Cell; 2]) -> Option<usize> {
        if pos == self.layout.goal_positions {
            return Some(self.terminal);
        }
        self.positions.iter().position(|p| *p == pos)
    }
}

pub fn build_bridge(layout: &BridgeLayout) -> Result<Bridge> {
    layout.validate()?;
    let cells: Vec<Cell> = (0..layout.grid_height)
        .flat_map(|y| (0..layout.grid_width).map(move |x| (x, y)))
        .filter(|&c| layout.walkable(c))
        .collect();
    let mut positions = Vec::new();
    for &a in &cells {
        for &b in &cells {
            if a != b && [a, b] != layout.goal_positions {
                positions.push([a, b]);
            }
        }
    }
    let terminal = positions.len();
    let ns = terminal + 1;
    let index = |pos: [Cell; 2]| -> usize {
        if pos == layout.goal_positions {
            terminal
        } else {
            positions
                .iter()
                .position(|p| *p == pos)
                .expect("resolved positions are valid states")
        }
    };
    let na = BRIDGE_ACTIONS.len();
    let nj = na * na;
    let mut reward = Vec::with_capacity(ns);
    let mut transition = Vec::with_capacity(ns);
    for &pos in &positions {
        reward.push(vec![layout.step_reward; nj]);
        transition.push(
            (0..nj)
                .map(|flat| {
                    let next = layout.resolve(pos, [flat / na, flat % na]);
                    vec![(index(next), 1.0)]
                })
                .collect(),
        );
    }
    reward.push(vec![0.0; nj]);
    transition.push(vec![vec![(terminal, 1.0)]; nj]);
    let start = index(layout.start_positions);
    let mut initial_dist = vec![0.0; ns];
    initial_dist[start] = 1.0;
    let mut state_labels: Vec<String> = positions
        .iter()
        .map(|[a, b]| format!("({},{})|({},{})", a.0, a.1, b.0, b.1))
        .collect();
    state_labels.push("done".into());
    let game = TabularGame::new(GameSpec {
        actions: vec![na, na],
        n_states: ns,
        reward,
        transition,
        gamma: layout.gamma,
        initial_dist,
        terminal: vec![terminal],
        horizon: Some(layout.max_steps),
        labels: GameLabels {
            name: "bridge".into(),
            states: state_labels,
            actions: labels(&BRIDGE_ACTIONS, 2),
        },
    })?;
    Ok(Bridge {
        layout: layout.clone(),
        game,
        positions,
        terminal,
        start,
    })
}

/// The two hand-crafted optimal deterministic joint policies: in the first,
/// agent 0 backs off the bridge to let agent 1 through; in the second the
/// roles are reversed. Outside the opening move each follows the first
/// optimal joint action in mixed-radix order.
pub fn bridge_optimal_policies(bridge: &Bridge) -> Result<[FactoredPolicy; 2]> {
    let game = &bridge.game;
    let q = optimal_joint_q(game, 1e-12, 100_000)?;
    let space = game.space();
    let layout = &bridge.layout;
    let away = |agent: usize| -> usize {
        // the move pointing away from the agent's goal
        if layout.goal_positions[agent].0 > layout.start_positions[agent].0 {
            2
        } else {
            3
        }
    };
    let mut out = Vec::with_capacity(2);
    for yielding in 0..2 {
        let mut choice = vec![vec![4usize; game.n_states()]; 2];
        for s in 0..game.n_states() {
            let row = &q.values[s];
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let optimal: Vec<usize> = (0..space.len())
                .filter(|&a| row[a] >= best - 1e-9)
                .collect();
            let pick = if s == bridge.start {
                *optimal
                    .iter()
                    .find(|&&a| space.agent_action(a, yielding) == away(yielding))
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "layout has no optimal opening where agent {yielding} yields"
                        ))
                    })?
            } else {
                optimal[0]
            };
            for (i, agent_choice) in choice.iter_mut().enumerate() {
                agent_choice[s] = space.agent_action(pick, i);
            }
        }
        out.push(FactoredPolicy::deterministic(game, &choice)?);
    }
    let second = out.pop().expect("two policies");
    let first = out.pop().expect("two policies");
    Ok([first, second])
}
