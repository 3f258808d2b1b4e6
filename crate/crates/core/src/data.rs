//! Offline datasets: exact weighted matrix-game mixtures, sampled rollouts,
//! behavior-model estimation and JSON-lines persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{bridge_optimal_policies, Bridge};
use crate::error::{Error, Result};
use crate::game::{FactoredPolicy, JointAction, JointActionSpace, TabularGame};

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub state: usize,
    pub joint_action: JointAction,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
    /// Empirical frequency or multiplicity; always positive.
    pub weight: f64,
    pub trajectory_id: usize,
    pub step_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub records: Vec<TransitionRecord>,
    pub game_fingerprint: String,
    pub generation_spec: String,
}

impl OfflineDataset {
    pub fn empty(game: &TabularGame, generation_spec: impl Into<String>) -> Self {
        OfflineDataset {
            records: Vec::new(),
            game_fingerprint: game.fingerprint(),
            generation_spec: generation_spec.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.weight).sum()
    }

    pub fn n_trajectories(&self) -> usize {
        let mut ids: Vec<usize> = self.records.iter().map(|r| r.trajectory_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Appends `other`, renumbering its trajectories after ours.
    pub fn merge(&mut self, other: OfflineDataset) -> Result<()> {
        if other.game_fingerprint != self.game_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.game_fingerprint.clone(),
                found: other.game_fingerprint,
            });
        }
        let offset = self
            .records
            .iter()
            .map(|r| r.trajectory_id + 1)
            .max()
            .unwrap_or(0);
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.trajectory_id += offset;
            r
        }));
        self.generation_spec = format!("{} + {}", self.generation_spec, other.generation_spec);
        Ok(())
    }

    /// Checks every record against the game's index ranges and the record invariants.
    pub fn validate(&self, game: &TabularGame) -> Result<()> {
        if self.game_fingerprint != game.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: game.fingerprint(),
                found: self.game_fingerprint.clone(),
            });
        }
        for (k, r) in self.records.iter().enumerate() {
            check_record(game, r).map_err(|msg| Error::Parse {
                line: k + 2,
                msg,
            })?;
        }
        Ok(())
    }
}

fn check_record(game: &TabularGame, r: &TransitionRecord) -> std::result::Result<(), String> {
    let ns = game.n_states();
    if r.state >= ns || r.next_state >= ns {
        return Err(format!("state index out of range (n_states {ns})"));
    }
    let flat = game
        .space()
        .encode(&r.joint_action.per_agent)
        .map_err(|e| e.to_string())?;
    if flat != r.joint_action.flat_index {
        return Err("joint action flat index inconsistent".into());
    }
    if !(r.weight > 0.0) || !r.weight.is_finite() {
        return Err(format!("weight {} must be positive", r.weight));
    }
    if !r.reward.is_finite() {
        return Err("reward must be finite".into());
    }
    if r.done && !game.is_terminal(r.next_state) {
        return Err(format!("done set but state {} is not terminal", r.next_state));
    }
    Ok(())
}

/// Named dataset recipes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    XorA,
    XorB,
    XorC,
    MneBalanced,
    MneImbalanced,
    BridgeOptimal,
    BridgeMixed,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::XorA,
        Preset::XorB,
        Preset::XorC,
        Preset::MneBalanced,
        Preset::MneImbalanced,
        Preset::BridgeOptimal,
        Preset::BridgeMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::XorA => "xor-a",
            Preset::XorB => "xor-b",
            Preset::XorC => "xor-c",
            Preset::MneBalanced => "mne-balanced",
            Preset::MneImbalanced => "mne-imbalanced",
            Preset::BridgeOptimal => "bridge-optimal",
            Preset::BridgeMixed => "bridge-mixed",
        }
    }

    /// Environment name the preset belongs to.
    pub fn env(self) -> &'static str {
        match self {
            Preset::XorA | Preset::XorB | Preset::XorC => "xor",
            Preset::MneBalanced | Preset::MneImbalanced => "mne",
            Preset::BridgeOptimal | Preset::BridgeMixed => "bridge",
        }
    }

    pub fn is_matrix(self) -> bool {
        self.env() != "bridge"
    }

    /// Joint-action mixture of a matrix preset, `None` for sampled presets.
    pub fn matrix_weights(self) -> Option<Vec<(Vec<usize>, f64)>> {
        let third = 1.0 / 3.0;
        let product = |m: [f64; 3]| {
            let mut out = Vec::new();
            for a in 0..3 {
                for b in 0..3 {
                    out.push((vec![a, b], m[a] * m[b]));
                }
            }
            out
        };
        Some(match self {
            Preset::XorA => vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)],
            Preset::XorB => vec![(vec![0, 0], third), (vec![0, 1], third), (vec![1, 0], third)],
            Preset::XorC => vec![
                (vec![0, 0], 0.25),
                (vec![0, 1], 0.25),
                (vec![1, 0], 0.25),
                (vec![1, 1], 0.25),
            ],
            Preset::MneBalanced => product([third; 3]),
            Preset::MneImbalanced => product([0.8, 0.1, 0.1]),
            Preset::BridgeOptimal | Preset::BridgeMixed => return None,
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown variant '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Single-state dataset carrying exactly the given joint-action mixture.
/// Zero-weight entries are dropped.
pub fn make_matrix_dataset(game: &TabularGame, joint_action_weights: &[(Vec<usize>, f64)]) -> Result<OfflineDataset> {
    let space = game.space();
    let mut records = Vec::new();
    for (per_agent, w) in joint_action_weights {
        let flat = space.encode(per_agent)?;
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::Config(format!("weight {w} for {per_agent:?} must be nonnegative")));
        }
        if *w == 0.0 {
            continue;
        }
        let (next_state, _) = game.transitions(0, flat)[0];
        records.push(TransitionRecord {
            state: 0,
            joint_action: JointAction {
                per_agent: per_agent.clone(),
                flat_index: flat,
            },
            reward: game.reward(0, flat),
            next_state,
            done: game.is_terminal(next_state),
            weight: *w,
            trajectory_id: records.len(),
            step_index: 0,
        });
    }
    if records.is_empty() {
        return Err(Error::Config("joint action weights are empty or all zero".into()));
    }
    let spec = joint_action_weights
        .iter()
        .map(|(a, w)| format!("{a:?}:{w}"))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(OfflineDataset {
        records,
        game_fingerprint: game.fingerprint(),
        generation_spec: format!("matrix {spec}"),
    })
}

pub(crate) fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rand::Rng::random(rng);
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

pub(crate) fn sample_joint(
    rng: &mut ChaCha8Rng,
    space: &JointActionSpace,
    policy: &FactoredPolicy,
    state: usize,
) -> usize {
    let per_agent: Vec<usize> = (0..space.n_agents())
        .map(|i| sample_index(rng, policy.row(i, state)))
        .collect();
    space.encode(&per_agent).expect("sampled actions are in range")
}

/// Episode cap used when a game has no horizon.
pub const DEFAULT_EPISODE_CAP: usize = 1000;

/// Samples one episode, calling `visit` for each transition. Episodes end at
/// a terminal state or after the game's horizon.
pub(crate) fn run_episode(
    game: &TabularGame,
    policy: &FactoredPolicy,
    rng: &mut ChaCha8Rng,
    mut visit: impl FnMut(usize, usize, f64, usize, bool, usize),
) {
    let cap = game.horizon().unwrap_or(DEFAULT_EPISODE_CAP);
    let mut s = sample_index(rng, game.initial_dist());
    for t in 0..cap {
        if game.is_terminal(s) {
            break;
        }
        let a = sample_joint(rng, game.space(), policy, s);
        let row = game.transitions(s, a);
        let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
        let s2 = row[sample_index(rng, &probs)].0;
        let done = game.is_terminal(s2);
        visit(s, a, game.reward(s, a), s2, done, t);
        s = s2;
    }
}

/// Samples `n_episodes` trajectories from `policy`. Deterministic given `seed`.
pub fn rollout_trajectories(game: &TabularGame, policy: &FactoredPolicy, n_episodes: usize, seed: u64) -> Result<OfflineDataset> {
    rollout_mixture(game, std::slice::from_ref(policy), n_episodes, seed)
}

/// Like [`rollout_trajectories`], drawing one component policy uniformly at
/// random at the start of every episode.
pub fn rollout_mixture(game: &TabularGame, components: &[FactoredPolicy], n_episodes: usize, seed: u64) -> Result<OfflineDataset> {
    if components.is_empty() {
        return Err(Error::Config("no component policies".into()));
    }
    for p in components {
        p.check_shape(game)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = vec![1.0 / components.len() as f64; components.len()];
    let mut records = Vec::new();
    for ep in 0..n_episodes {
        let policy = &components[sample_index(&mut rng, &uniform)];
        run_episode(game, policy, &mut rng, |s, a, r, s2, done, t| {
            records.push(TransitionRecord {
                state: s,
                joint_action: game.space().decode(a).expect("valid flat index"),
                reward: r,
                next_state: s2,
                done,
                weight: 1.0,
                trajectory_id: ep,
                step_index: t,
            });
        });
    }
    Ok(OfflineDataset {
        records,
        game_fingerprint: game.fingerprint(),
        generation_spec: format!("rollout components={} episodes={n_episodes} seed={seed}", components.len()),
    })
}

pub const BRIDGE_EPISODES: usize = 500;

/// Equal mixture of the two optimal deterministic Bridge policies.
pub fn bridge_optimal_dataset(bridge: &Bridge, seed: u64) -> Result<OfflineDataset> {
    let policies = bridge_optimal_policies(bridge)?;
    let mut d = rollout_mixture(&bridge.game, &policies, BRIDGE_EPISODES, seed)?;
    d.generation_spec = format!("bridge-optimal seed={seed}");
    Ok(d)
}

/// The optimal dataset plus as many uniform-random trajectories.
pub fn bridge_mixed_dataset(bridge: &Bridge, seed: u64) -> Result<OfflineDataset> {
    let mut d = bridge_optimal_dataset(bridge, seed)?;
    let uniform = FactoredPolicy::uniform(&bridge.game);
    let random = rollout_trajectories(&bridge.game, &uniform, BRIDGE_EPISODES, seed.wrapping_add(0x9e37_79b9))?;
    d.merge(random)?;
    d.generation_spec = format!("bridge-mixed seed={seed}");
    Ok(d)
}

/// Estimated behavior policy: factored per-agent marginals plus the exact
/// empirical joint.
#[derive(Clone, Debug, PartialEq)]
pub struct BehaviorModel {
    pub factored: FactoredPolicy,
    /// `joint[s][a_flat]`
    pub joint: Vec<Vec<f64>>,
    /// Weighted visitation counts `counts[s][a_flat]`.
    pub counts: Vec<Vec<f64>>,
    /// False for states absent from the dataset (their rows are uniform).
    pub visited: Vec<bool>,
    space: JointActionSpace,
}

impl BehaviorModel {
    pub fn space(&self) -> &JointActionSpace {
        &self.space
    }

    pub fn n_states(&self) -> usize {
        self.joint.len()
    }

    pub fn n_agents(&self) -> usize {
        self.space.n_agents()
    }

    #[inline]
    pub fn mu(&self, agent: usize, state: usize) -> &[f64] {
        self.factored.row(agent, state)
    }

    /// Dataset state distribution (normalized weighted visitation).
    pub fn state_distribution(&self) -> Vec<f64> {
        let totals: Vec<f64> = self.counts.iter().map(|r| r.iter().sum()).collect();
        let z: f64 = totals.iter().sum();
        totals.iter().map(|t| if z > 0.0 { t / z } else { 0.0 }).collect()
    }

    /// `mu^{-i}(a^{-i} | s)`: the empirical joint with agent `agent`
    /// marginalized out, evaluated at the teammates' part of `flat`.
    pub fn teammate_marginal(&self, state: usize, agent: usize, flat: usize) -> f64 {
        let n = self.space.sizes()[agent];
        (0..n)
            .map(|b| self.joint[state][self.space.with_agent_action(flat, agent, b)])
            .sum()
    }
}

/// Behavior cloning by weighted counting.
pub fn estimate_behavior(game: &TabularGame, dataset: &OfflineDataset) -> Result<BehaviorModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let space = game.space().clone();
    let ns = game.n_states();
    let nj = space.len();
    let mut counts = vec![vec![0.0; nj]; ns];
    for (k, r) in dataset.records.iter().enumerate() {
        check_record(game, r).map_err(|msg| Error::Parse { line: k + 2, msg })?;
        counts[r.state][r.joint_action.flat_index] += r.weight;
    }
    let mut joint = vec![vec![1.0 / nj as f64; nj]; ns];
    let mut visited = vec![false; ns];
    let mut tables: Vec<Vec<Vec<f64>>> = (0..space.n_agents())
        .map(|i| vec![vec![1.0 / space.sizes()[i] as f64; space.sizes()[i]]; ns])
        .collect();
    for s in 0..ns {
        let total: f64 = counts[s].iter().sum();
        if total <= 0.0 {
            continue;
        }
        visited[s] = true;
        joint[s] = counts[s].iter().map(|c| c / total).collect();
        for (i, table) in tables.iter_mut().enumerate() {
            let mut row = vec![0.0; space.sizes()[i]];
            for (flat, &p) in joint[s].iter().enumerate() {
                row[space.agent_action(flat, i)] += p;
            }
            table[s] = row;
        }
    }
    Ok(BehaviorModel {
        factored: FactoredPolicy::from_tables_unchecked(tables),
        joint,
        counts,
        visited,
        space,
    })
}

#[derive(Serialize, Deserialize)]
struct Header {
    fingerprint: String,
    generation_spec: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    s: usize,
    a: Vec<usize>,
    r: f64,
    s_next: usize,
    done: bool,
    w: f64,
    traj: usize,
    t: usize,
}

/// Writes a header line followed by one record per line.
pub fn write_dataset(dataset: &OfflineDataset, out: &mut impl Write) -> std::io::Result<()> {
    let header = Header {
        fingerprint: dataset.game_fingerprint.clone(),
        generation_spec: dataset.generation_spec.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for r in &dataset.records {
        let line = Line {
            s: r.state,
            a: r.joint_action.per_agent.clone(),
            r: r.reward,
            s_next: r.next_state,
            done: r.done,
            w: r.weight,
            traj: r.trajectory_id,
            t: r.step_index,
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("record serializes"))?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset(dataset, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parses the JSONL format without a game. Joint-action flat indices are
/// filled in when `game` is given, which also enables full validation.
pub fn parse_dataset(text: impl BufRead, game: Option<&TabularGame>) -> Result<OfflineDataset> {
    let mut lines = text.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
            Some((k, line)) => {
                let line = line.map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line)
                    .map_err(|e| Error::Parse { line: k + 1, msg: format!("bad header: {e}") })?;
            }
        }
    };
    if let Some(g) = game {
        let expected = g.fingerprint();
        if header.fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected,
                found: header.fingerprint,
            });
        }
    }
    let mut records = Vec::new();
    for (k, line) in lines {
        let line = line.map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Line = serde_json::from_str(&line).map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?;
        let flat = match game {
            Some(g) => g
                .space()
                .encode(&raw.a)
                .map_err(|e| Error::Parse { line: k + 1, msg: e.to_string() })?,
            None => 0,
        };
        let rec = TransitionRecord {
            state: raw.s,
            joint_action: JointAction {
                per_agent: raw.a,
                flat_index: flat,
            },
            reward: raw.r,
            next_state: raw.s_next,
            done: raw.done,
            weight: raw.w,
            trajectory_id: raw.traj,
            step_index: raw.t,
        };
        if let Some(g) = game {
            check_record(g, &rec).map_err(|msg| Error::Parse { line: k + 1, msg })?;
        } else if !(rec.weight > 0.0) || !rec.weight.is_finite() {
            return Err(Error::Parse {
                line: k + 1,
                msg: format!("weight {} must be positive", rec.weight),
            });
        }
        records.push(rec);
    }
    Ok(OfflineDataset {
        records,
        game_fingerprint: header.fingerprint,
        generation_spec: header.generation_spec,
    })
}

pub fn load_dataset(path: impl AsRef<Path>, game: &TabularGame) -> Result<OfflineDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file), Some(game))
}

/// Weighted empirical joint frequencies per state, keyed by flat action.
pub fn empirical_joint(dataset: &OfflineDataset) -> BTreeMap<(usize, usize), f64> {
    let mut out = BTreeMap::new();
    for r in &dataset.records {
        *out.entry((r.state, r.joint_action.flat_index)).or_insert(0.0) += r.weight;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{build_bridge, build_mne, build_xor, BridgeLayout, MNE_OFF_DIAGONAL};

    fn preset(game: &TabularGame, p: Preset) -> OfflineDataset {
        make_matrix_dataset(game, &p.matrix_weights().unwrap()).unwrap()
    }

    #[test]
    fn xor_b_has_three_equal_records() {
        let d = preset(&build_xor(), Preset::XorB);
        assert_eq!(d.len(), 3);
        for r in &d.records {
            assert!((r.weight - 1.0 / 3.0).abs() < 1e-15);
            assert!(r.done);
        }
    }

    #[test]
    fn mne_imbalanced_has_nine_records() {
        let g = build_mne(MNE_OFF_DIAGONAL).unwrap();
        let d = preset(&g, Preset::MneImbalanced);
        assert_eq!(d.len(), 9);
        let aa = d.records.iter().find(|r| r.joint_action.per_agent == [0, 0]).unwrap();
        assert!((aa.weight - 0.64).abs() < 1e-12);
    }

    #[test]
    fn empty_weights_rejected() {
        let g = build_xor();
        assert!(make_matrix_dataset(&g, &[]).is_err());
        assert!(make_matrix_dataset(&g, &[(vec![0, 0], 0.0)]).is_err());
        assert!(make_matrix_dataset(&g, &[(vec![0, 2], 1.0)]).is_err());
    }

    #[test]
    fn behavior_on_xor_b() {
        let g = build_xor();
        let mu = estimate_behavior(&g, &preset(&g, Preset::XorB)).unwrap();
        for i in 0..2 {
            assert!((mu.mu(i, 0)[0] - 2.0 / 3.0).abs() < 1e-12);
            assert!((mu.mu(i, 0)[1] - 1.0 / 3.0).abs() < 1e-12);
        }
        let third = 1.0 / 3.0;
        for (a, want) in mu.joint[0].iter().zip([third, third, third, 0.0]) {
            assert!((a - want).abs() < 1e-12);
        }
        assert!(mu.visited[0]);
        assert!(!mu.visited[1]);
        assert_eq!(mu.mu(0, 1), &[0.5, 0.5]);
    }

    #[test]
    fn deterministic_policy_recovered() {
        let bridge = build_bridge(&BridgeLayout::default()).unwrap();
        let [x, _] = bridge_optimal_policies(&bridge).unwrap();
        let d = rollout_trajectories(&bridge.game, &x, 3, 7).unwrap();
        let mu = estimate_behavior(&bridge.game, &d).unwrap();
        for s in (0..bridge.game.n_states()).filter(|&s| mu.visited[s]) {
            for i in 0..2 {
                assert_eq!(mu.mu(i, s), x.row(i, s));
            }
        }
    }

    #[test]
    fn empty_dataset_errors() {
        let g = build_xor();
        let d = OfflineDataset::empty(&g, "none");
        assert!(matches!(estimate_behavior(&g, &d), Err(Error::EmptyDataset)));
        let d = rollout_trajectories(&g, &FactoredPolicy::uniform(&g), 0, 1).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn rollouts_are_deterministic() {
        let g = build_xor();
        let p = FactoredPolicy::uniform(&g);
        let a = rollout_trajectories(&g, &p, 50, 3).unwrap();
        let b = rollout_trajectories(&g, &p, 50, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn bridge_datasets_have_expected_sizes() {
        let bridge = build_bridge(&BridgeLayout::default()).unwrap();
        let opt = bridge_optimal_dataset(&bridge, 0).unwrap();
        assert_eq!(opt.n_trajectories(), 500);
        let mixed = bridge_mixed_dataset(&bridge, 0).unwrap();
        assert_eq!(mixed.n_trajectories(), 1000);
        mixed.validate(&bridge.game).unwrap();
    }

    #[test]
    fn jsonl_round_trip() {
        let g = build_xor();
        let d = preset(&g, Preset::XorC);
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = parse_dataset(buf.as_slice(), Some(&g)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn fingerprint_mismatch_names_both() {
        let g = build_xor();
        let other = build_mne(MNE_OFF_DIAGONAL).unwrap();
        let mut buf = Vec::new();
        write_dataset(&preset(&g, Preset::XorA), &mut buf).unwrap();
        let err = parse_dataset(buf.as_slice(), Some(&other)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&g.fingerprint()) && msg.contains(&other.fingerprint()), "{msg}");
    }

    #[test]
    fn missing_reward_reports_line() {
        let g = build_xor();
        let text = format!(
            "{{\"fingerprint\":\"{}\",\"generation_spec\":\"x\"}}\n{{\"s\":0,\"a\":[0,1],\"r\":1.0,\"s_next\":1,\"done\":true,\"w\":1.0,\"traj\":0,\"t\":0}}\n{{\"s\":0,\"a\":[0,1],\"s_next\":1,\"done\":true,\"w\":1.0,\"traj\":0,\"t\":0}}\n",
            g.fingerprint()
        );
        match parse_dataset(text.as_bytes(), Some(&g)) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("`r`"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn monte_carlo_joint_converges() {
        let g = build_xor();
        let p = FactoredPolicy::new(vec![vec![vec![0.7, 0.3]; 2], vec![vec![0.4, 0.6]; 2]]).unwrap();
        let d = rollout_trajectories(&g, &p, 10_000, 11).unwrap();
        let mu = estimate_behavior(&g, &d).unwrap();
        let truth = p.joint_row(g.space(), 0);
        for (a, b) in mu.joint[0].iter().zip(&truth) {
            assert!((a - b).abs() < 0.02);
        }
    }

    #[test]
    fn presets_parse() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("xor-d".parse::<Preset>().is_err());
    }
}
