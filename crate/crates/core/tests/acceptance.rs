#![allow(clippy::needless_range_loop, clippy::vec_init_then_push)]

//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use inspo::analysis::{episode_return, igm_failure_demo, monotonicity_audit, optimal_episode_return, qre_residual};
use inspo::data::{estimate_behavior, Preset};
use inspo::exact::{
    advantage_decomposition_check, apply_evaluation_operator, inspo_iterate, Ablation, ExactConfig, OrderMode,
    TemperatureSchedule, Temps,
};
use inspo::experiment::{build_env, generate_dataset, run_experiment, ExperimentConfig, SolverMode};
use inspo::game::total_variation;
use inspo::practical::{
    extraction_grad, extraction_loss, q_loss, q_loss_grad, resample_seeded, QBatch, SoftmaxPolicyParams,
};
use inspo::{FactoredPolicy, LocalQTable};
use rand::Rng;

const RANDOM_GAMES: u64 = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn returns_of(preset: Preset, mode: SolverMode, ablation: Ablation) -> (Vec<f64>, Vec<FactoredPolicy>, Duration) {
    let mut cfg = ExperimentConfig::recommended(preset, mode);
    cfg.set_ablation(ablation);
    let t0 = Instant::now();
    let runs = run_experiment(&cfg).expect("experiment runs");
    (
        runs.iter().map(|r| r.expected_return).collect(),
        runs.into_iter().map(|r| r.policy).collect(),
        t0.elapsed(),
    )
}

fn greedy_joint(policy: &FactoredPolicy) -> Vec<usize> {
    policy.greedy().iter().map(|per_state| per_state[0]).collect()
}

fn criterion_1() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for p in [Preset::XorA, Preset::XorB, Preset::XorC] {
        let mut elapsed = Duration::ZERO;
        for mode in [SolverMode::Exact, SolverMode::Practical] {
            let (r, _, t) = returns_of(p, mode, Ablation::None);
            elapsed += t;
            let m = mean(&r);
            let spread = r.iter().map(|x| (x - m).abs()).fold(0.0, f64::max);
            pass &= (m - 1.0).abs() <= 0.01 && spread <= 0.01;
            parts.push(format!("{p}/{mode} {m:.3}"));
        }
        pass &= elapsed < Duration::from_secs(10);
        parts.push(format!("{p} {:.1}s", elapsed.as_secs_f64()));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_2() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (p, bc_target) in [(Preset::MneBalanced, -9.78), (Preset::MneImbalanced, -3.47)] {
        for mode in [SolverMode::Exact, SolverMode::Practical] {
            let (r, _, _) = returns_of(p, mode, Ablation::None);
            let m = mean(&r);
            pass &= (m - 20.0).abs() <= 0.05;
            parts.push(format!("{p}/{mode} {m:.3}"));
        }
        let env = build_env("mne").unwrap();
        let d = generate_dataset(&env, p, 0).unwrap();
        let mu = estimate_behavior(&env.game, &d).unwrap();
        let bc = episode_return(&env.game, &mu.factored).unwrap();
        pass &= (bc - bc_target).abs() <= 0.1;
        parts.push(format!("{p} BC {bc:.3}"));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_3() -> Outcome {
    let (r, pols, _) = returns_of(Preset::MneImbalanced, SolverMode::Exact, Ablation::NoEntropy);
    let no_ent_ok = pols.iter().all(|p| greedy_joint(p) == [0, 0]) && r.iter().all(|x| (x - 5.0).abs() <= 0.1);
    let (rs, pols_s, _) = returns_of(Preset::XorB, SolverMode::Exact, Ablation::Simultaneous);
    let sim_ok = pols_s.iter().all(|p| greedy_joint(p) == [1, 1]) && rs.iter().all(|x| (x + 2.0).abs() <= 0.1);
    let greedy: Vec<String> = pols_s.iter().map(|p| format!("{:?}", greedy_joint(p))).collect();
    outcome(
        no_ent_ok && sim_ok,
        format!(
            "no-entropy mne-imbalanced {:.3} ({}); simultaneous xor-b {:.3} greedy {} ({})",
            mean(&r),
            if no_ent_ok { "ok" } else { "FAILED" },
            mean(&rs),
            greedy.join(" "),
            if sim_ok { "ok" } else { "FAILED" }
        ),
    )
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let env = build_env("bridge").unwrap();
    let opt = optimal_episode_return(&env.game).unwrap();
    let mut pass = true;
    let mut parts = vec![format!("optimal {opt:.4}")];
    for p in [Preset::BridgeOptimal, Preset::BridgeMixed] {
        let cfg = ExperimentConfig::recommended(p, SolverMode::Exact);
        let runs = run_experiment(&cfg).unwrap();
        let worst = runs.iter().map(|r| r.expected_return).fold(f64::INFINITY, f64::min);
        let bc = mean(&runs.iter().map(|r| r.behavior_return).collect::<Vec<_>>());
        pass &= runs.iter().all(|r| (r.expected_return - opt).abs() <= 0.05 * opt.abs());
        if p == Preset::BridgeMixed {
            pass &= runs.iter().all(|r| r.expected_return > r.behavior_return);
        }
        parts.push(format!("{p} worst {worst:.4} BC {bc:.4}"));
    }
    let elapsed = t0.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    parts.push(format!("{:.1}s", elapsed.as_secs_f64()));
    outcome(pass, parts.join(", "))
}

fn audit_config(seed: u64) -> ExactConfig {
    ExactConfig {
        schedule: TemperatureSchedule {
            alpha: 0.5,
            beta0: 0.5,
            beta_decay: 1.0,
        },
        max_iters: 3000,
        order: OrderMode::Random,
        seed,
        converge_tol: 1e-12,
        ..Default::default()
    }
}

fn criterion_5_and_6() -> (Outcome, Outcome) {
    let mut worst_drop: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut violations = 0;
    for seed in 0..RANDOM_GAMES {
        let (g, _, mu) = common::random_instance(seed);
        let mut cfg = audit_config(seed);
        cfg.schedule = TemperatureSchedule {
            alpha: 0.5,
            beta0: 2.0,
            beta_decay: 0.99,
        };
        cfg.max_iters = 200;
        let (_, trace) = inspo_iterate(&g, &mu, &cfg).unwrap();
        let v = monotonicity_audit(&trace, 1e-8);
        violations += v.len();
        for it in &trace.iterations {
            for (a, b) in it.values_before.iter().zip(&it.values) {
                worst_drop = worst_drop.max(a - b);
            }
        }
        let cfg = audit_config(seed);
        let (pi, _) = inspo_iterate(&g, &mu, &cfg).unwrap();
        let report = qre_residual(&g, &pi, &mu, cfg.temps_at(cfg.max_iters), 1e-13, 100_000).unwrap();
        worst_gap = worst_gap.max(report.max_gap);
    }
    (
        outcome(
            violations == 0,
            format!("{RANDOM_GAMES} games, largest value drop {worst_drop:.2e}, {violations} violations"),
        ),
        outcome(worst_gap <= 1e-5, format!("{RANDOM_GAMES} games, worst max_gap {worst_gap:.2e}")),
    )
}

fn criterion_7() -> Outcome {
    let mut worst_excess = f64::NEG_INFINITY;
    for seed in 0..RANDOM_GAMES {
        let (g, _, mu) = common::random_instance(seed);
        let mut r = common::rng(1000 + seed);
        let pi = common::random_policy_in_support(&mu, &mut r);
        let t = Temps::new(r.random_range(0.0..1.0), r.random_range(0.0..1.0));
        for _ in 0..100 {
            let q1 = common::random_q(&g, &mut r, 5.0);
            let q2 = common::random_q(&g, &mut r, 5.0);
            let d_in = sup_diff(&q1.values, &q2.values);
            let t1 = apply_evaluation_operator(&g, &pi, &mu, t, &q1);
            let t2 = apply_evaluation_operator(&g, &pi, &mu, t, &q2);
            let d_out = sup_diff(&t1.values, &t2.values);
            worst_excess = worst_excess.max(d_out / d_in - g.gamma());
        }
    }
    outcome(
        worst_excess <= 1e-9,
        format!("{RANDOM_GAMES} games x 100 pairs, max(factor - gamma) {worst_excess:.2e}"),
    )
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_8() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..RANDOM_GAMES {
        let (g, _, mu) = common::random_instance(seed);
        let mut r = common::rng(2000 + seed);
        for _ in 0..10 {
            let pi = common::random_policy_in_support(&mu, &mut r);
            let q = common::random_q(&g, &mut r, 3.0);
            let order = common::random_order(g.n_agents(), &mut r);
            worst = worst.max(advantage_decomposition_check(&g, &q, &pi, &order).unwrap());
        }
    }
    outcome(worst <= 1e-9, format!("{RANDOM_GAMES} games x 10 orders, max residual {worst:.2e}"))
}

fn criterion_9() -> Outcome {
    let env = build_env("xor").unwrap();
    let b = igm_failure_demo(&env.game, &generate_dataset(&env, Preset::XorB, 0).unwrap()).unwrap();
    let prefers_b = b.best.ranks.iter().all(|r| r[1] > r[0]);
    let b_ok = b.best.td_error <= 1e-12 && prefers_b && b.greedy() == [1, 1];
    let c = igm_failure_demo(&env.game, &generate_dataset(&env, Preset::XorC, 0).unwrap()).unwrap();
    let c_min = c.all.iter().map(|f| f.td_error).fold(f64::INFINITY, f64::min);
    let c_ok = c_min > 1e-6;
    outcome(
        b_ok && c_ok,
        format!(
            "xor-b td {:.1e} greedy {:?}; xor-c min td {:.3}",
            b.best.td_error,
            b.greedy(),
            c_min
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for p in [Preset::XorA, Preset::XorB, Preset::XorC, Preset::MneBalanced, Preset::MneImbalanced] {
        let mut exact_cfg = ExperimentConfig::recommended(p, SolverMode::Exact);
        exact_cfg.set_order(OrderMode::Fixed);
        exact_cfg.seeds = vec![0];
        let ex = run_experiment(&exact_cfg).unwrap().remove(0).policy;
        let mirrored = ex.swap_agents();
        let (_, practical, _) = returns_of(p, SolverMode::Practical, Ablation::None);
        let mut preset_worst: f64 = 0.0;
        for pp in &practical {
            let tv = |other: &FactoredPolicy| {
                (0..2)
                    .map(|i| total_variation(pp.row(i, 0), other.row(i, 0)))
                    .fold(0.0, f64::max)
            };
            preset_worst = preset_worst.max(tv(&ex).min(tv(&mirrored)));
        }
        worst = worst.max(preset_worst);
        parts.push(format!("{p} {preset_worst:.1e}"));
    }
    outcome(worst <= 0.01, parts.join(", "))
}

fn criterion_11() -> Outcome {
    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let (g, d, mu) = common::random_instance(500 + seed);
        let mut r = common::rng(3000 + seed);
        let agent = r.random_range(0..g.n_agents());
        let rho: Vec<f64> = d.records.iter().map(|_| r.random_range(0.1..2.0)).collect();
        let res = resample_seeded(&d, &rho, 64, seed).unwrap();
        let batch = QBatch::new(&d, &res, agent);
        let mut q = LocalQTable::zeros(agent, g.n_states(), g.n_actions(agent));
        q.values.iter_mut().flatten().for_each(|v| *v = r.random_range(-2.0..2.0));
        let y: Vec<f64> = batch.entries.iter().map(|_| r.random_range(-2.0..2.0)).collect();
        let cql = r.random_range(0.0..1.0);
        let grad = q_loss_grad(&q, &batch, &y, &mu, cql);
        for s in 0..q.values.len() {
            for a in 0..q.values[s].len() {
                let mut plus = q.clone();
                plus.values[s][a] += h;
                let mut minus = q.clone();
                minus.values[s][a] -= h;
                let fd = (q_loss(&plus, &batch, &y, &mu, cql) - q_loss(&minus, &batch, &y, &mu, cql)) / (2.0 * h);
                worst = worst.max(rel(grad[s][a], fd));
            }
        }
        let pi = common::random_policy_in_support(&mu, &mut r);
        let params = SoftmaxPolicyParams::from_policy(&pi, &mu);
        let triples = batch.state_actions();
        let w: Vec<f64> = triples.iter().map(|_| r.random_range(0.1..3.0)).collect();
        let grad = extraction_grad(&params, agent, &triples, &w, batch.size);
        for s in 0..params.logits[agent].len() {
            for a in 0..params.logits[agent][s].len() {
                if !params.mask[agent][s][a] {
                    continue;
                }
                let mut plus = params.clone();
                plus.logits[agent][s][a] += h;
                let mut minus = params.clone();
                minus.logits[agent][s][a] -= h;
                let fd = (extraction_loss(&plus, agent, &triples, &w, batch.size)
                    - extraction_loss(&minus, agent, &triples, &w, batch.size))
                    / (2.0 * h);
                worst = worst.max(rel(grad[s][a], fd));
            }
        }
    }
    outcome(worst < 1e-5, format!("50 instances, max relative error {worst:.2e}"))
}

fn criterion_12() -> Outcome {
    let mut same = true;
    let mut checked = 0;
    for (p, mode) in [
        (Preset::XorB, SolverMode::Exact),
        (Preset::XorC, SolverMode::Practical),
        (Preset::MneImbalanced, SolverMode::Practical),
        (Preset::BridgeOptimal, SolverMode::Exact),
    ] {
        let mut cfg = ExperimentConfig::recommended(p, mode);
        cfg.practical.max_iters = cfg.practical.max_iters.min(30);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            same &= x.trace.to_csv().into_bytes() == y.trace.to_csv().into_bytes();
            checked += 1;
        }
    }
    outcome(same, format!("{checked} trace pairs compared byte for byte"))
}

fn main() {
    let names = [
        "XOR table",
        "M-NE table",
        "ablations",
        "Bridge",
        "monotonic improvement",
        "QRE convergence",
        "evaluation contraction",
        "advantage decomposition",
        "IGM demonstrator",
        "practical/exact agreement",
        "gradient correctness",
        "determinism",
    ];
    let mut results: Vec<Outcome> = Vec::new();
    results.push(criterion_1());
    results.push(criterion_2());
    results.push(criterion_3());
    results.push(criterion_4());
    let (c5, c6) = criterion_5_and_6();
    results.push(c5);
    results.push(c6);
    results.push(criterion_7());
    results.push(criterion_8());
    results.push(criterion_9());
    results.push(criterion_10());
    results.push(criterion_11());
    results.push(criterion_12());
    let mut failed = 0;
    for (k, (name, r)) in names.iter().zip(&results).enumerate() {
        println!(
            "criterion {:>2} {} {name}: {}",
            k + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
