//! `inspo` command line: dataset generation, solving, evaluation and table
//! reproduction.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use inspo::analysis::{episode_return, rollout_return};
use inspo::data::{save_dataset, Preset};
use inspo::experiment::{build_env, generate_dataset, reproduce, run_experiment, ConfigFile, ReproduceTarget, DEFAULT_SEEDS};
use inspo::{Error, FactoredPolicy, TabularGame};

const OUT_ENV: &str = "INSPO_OUT_DIR";

#[derive(Parser)]
#[command(name = "inspo", version, about = "Tabular offline multi-agent policy optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a preset dataset as JSONL.
    GenData(GenData),
    /// Run a solver over one or more seeds.
    Solve(Box<Solve>),
    /// Roll out a saved policy.
    Eval(Eval),
    /// Regenerate a result table (table1, table2, table3, figure6).
    Reproduce(Reproduce),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    env: String,
    /// xor-a|xor-b|xor-c|mne-balanced|mne-imbalanced|bridge-optimal|bridge-mixed
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Game file replacing the built-in layout of `--env`.
    #[arg(long)]
    game_file: Option<PathBuf>,
    /// Output file; defaults to `<out-root>/<variant>-seed<seed>.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Solve {
    /// TOML file with any of the solve keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    /// Dataset JSONL to use instead of generating the variant.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Game file replacing the built-in layout of `--env`.
    #[arg(long)]
    game_file: Option<PathBuf>,
    /// exact|practical
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    beta_decay: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// random|fixed|semi-greedy
    #[arg(long)]
    order: Option<String>,
    /// none|no-entropy|simultaneous
    #[arg(long)]
    ablation: Option<String>,
    #[arg(long)]
    converge_tol: Option<f64>,
    /// on|off: tune alpha toward a KL target (practical mode).
    #[arg(long, value_parser = parse_switch, num_args = 0..=1, default_missing_value = "on")]
    auto_alpha: Option<bool>,
    #[arg(long)]
    kl_target: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    cql_weight: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// adam|sgd|state-normalized
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    resample_size: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    /// Output directory for policies and traces, or a `.csv` trace path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got '{s}'")),
    }
}

#[derive(Args)]
struct Eval {
    /// Policy JSON written by `solve`.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, required_unless_present = "game_file")]
    env: Option<String>,
    /// Game file to evaluate in instead of a built-in env.
    #[arg(long)]
    game_file: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Reproduce {
    target: String,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory; defaults to the output root.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn gen_data(args: GenData) -> Result<(), Error> {
    let preset: Preset = args.variant.parse()?;
    let mut env = build_env(&args.env)?;
    if let Some(g) = &args.game_file {
        env = env.with_game_file(g)?;
    }
    let dataset = generate_dataset(&env, preset, args.seed)?;
    let path = args
        .out
        .unwrap_or_else(|| out_root().join(format!("{}-seed{}.jsonl", preset, args.seed)));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    save_dataset(&dataset, &path)?;
    println!(
        "wrote {} ({} records, {} trajectories)",
        path.display(),
        dataset.len(),
        dataset.n_trajectories()
    );
    Ok(())
}

impl Solve {
    fn to_config(&self) -> ConfigFile {
        ConfigFile {
            env: self.env.clone(),
            variant: self.variant.clone(),
            dataset: self.dataset.clone(),
            game_file: self.game_file.clone(),
            mode: self.mode.clone(),
            seeds: self.seeds.clone().or(self.seed.map(|s| vec![s])),
            out_dir: self.out.clone(),
            alpha: self.alpha,
            beta0: self.beta0,
            beta_decay: self.beta_decay,
            max_iters: self.max_iters,
            order: self.order.clone(),
            ablation: self.ablation.clone(),
            converge_tol: self.converge_tol,
            auto_alpha: self.auto_alpha,
            kl_target: self.kl_target,
            gamma: self.gamma,
            cql_weight: self.cql_weight,
            tau: self.tau,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer.clone(),
            inner_steps: self.inner_steps,
            resample_size: self.resample_size,
            clip: self.clip,
        }
    }
}

fn solve(args: &Solve) -> Result<(), Error> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let cfg = file.merge(args.to_config()).resolve()?;
    let out = cfg.out_dir.clone().unwrap_or_else(out_root);
    let runs = run_experiment(&cfg)?;
    let data_name = match &cfg.dataset_path {
        Some(p) => p.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned()),
        None => cfg.preset.to_string(),
    };
    let paths = |seed: u64| -> (PathBuf, PathBuf) {
        if out.extension().is_some_and(|e| e == "csv") {
            let dir = out.parent().unwrap_or(Path::new(""));
            let stem = out.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let stem = if runs.len() > 1 { format!("{stem}-seed{seed}") } else { stem };
            (dir.join(format!("{stem}.policy.json")), dir.join(format!("{stem}.csv")))
        } else {
            let base = format!("{data_name}-{}-seed{seed}", cfg.mode);
            (out.join(format!("{base}.policy.json")), out.join(format!("{base}.trace.csv")))
        }
    };
    for run in &runs {
        let (policy_path, trace_path) = paths(run.seed);
        write_file(&policy_path, &run.policy.to_json())?;
        write_file(&trace_path, &run.trace.to_csv())?;
        println!(
            "seed {}: return {:.4} (greedy {:.4}, behavior {:.4}), {} iterations{}",
            run.seed,
            run.expected_return,
            run.greedy_return,
            run.behavior_return,
            run.trace.len(),
            if run.trace.converged { ", converged" } else { "" }
        );
    }
    let returns: Vec<f64> = runs.iter().map(|r| r.expected_return).collect();
    let stats = inspo::analysis::ReturnStats::from_samples(returns);
    println!("mean {:.4} ± {:.4} over {} seeds; outputs in {}", stats.mean, stats.std, runs.len(), out.display());
    Ok(())
}

fn eval(args: Eval) -> Result<(), Error> {
    let game = match (&args.game_file, &args.env) {
        (Some(g), _) => TabularGame::load(g)?,
        (None, Some(e)) => build_env(e)?.game,
        (None, None) => return Err(Error::Config("--env or --game-file is required".into())),
    };
    let policy = FactoredPolicy::load(&args.policy)?;
    let stats = rollout_return(&game, &policy, args.episodes, args.seed)?;
    let expected = episode_return(&game, &policy)?;
    println!(
        "rollout return {:.4} ± {:.4} over {} episodes; expected return {:.4}",
        stats.mean, stats.std, args.episodes, expected
    );
    Ok(())
}

fn reproduce_cmd(args: Reproduce) -> Result<(), Error> {
    let target: ReproduceTarget = args.target.parse()?;
    let seeds = args.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
    let out = args.out.unwrap_or_else(out_root);
    let r = reproduce(target, &seeds)?;
    write_file(&out.join(format!("{target}.md")), &r.table.to_markdown())?;
    write_file(&out.join(format!("{target}.csv")), &r.table.to_csv())?;
    if let Some(g) = &r.grids_csv {
        write_file(&out.join(format!("{target}_grids.csv")), g)?;
    }
    print!("{}", r.table.to_markdown());
    println!("\noutputs in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Solve(a) => solve(&a),
        Command::Eval(a) => eval(a),
        Command::Reproduce(a) => reproduce_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
