//! Command-line front end: training, evaluation, tables, missions and plots.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtac::config::RunConfig;
use mtac::env::EnvSlot;
use mtac::harness::eval::time_budget;
use mtac::harness::plots::{decisions_csv, trajectory_csv};
use mtac::harness::{
    checkpoint_every, compare_table, emit_plots, evaluate, load_checkpoint, load_records, load_registry, load_role,
    metrics_path, save_checkpoint, train_baseline, write_text, EvalSpec, PolicySource, Role,
};
use mtac::hierarchy::{run_controller, train_gate, ExpertRegistry, Gate, MixedTerrainMap, NUM_EXPERTS};
use mtac::ppo::{metrics_csv, train_expert, IterationLog, PolicyNet, METRICS_HEADER};
use mtac::rng::{derive_seed, stream_rng};
use mtac::terrain::TerrainFamily;
use mtac::{Error, Result};

/// Forward command used by `run` missions, m/s.
const MISSION_VELOCITY: f64 = 0.75;

#[derive(Parser)]
#[command(name = "mtac", version, about = "Terrain-adaptive quadruped locomotion with gait experts and a gate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    iterations: usize,
    #[arg(long)]
    envs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train one gait expert on its terrain curriculum.
    TrainExpert {
        #[arg(long)]
        terrain: TerrainFamily,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the single generalist policy on a mixed curriculum.
    TrainBaseline {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the gate over frozen experts.
    TrainGate {
        #[arg(long)]
        experts: PathBuf,
        #[arg(long)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Completion rate of a policy on an evaluation strip.
    Eval {
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        experts: Option<PathBuf>,
        #[arg(long)]
        gate: Option<PathBuf>,
        #[arg(long)]
        terrain: TerrainFamily,
        #[arg(long)]
        difficulty: f64,
        #[arg(long)]
        velocity: f64,
        #[arg(long, default_value_t = mtac::harness::eval::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect evaluation records into the comparison table.
    Table {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gate plus experts on a random mixed-terrain map.
    Run {
        #[arg(long)]
        gate: PathBuf,
        #[arg(long)]
        experts: PathBuf,
        #[arg(long)]
        map_seed: u64,
        #[arg(long)]
        time_limit: f64,
        #[arg(long)]
        log: PathBuf,
    },
    /// Plot data from a metrics CSV or a mission log.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, envs: Option<usize>) -> Result<RunConfig> {
    let mut config = RunConfig::load_optional(path)?;
    if let Some(n) = envs {
        config.env.num_envs = n;
    }
    config.env.validate()?;
    Ok(config)
}

fn progress(log: &IterationLog) {
    if log.iter.is_multiple_of(10) {
        eprintln!(
            "iter {:>5}  reward {:>8.4}  vel_err {:.3}  row {:.2}",
            log.iter, log.rollout.mean_reward, log.rollout.vel_err, log.rollout.mean_row
        );
    }
}

fn finish_training(policy: &PolicyNet, logs: &[IterationLog], role: Role, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(policy, role, out)?;
    write_text(&metrics_path(out), &metrics_csv(logs))?;
    println!("wrote {} ({role})", out.display());
    Ok(())
}

fn check_choice(what: &str, value: f64, allowed: &[f64]) -> Result<()> {
    if allowed.contains(&value) {
        Ok(())
    } else {
        Err(Error::Config(format!("--{what} must be one of {allowed:?}, got {value}")))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainExpert { terrain, train } => {
            let config = load_config(train.config.as_deref(), train.envs)?;
            let role = Role::Expert(terrain);
            let mut save = checkpoint_every(&train.out, role, config.ppo.checkpoint_every);
            let (policy, logs) = train_expert(terrain, train.iterations, &config, train.seed, |log, p| {
                progress(log);
                save(log, p)
            })?;
            finish_training(&policy, &logs, role, &train.out)
        }
        Command::TrainBaseline { train } => {
            let config = load_config(train.config.as_deref(), train.envs)?;
            let mut save = checkpoint_every(&train.out, Role::Baseline, config.ppo.checkpoint_every);
            let (policy, logs) = train_baseline(train.iterations, &config, train.seed, |log, p| {
                progress(log);
                save(log, p)
            })?;
            finish_training(&policy, &logs, Role::Baseline, &train.out)
        }
        Command::TrainGate { experts, iterations, seed, config, out } => {
            let config = load_config(config.as_deref(), None)?;
            let registry = load_registry(&experts)?;
            let sections = config.gate.map_sections;
            let maps = move |s: u64| MixedTerrainMap::random(s, sections);
            let gate = PolicyNet::gate(config.ppo.init_log_std, &mut stream_rng(derive_seed(seed, 0), 0))?;
            let mut save = checkpoint_every(&out, Role::Gate, config.ppo.checkpoint_every);
            let (gate, history) = train_gate(gate, &registry, &maps, iterations, &config, seed, |it, p| {
                progress(&it.log);
                save(&it.log, p)
            })?;
            let logs: Vec<IterationLog> = history.iter().map(|h| h.log).collect();
            finish_training(&gate, &logs, Role::Gate, &out)?;
            let mut csv = format!("{METRICS_HEADER},sel_bumpy,sel_stairs,sel_stepped\n");
            for h in &history {
                let c = h.selection_counts;
                csv.push_str(&format!("{},{},{},{}\n", h.log.csv_row(), c[0], c[1], c[2]));
            }
            write_text(&metrics_path(&out), &csv)
        }
        Command::Eval { policy, experts, gate, terrain, difficulty, velocity, trials, seed, out } => {
            check_choice("difficulty", difficulty, &[0.5, 1.0])?;
            check_choice("velocity", velocity, &[0.75, 1.75])?;
            let hierarchy = |gate: PolicyNet| -> Result<PolicySource> {
                let dir = experts
                    .as_deref()
                    .ok_or_else(|| Error::Usage("evaluating a gate needs --experts DIR".into()))?;
                Ok(PolicySource::Hierarchy { gate, registry: load_registry(dir)? })
            };
            let source = match (&gate, &policy) {
                (Some(g), _) => hierarchy(load_role(g, Role::Gate)?)?,
                (None, Some(p)) => match load_checkpoint(p)? {
                    (Role::Expert(_), net) => PolicySource::Expert(net),
                    (Role::Baseline, net) => PolicySource::Baseline(net),
                    (Role::Gate, net) => hierarchy(net)?,
                },
                (None, None) => return Err(Error::Usage("eval needs --policy or --gate".into())),
            };
            let spec = EvalSpec { terrain, difficulty, velocity, trials, seed };
            let (record, _) = evaluate(&source, &spec, &RunConfig::default().env)?;
            write_text(&out, &record.to_csv())?;
            println!(
                "{} on {terrain} {difficulty}/{velocity}: {}/{} completed",
                record.policy, record.completions, record.spec.trials
            );
            Ok(())
        }
        Command::Table { records, out } => {
            let table = compare_table(&load_records(&records)?)?;
            write_text(&out, &table)
        }
        Command::Run { gate, experts, map_seed, time_limit, log } => {
            if !(time_limit >= 0.0 && time_limit.is_finite()) {
                return Err(Error::Config(format!("--time-limit must be a non-negative number, got {time_limit}")));
            }
            let config = RunConfig::default();
            let gate = Gate::Network(load_role(&gate, Role::Gate)?);
            let registry = load_registry(&experts)?;
            let map = MixedTerrainMap::random(map_seed, config.gate.map_sections)?;
            let env = mtac::harness::eval::eval_env_config(&config.env, time_limit.max(time_budget(map.field.length(), MISSION_VELOCITY)));
            let mut slot = EnvSlot::new(&env, stream_rng(derive_seed(map_seed, 1), 0));
            slot.reset_at(map.field.clone(), map.spawn_x(), Some(MISSION_VELOCITY));
            let mission = run_controller(&gate, &registry, &mut slot, map.goal_x(), time_limit)?;
            write_text(&log, &trajectory_csv(&mission.trajectory))?;
            let mut decisions = log.into_os_string();
            decisions.push(".decisions.csv");
            write_text(Path::new(&decisions), &decisions_csv(&mission.decisions))?;
            let mut counts = [0usize; NUM_EXPERTS];
            for d in &mission.decisions {
                counts[d.decision.selected_expert] += 1;
            }
            let status = if mission.reached_goal { "goal reached" } else if mission.fell { "fell" } else { "time limit" };
            println!("{status} after {:.2} s, x = {:.2} of {:.2} m", mission.elapsed, slot.state().base_pos[0], map.goal_x());
            for (k, c) in counts.iter().enumerate() {
                println!("  {:<8} {c} decisions", ExpertRegistry::name(k));
            }
            Ok(())
        }
        Command::Plot { metrics, out } => {
            for path in emit_plots(&metrics, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
