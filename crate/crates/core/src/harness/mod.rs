//! Evaluation, persistence and reporting around the trainers.

pub mod checkpoint;
pub mod eval;
pub mod plots;
pub mod table;

use std::path::{Path, PathBuf};

pub use checkpoint::{load_checkpoint, load_registry, load_role, save_checkpoint, Role};
pub use eval::{evaluate, EvalRecord, EvalSpec, PolicySource, TrialResult};
pub use plots::emit_plots;
pub use table::{compare_table, load_records};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ppo::{IterationLog, PolicyNet, Trainer};
use crate::rng::derive_seed;
use crate::terrain::CurriculumGrid;

/// One policy on a curriculum whose columns cycle through all terrain kinds,
/// with exactly the pipeline and budget of an expert.
pub fn train_baseline(
    iterations: usize,
    config: &RunConfig,
    seed: u64,
    on_iteration: impl FnMut(&IterationLog, &PolicyNet) -> Result<()>,
) -> Result<(PolicyNet, Vec<IterationLog>)> {
    let grid = CurriculumGrid::mixed(derive_seed(seed, 3))?;
    let mut trainer = Trainer::new(grid, config, seed)?;
    let logs = trainer.run(iterations, on_iteration)?;
    Ok((trainer.policy, logs))
}

/// Where training metrics go for a checkpoint written to `out`.
pub fn metrics_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".metrics.csv");
    PathBuf::from(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Periodic checkpointing for a training callback: writes `role` to `out`
/// every `every` iterations. The final checkpoint is the caller's job.
pub fn checkpoint_every(
    out: &Path,
    role: Role,
    every: usize,
) -> impl FnMut(&IterationLog, &PolicyNet) -> Result<()> + '_ {
    move |log, policy| {
        if every > 0 && log.iter % every == 0 {
            save_checkpoint(policy, role, out)?;
        }
        Ok(())
    }
}
