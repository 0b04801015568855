//! Run directories: `config.cfg`, `curves.csv`, `ckpt-<iter>/` and
//! `diag/` tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::state::{checkpoint, curves_to_csv, restore};
use super::{collapse_diagnostics, joint_train_until, pretrain, CollapseDiagnostics, TrainConfig, TrainData, TrainError, TrainState};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Continue from this checkpoint directory instead of pretraining.
    pub resume: Option<PathBuf>,
    /// Stop after this many joint iterations (a simulated interruption).
    pub stop_after: Option<usize>,
    /// Skip the collapse diagnostics at the end of the run.
    pub skip_diagnostics: bool,
}

fn write(path: &Path, text: &str) -> Result<(), TrainError> {
    fs::write(path, text).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn checkpoint_dir(run: &Path, iter: usize) -> PathBuf {
    run.join(format!("ckpt-{iter}"))
}

/// Pretrains (or resumes), trains, checkpoints and writes diagnostics.
pub fn run_training(config: &TrainConfig, data: &TrainData, dir: &Path, opts: &RunOptions) -> Result<TrainState, TrainError> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(|source| TrainError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write(&dir.join("config.cfg"), &config.to_text())?;
    let mut state = match &opts.resume {
        Some(ckpt) => restore(ckpt, config)?,
        None => pretrain(config, data)?,
    };
    let target = opts.stop_after.unwrap_or(config.joint_iters).min(config.joint_iters);
    while state.iter < target {
        let next = if config.checkpoint_every > 0 {
            ((state.iter / config.checkpoint_every + 1) * config.checkpoint_every).min(target)
        } else {
            target
        };
        let result = joint_train_until(&mut state, config, data, next);
        write(&dir.join("curves.csv"), &curves_to_csv(&state.curves))?;
        result?;
        if config.checkpoint_every > 0 && state.iter % config.checkpoint_every == 0 {
            checkpoint(&state, &checkpoint_dir(dir, state.iter))?;
        }
    }
    write(&dir.join("curves.csv"), &curves_to_csv(&state.curves))?;
    let last = checkpoint_dir(dir, state.iter);
    if !last.exists() {
        checkpoint(&state, &last)?;
    }
    if !opts.skip_diagnostics && !data.test.is_empty() {
        let d = collapse_diagnostics(&state, data)?;
        write_diagnostics(&d, &dir.join("diag"))?;
    }
    Ok(state)
}

/// `density.csv`, `spectrum.csv`, `scores.csv` and `overlap.txt`.
pub fn write_diagnostics(d: &CollapseDiagnostics, dir: &Path) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(|source| TrainError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut s = String::from("bin,lo,hi,real,generated\n");
    for i in 0..d.density_real.mass.len() {
        let (lo, hi) = d.density_real.bin_edges(i);
        let _ = writeln!(s, "{i},{lo},{hi},{},{}", d.density_real.mass[i], d.density_gen.mass[i]);
    }
    write(&dir.join("density.csv"), &s)?;
    let mut s = String::from("mode,real,generated\n");
    for i in 0..d.spectrum_real.len().max(d.spectrum_gen.len()) {
        let f = |v: &[f64]| v.get(i).map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{i},{},{}", f(&d.spectrum_real), f(&d.spectrum_gen));
    }
    write(&dir.join("spectrum.csv"), &s)?;
    let mut s = String::from("kind,score\n");
    for v in &d.scores_real {
        let _ = writeln!(s, "real,{v}");
    }
    for v in &d.scores_gen {
        let _ = writeln!(s, "generated,{v}");
    }
    write(&dir.join("scores.csv"), &s)?;
    write(
        &dir.join("overlap.txt"),
        &format!(
            "overlap = {}\nsamples = {}\nsmall_batch = {}\n",
            d.overlap,
            d.scores_real.len(),
            d.small_batch
        ),
    )
}
