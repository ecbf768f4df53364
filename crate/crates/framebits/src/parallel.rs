//! Thread-pool drivers for the analyzer and forest training. Results match
//! the serial paths bit for bit.

use framebits_core::complexity::{analyze_frame, assemble_records, AnalyzeError, ComplexityConfig, DctPlan};
use framebits_core::linalg::Matrix;
use framebits_core::models::{ForestModel, ForestParams, ForestTrainer, ModelError};
use framebits_core::{ComplexityRecord, FrameSource};
use rayon::prelude::*;

/// Runs `f` on a pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            f()
        }
    }
}

/// Frame-parallel analysis; the temporal pass runs after all frames are done.
pub fn analyze_sequence_par<S>(
    source: &S,
    config: &ComplexityConfig,
) -> Result<Vec<ComplexityRecord>, AnalyzeError<S::Error>>
where
    S: FrameSource + Sync,
    S::Error: Send,
{
    config.validate()?;
    let plan = DctPlan::new(config.block_size, config.weight)?;
    let analyses = (0..source.frame_count())
        .into_par_iter()
        .map(|k| {
            source
                .read_frame(k)
                .map(|f| analyze_frame(&f, &plan))
                .map_err(AnalyzeError::Source)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_records(&analyses, &config.gaps)?)
}

/// Tree-parallel forest training.
pub fn fit_forest_par(
    x: &Matrix,
    y: &[f64],
    feature_names: Vec<String>,
    params: ForestParams,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    let trainer = ForestTrainer::new(x, y, feature_names, params, seed)?;
    let trees = (0..trainer.n_estimators())
        .into_par_iter()
        .map(|i| trainer.fit_tree(i))
        .collect();
    Ok(trainer.finish(trees))
}
