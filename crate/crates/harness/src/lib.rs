//! Experiment orchestration for random Kraus channels: configuration-driven
//! Monte Carlo campaigns, trial records and plot-ready summaries.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod record;

pub use config::{BudgetInputs, ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::{run, RunOutput};
pub use output::Format;
pub use record::{Field, Summary, SummaryRow, TrialRecord};

/// Worker count: CLI flag, then `KBL_WORKERS`, then the config, then the
/// machine's parallelism.
pub fn resolve_workers(flag: Option<usize>, env: Option<&str>, config: Option<usize>) -> Result<usize> {
    if let Some(w) = flag {
        return positive(w);
    }
    if let Some(raw) = env {
        let w: usize = raw
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("KBL_WORKERS must be a positive integer, got `{raw}`")))?;
        return positive(w);
    }
    if let Some(w) = config {
        return positive(w);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn positive(w: usize) -> Result<usize> {
    if w == 0 {
        return Err(HarnessError::Config("workers must be >= 1".into()));
    }
    Ok(w)
}
