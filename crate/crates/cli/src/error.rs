use std::fmt;

use thiserror::Error;

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fit,
    Correct,
    Simulate,
    Oracle,
    Compare,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Fit => "fit",
            Stage::Correct => "correct",
            Stage::Simulate => "simulate",
            Stage::Oracle => "oracle",
            Stage::Compare => "compare",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: pseudomode::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn at(stage: Stage) -> impl FnOnce(pseudomode::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    /// 0 success, 1 usage/config, 2 non-converged fit, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::NotConverged(_) => 2,
            CliError::Stage { source, .. } if source.is_numeric() => 3,
            CliError::Stage { .. } => 1,
        }
    }
}
