//! Experiment driver for behavioural metrics on finite MDPs: metric solves,
//! Garnet sweeps, embeddings, learning runs, invariant checks and plots.

pub mod check;
pub mod embed;
pub mod error;
pub mod files;
pub mod learn;
pub mod plot;
pub mod solve;
pub mod sweep;

pub use check::{cmd_check, CheckScale, Solvers};
pub use embed::{cmd_embed, EmbedOptions};
pub use error::{exit_code, CliError, CliResult, Status};
pub use learn::{cmd_learn, LearnOptions};
pub use plot::emit_plot;
pub use solve::{cmd_solve, SolveOptions};
pub use sweep::{cmd_sweep, SweepConfig, SweepRow};
