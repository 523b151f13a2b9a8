//! Z-score filtered sharpness-aware minimization.
//!
//! The optimizer perturbs weights toward higher loss before each descent
//! step, but builds the perturbation only from the gradient coordinates
//! whose layer-wise Z-scores rank above a percentile threshold. Dropping
//! the small, noisy coordinates concentrates the ascent on directions
//! that stand out against their layer's statistics; when everything is
//! filtered away the perturbation falls back to the full gradient.
//!
//! Crate layout:
//! - [`math`]: flat vectors, seeded randomness, nearest-rank percentile.
//! - [`zfilter`]: layer-wise Z-scoring and percentile mask construction.
//! - [`opt`]: the two-phase update, base optimizers, schedules.
//! - [`model`]: a hand-rolled MLP with verifiable gradients, plus the
//!   quadratic test problem.
//! - [`data`]: synthetic generators, IDX loading, splits, minibatching.
//! - [`harness`]: training runs, sweeps, comparisons, and convergence
//!   diagnostics with CSV/manifest output.

pub mod data;
pub mod harness;
pub mod math;
pub mod model;
pub mod opt;
pub mod zfilter;

pub use data::{Batch, BatchPlan, DataError, Dataset, Samples};
pub use harness::{HarnessError, RunConfig, RunResult};
pub use math::{FlatVec, MathError, SeededRng};
pub use model::{Mlp, MlpSpec, ModelError, QuadraticProblem};
pub use opt::{AscentConfig, AscentKind, BaseOptimizer, LrSchedule, OptError, ParamSet};
pub use zfilter::{FilterConfig, FilterError, FilterOutcome, GradientSet, Mask, PercentileScope};
