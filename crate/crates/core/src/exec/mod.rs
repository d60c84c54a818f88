//! Trace-based execution.
//!
//! Executing a program produces a [`Trace`]: every evaluated expression
//! node carries a unique [`NodeId`] and its value, applications record how
//! they reduced, and distribution calls record the outcome taken.

mod execute;
mod json;
mod registry;
mod rng;
mod trace;

pub use execute::{
    enumerate_all, enumerate_paths, execute, execute_with, refresh, revalidate, Chooser, ExecError, NameSupply, ReplayError,
    Sampler, Scripted, MAX_DEPTH,
};
pub use json::{trace_to_json, value_to_json};
pub use registry::{readback, Bernoulli, Categorical, DistError, Distribution, Outcome, Registry, UniformInt};
pub use rng::RandomSource;
pub use trace::{
    trace_equal_mod_ids, AppTail, AugExpr, AugNode, AugStmt, Binding, Closure, NodeId, Trace, Value, Watermark,
};
