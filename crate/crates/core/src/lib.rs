//! Energy-aware scheduling of periodic task graphs on homogeneous
//! multiprocessors with intra-task DVFS and sleep-mode transitions.
//!
//! * [`graph`]: task graphs, validation, generation, upward ranks.
//! * [`power`]: the platform energy model.
//! * [`platform`]: platform description files.
//! * [`schedule`]: schedules and their text form.
//! * [`eval`]: energy accounting, idle-interval statistics, reports, Gantt SVG.
//! * [`model`]: the linearized MILP, LP export and solution verification.
//! * [`lp`]: the dense simplex kernel.
//! * [`exact`]: the enumerative exact solver.
//! * [`heuristic`]: the two-stage list-scheduling heuristic.
//! * [`suite`]: seeded experiment suites and manifests.

pub mod eval;
pub mod exact;
pub mod graph;
pub mod heuristic;
pub mod lp;
pub mod model;
pub mod platform;
pub mod power;
pub mod schedule;
pub mod suite;

pub use graph::{TaskGraph, TaskId};
pub use platform::Platform;
pub use power::PowerModel;
pub use schedule::{Schedule, ScheduledTask};
