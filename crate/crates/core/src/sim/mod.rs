//! Discrete-event simulation of the many-server queue.

pub mod arrivals;
pub mod coupled;
pub mod engine;
pub mod estimates;
pub mod export;
pub mod replicate;

pub use arrivals::ArrivalLaw;
pub use coupled::{coupled_run, CoupledLimit, CoupledPath};
pub use engine::{run, run_with, AuditReport, Event, EventKind, Outcome, PathRecord, RunOptions, Samples, Trace, WaitRecord};
pub use estimates::{p_wait_controlled, steady_estimates, ControlledPWait, SteadyEstimates};
pub use replicate::{replicate, replicate_with, replication, Replication};
