//! QoS-aware gap scheduling for periodic DAG workloads on partially
//! occupied virtual machines.
//!
//! The scheduler fits every instance of a set of periodic, quality-versioned
//! task graphs into the idle gaps of VMs that already run a repeating
//! background workload, then upgrades task quality levels wherever slack
//! remains. Supporting modules cover workload generation, reward metrics,
//! exhaustive small-instance verification, and batch parameter sweeps.

pub mod fixtures;
pub mod generator;
pub mod heft;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod periodic;
pub mod platform;
pub mod ranking;
pub mod sweep;
pub mod types;
pub mod workload;

pub use heft::{CycleWindow, PartialSchedule, ScheduleEntry};
pub use periodic::{schedule_periodic, HyperSchedule, SchedulerOptions};
pub use platform::{EventQueue, IdleSlot, Platform, VmDescriptor};
pub use types::{Rat, Tick};
pub use workload::{DagSpec, EdgeSpec, QualityVersion, TaskSpec};
