//! Workload-adaptive replication between an on-chain contract and off-chain
//! storage: gas model, per-key replication policies, authenticated storage,
//! a discrete-event simulator, and workload generators.

pub mod ads;
pub mod decision;
pub mod gas;
pub mod sim;
pub mod trace;
pub mod workloads;

pub use ads::{AdsTree, Digest};
pub use gas::{Gas, GasSchedule};
pub use trace::{Key, Operation, Record, ReplState, Trace};
