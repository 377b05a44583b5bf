//! Domain-decomposed rendering: the scene is cut into axis-aligned
//! sub-domains stored as separate files, rays migrate between them at
//! interfaces, and a demand-driven scheduler keeps only a bounded number of
//! sub-domains in memory.

mod message;
mod partition;
mod scheduler;
mod traverse;

use std::io;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::render::RenderError;

pub use message::{throughput_to_wire, RayMessage, WIRE_SAMPLES, WIRE_SIZE};
pub use partition::{
    load_subdomain, partition, partition_file_text, split_boxes, triangle_overlaps_box,
    write_partition_files, Interface, LoadedSubDomain, Partition, SubDomain, BOX_EPS, REPLICATION_EPS,
};
pub use scheduler::{run_ddm, ScheduleMetrics, Watchdog, WorkerMetrics};
pub use traverse::{advance_ray, Advance, ENTRY_TOLERANCE};

#[derive(Debug, Error)]
pub enum DdmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {msg}", path.display())]
    Load { path: PathBuf, msg: String },
    #[error("malformed ray message: {0}")]
    Codec(String),
    #[error("migration protocol violated: {0}")]
    Protocol(String),
    #[error("no progress within the watchdog bound\n{0}")]
    Deadlock(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Scheduler parameters. `max_resident` larger than the number of
/// sub-domains is clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct DdmConfig {
    /// Power of two.
    pub n_subdomains: usize,
    pub n_workers: usize,
    pub max_resident: usize,
    /// Emulated cost of loading the whole model; each sub-domain pays its
    /// share by triangle count.
    pub load_cost_ms: u64,
    /// Swap threshold floor, in rays.
    pub theta_min: usize,
    /// Swap threshold as a fraction of a queue's historical maximum.
    pub theta_fraction: f64,
    /// Rays processed per scheduling decision.
    pub batch_size: usize,
    /// Seeding pauses while this many rays are in flight.
    pub seed_window: usize,
    /// Abort after this long without progress.
    pub watchdog: Duration,
}

impl DdmConfig {
    pub fn new(n_subdomains: usize, n_workers: usize, max_resident: usize) -> Self {
        DdmConfig {
            n_subdomains,
            n_workers,
            max_resident,
            load_cost_ms: 0,
            theta_min: 16,
            theta_fraction: 0.01,
            batch_size: 64,
            seed_window: 1 << 16,
            watchdog: Duration::from_secs(60),
        }
    }

    pub fn validate(&self) -> Result<(), DdmError> {
        let bad = |m: String| Err(DdmError::Config(m));
        if self.n_subdomains == 0 || !self.n_subdomains.is_power_of_two() {
            return bad(format!("sub-domain count {} is not a power of two", self.n_subdomains));
        }
        if self.n_workers == 0 {
            return bad("need at least one worker".into());
        }
        if self.max_resident == 0 {
            return bad("max_resident must be at least 1".into());
        }
        if self.batch_size == 0 || self.seed_window == 0 {
            return bad("batch size and seed window must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.theta_fraction) {
            return bad(format!("theta fraction {} outside [0, 1]", self.theta_fraction));
        }
        if self.watchdog.is_zero() {
            return bad("watchdog bound must be positive".into());
        }
        Ok(())
    }
}
