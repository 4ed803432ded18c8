//! Many-server queues whose servers have i.i.d. random service rates.
//!
//! The crate pairs an event-driven simulator ([`sim`]) with the diffusion
//! analytics it is checked against ([`diffusion`], [`staffing`], [`ssc`]).

pub mod config;
pub mod diffusion;
pub mod dist;
pub mod error;
pub mod normal;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod ssc;
pub mod staffing;
pub mod system;

pub use config::{AbandonMode, KvConfig, Policy, Pool, Staffing, SystemConfig};
pub use dist::{rate_moments, RateDistribution, RateMoments};
pub use error::{HetqError, Result};
pub use system::{drift_beta, drift_beta_finite, sample_rates, RealizedSystem};
