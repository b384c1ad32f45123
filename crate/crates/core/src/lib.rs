pub mod assets;
pub mod balancer;
pub mod dtree;
pub mod error;
pub mod lsgen;
pub mod network;
pub mod planner;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::Scenario;
