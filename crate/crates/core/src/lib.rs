pub mod channel;
pub mod ckm;
pub mod demo;
pub mod heuristics;
pub mod metrics;
pub mod planner;
pub mod rounding;
pub mod sca;
pub mod scene;
