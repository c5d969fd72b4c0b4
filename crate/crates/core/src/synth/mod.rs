//! A simulated courier city: AOIs, courier habits, and a greedy dispatch
//! policy that produces mixed delivery/pickup days with known routes.

pub mod emit;
pub mod sim;
pub mod world;

pub use emit::{emit_dataset, generate, simulate, split_by_date, DatasetStats, SplitReport};
pub use sim::{run_policy, simulate_day, Policy};
pub use world::{generate_world, CourierProfile, World, WorldConfig};
