pub mod dynamics;
pub mod error;
pub mod explorer;
pub mod meta_graph;
pub mod reachability;
pub mod sim;
pub mod world;

pub use error::{Error, Result};
