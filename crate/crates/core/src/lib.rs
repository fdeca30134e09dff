pub mod detectors;
pub mod edges;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod lines;
pub mod session;
pub mod stabilize;
pub mod synth;
pub mod transport;
pub mod cli;
