//! Surface-code memory on lattices with permanently faulty qubits, plus Bell-pair
//! purification with encoded blocks.

pub mod circuit;
pub mod codes;
pub mod decode_bench;
pub mod decoder;
pub mod error;
pub mod lattice;
pub mod metrics;
pub mod noise;
pub mod parallel;
pub mod pauli;
pub mod purification;
pub mod rng;
pub mod scheduler;
pub mod tableau;

pub use error::{Error, Result};
