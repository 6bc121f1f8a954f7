pub mod bounds;
pub mod fp;
pub mod harness;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod transceiver;
