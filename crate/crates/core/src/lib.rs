pub mod bmat;
pub mod index;
pub mod model;
pub mod nullifier;
pub mod tuner;
