pub mod error;
pub mod field;
pub mod matrix;
pub mod network;
pub mod code;
pub mod distance;
pub mod decoder;
pub mod sum_code;
pub mod identity_code;
pub mod capacity;
pub mod gradient;
