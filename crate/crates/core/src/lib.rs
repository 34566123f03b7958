pub mod bounds;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod recourse;
pub mod training;
