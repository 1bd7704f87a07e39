pub mod arm;
pub mod chain;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod lower_level;
pub mod path_error;
pub mod scenario;
pub mod solver;
pub mod trajectory;
pub mod validate;
