pub mod error;
pub mod linalg;
pub mod mc;
pub mod sampling;
pub mod special;
pub mod moments;
pub mod estimators;
pub mod risk;
pub mod convergence;
pub mod discriminant;
pub mod cli;
