//! Optimal fairness-regularized decision trees via mixed-integer programming,
//! with disparate impact and disparate treatment audits.

pub mod cli;
pub mod data;
pub mod fairness;
pub mod milp;
pub mod solver;
pub mod training;
pub mod tree;
