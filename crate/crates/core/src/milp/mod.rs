//! Mixed-integer model container, formulation builder and solution readers.

pub mod build;
pub mod extract;
pub mod model;

pub use build::{build, AbsTerm, BuildConfig, BuildError, BuildReport, BuiltModel, Formulation, LeafVars, PredictionVars};
pub use extract::{assignment_from_tree, extract_tree, solution_predictions, ExtractError};
pub use model::{MilpModel, ObjectiveSense, Row, Sense, VarId, VarKind, Variable, Violation};
