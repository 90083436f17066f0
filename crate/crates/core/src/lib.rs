//! Exact fair division of indivisible goods under feasibility constraints.

pub mod bobw;
pub mod copies;
pub mod error;
pub mod fairness;
pub mod feasibility;
pub mod fixtures;
pub mod fuzz;
pub mod instance;
pub mod io;
pub mod lp;
pub mod mnw;
pub mod pareto;
pub mod rational;

pub use copies::{collapse_copies, expand_copies, expand_copies_balanced, CopiesView};
pub use error::{Error, Result};
pub use feasibility::{Category, Constraint, FeasibilitySet, DEFAULT_CAP};
pub use instance::{utilities, Allocation, Bundle, Instance, MnwKey, UtilityProfile, MAX_GOODS};
pub use io::Problem;
pub use mnw::{round_robin, solve_mnw, solve_mnw_capped, MnwResult, SearchStats, SolveMode};
pub use rational::Rational;
