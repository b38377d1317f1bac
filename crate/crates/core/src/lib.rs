//! Discovery of sparse linear constraints `Σ ξ_i Θ_i(x(t)) = 0` among the
//! solution components of an ODE initial-value problem.
//!
//! The pipeline integrates the system onto a uniform grid
//! ([`integrator`]), evaluates a library of candidate functions on it
//! ([`library`]), repeatedly reduces the Gram matrix of that library to
//! prune coefficients that must vanish ([`nullspace`]), and reads the
//! surviving constraint space off the final reduced form ([`miner`]).

pub mod cli;
pub mod config;
pub mod expr;
pub mod integrator;
pub mod library;
pub mod miner;
pub mod models;
pub mod nullspace;
pub mod report;
pub mod system;

pub use config::RunConfig;
pub use expr::{parse_expression, Expr};
pub use integrator::{integrate, IntegratorOptions, IvpProblem, SolutionGrid};
pub use library::{
    build_theta, generate_monomial_exponents, term_to_string, CandidateTerm, LibrarySpec,
    ThetaMatrix, UnaryFamily, UnaryKind,
};
pub use miner::{
    compare_across_initial_conditions, find_constraints, reduce_library, verify_constraints,
    ConstraintReport, MineError, MinerConfig,
};
pub use nullspace::{
    forced_zero_columns, general_solution, gram, nullspace_svd, rref, subspace_distance,
    GeneralSolution, RrefOutcome,
};
pub use system::OdeSystem;
