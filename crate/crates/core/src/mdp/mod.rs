//! Finite tabular MDPs: policies, exact values, visitation distributions,
//! and optimal / softmax-optimal solutions.

mod optimal;
pub mod simplex;
mod soft;
mod types;
mod values;

pub use optimal::{solve_optimal, OptimalSolution, DEFAULT_SOLVER_TOL};
pub use simplex::h_matrix;
pub use soft::{discounted_entropy, soft_policy_values, solve_soft_optimal, SoftValueBundle};
pub(crate) use soft::{soft_policy_values_with_log, soft_values_and_visitation};
pub use types::{softmax_policy, PolicyLogits, PolicyTable, StateDistribution, TabularMdp};
pub use values::{discounted_state_distribution, policy_values, ValueBundle};
