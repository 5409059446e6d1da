//! Transit network design and frequency setting: choose which loops run and
//! with how many buses so that riders save the most time over walking.

pub mod fixtures;
mod flow;
mod instance;
mod oracle;
mod routes;
mod solve;

pub use flow::{assign, Assignment};
pub use instance::{route_capacity, walk_time, Network, NetworkInstance, Node, WaitingRule};
pub use oracle::{oracle_solve, ORACLE_BUDGET, ORACLE_MAX_FLEET, ORACLE_MAX_PAIRS, ORACLE_MAX_STOPS};
pub use routes::{enumerate_routes, CandidateRoute};
pub use solve::{
    evaluate_allocation, solve_instance, AllocationKey, DemandVector, RouteAllocation, RouteDesign, Stage1Flow, Stage2Flow,
};
