//! Solver library for multi-stage joint deployment of plug-in charging
//! stations and battery-swapping stations supporting an electrified
//! ride-hailing fleet.
//!
//! The pipeline has two halves. [`optimizer::solve_original`] finds a
//! feasible solution of the nonconvex planning/operations program (a lower
//! bound on the optimal profit). [`bound`] relaxes and decomposes the
//! problem into per-(zone, stage) subproblems whose exact maxima assemble a
//! certified upper bound, so the optimality gap of the feasible solution is
//! measurable. Everything in between — demand, EV movement chains, queueing
//! at both facility types, fleet accounting — lives in the small modules
//! below and is reused by both halves.

pub mod bound;
pub mod chargeflow;
pub mod cli;
pub mod economics;
pub mod market;
pub mod model;
pub mod numerics;
pub mod optimizer;
#[cfg(test)]
pub(crate) mod testutil;
pub mod queues;
pub mod report;
pub mod simcheck;

pub use model::{
    AugmentedDecision, ChargeStationSpec, CumulativePlan, MarketState, OperationalDecision,
    PlanningDecision, Scenario, SwapStationSpec,
};

/// Positive floor standing in for strict inequalities (`N^ve > 0`, `k > 0`).
pub const EPS_POS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("unstable queue: utilization {rho} >= 1")]
    UnstableQueue { rho: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("transition matrix is reducible; no positive stationary distribution")]
    ReducibleChain,
    #[error("singular linear system")]
    Singular,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code convention: 1 = input error, 2 = infeasibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::UnstableQueue { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
