//! Equilibrium solver for a four-stage pricing game on a hotelling line.
//!
//! Two ISPs sit at the ends of the unit interval and compete for a continuum
//! of users. One ISP is neutral; the other charges a content provider a
//! per-subscriber transit fee for reaching its users. The content provider
//! sells subscriptions and may price the two user pools differently. Play
//! proceeds in four stages: the transit fee, then the subscription fees, then
//! the connection fees, then user choices. The crate computes the sub-game
//! perfect equilibrium by backward induction in closed form and verifies the
//! closed forms against deliberately simple brute-force oracles:
//!
//! - [`model`] holds the primitive types and raw payoff/utility arithmetic.
//! - [`equilibrium`] solves the stages in closed form and assembles the
//!   equilibrium report.
//! - [`oracle`] re-derives every stage by discrete-user simulation, grid
//!   best-response iteration, and exhaustive grid argmax, sharing no code
//!   path with the closed forms it checks.

pub mod equilibrium;
pub mod model;
pub mod oracle;

pub use equilibrium::{
    candidate_sets, cp_best_response, solve_spe, stage1_payoff, stage3_prices,
    stage4_shares_reduced, Branch, CandidateSet, CpBestResponse, EquilibriumReport,
    TransitFeePolicy,
};
pub use model::{
    check_full_coverage, content_utility, coverage_bounds, cp_payoff, farthest_subscriber,
    indifferent_user, internet_utility, isp_payoffs, total_utility, CoverageBounds,
    CoverageRegime, Isp, MarketParams, MarketSplit, PayoffVector, StrategyProfile,
};
pub use oracle::{
    cp_argmax_oracle, price_nash_oracle, simulate_users, touches_upper_bound,
    transit_fee_argmax_oracle, verify, CpArgmax, GridSpec, OracleVerdict, PriceSearch,
    TransitFeeArgmax, VerifyConfig, VerifyStage,
};

/// Errors shared across the solver and oracle modules.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("market parameters must be finite and satisfy t > 0, c >= 0: {0}")]
    InvalidParams(String),
    #[error("user location {0} lies outside the unit interval")]
    LocationOutOfRange(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),
    #[error("no grid point satisfies the coverage constraints: {0}")]
    EmptyFeasibleSet(String),
}

pub type Result<T> = std::result::Result<T, Error>;
