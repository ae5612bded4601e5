//! Closed-form backward induction through the four stages: the user split,
//! the simultaneous-move price equilibrium, the content provider's
//! constrained best response, and the transit-fee choice, assembled into a
//! full equilibrium report.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    check_full_coverage, cp_payoff, isp_payoffs, MarketParams, MarketSplit, PayoffVector,
    StrategyProfile,
};

/// Region of the transit fee that determines the content provider's best
/// response. Adjacent regions agree at their shared breakpoints
/// (`-5t/4`, `0`, `5t/4`); exact breakpoints report the lower region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `p_tilde <= -5t/4`
    LowTransit,
    /// `-5t/4 <= p_tilde <= 0`
    MidLowTransit,
    /// `0 <= p_tilde <= 5t/4`
    MidHighTransit,
    /// `p_tilde >= 5t/4`
    HighTransit,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Branch::LowTransit => "low_transit",
            Branch::MidLowTransit => "mid_low_transit",
            Branch::MidHighTransit => "mid_high_transit",
            Branch::HighTransit => "high_transit",
        };
        f.write_str(s)
    }
}

/// The content provider's equilibrium subscription fees for one transit fee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpBestResponse {
    pub branch: Branch,
    pub delta_q: f64,
    pub q_n: f64,
    pub q_nn: f64,
}

/// The four candidate regions of the content provider's constrained problem,
/// each with one subscription fee pinned at a coverage bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSetId {
    Set1,
    Set2,
    Set3,
    Set4,
}

/// Which fee is pinned at which coverage bound inside a candidate region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindingFee {
    /// `q_nn` at its bound in the `delta_q >= p_tilde` regime.
    QNnAtU,
    /// `q_n` at its bound in the `delta_q >= p_tilde` regime.
    QNAtU,
    /// `q_nn` at its bound in the `delta_q <= p_tilde` regime.
    QNnAtUPrime,
    /// `q_n` at its bound in the `delta_q <= p_tilde` regime.
    QNAtUPrime,
}

/// One candidate region, its first-order-condition solution, and whether the
/// region can ever host an interior optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub id: CandidateSetId,
    pub binding: BindingFee,
    /// Stationary point of the payoff along the region's binding surface.
    pub foc_delta_q: f64,
    /// The stationary point, if it satisfies the region's own condition.
    pub interior_delta_q: Option<f64>,
    /// Regions 1 and 4: the stationary point violates the region's condition
    /// for every transit fee, so no interior optimum exists there.
    pub eliminated: bool,
}

impl CandidateSet {
    /// The region's condition on `(p_tilde, delta_q)`.
    pub fn admits(&self, p_tilde: f64, delta_q: f64) -> bool {
        match self.id {
            CandidateSetId::Set1 => -5.0 * delta_q <= p_tilde && p_tilde <= delta_q,
            CandidateSetId::Set2 => p_tilde <= delta_q.min(-5.0 * delta_q),
            CandidateSetId::Set3 => p_tilde >= delta_q.max(-5.0 * delta_q),
            CandidateSetId::Set4 => delta_q <= p_tilde && p_tilde <= -5.0 * delta_q,
        }
    }

    /// Strict-interior version of [`CandidateSet::admits`], used by the
    /// oracle to verify that regions 1 and 4 never beat the best response.
    pub fn admits_strictly(&self, p_tilde: f64, delta_q: f64) -> bool {
        match self.id {
            CandidateSetId::Set1 => -5.0 * delta_q < p_tilde && p_tilde < delta_q,
            CandidateSetId::Set2 => p_tilde < delta_q.min(-5.0 * delta_q),
            CandidateSetId::Set3 => p_tilde > delta_q.max(-5.0 * delta_q),
            CandidateSetId::Set4 => delta_q < p_tilde && p_tilde < -5.0 * delta_q,
        }
    }
}

/// How the transit fee is selected when solving the whole game.
///
/// Every `p_tilde >= 5t/4` yields the same payoff for the non-neutral ISP;
/// `MinimalPlateau` picks the infimum `5t/4`, which is also the point of
/// that set the content provider prefers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitFeePolicy {
    MinimalPlateau,
    Given(f64),
}

/// The assembled sub-game perfect equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub params: MarketParams,
    pub fees: StrategyProfile,
    pub split: MarketSplit,
    pub payoffs: PayoffVector,
    pub branch: Branch,
    /// Analytic check: every user keeps nonnegative utility at her ISP.
    pub coverage_isp: bool,
    /// Analytic check: every connected user keeps the subscription.
    pub coverage_cp: bool,
    /// The sufficient condition `v >= 2t + c`. May be false while the
    /// analytic checks still pass; it is the flag sweeps should watch.
    pub coverage_sufficient: bool,
    /// True when the transit fee sits on the payoff-flat region `>= 5t/4`.
    pub p_tilde_plateau: bool,
}

/// Stage 3: the unique price equilibrium of the concave simultaneous-move
/// game, given the transit fee and subscription fees. Returns
/// `(p_n, p_nn)`:
/// `p_nn = t + c - delta_q/3 - 2 p_tilde/3`, `p_n = t + c + delta_q/3 - p_tilde/3`.
pub fn stage3_prices(
    params: &MarketParams,
    p_tilde: f64,
    q_n: f64,
    q_nn: f64,
) -> (f64, f64) {
    let delta_q = q_nn - q_n;
    let base = params.t + params.c;
    let p_nn = base - delta_q / 3.0 - 2.0 * p_tilde / 3.0;
    let p_n = base + delta_q / 3.0 - p_tilde / 3.0;
    (p_n, p_nn)
}

/// Stage 4 after substituting the stage-3 prices: the reduced-form shares
/// `n_n = 1/2 + (delta_q - p_tilde)/(6t)`, clamped into a full-coverage
/// split with every connected user subscribing. A raw share on or outside
/// the boundary clears the `interior` flag.
pub fn stage4_shares_reduced(
    params: &MarketParams,
    p_tilde: f64,
    q_n: f64,
    q_nn: f64,
) -> MarketSplit {
    let delta_q = q_nn - q_n;
    let x_raw = 0.5 + (delta_q - p_tilde) / (6.0 * params.t);
    MarketSplit::full_coverage(x_raw)
}

/// Enumerates the four candidate regions at a given transit fee.
///
/// The stationary points along the binding surfaces are
/// `p_tilde - t`, `p_tilde + 3t/2`, `p_tilde - 3t/2`, and `p_tilde + t`
/// for regions 1 through 4; the first and fourth violate their own region
/// condition for every transit fee and are flagged eliminated.
pub fn candidate_sets(params: &MarketParams, p_tilde: f64) -> [CandidateSet; 4] {
    let t = params.t;
    let specs = [
        (CandidateSetId::Set1, BindingFee::QNnAtU, p_tilde - t, true),
        (CandidateSetId::Set2, BindingFee::QNAtU, p_tilde + 1.5 * t, false),
        (CandidateSetId::Set3, BindingFee::QNnAtUPrime, p_tilde - 1.5 * t, false),
        (CandidateSetId::Set4, BindingFee::QNAtUPrime, p_tilde + t, true),
    ];
    specs.map(|(id, binding, foc, eliminated)| {
        let mut set = CandidateSet {
            id,
            binding,
            foc_delta_q: foc,
            interior_delta_q: None,
            eliminated,
        };
        if set.admits(p_tilde, foc) {
            set.interior_delta_q = Some(foc);
        }
        debug_assert!(!(eliminated && set.interior_delta_q.is_some()));
        set
    })
}

/// Stage 2: the content provider's best response to a transit fee.
///
/// One subscription fee is anchored at `v* - t/2` and the gap follows the
/// region of `p_tilde`; see [`Branch`] for the regions.
pub fn cp_best_response(params: &MarketParams, p_tilde: f64) -> CpBestResponse {
    let t = params.t;
    let anchor = params.v_star - t / 2.0;
    let (branch, delta_q) = if p_tilde <= -1.25 * t {
        (Branch::LowTransit, p_tilde + 1.5 * t)
    } else if p_tilde <= 0.0 {
        (Branch::MidLowTransit, -p_tilde / 5.0)
    } else if p_tilde <= 1.25 * t {
        (Branch::MidHighTransit, -p_tilde / 5.0)
    } else {
        (Branch::HighTransit, p_tilde - 1.5 * t)
    };
    let (q_n, q_nn) = match branch {
        // Low regions anchor the neutral-side fee, high regions the other.
        Branch::LowTransit | Branch::MidLowTransit => (anchor, anchor + delta_q),
        Branch::MidHighTransit | Branch::HighTransit => (anchor - delta_q, anchor),
    };
    CpBestResponse {
        branch,
        delta_q,
        q_n,
        q_nn,
    }
}

/// Stage 1: the non-neutral ISP's anticipated payoff as a function of the
/// transit fee, after the lower stages respond:
/// `t/8` below `-5t/4`, `(t + 2 p_tilde/5)(1/2 + p_tilde/(5t))` in between,
/// and the plateau `9t/8` above `5t/4`.
pub fn stage1_payoff(params: &MarketParams, p_tilde: f64) -> f64 {
    let t = params.t;
    if p_tilde <= -1.25 * t {
        t / 8.0
    } else if p_tilde < 1.25 * t {
        (t + 0.4 * p_tilde) * (0.5 + p_tilde / (5.0 * t))
    } else {
        1.125 * t
    }
}

/// Solves the whole game by backward induction and assembles the report.
///
/// Coverage violations and non-interior splits are reported through flags,
/// never as errors: the closed forms still evaluate, and sweeps are allowed
/// to walk into regions where the model's assumptions break.
pub fn solve_spe(params: &MarketParams, policy: TransitFeePolicy) -> EquilibriumReport {
    let p_tilde = match policy {
        TransitFeePolicy::MinimalPlateau => 1.25 * params.t,
        TransitFeePolicy::Given(value) => value,
    };
    let response = cp_best_response(params, p_tilde);
    let (p_n, p_nn) = stage3_prices(params, p_tilde, response.q_n, response.q_nn);
    let fees = StrategyProfile {
        p_tilde,
        q_n: response.q_n,
        q_nn: response.q_nn,
        p_n,
        p_nn,
    };
    let split = stage4_shares_reduced(params, p_tilde, response.q_n, response.q_nn);
    let (pi_n, pi_nn) = isp_payoffs(params, &fees, &split);
    let pi_g = cp_payoff(&fees, &split);
    let (coverage_isp, coverage_cp) = check_full_coverage(params, &fees, &split);
    EquilibriumReport {
        params: *params,
        fees,
        split,
        payoffs: PayoffVector { pi_n, pi_nn, pi_g },
        branch: response.branch,
        coverage_isp,
        coverage_cp,
        coverage_sufficient: params.coverage_sufficient(),
        p_tilde_plateau: p_tilde >= 1.25 * params.t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MarketParams;

    const TOL: f64 = 1e-9;

    fn canonical() -> MarketParams {
        MarketParams::new(3.5, 2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn stage3_examples() {
        let p = canonical();
        // Canonical: anchor 1.5, gap -1/4.
        let (p_n, p_nn) = stage3_prices(&p, 1.25, 1.75, 1.5);
        assert!((p_n - 1.5).abs() < TOL);
        assert!((p_nn - 1.25).abs() < TOL);

        // Neutral symmetric baseline.
        let (p_n, p_nn) = stage3_prices(&p, 0.0, 1.5, 1.5);
        assert!((p_n - 2.0).abs() < TOL);
        assert!((p_nn - 2.0).abs() < TOL);

        let zero_cost = MarketParams::new(3.5, 2.0, 1.0, 0.0).unwrap();
        let (p_n, p_nn) = stage3_prices(&zero_cost, 1.0, 1.5, 1.5);
        assert!((p_n - 2.0 / 3.0).abs() < TOL);
        assert!((p_nn - 1.0 / 3.0).abs() < TOL);
    }

    #[test]
    fn stage4_examples() {
        let p = canonical();
        let balanced = stage4_shares_reduced(&p, 0.7, 1.5, 2.2);
        assert!((balanced.n_n - 0.5).abs() < TOL);
        assert!(balanced.interior);

        let canonical_split = stage4_shares_reduced(&p, 1.25, 1.75, 1.5);
        assert!((canonical_split.n_n - 0.25).abs() < TOL);
        assert!((canonical_split.n_nn - 0.75).abs() < TOL);
        assert_eq!(canonical_split.n_sub_nn, canonical_split.n_nn);

        // Gap of -3t lands the raw share exactly on the boundary.
        let corner = stage4_shares_reduced(&p, 1.5, 1.5, 0.0);
        assert_eq!(corner.n_n, 0.0);
        assert!(!corner.interior);
    }

    #[test]
    fn candidate_set_examples() {
        let p = canonical();
        let t = p.t;

        // Region 1's stationary point violates its own condition for any p_tilde.
        for p_tilde in [-3.0, -1.0, 0.0, 0.8, 2.5] {
            let sets = candidate_sets(&p, p_tilde);
            assert!(sets[0].eliminated);
            assert_eq!(sets[0].interior_delta_q, None);
            assert!((sets[0].foc_delta_q - (p_tilde - t)).abs() < TOL);
            assert!(!sets[0].admits(p_tilde, sets[0].foc_delta_q));
            assert!(sets[3].eliminated);
            assert_eq!(sets[3].interior_delta_q, None);
            assert!(!sets[3].admits(p_tilde, sets[3].foc_delta_q));
        }

        // p_tilde = -2t: region 2 contains its stationary point -t/2.
        let sets = candidate_sets(&p, -2.0 * t);
        assert_eq!(sets[1].interior_delta_q, Some(-0.5 * t));
        assert!(sets[1].admits(-2.0 * t, -0.5 * t));

        // p_tilde = 2t: region 3 contains its stationary point t/2.
        let sets = candidate_sets(&p, 2.0 * t);
        assert_eq!(sets[2].interior_delta_q, Some(0.5 * t));
        assert!(sets[2].admits(2.0 * t, 0.5 * t));

        // Inside the middle regions neither 2 nor 3 has an interior optimum.
        let sets = candidate_sets(&p, 0.5 * t);
        assert_eq!(sets[1].interior_delta_q, None);
        assert_eq!(sets[2].interior_delta_q, None);
    }

    #[test]
    fn cp_best_response_examples() {
        let p = canonical();

        let r = cp_best_response(&p, 0.0);
        assert_eq!(r.branch, Branch::MidLowTransit);
        assert!((r.delta_q).abs() < TOL);
        assert!((r.q_n - 1.5).abs() < TOL);
        assert!((r.q_nn - 1.5).abs() < TOL);

        let r = cp_best_response(&p, 1.25);
        assert!((r.delta_q + 0.25).abs() < TOL);
        assert!((r.q_nn - 1.5).abs() < TOL);
        assert!((r.q_n - 1.75).abs() < TOL);

        let r = cp_best_response(&p, -2.0);
        assert_eq!(r.branch, Branch::LowTransit);
        assert!((r.delta_q + 0.5).abs() < TOL);
        assert!((r.q_n - 1.5).abs() < TOL);
        assert!((r.q_nn - 1.0).abs() < TOL);
    }

    #[test]
    fn cp_best_response_continuity_at_breakpoints() {
        for t in [0.5, 1.0, 2.0] {
            let p = MarketParams::new(6.0 * t, 2.0 * t, t, t).unwrap();
            let eps = 1e-12 * t;
            for bp in [-1.25 * t, 0.0, 1.25 * t] {
                let below = cp_best_response(&p, bp - eps);
                let at = cp_best_response(&p, bp);
                let above = cp_best_response(&p, bp + eps);
                assert!((below.delta_q - at.delta_q).abs() < 1e-11 * t);
                assert!((above.delta_q - at.delta_q).abs() < 1e-11 * t);
                assert!((below.q_n - at.q_n).abs() < 1e-11 * t);
                assert!((above.q_nn - at.q_nn).abs() < 1e-11 * t);
            }
        }
    }

    #[test]
    fn stage1_examples() {
        let p = canonical();
        assert!((stage1_payoff(&p, -1.25) - 0.125).abs() < TOL);
        assert!((stage1_payoff(&p, 1.25) - 1.125).abs() < TOL);
        assert!((stage1_payoff(&p, 0.0) - 0.5).abs() < TOL);
        // Deep into each flat region the value does not move.
        assert_eq!(stage1_payoff(&p, -7.0), stage1_payoff(&p, -1.3));
        assert_eq!(stage1_payoff(&p, 9.0), stage1_payoff(&p, 1.26));
    }

    #[test]
    fn stage1_continuity_at_breakpoints() {
        for t in [0.5, 1.0, 2.0] {
            let mid = |x: f64| (t + 0.4 * x) * (0.5 + x / (5.0 * t));
            assert!((mid(-1.25 * t) - t / 8.0).abs() < 1e-12 * t);
            assert!((mid(1.25 * t) - 1.125 * t).abs() < 1e-12 * t);
        }
    }

    #[test]
    fn solve_canonical() {
        let p = canonical();
        let r = solve_spe(&p, TransitFeePolicy::MinimalPlateau);
        assert!((r.fees.p_tilde - 1.25).abs() < TOL);
        assert!((r.fees.q_n - 1.75).abs() < TOL);
        assert!((r.fees.q_nn - 1.5).abs() < TOL);
        assert!((r.fees.p_n - 1.5).abs() < TOL);
        assert!((r.fees.p_nn - 1.25).abs() < TOL);
        assert!((r.split.n_n - 0.25).abs() < TOL);
        assert!((r.payoffs.pi_n - 0.125).abs() < TOL);
        assert!((r.payoffs.pi_nn - 1.125).abs() < TOL);
        assert!((r.payoffs.pi_g - 0.625).abs() < TOL);
        assert!(r.p_tilde_plateau);
        assert!(r.coverage_isp && r.coverage_cp);
    }

    #[test]
    fn solve_neutral_baseline() {
        let p = canonical();
        let r = solve_spe(&p, TransitFeePolicy::Given(0.0));
        assert_eq!(r.split.n_n, 0.5);
        assert_eq!(r.split.n_nn, 0.5);
        assert!((r.fees.p_n - 2.0).abs() < TOL);
        assert!((r.fees.p_nn - 2.0).abs() < TOL);
        assert!((r.fees.q_n - 1.5).abs() < TOL);
        assert!((r.fees.q_nn - 1.5).abs() < TOL);
        assert!(!r.p_tilde_plateau);
    }

    #[test]
    fn solve_deep_plateau() {
        let p = canonical();
        let r = solve_spe(&p, TransitFeePolicy::Given(10.0));
        assert!((r.payoffs.pi_nn - 1.125).abs() < TOL);
        assert!((r.payoffs.pi_g + 8.125).abs() < TOL);
        assert!((r.fees.p_n - 1.5).abs() < TOL);
        assert!((r.split.n_n - 0.25).abs() < TOL);
        assert!(r.p_tilde_plateau);
    }

    #[test]
    fn solve_flags_weak_coverage() {
        // v below 2t + c: the report is still produced, with the sufficiency
        // flag down. The analytic boundary check can still pass (the
        // condition is sufficient, not necessary).
        let p = MarketParams::new(2.0, 2.0, 1.0, 1.0).unwrap();
        let r = solve_spe(&p, TransitFeePolicy::MinimalPlateau);
        assert!(!r.coverage_sufficient);
        assert!(r.coverage_isp);

        // Low enough valuation fails the analytic check too.
        let p = MarketParams::new(1.5, 2.0, 1.0, 1.0).unwrap();
        let r = solve_spe(&p, TransitFeePolicy::MinimalPlateau);
        assert!(!r.coverage_sufficient);
        assert!(!r.coverage_isp);
    }
}
