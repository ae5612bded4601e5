//! Market primitives: the hotelling line, fee profiles, user utilities, and
//! the raw payoff arithmetic. Everything here is a pure function of its
//! arguments; equilibrium logic lives elsewhere.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The two platforms, at opposite ends of the unit interval.
///
/// `N` is the neutral ISP at location 0; `Nn` is the non-neutral ISP at
/// location 1, which charges the content provider a per-subscriber transit
/// fee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Isp {
    N,
    Nn,
}

/// Primitive constants defining one market instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Common user valuation for Internet access.
    pub v: f64,
    /// Common user valuation for the content provider's service.
    pub v_star: f64,
    /// Marginal transport cost along the hotelling line; strictly positive.
    pub t: f64,
    /// ISP per-connection cost; nonnegative.
    pub c: f64,
}

impl MarketParams {
    pub fn new(v: f64, v_star: f64, t: f64, c: f64) -> Result<Self> {
        if !(v.is_finite() && v_star.is_finite() && t.is_finite() && c.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "non-finite field in (v={v}, v_star={v_star}, t={t}, c={c})"
            )));
        }
        if t <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "transport cost must be strictly positive, got t={t}"
            )));
        }
        if c < 0.0 {
            return Err(Error::InvalidParams(format!(
                "connection cost must be nonnegative, got c={c}"
            )));
        }
        Ok(Self { v, v_star, t, c })
    }

    /// Sufficient condition for every user to buy Internet access at the
    /// equilibrium prices: `v >= 2t + c`.
    pub fn coverage_sufficient(&self) -> bool {
        self.v >= 2.0 * self.t + self.c
    }
}

/// All five fees of the game, in the order they are set.
///
/// Negative fees are legal everywhere: they are subsidies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    /// Per-subscriber transit fee the content provider pays the non-neutral ISP.
    pub p_tilde: f64,
    /// Subscription fee charged to the neutral ISP's users.
    pub q_n: f64,
    /// Subscription fee charged to the non-neutral ISP's users.
    pub q_nn: f64,
    /// Connection fee of the neutral ISP.
    pub p_n: f64,
    /// Connection fee of the non-neutral ISP.
    pub p_nn: f64,
}

impl StrategyProfile {
    /// Subscription-fee gap `q_nn - q_n`.
    pub fn delta_q(&self) -> f64 {
        self.q_nn - self.q_n
    }
}

/// User shares per ISP, plus the subscriber subsets.
///
/// Under full market coverage `n_n + n_nn == 1` and `n_sub_* == n_*`; the
/// discrete-user oracle may return degenerate splits (users opting out) in
/// which case the shares sum to less than one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketSplit {
    /// Fraction of users connecting through the neutral ISP.
    pub n_n: f64,
    /// Fraction of users connecting through the non-neutral ISP.
    pub n_nn: f64,
    /// Fraction connecting through N and subscribing to the content provider.
    pub n_sub_n: f64,
    /// Fraction connecting through NN and subscribing.
    pub n_sub_nn: f64,
    /// True iff the unclamped indifference point lay strictly inside (0, 1);
    /// the closed-form stage solvers are only valid for interior splits.
    pub interior: bool,
}

impl MarketSplit {
    /// Builds the full-coverage split from a raw indifference point: clamps
    /// into [0, 1], takes the complement exactly, and marks every connected
    /// user as a subscriber.
    pub fn full_coverage(x_raw: f64) -> Self {
        let n_n = x_raw.clamp(0.0, 1.0);
        let n_nn = 1.0 - n_n;
        Self {
            n_n,
            n_nn,
            n_sub_n: n_n,
            n_sub_nn: n_nn,
            interior: x_raw > 0.0 && x_raw < 1.0,
        }
    }
}

/// Payoffs of the three strategic players for one fully specified outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffVector {
    pub pi_n: f64,
    pub pi_nn: f64,
    pub pi_g: f64,
}

/// Which pair of subscription-fee upper bounds applies, by the sign of
/// `delta_q - p_tilde` (equivalently, which ISP holds the larger share).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverageRegime {
    /// `delta_q >= p_tilde`: the neutral ISP serves at least half the line.
    DeltaQGeqPtilde,
    /// `delta_q <= p_tilde`: the non-neutral ISP serves at least half.
    DeltaQLeqPtilde,
}

/// Upper bounds on the subscription fees under which every connected user
/// still subscribes.
///
/// `u_q_n`/`u_q_nn` apply in the `DeltaQGeqPtilde` regime and
/// `u_prime_q_n`/`u_prime_q_nn` in the other; all four are always filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageBounds {
    pub u_q_n: f64,
    pub u_q_nn: f64,
    pub u_prime_q_n: f64,
    pub u_prime_q_nn: f64,
    pub regime: CoverageRegime,
}

impl CoverageBounds {
    /// The (bound on `q_n`, bound on `q_nn`) pair active in this regime.
    pub fn active(&self) -> (f64, f64) {
        match self.regime {
            CoverageRegime::DeltaQGeqPtilde => (self.u_q_n, self.u_q_nn),
            CoverageRegime::DeltaQLeqPtilde => (self.u_prime_q_n, self.u_prime_q_nn),
        }
    }

    /// True iff the fee pair satisfies the regime's bounds.
    pub fn admits(&self, q_n: f64, q_nn: f64) -> bool {
        let (b_n, b_nn) = self.active();
        q_n <= b_n && q_nn <= b_nn
    }
}

fn check_location(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::LocationOutOfRange(x))
    }
}

/// Utility a user at `x` derives from the Internet connection alone:
/// `v - t * dist - p_j`, with `dist` the distance to the chosen ISP.
pub fn internet_utility(
    params: &MarketParams,
    isp: Isp,
    x: f64,
    fees: &StrategyProfile,
) -> Result<f64> {
    check_location(x)?;
    let (dist, price) = match isp {
        Isp::N => (x, fees.p_n),
        Isp::Nn => (1.0 - x, fees.p_nn),
    };
    Ok(params.v - params.t * dist - price)
}

/// Utility from the content subscription: `v* - t * min(x, 1 - x) - q_j`.
///
/// The distance term is symmetric in `x` and the same for both ISPs; only the
/// subscription fee differs.
pub fn content_utility(
    params: &MarketParams,
    isp: Isp,
    x: f64,
    fees: &StrategyProfile,
) -> Result<f64> {
    check_location(x)?;
    let q = match isp {
        Isp::N => fees.q_n,
        Isp::Nn => fees.q_nn,
    };
    Ok(params.v_star - params.t * x.min(1.0 - x) - q)
}

/// Total utility of a connected user, with or without the subscription.
/// The non-participation payoff 0 is the caller's comparison baseline.
pub fn total_utility(
    params: &MarketParams,
    isp: Isp,
    x: f64,
    fees: &StrategyProfile,
    buys_content: bool,
) -> Result<f64> {
    let base = internet_utility(params, isp, x, fees)?;
    if buys_content {
        Ok(base + content_utility(params, isp, x, fees)?)
    } else {
        Ok(base)
    }
}

/// ISP payoffs for a given outcome: the neutral ISP earns its connection
/// margin; the non-neutral ISP additionally collects the transit fee on its
/// subscribers (`n_sub_nn`, not `n_nn`).
pub fn isp_payoffs(
    params: &MarketParams,
    fees: &StrategyProfile,
    split: &MarketSplit,
) -> (f64, f64) {
    let pi_n = (fees.p_n - params.c) * split.n_n;
    let pi_nn = (fees.p_nn - params.c) * split.n_nn + fees.p_tilde * split.n_sub_nn;
    (pi_n, pi_nn)
}

/// Content-provider payoff: subscription revenue net of the transit fee paid
/// on the non-neutral side.
pub fn cp_payoff(fees: &StrategyProfile, split: &MarketSplit) -> f64 {
    (fees.q_nn - fees.p_tilde) * split.n_sub_nn + fees.q_n * split.n_sub_n
}

/// Location of the user indifferent between the two ISPs (both fees and
/// subscriptions included):
/// `x = 1/2 + (p_nn - p_n + q_nn - q_n) / (2t)`.
///
/// Returns the raw, unclamped value together with `0 <= x <= 1`. Callers
/// clamp to form a [`MarketSplit`]; the raw value is kept so stage solvers
/// can detect when their interior-solution assumption fails.
pub fn indifferent_user(params: &MarketParams, fees: &StrategyProfile) -> (f64, bool) {
    let x = 0.5 + (fees.p_nn - fees.p_n + fees.delta_q()) / (2.0 * params.t);
    (x, (0.0..=1.0).contains(&x))
}

/// Subscription-fee upper bounds for full content coverage, given the
/// transit fee and the fee gap.
///
/// In the `DeltaQGeqPtilde` regime the binding pair is
/// `q_n <= v* - t/2` and `q_nn <= v* - t/2 + (delta_q - p_tilde)/6`; the
/// primed pair mirrors it for the other regime. Ties (`delta_q == p_tilde`)
/// make the two regimes coincide and report `DeltaQGeqPtilde`.
pub fn coverage_bounds(params: &MarketParams, p_tilde: f64, delta_q: f64) -> CoverageBounds {
    let base = params.v_star - params.t / 2.0;
    let shift = (delta_q - p_tilde) / 6.0;
    CoverageBounds {
        u_q_n: base,
        u_q_nn: base + shift,
        u_prime_q_n: base - shift,
        u_prime_q_nn: base,
        regime: if delta_q >= p_tilde {
            CoverageRegime::DeltaQGeqPtilde
        } else {
            CoverageRegime::DeltaQLeqPtilde
        },
    }
}

/// Location of the farthest user of the given ISP still willing to subscribe
/// at fee `q`: `(v* - q)/t` from the neutral side, `(t + q - v*)/t` from the
/// non-neutral side. May fall outside [0, 1].
pub fn farthest_subscriber(params: &MarketParams, isp: Isp, q: f64) -> f64 {
    match isp {
        Isp::N => (params.v_star - q) / params.t,
        Isp::Nn => (params.t + q - params.v_star) / params.t,
    }
}

/// Checks both coverage conditions analytically.
///
/// Utility is piecewise linear in `x` with slopes that never favor the
/// segment interior, so the ISP check reduces to the split boundary seen
/// from each side, and the content check to the farthest-subscriber
/// thresholds against `min(n_n, 1/2)` and `max(n_n, 1/2)`. Returns
/// `(isp_ok, cp_ok)`.
///
/// The weak inequalities get 1e-9 of slack: at equilibrium the marginal
/// user is exactly indifferent, and the two sides of each comparison reach
/// that tie through different arithmetic.
pub fn check_full_coverage(
    params: &MarketParams,
    fees: &StrategyProfile,
    split: &MarketSplit,
) -> (bool, bool) {
    let b = split.n_n;
    let tol = 1e-9;
    let tol_x = tol / params.t;

    // A user takes the subscription exactly when it is weakly worthwhile.
    let participation = |isp: Isp, x: f64| -> f64 {
        let u_net = internet_utility(params, isp, x, fees).expect("boundary in [0,1]");
        let u_content = content_utility(params, isp, x, fees).expect("boundary in [0,1]");
        u_net + u_content.max(0.0)
    };
    let isp_ok = (b <= 0.0 || participation(Isp::N, b) >= -tol)
        && (b >= 1.0 || participation(Isp::Nn, b) >= -tol);

    let xhat_n = farthest_subscriber(params, Isp::N, fees.q_n);
    let xhat_nn = farthest_subscriber(params, Isp::Nn, fees.q_nn);
    let cp_ok =
        (b <= 0.0 || xhat_n >= b.min(0.5) - tol_x) && (b >= 1.0 || xhat_nn <= b.max(0.5) + tol_x);

    (isp_ok, cp_ok)
}
