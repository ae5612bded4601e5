//! Browser bindings for the equilibrium solver. Each export takes plain
//! numbers and returns a JSON string, so the page needs no glue types; a
//! failed call returns `{"error": "..."}`.
//!
//! Off wasm these compile to ordinary Rust functions, which is how the unit
//! tests drive them.

use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

use nneq_core::{
    simulate_users, solve_spe, stage4_shares_reduced, MarketParams, TransitFeePolicy,
};

fn params_or_error(v: f64, v_star: f64, t: f64, c: f64) -> Result<MarketParams, String> {
    MarketParams::new(v, v_star, t, c).map_err(|e| e.to_string())
}

fn error_json(message: String) -> String {
    json!({ "error": message }).to_string()
}

/// Solves one scenario. `p_tilde` is ignored when `use_plateau_min` is set.
#[wasm_bindgen]
pub fn solve_report(v: f64, v_star: f64, t: f64, c: f64, p_tilde: f64, use_plateau_min: bool) -> String {
    let params = match params_or_error(v, v_star, t, c) {
        Ok(p) => p,
        Err(e) => return error_json(e),
    };
    if !use_plateau_min && !p_tilde.is_finite() {
        return error_json(format!("transit fee must be finite, got {p_tilde}"));
    }
    let policy = if use_plateau_min {
        TransitFeePolicy::MinimalPlateau
    } else {
        TransitFeePolicy::Given(p_tilde)
    };
    let report = solve_spe(&params, policy);
    serde_json::to_string(&report).unwrap_or_else(|e| error_json(e.to_string()))
}

/// Sweeps the transit fee and returns every curve the page plots, plus the
/// branch breakpoints and the plateau level.
#[wasm_bindgen]
pub fn transit_fee_sweep(v: f64, v_star: f64, t: f64, c: f64, lo: f64, hi: f64, steps: u32) -> String {
    let params = match params_or_error(v, v_star, t, c) {
        Ok(p) => p,
        Err(e) => return error_json(e),
    };
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || steps < 2 {
        return error_json(format!("bad sweep range [{lo}, {hi}] with {steps} steps"));
    }
    let n = steps as usize;
    let mut series: [Vec<f64>; 10] = Default::default();
    for i in 0..n {
        let p_tilde = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let r = solve_spe(&params, TransitFeePolicy::Given(p_tilde));
        let values = [
            p_tilde,
            r.fees.delta_q(),
            r.fees.q_n,
            r.fees.q_nn,
            r.fees.p_n,
            r.fees.p_nn,
            r.split.n_nn,
            r.payoffs.pi_n,
            r.payoffs.pi_nn,
            r.payoffs.pi_g,
        ];
        for (column, value) in series.iter_mut().zip(values) {
            column.push(value);
        }
    }
    let [p_tilde, delta_q, q_n, q_nn, p_n, p_nn, n_nn, pi_n, pi_nn, pi_g] = series;
    json!({
        "p_tilde": p_tilde,
        "delta_q": delta_q,
        "q_n": q_n,
        "q_nn": q_nn,
        "p_n": p_n,
        "p_nn": p_nn,
        "n_nn": n_nn,
        "pi_n": pi_n,
        "pi_nn": pi_nn,
        "pi_g": pi_g,
        "breakpoints": [-1.25 * t, 0.0, 1.25 * t],
        "plateau_payoff": 1.125 * t,
        "plateau_start": 1.25 * t,
    })
    .to_string()
}

/// Runs the discrete-user oracle at the equilibrium response to `p_tilde`
/// and pairs it with the closed-form shares, for the simulation overlay.
#[wasm_bindgen]
pub fn simulated_shares(v: f64, v_star: f64, t: f64, c: f64, p_tilde: f64, users: u32) -> String {
    let params = match params_or_error(v, v_star, t, c) {
        Ok(p) => p,
        Err(e) => return error_json(e),
    };
    if !p_tilde.is_finite() {
        return error_json(format!("transit fee must be finite, got {p_tilde}"));
    }
    let users = (users.max(2)) as usize;
    let report = solve_spe(&params, TransitFeePolicy::Given(p_tilde));
    let closed = stage4_shares_reduced(&params, p_tilde, report.fees.q_n, report.fees.q_nn);
    let simulated = simulate_users(&params, &report.fees, users);
    json!({
        "users": users,
        "closed_form": { "n_n": closed.n_n, "n_nn": closed.n_nn },
        "simulated": {
            "n_n": simulated.n_n,
            "n_nn": simulated.n_nn,
            "n_sub_n": simulated.n_sub_n,
            "n_sub_nn": simulated.n_sub_nn,
        },
        "participation": simulated.n_n + simulated.n_nn,
        "share_gap": (closed.n_n - simulated.n_n).abs(),
    })
    .to_string()
}
