//! Row assembly and output rendering. CSV numbers carry 12 significant
//! digits; JSON uses the shortest round-trip decimal form.

use anyhow::{bail, Result};
use serde::Serialize;

use nneq_core::{solve_spe, EquilibriumReport, MarketParams, OracleVerdict, TransitFeePolicy};

use crate::config::{ScenarioConfig, SweepParam, SweepSpec};

/// Sweep column order; the CSV header is exactly this list, comma-joined.
pub const SWEEP_COLUMNS: [&str; 16] = [
    "swept value",
    "p_tilde",
    "q_N",
    "q_NN",
    "p_N",
    "p_NN",
    "delta_q",
    "n_N",
    "n_NN",
    "pi_N",
    "pi_NN",
    "pi_G",
    "branch",
    "interior",
    "coverage_isp",
    "coverage_cp",
];

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub swept_value: f64,
    pub p_tilde: f64,
    #[serde(rename = "q_N")]
    pub q_n: f64,
    #[serde(rename = "q_NN")]
    pub q_nn: f64,
    #[serde(rename = "p_N")]
    pub p_n: f64,
    #[serde(rename = "p_NN")]
    pub p_nn: f64,
    pub delta_q: f64,
    #[serde(rename = "n_N")]
    pub n_n: f64,
    #[serde(rename = "n_NN")]
    pub n_nn: f64,
    #[serde(rename = "pi_N")]
    pub pi_n: f64,
    #[serde(rename = "pi_NN")]
    pub pi_nn: f64,
    #[serde(rename = "pi_G")]
    pub pi_g: f64,
    pub branch: String,
    pub interior: bool,
    pub coverage_isp: bool,
    pub coverage_cp: bool,
}

/// 12 significant digits, scientific; the CSV golden files depend on this
/// exact rendering.
pub fn csv_number(x: f64) -> String {
    format!("{x:.11e}")
}

impl SweepRow {
    pub fn from_report(swept_value: f64, report: &EquilibriumReport) -> Self {
        Self {
            swept_value,
            p_tilde: report.fees.p_tilde,
            q_n: report.fees.q_n,
            q_nn: report.fees.q_nn,
            p_n: report.fees.p_n,
            p_nn: report.fees.p_nn,
            delta_q: report.fees.delta_q(),
            n_n: report.split.n_n,
            n_nn: report.split.n_nn,
            pi_n: report.payoffs.pi_n,
            pi_nn: report.payoffs.pi_nn,
            pi_g: report.payoffs.pi_g,
            branch: report.branch.to_string(),
            interior: report.split.interior,
            coverage_isp: report.coverage_isp,
            coverage_cp: report.coverage_cp,
        }
    }

    pub fn to_csv_line(&self) -> String {
        let nums = [
            self.swept_value,
            self.p_tilde,
            self.q_n,
            self.q_nn,
            self.p_n,
            self.p_nn,
            self.delta_q,
            self.n_n,
            self.n_nn,
            self.pi_n,
            self.pi_nn,
            self.pi_g,
        ];
        let mut cells: Vec<String> = nums.iter().map(|&x| csv_number(x)).collect();
        cells.push(self.branch.clone());
        cells.push(self.interior.to_string());
        cells.push(self.coverage_isp.to_string());
        cells.push(self.coverage_cp.to_string());
        cells.join(",")
    }
}

/// Solves one sweep grid point: the swept parameter replaces its field (or
/// the transit-fee policy) and everything else comes from the config.
pub fn sweep_point(config: &ScenarioConfig, sweep: &SweepSpec, i: usize) -> Result<SweepRow> {
    let x = sweep.value(i);
    let mut params_spec = config.params;
    let mut policy = config.p_tilde_policy;
    match sweep.param {
        SweepParam::V => params_spec.v = x,
        SweepParam::VStar => params_spec.v_star = x,
        SweepParam::T => params_spec.t = x,
        SweepParam::C => params_spec.c = x,
        SweepParam::PTilde => policy = TransitFeePolicy::Given(x),
    }
    let params = MarketParams::new(params_spec.v, params_spec.v_star, params_spec.t, params_spec.c)
        .map_err(|e| anyhow::anyhow!("sweep value {x} for {}: {e}", sweep.param))?;
    let report = solve_spe(&params, policy);
    Ok(SweepRow::from_report(x, &report))
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(&SWEEP_COLUMNS.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn sweep_to_json(rows: &[SweepRow]) -> Result<String> {
    let mut out = serde_json::to_string_pretty(rows)?;
    out.push('\n');
    Ok(out)
}

pub fn solve_to_text(report: &EquilibriumReport) -> String {
    let p = &report.params;
    let f = &report.fees;
    format!(
        "market:   v={} v*={} t={} c={}\n\
         branch:   {}   plateau: {}\n\
         fees:     p_tilde={} q_N={} q_NN={} p_N={} p_NN={} (delta_q={})\n\
         shares:   n_N={} n_NN={} interior={}\n\
         payoffs:  pi_N={} pi_NN={} pi_G={}\n\
         coverage: isp={} cp={} sufficient={}\n",
        p.v,
        p.v_star,
        p.t,
        p.c,
        report.branch,
        report.p_tilde_plateau,
        f.p_tilde,
        f.q_n,
        f.q_nn,
        f.p_n,
        f.p_nn,
        f.delta_q(),
        report.split.n_n,
        report.split.n_nn,
        report.split.interior,
        report.payoffs.pi_n,
        report.payoffs.pi_nn,
        report.payoffs.pi_g,
        report.coverage_isp,
        report.coverage_cp,
        report.coverage_sufficient,
    )
}

pub fn solve_to_json(report: &EquilibriumReport) -> Result<String> {
    let mut out = serde_json::to_string_pretty(report)?;
    out.push('\n');
    Ok(out)
}

/// A solve rendered as a one-row CSV (the sweep columns minus the swept value).
pub fn solve_to_csv(report: &EquilibriumReport) -> String {
    let row = SweepRow::from_report(f64::NAN, report);
    let header = SWEEP_COLUMNS[1..].join(",");
    let full = row.to_csv_line();
    let (_, line) = full.split_once(',').expect("row has more than one cell");
    format!("{header}\n{line}\n")
}

pub fn verdicts_to_text(verdicts: &[OracleVerdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let status = if v.pass { "PASS" } else { "FAIL" };
        out.push_str(&format!(
            "{status}  {:<40} discrepancy={:<12.6e} tolerance={:<12.6e} {}\n",
            v.target, v.discrepancy, v.tolerance_used, v.diagnostics
        ));
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    out.push_str(&format!("{passed}/{} checks passed\n", verdicts.len()));
    out
}

pub fn verdicts_to_json(verdicts: &[OracleVerdict]) -> Result<String> {
    let mut out = serde_json::to_string_pretty(verdicts)?;
    out.push('\n');
    Ok(out)
}

pub fn verdicts_to_csv(verdicts: &[OracleVerdict]) -> String {
    let mut out = String::from("target,discrepancy,tolerance,pass,diagnostics\n");
    for v in verdicts {
        out.push_str(&format!(
            "{},{},{},{},\"{}\"\n",
            v.target,
            csv_number(v.discrepancy),
            csv_number(v.tolerance_used),
            v.pass,
            v.diagnostics.replace('"', "\"\"")
        ));
    }
    out
}

/// Writes to the path when given, otherwise to stdout. A closed stdout
/// (e.g. piping into `head`) ends the run quietly instead of panicking.
pub fn emit(path: Option<&std::path::Path>, content: &str) -> Result<()> {
    use std::io::Write;
    match path {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() && !parent.exists() {
                    bail!("output directory {} does not exist", parent.display());
                }
            }
            std::fs::write(path, content)?;
        }
        None => {
            if let Err(err) = std::io::stdout().write_all(content.as_bytes()) {
                if err.kind() == std::io::ErrorKind::BrokenPipe {
                    std::process::exit(0);
                }
                return Err(err.into());
            }
        }
    }
    Ok(())
}
