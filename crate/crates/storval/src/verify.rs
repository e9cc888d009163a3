//! Cross-check audit: runs the price-based valuation against the
//! dynamic-programming oracle on one network/tree instance and reports a
//! deterministic CSV of residuals.
//!
//! Checks, in order: the dual-regime safety radius, the headline identity
//! (cost saved by an infinitesimal device equals capacity times the
//! price-based value) for every bus and several capacities, the per-node
//! value decomposition and threshold policy, bound dominance, and the
//! tight-bound diagnostics where the network qualifies.

use thiserror::Error;

use crate::config::Tolerances;
use crate::dispatch::EdCache;
use crate::dp::{self, DpError};
use crate::network::{FlowOperators, Network};
use crate::report::{format_float, CsvTable};
use crate::scenario::ScenarioTree;
use crate::valuation::{self, SpcaseOutcome, ValuationError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error("capacity fraction {0} outside (0, 1)")]
    BadEpsilonFraction(f64),
}

/// One audited residual.
#[derive(Debug, Clone)]
pub struct AuditRow {
    pub check: String,
    pub bus: String,
    pub detail: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Full audit of one instance.
#[derive(Debug, Clone)]
pub struct VerifyAudit {
    pub rows: Vec<AuditRow>,
    pub epsilon_bar: f64,
}

impl VerifyAudit {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|row| row.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut table = CsvTable::new(["check", "bus", "detail", "residual", "tolerance", "pass"]);
        for row in &self.rows {
            table.push_row([
                row.check.clone(),
                row.bus.clone(),
                row.detail.clone(),
                format_float(row.residual),
                format_float(row.tolerance),
                if row.pass {
                    "true".into()
                } else {
                    "false".into()
                },
            ]);
        }
        table.render()
    }
}

/// Options for [`run_verify`]. `eps_fractions` are the tested capacities as
/// fractions of the certified safety radius.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub eps_fractions: Vec<f64>,
    pub tolerances: Tolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            eps_fractions: vec![0.1, 0.5, 0.9],
            tolerances: Tolerances::default(),
        }
    }
}

pub fn run_verify(
    net: &Network,
    ops: &FlowOperators,
    tree: &ScenarioTree,
    options: &VerifyOptions,
) -> Result<VerifyAudit, VerifyError> {
    for &fraction in &options.eps_fractions {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(VerifyError::BadEpsilonFraction(fraction));
        }
    }
    let tol = &options.tolerances;
    let mut rows = Vec::new();

    let lattice = valuation::build_price_lattice(net, ops, tree, tol)?;
    let report = valuation::lmv(&lattice, tree);
    let eps_bar = dp::epsilon_bar(net, ops, tree, tol)?;
    rows.push(AuditRow {
        check: "epsilon_bar".into(),
        bus: "-".into(),
        detail: "certified safety radius".into(),
        residual: eps_bar,
        tolerance: tol.probe_delta,
        pass: eps_bar > tol.probe_delta,
    });

    let mut cache = EdCache::new();
    let zero_cost = dp::expected_no_storage_cost(net, ops, tree, &mut cache)?;
    let headline_tol = tol.verify * zero_cost.abs().max(1.0);
    for bus in 0..net.node_count() {
        for &fraction in &options.eps_fractions {
            let eps = fraction * eps_bar;
            let dp_run = dp::solve_dp_single_device(net, ops, tree, bus, eps, &mut cache)?;
            let saved = dp_run.total_zero_value - dp_run.total_value;
            let residual = (saved - eps * report.lmv[bus]).abs();
            rows.push(AuditRow {
                check: "headline_identity".into(),
                bus: (bus + 1).to_string(),
                detail: format!("eps={}", format_float(eps)),
                residual,
                tolerance: headline_tol,
                pass: residual <= headline_tol,
            });
        }

        let eps = 0.5 * eps_bar;
        let decomposition =
            dp::verify_value_decomposition(net, ops, tree, &lattice, bus, eps, &mut cache)?;
        rows.push(AuditRow {
            check: "value_decomposition".into(),
            bus: (bus + 1).to_string(),
            detail: format!("eps={}", format_float(eps)),
            residual: decomposition.max_value_residual,
            tolerance: decomposition.value_tolerance,
            pass: decomposition.max_value_residual <= decomposition.value_tolerance,
        });
        rows.push(AuditRow {
            check: "threshold_policy".into(),
            bus: (bus + 1).to_string(),
            detail: format!("mismatches={}", decomposition.policy_mismatches.len()),
            residual: decomposition.policy_mismatches.len() as f64,
            tolerance: 0.0,
            pass: decomposition.policy_mismatches.is_empty()
                && decomposition.max_terminal_slack <= decomposition.value_tolerance,
        });
    }

    for bus in 0..net.node_count() {
        let slack = report.lmv[bus] - report.upper_bound[bus];
        rows.push(AuditRow {
            check: "bound_dominance".into(),
            bus: (bus + 1).to_string(),
            detail: "value minus bound".into(),
            residual: slack,
            tolerance: 1e-9,
            pass: slack <= 1e-9,
        });
    }

    match valuation::spcase_diagnostics(net, &lattice, tree)? {
        SpcaseOutcome::Applicable(spcase) => {
            rows.push(AuditRow {
                check: "tight_bound_case".into(),
                bus: "-".into(),
                detail: "value, bound and transition count".into(),
                residual: spcase.max_spread,
                tolerance: 1e-8,
                pass: spcase.max_spread <= 1e-8,
            });
        }
        SpcaseOutcome::NotApplicable { reason } => {
            rows.push(AuditRow {
                check: "tight_bound_case".into(),
                bus: "-".into(),
                detail: format!("not applicable: {reason}"),
                residual: 0.0,
                tolerance: 0.0,
                pass: true,
            });
        }
    }

    Ok(VerifyAudit {
        rows,
        epsilon_bar: eps_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DEFAULT_NODE_BUDGET;

    #[test]
    fn copperplate_audit_passes_and_is_deterministic() {
        let net = Network::new(1, Vec::new(), vec![0.0], vec![10.0], vec![2.0]).unwrap();
        let ops = FlowOperators::build(&net).unwrap();
        let tree = ScenarioTree::build_iid(
            &[(vec![-1.0], 0.5), (vec![1.0], 0.5)],
            3,
            DEFAULT_NODE_BUDGET,
        )
        .unwrap();
        let options = VerifyOptions::default();
        let first = run_verify(&net, &ops, &tree, &options).unwrap();
        assert!(first.passed(), "{}", first.to_csv());
        let second = run_verify(&net, &ops, &tree, &options).unwrap();
        assert_eq!(first.to_csv(), second.to_csv());
    }

    #[test]
    fn rejects_bad_fraction() {
        let net = Network::new(1, Vec::new(), vec![0.0], vec![10.0], vec![2.0]).unwrap();
        let ops = FlowOperators::build(&net).unwrap();
        let tree = ScenarioTree::build_iid(&[(vec![1.0], 1.0)], 2, DEFAULT_NODE_BUDGET).unwrap();
        let options = VerifyOptions {
            eps_fractions: vec![1.5],
            ..Default::default()
        };
        assert!(matches!(
            run_verify(&net, &ops, &tree, &options),
            Err(VerifyError::BadEpsilonFraction(_))
        ));
    }
}
