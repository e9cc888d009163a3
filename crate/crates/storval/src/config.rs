//! Numerical tolerances and resource budgets shared across the toolkit.

/// Absolute tolerances used by feasibility checks, dual probing and the
/// verification pipeline. All reference instances work at O(1) magnitudes,
/// so the defaults are absolute rather than relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Power-balance residual allowed when testing injection feasibility.
    pub balance: f64,
    /// Line-flow violation allowed when testing injection feasibility.
    pub flow: f64,
    /// Step used when probing nodal prices around a demand point.
    pub probe_delta: f64,
    /// Tolerance applied by the verification audit to residuals that have
    /// no check-specific tolerance of their own.
    pub verify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            balance: 1e-8,
            flow: 1e-8,
            probe_delta: 1e-5,
            verify: 1e-8,
        }
    }
}

/// Maximum number of scenario-tree nodes a constructor will accept
/// unless the caller overrides the budget.
pub const DEFAULT_NODE_BUDGET: usize = 200_000;

/// Prices that differ by less than this are treated as equal when probing
/// for dual-regime changes.
pub const PRICE_MATCH_TOL: f64 = 1e-7;

/// Two sides of a valuation identity are reported as tight when they agree
/// to within this tolerance.
pub const TIGHTNESS_TOL: f64 = 1e-9;

/// A dispatch component is treated as strictly generating or consuming when
/// its magnitude exceeds this threshold.
pub const DISPATCH_SIGN_TOL: f64 = 1e-7;
