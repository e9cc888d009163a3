//! Dense linear programming with exact basis duals.
//!
//! Solves `min c^T x` subject to `A x = b` and `l <= x <= u` with a
//! bounded-variable primal simplex method. Feasibility is established by a
//! phase-one pass with artificial variables; the phase-two pass then
//! optimizes the true objective. Pricing is Dantzig's rule, falling back to
//! Bland's rule once the pivot count passes `10 * (n + p)` so degenerate
//! instances cannot cycle. The basis inverse is held explicitly and rebuilt
//! from an LU factorization every 50 pivots and once more before duals are
//! extracted.
//!
//! The solver is deterministic: identical inputs take identical pivot paths
//! and produce bit-identical solutions. Each call owns its workspace, so
//! distinct problems may be solved concurrently.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Bounds with magnitude at or above this are treated as infinite.
pub const INFINITE_BOUND: f64 = 1e30;

const REFACTOR_INTERVAL: usize = 50;
const DUAL_FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const PHASE1_FEAS_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-8;

/// `min objective^T x` subject to `eq_matrix * x = eq_rhs`,
/// `lower <= x <= upper`. Use `f64::INFINITY` (or any magnitude past
/// [`INFINITE_BOUND`]) for absent bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Outcome of a solve.
///
/// When `status` is `Optimal`, `eq_duals` holds the Lagrange multipliers of
/// the equality rows taken from the final basis: entry `j` is the sensitivity
/// of the optimal objective to `eq_rhs[j]`. For `Infeasible` the certificate
/// is the phase-one dual vector; for `Unbounded` it is a feasible ray along
/// which the objective decreases without limit.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    pub eq_duals: Vec<f64>,
    pub certificate: Option<Vec<f64>>,
    /// Column index occupying each basis row at termination. Indices at or
    /// past `n` refer to phase-one artificial columns.
    pub basis: Vec<usize>,
    pub pivots: usize,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("inconsistent dimensions: {0}")]
    Shape(String),
    #[error("lower bound exceeds upper bound at column {col}")]
    BoundOrder { col: usize },
    #[error("equality right-hand side entry {row} is not finite-representable")]
    InfiniteRhs { row: usize },
    #[error("cycling guard tripped after {pivots} pivots ({context})")]
    CyclingGuard { pivots: usize, context: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

enum IterationOutcome {
    Optimal,
    Unbounded { entering: usize, direction: f64 },
}

struct Workspace {
    rows: usize,
    struct_cols: usize,
    total_cols: usize,
    cols: DMatrix<f64>,
    rhs: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    basis_inverse: DMatrix<f64>,
    pivots_since_refactor: usize,
    total_pivots: usize,
    debug_tableau: bool,
}

impl Workspace {
    fn new(lp: &LinearProgram, debug_tableau: bool) -> Result<Self, LpError> {
        let rows = lp.eq_matrix.nrows();
        let struct_cols = lp.eq_matrix.ncols();
        if lp.objective.len() != struct_cols
            || lp.lower.len() != struct_cols
            || lp.upper.len() != struct_cols
        {
            return Err(LpError::Shape(format!(
                "objective/bounds must have length {struct_cols}"
            )));
        }
        if lp.eq_rhs.len() != rows {
            return Err(LpError::Shape(format!("eq_rhs must have length {rows}")));
        }
        for (row, &b) in lp.eq_rhs.iter().enumerate() {
            if !b.is_finite() || b.abs() >= INFINITE_BOUND {
                return Err(LpError::InfiniteRhs { row });
            }
        }
        if let Some(col) = lp.objective.iter().position(|c| c.is_nan()) {
            return Err(LpError::Shape(format!("objective entry {col} is NaN")));
        }

        let mut lower: Vec<f64> = lp
            .lower
            .iter()
            .map(|&v| v.clamp(-INFINITE_BOUND, INFINITE_BOUND))
            .collect();
        let mut upper: Vec<f64> = lp
            .upper
            .iter()
            .map(|&v| v.clamp(-INFINITE_BOUND, INFINITE_BOUND))
            .collect();
        for col in 0..struct_cols {
            // NaN bounds fail this comparison pair as well as the order test.
            if !(lower[col] <= upper[col]) {
                return Err(LpError::BoundOrder { col });
            }
        }

        let total_cols = struct_cols + rows;
        let mut cols = DMatrix::zeros(rows, total_cols);
        cols.view_mut((0, 0), (rows, struct_cols))
            .copy_from(&lp.eq_matrix);

        // Nonbasic starting point: finite lower bound if present, else
        // finite upper bound, else zero for free variables.
        let mut x = vec![0.0; total_cols];
        let mut state = vec![VarState::AtLower; total_cols];
        for col in 0..struct_cols {
            if lower[col] > -INFINITE_BOUND {
                x[col] = lower[col];
                state[col] = VarState::AtLower;
            } else if upper[col] < INFINITE_BOUND {
                x[col] = upper[col];
                state[col] = VarState::AtUpper;
            } else {
                x[col] = 0.0;
                state[col] = VarState::Free;
            }
        }

        // One artificial column per row, oriented so its starting value is
        // nonnegative; the artificial basis matrix is diag(sign).
        let rhs = DVector::from_column_slice(&lp.eq_rhs);
        let mut residual = rhs.clone();
        for col in 0..struct_cols {
            if x[col] != 0.0 {
                for row in 0..rows {
                    residual[row] -= cols[(row, col)] * x[col];
                }
            }
        }
        let mut basis = Vec::with_capacity(rows);
        let mut basis_inverse = DMatrix::zeros(rows, rows);
        for row in 0..rows {
            let sign = if residual[row] >= 0.0 { 1.0 } else { -1.0 };
            let art = struct_cols + row;
            cols[(row, art)] = sign;
            basis_inverse[(row, row)] = sign;
            basis.push(art);
            x[art] = residual[row].abs();
            state[art] = VarState::Basic;
            lower.push(0.0);
            upper.push(INFINITE_BOUND);
        }

        Ok(Self {
            rows,
            struct_cols,
            total_cols,
            cols,
            rhs,
            lower,
            upper,
            x,
            state,
            basis,
            basis_inverse,
            pivots_since_refactor: 0,
            total_pivots: 0,
            debug_tableau,
        })
    }

    fn duals(&self, costs: &[f64]) -> DVector<f64> {
        let basic_costs = DVector::from_iterator(self.rows, self.basis.iter().map(|&j| costs[j]));
        self.basis_inverse.transpose() * basic_costs
    }

    fn reduced_cost(&self, costs: &[f64], duals: &DVector<f64>, col: usize) -> f64 {
        let mut value = costs[col];
        for row in 0..self.rows {
            value -= duals[row] * self.cols[(row, col)];
        }
        value
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values.
    fn refactorize(&mut self) -> Result<(), LpError> {
        if self.rows > 0 {
            let mut basis_matrix = DMatrix::zeros(self.rows, self.rows);
            for (row_slot, &col) in self.basis.iter().enumerate() {
                basis_matrix.set_column(row_slot, &self.cols.column(col));
            }
            self.basis_inverse = basis_matrix.try_inverse().ok_or_else(|| {
                LpError::Numerical("singular basis during refactorization".into())
            })?;
        }
        let mut adjusted = self.rhs.clone();
        for col in 0..self.total_cols {
            if self.state[col] != VarState::Basic && self.x[col] != 0.0 {
                for row in 0..self.rows {
                    adjusted[row] -= self.cols[(row, col)] * self.x[col];
                }
            }
        }
        let basic_values = &self.basis_inverse * adjusted;
        for (row_slot, &col) in self.basis.iter().enumerate() {
            self.x[col] = basic_values[row_slot];
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Runs the simplex loop for the given costs until optimality or an
    /// unbounded ray is detected.
    fn optimize(&mut self, costs: &[f64], context: &str) -> Result<IterationOutcome, LpError> {
        let bland_threshold = 10 * (self.struct_cols + self.rows);
        let pivot_budget = 1000 * (self.total_cols + self.rows) + 1000;
        loop {
            if self.pivots_since_refactor >= REFACTOR_INTERVAL {
                self.refactorize()?;
            }
            let duals = self.duals(costs);

            let use_bland = self.total_pivots > bland_threshold;
            let mut entering: Option<(usize, f64, f64)> = None; // (col, direction, score)
            for col in 0..self.total_cols {
                if self.state[col] == VarState::Basic {
                    continue;
                }
                // Fixed columns (used to retire artificials) never re-enter.
                if self.upper[col] - self.lower[col] <= 0.0 {
                    continue;
                }
                let d = self.reduced_cost(costs, &duals, col);
                let direction = match self.state[col] {
                    VarState::AtLower if d < -DUAL_FEAS_TOL => 1.0,
                    VarState::AtUpper if d > DUAL_FEAS_TOL => -1.0,
                    VarState::Free if d < -DUAL_FEAS_TOL => 1.0,
                    VarState::Free if d > DUAL_FEAS_TOL => -1.0,
                    _ => continue,
                };
                if use_bland {
                    entering = Some((col, direction, d.abs()));
                    break;
                }
                match entering {
                    Some((_, _, best)) if d.abs() <= best => {}
                    _ => entering = Some((col, direction, d.abs())),
                }
            }
            let (entering, direction, _) = match entering {
                Some(choice) => choice,
                None => return Ok(IterationOutcome::Optimal),
            };

            let column = self.cols.column(entering).clone_owned();
            let basis_direction = &self.basis_inverse * column;

            // Ratio test: the entering variable stops at its opposite bound
            // or when a basic variable reaches one of its own.
            let own_span = self.upper[entering] - self.lower[entering];
            let own_limit = if own_span >= INFINITE_BOUND {
                f64::INFINITY
            } else {
                own_span
            };
            let mut best_step = own_limit;
            let mut leaving: Option<(usize, bool)> = None; // (row, hits_lower)
            for row in 0..self.rows {
                let rate = direction * basis_direction[row];
                let col = self.basis[row];
                if rate > PIVOT_TOL {
                    if self.lower[col] > -INFINITE_BOUND {
                        let step = (self.x[col] - self.lower[col]) / rate;
                        if step < best_step - PIVOT_TOL
                            || (step < best_step + PIVOT_TOL
                                && leaving.is_none_or(|(r, _)| self.basis[r] > col))
                        {
                            best_step = step.max(0.0);
                            leaving = Some((row, true));
                        }
                    }
                } else if rate < -PIVOT_TOL && self.upper[col] < INFINITE_BOUND {
                    let step = (self.upper[col] - self.x[col]) / (-rate);
                    if step < best_step - PIVOT_TOL
                        || (step < best_step + PIVOT_TOL
                            && leaving.is_none_or(|(r, _)| self.basis[r] > col))
                    {
                        best_step = step.max(0.0);
                        leaving = Some((row, false));
                    }
                }
            }

            if best_step.is_infinite() {
                return Ok(IterationOutcome::Unbounded {
                    entering,
                    direction,
                });
            }

            self.total_pivots += 1;
            if self.total_pivots > pivot_budget {
                if self.debug_tableau {
                    eprintln!("{}", self.dump_tableau(costs));
                }
                return Err(LpError::CyclingGuard {
                    pivots: self.total_pivots,
                    context: context.to_string(),
                });
            }

            match leaving {
                Some((row, hits_lower)) if best_step < own_limit - PIVOT_TOL => {
                    // Basis change.
                    self.x[entering] += direction * best_step;
                    for r in 0..self.rows {
                        let col = self.basis[r];
                        self.x[col] -= direction * best_step * basis_direction[r];
                    }
                    let leaving_col = self.basis[row];
                    if hits_lower {
                        self.x[leaving_col] = self.lower[leaving_col];
                        self.state[leaving_col] = VarState::AtLower;
                    } else {
                        self.x[leaving_col] = self.upper[leaving_col];
                        self.state[leaving_col] = VarState::AtUpper;
                    }
                    self.state[entering] = VarState::Basic;
                    self.basis[row] = entering;
                    self.pivot_inverse(row, &basis_direction)?;
                    self.pivots_since_refactor += 1;
                }
                _ => {
                    // Bound flip: the entering variable crosses to its other
                    // bound without a basis change.
                    let step = own_limit;
                    self.x[entering] += direction * step;
                    for r in 0..self.rows {
                        let col = self.basis[r];
                        self.x[col] -= direction * step * basis_direction[r];
                    }
                    self.state[entering] = if direction > 0.0 {
                        self.x[entering] = self.upper[entering];
                        VarState::AtUpper
                    } else {
                        self.x[entering] = self.lower[entering];
                        VarState::AtLower
                    };
                }
            }
        }
    }

    /// Product-form update of the explicit basis inverse after `row` is
    /// replaced. `basis_direction` is `B^{-1} A_entering` for the *old* basis.
    fn pivot_inverse(&mut self, row: usize, basis_direction: &DVector<f64>) -> Result<(), LpError> {
        let pivot = basis_direction[row];
        if pivot.abs() <= PIVOT_TOL {
            return Err(LpError::Numerical(format!(
                "pivot element {pivot} below tolerance"
            )));
        }
        let scale = 1.0 / pivot;
        for col in 0..self.rows {
            self.basis_inverse[(row, col)] *= scale;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = basis_direction[r];
            if factor == 0.0 {
                continue;
            }
            for col in 0..self.rows {
                self.basis_inverse[(r, col)] -= factor * self.basis_inverse[(row, col)];
            }
        }
        Ok(())
    }

    /// Tries to pivot zero-valued artificial variables out of the basis so
    /// phase two starts on structural columns where possible. Remaining
    /// artificials are pinned at zero.
    fn retire_artificials(&mut self) -> Result<(), LpError> {
        for row in 0..self.rows {
            if self.basis[row] < self.struct_cols {
                continue;
            }
            let mut replacement = None;
            for col in 0..self.struct_cols {
                if self.state[col] == VarState::Basic {
                    continue;
                }
                let mut element = 0.0;
                for k in 0..self.rows {
                    element += self.basis_inverse[(row, k)] * self.cols[(k, col)];
                }
                if element.abs() > 1e-7 {
                    replacement = Some(col);
                    break;
                }
            }
            if let Some(col) = replacement {
                let column = self.cols.column(col).clone_owned();
                let basis_direction = &self.basis_inverse * column;
                let artificial = self.basis[row];
                self.state[artificial] = VarState::AtLower;
                self.x[artificial] = 0.0;
                self.state[col] = VarState::Basic;
                self.basis[row] = col;
                self.pivot_inverse(row, &basis_direction)?;
                self.pivots_since_refactor += 1;
            }
        }
        for art in self.struct_cols..self.total_cols {
            self.lower[art] = 0.0;
            self.upper[art] = 0.0;
        }
        Ok(())
    }

    fn dump_tableau(&self, costs: &[f64]) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let duals = self.duals(costs);
        writeln!(out, "basis: {:?}", self.basis).unwrap();
        for row in 0..self.rows {
            let mut line = String::new();
            for col in 0..self.total_cols {
                let mut v = 0.0;
                for k in 0..self.rows {
                    v += self.basis_inverse[(row, k)] * self.cols[(k, col)];
                }
                write!(line, "{v:>12.5e} ").unwrap();
            }
            writeln!(out, "{line}| {:>12.5e}", self.x[self.basis[row]]).unwrap();
        }
        let mut line = String::new();
        for col in 0..self.total_cols {
            write!(line, "{:>12.5e} ", self.reduced_cost(costs, &duals, col)).unwrap();
        }
        writeln!(out, "{line}").unwrap();
        out
    }
}

/// Solves the linear program. See the module documentation for the method.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with_options(lp, false)
}

/// As [`solve`], optionally dumping the final simplex tableau to standard
/// error when the cycling guard trips.
pub fn solve_with_options(lp: &LinearProgram, debug_tableau: bool) -> Result<LpSolution, LpError> {
    let mut ws = Workspace::new(lp, debug_tableau)?;
    let n = ws.struct_cols;

    // Phase one: minimize the total artificial infeasibility.
    let mut phase1_costs = vec![0.0; ws.total_cols];
    for art in n..ws.total_cols {
        phase1_costs[art] = 1.0;
    }
    match ws.optimize(&phase1_costs, "phase one")? {
        IterationOutcome::Optimal => {}
        IterationOutcome::Unbounded { .. } => {
            return Err(LpError::Numerical(
                "phase one reported unbounded, which cannot happen".into(),
            ));
        }
    }
    let infeasibility: f64 = (n..ws.total_cols).map(|art| ws.x[art]).sum();
    let rhs_scale = lp.eq_rhs.iter().fold(1.0_f64, |acc, &b| acc.max(b.abs()));
    if infeasibility > PHASE1_FEAS_TOL * rhs_scale {
        let duals = ws.duals(&phase1_costs);
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            primal: ws.x[..n].to_vec(),
            objective_value: f64::NAN,
            eq_duals: vec![f64::NAN; ws.rows],
            certificate: Some(duals.iter().copied().collect()),
            basis: ws.basis.clone(),
            pivots: ws.total_pivots,
        });
    }
    ws.retire_artificials()?;
    ws.refactorize()?;

    // Phase two: the true objective, artificials pinned at zero.
    let mut costs = vec![0.0; ws.total_cols];
    costs[..n].copy_from_slice(&lp.objective);
    let outcome = ws.optimize(&costs, "phase two")?;
    ws.refactorize()?;
    if debug_tableau {
        eprintln!("{}", ws.dump_tableau(&costs));
    }

    match outcome {
        IterationOutcome::Unbounded {
            entering,
            direction,
        } => {
            let column = ws.cols.column(entering).clone_owned();
            let basis_direction = &ws.basis_inverse * column;
            let mut ray = vec![0.0; n];
            if entering < n {
                ray[entering] = direction;
            }
            for row in 0..ws.rows {
                let col = ws.basis[row];
                if col < n {
                    ray[col] = -direction * basis_direction[row];
                }
            }
            Ok(LpSolution {
                status: LpStatus::Unbounded,
                primal: ws.x[..n].to_vec(),
                objective_value: f64::NEG_INFINITY,
                eq_duals: vec![f64::NAN; ws.rows],
                certificate: Some(ray),
                basis: ws.basis.clone(),
                pivots: ws.total_pivots,
            })
        }
        IterationOutcome::Optimal => {
            let duals = ws.duals(&costs);
            let primal = ws.x[..n].to_vec();
            let objective_value = lp
                .objective
                .iter()
                .zip(&primal)
                .map(|(c, x)| c * x)
                .sum::<f64>();
            let solution = LpSolution {
                status: LpStatus::Optimal,
                primal,
                objective_value,
                eq_duals: duals.iter().copied().collect(),
                certificate: None,
                basis: ws.basis.clone(),
                pivots: ws.total_pivots,
            };
            let report = kkt_residuals(lp, &solution);
            if report.worst() > KKT_TOL * rhs_scale.max(1.0) {
                return Err(LpError::Numerical(format!(
                    "optimal basis failed KKT validation: {report:?}"
                )));
            }
            Ok(solution)
        }
    }
}

/// Residuals of the optimality system at a claimed optimal solution.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    /// `max |A x - b|`.
    pub primal_equality: f64,
    /// Largest bound violation of the primal point.
    pub primal_bounds: f64,
    /// Largest violation of the reduced-cost sign conditions.
    pub dual_feasibility: f64,
    /// Largest complementary-slackness violation.
    pub complementarity: f64,
    /// `|c^T x - dual objective|` where the dual objective includes the
    /// bound terms priced at their reduced costs.
    pub duality_gap: f64,
}

impl KktResiduals {
    pub fn worst(&self) -> f64 {
        self.primal_equality
            .max(self.primal_bounds)
            .max(self.dual_feasibility)
            .max(self.complementarity)
            .max(self.duality_gap)
    }
}

/// Computes KKT residuals for an optimal solution of `lp`.
pub fn kkt_residuals(lp: &LinearProgram, solution: &LpSolution) -> KktResiduals {
    let n = lp.eq_matrix.ncols();
    let rows = lp.eq_matrix.nrows();
    let x = DVector::from_column_slice(&solution.primal);
    let duals = DVector::from_column_slice(&solution.eq_duals);

    let mut primal_equality = 0.0_f64;
    let residual = &lp.eq_matrix * &x;
    for row in 0..rows {
        primal_equality = primal_equality.max((residual[row] - lp.eq_rhs[row]).abs());
    }

    let mut primal_bounds = 0.0_f64;
    let mut dual_feasibility = 0.0_f64;
    let mut complementarity = 0.0_f64;
    let mut bound_terms = 0.0_f64;
    for col in 0..n {
        let lower = lp.lower[col].max(-INFINITE_BOUND);
        let upper = lp.upper[col].min(INFINITE_BOUND);
        primal_bounds = primal_bounds
            .max(lower - solution.primal[col])
            .max(solution.primal[col] - upper);
        let mut reduced = lp.objective[col];
        for row in 0..rows {
            reduced -= duals[row] * lp.eq_matrix[(row, col)];
        }
        if reduced > 0.0 {
            // Positive reduced cost must pin the variable to its lower bound.
            if lower <= -INFINITE_BOUND {
                dual_feasibility = dual_feasibility.max(reduced);
            } else {
                complementarity =
                    complementarity.max(reduced * (solution.primal[col] - lower).abs());
                bound_terms += reduced * lower;
            }
        } else if reduced < 0.0 {
            if upper >= INFINITE_BOUND {
                dual_feasibility = dual_feasibility.max(-reduced);
            } else {
                complementarity =
                    complementarity.max(-reduced * (upper - solution.primal[col]).abs());
                bound_terms += reduced * upper;
            }
        }
    }
    let dual_objective = duals
        .iter()
        .zip(&lp.eq_rhs)
        .map(|(y, b)| y * b)
        .sum::<f64>()
        + bound_terms;
    let scale = 1.0_f64.max(solution.objective_value.abs());
    let duality_gap = (solution.objective_value - dual_objective).abs() / scale;

    KktResiduals {
        primal_equality,
        primal_bounds,
        dual_feasibility,
        complementarity,
        duality_gap,
    }
}
