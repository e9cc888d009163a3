//! Transmission network model: buses, lines, admittance/incidence operators
//! and the feasible-injection polytope.
//!
//! A network is a connected undirected graph on `m` buses. Each line carries
//! a susceptance and a flow capacity; each bus carries a marginal generation
//! cost `alpha`, a marginal consumption utility `beta` and an optional shunt
//! susceptance. An injection vector `x` is feasible when `x = Y * theta` for
//! some angle vector `theta` with every line flow `B * theta` within its
//! capacity.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::config::Tolerances;

/// Residual above which an operator inverse is declared unusable.
const SINGULARITY_CHECK_TOL: f64 = 1e-6;

/// A transmission line between two buses (0-based endpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Per-unit line susceptance, strictly positive.
    pub susceptance: f64,
    /// Flow capacity in power units, nonnegative.
    pub capacity: f64,
}

/// Immutable description of a power network.
///
/// Construction validates every structural invariant; once built, a network
/// is safe to share across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    node_count: usize,
    lines: Vec<Line>,
    shunt_susceptances: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network must have at least one bus")]
    Empty,
    #[error("per-node field `{field}` has length {got}, expected {expected}")]
    FieldLength {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("line {index} endpoint {endpoint} is out of range for {node_count} buses")]
    EndpointOutOfRange {
        index: usize,
        endpoint: usize,
        node_count: usize,
    },
    #[error("line {index} connects bus {node} to itself")]
    SelfLoop { index: usize, node: usize },
    #[error("line {index} has non-positive susceptance {value}")]
    NonPositiveSusceptance { index: usize, value: f64 },
    #[error("line {index} has negative capacity {value}")]
    NegativeCapacity { index: usize, value: f64 },
    #[error("bus {node} has negative shunt susceptance {value}")]
    NegativeShunt { node: usize, value: f64 },
    #[error("bus {node} violates alpha >= beta >= 0 (alpha {alpha}, beta {beta})")]
    CostOrder { node: usize, alpha: f64, beta: f64 },
    #[error("network graph is not connected")]
    Disconnected,
    #[error("operator matrix is singular; graph is disconnected or susceptances degenerate")]
    SingularOperator,
}

impl Network {
    pub fn new(
        node_count: usize,
        lines: Vec<Line>,
        shunt_susceptances: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self, NetworkError> {
        if node_count == 0 {
            return Err(NetworkError::Empty);
        }
        for (field, len) in [
            ("shunt_susceptances", shunt_susceptances.len()),
            ("alpha", alpha.len()),
            ("beta", beta.len()),
        ] {
            if len != node_count {
                return Err(NetworkError::FieldLength {
                    field,
                    got: len,
                    expected: node_count,
                });
            }
        }
        for (index, line) in lines.iter().enumerate() {
            for endpoint in [line.from, line.to] {
                if endpoint >= node_count {
                    return Err(NetworkError::EndpointOutOfRange {
                        index,
                        endpoint,
                        node_count,
                    });
                }
            }
            if line.from == line.to {
                return Err(NetworkError::SelfLoop {
                    index,
                    node: line.from,
                });
            }
            if !(line.susceptance > 0.0) {
                return Err(NetworkError::NonPositiveSusceptance {
                    index,
                    value: line.susceptance,
                });
            }
            if !(line.capacity >= 0.0) {
                return Err(NetworkError::NegativeCapacity {
                    index,
                    value: line.capacity,
                });
            }
        }
        for node in 0..node_count {
            if !(shunt_susceptances[node] >= 0.0) {
                return Err(NetworkError::NegativeShunt {
                    node,
                    value: shunt_susceptances[node],
                });
            }
            if !(alpha[node] >= beta[node] && beta[node] >= 0.0) {
                return Err(NetworkError::CostOrder {
                    node,
                    alpha: alpha[node],
                    beta: beta[node],
                });
            }
        }
        let net = Self {
            node_count,
            lines,
            shunt_susceptances,
            alpha,
            beta,
        };
        if !net.is_connected() {
            return Err(NetworkError::Disconnected);
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn shunt_susceptances(&self) -> &[f64] {
        &self.shunt_susceptances
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Line capacities in line order.
    pub fn capacities(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.capacity).collect()
    }

    pub fn has_shunts(&self) -> bool {
        self.shunt_susceptances.iter().any(|&y| y != 0.0)
    }

    /// True when generation cost and consumption utility are each uniform
    /// across buses.
    pub fn homogeneous_costs(&self) -> bool {
        self.alpha.iter().all(|&a| a == self.alpha[0])
            && self.beta.iter().all(|&b| b == self.beta[0])
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut adjacency = vec![Vec::new(); self.node_count];
        for line in &self.lines {
            adjacency[line.from].push(line.to);
            adjacency[line.to].push(line.from);
        }
        while let Some(node) = stack.pop() {
            for &next in &adjacency[node] {
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// A connected graph is acyclic exactly when it has `m - 1` edges.
    /// Parallel lines between the same pair of buses count as a cycle.
    pub fn is_acyclic(&self) -> bool {
        self.lines.len() + 1 == self.node_count
    }
}

/// Dense operator matrices derived from a [`Network`].
///
/// `admittance` is the bus admittance matrix `Y`, `incidence` the weighted
/// line incidence matrix `B`, and `ptdf` the power transfer distribution
/// factor matrix `H` mapping balanced injections to line flows. `H` is
/// computed as `B (Y^T Y + e1 e1^T)^{-1} Y^T`; the rank-one term pins the
/// angle reference at bus 1.
#[derive(Debug, Clone)]
pub struct FlowOperators {
    pub admittance: DMatrix<f64>,
    pub incidence: DMatrix<f64>,
    pub ptdf: DMatrix<f64>,
}

impl FlowOperators {
    pub fn build(net: &Network) -> Result<Self, NetworkError> {
        let m = net.node_count();
        let l = net.line_count();

        let mut admittance = DMatrix::zeros(m, m);
        for node in 0..m {
            admittance[(node, node)] = net.shunt_susceptances()[node];
        }
        for line in net.lines() {
            let y = line.susceptance;
            admittance[(line.from, line.to)] -= y;
            admittance[(line.to, line.from)] -= y;
            admittance[(line.from, line.from)] += y;
            admittance[(line.to, line.to)] += y;
        }

        let mut incidence = DMatrix::zeros(l, m);
        for (k, line) in net.lines().iter().enumerate() {
            incidence[(k, line.from)] = line.susceptance;
            incidence[(k, line.to)] = -line.susceptance;
        }

        let mut gram = admittance.transpose() * &admittance;
        gram[(0, 0)] += 1.0;
        let inverse = gram
            .clone()
            .try_inverse()
            .ok_or(NetworkError::SingularOperator)?;
        let identity_residual = (&gram * &inverse - DMatrix::identity(m, m)).abs().max();
        if identity_residual > SINGULARITY_CHECK_TOL {
            return Err(NetworkError::SingularOperator);
        }
        let ptdf = &incidence * inverse * admittance.transpose();

        Ok(Self {
            admittance,
            incidence,
            ptdf,
        })
    }

    /// Line flows induced by an angle vector.
    pub fn flows_from_angles(&self, theta: &[f64]) -> Vec<f64> {
        let theta = DVector::from_column_slice(theta);
        (&self.incidence * theta).iter().copied().collect()
    }

    /// Tests membership of `x` in the feasible-injection polytope.
    ///
    /// Without shunts the polytope admits the flow-factor description
    /// `1^T x = 0`, `-f <= H x <= f`; with shunts the angle system
    /// `Y theta = x` is solved directly and the flows `B theta` checked.
    pub fn injection_feasible(&self, net: &Network, x: &[f64], tol: &Tolerances) -> bool {
        assert_eq!(x.len(), net.node_count(), "injection dimension mismatch");
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let capacities = net.capacities();
        if !net.has_shunts() {
            let imbalance: f64 = x.iter().sum();
            if imbalance.abs() > tol.balance {
                return false;
            }
            let flows = &self.ptdf * DVector::from_column_slice(x);
            flows
                .iter()
                .zip(&capacities)
                .all(|(&flow, &cap)| flow.abs() <= cap + tol.flow)
        } else {
            let rhs = DVector::from_column_slice(x);
            let theta = match self.admittance.clone().lu().solve(&rhs) {
                Some(theta) => theta,
                None => return false,
            };
            let residual = (&self.admittance * &theta - &rhs).abs().max();
            if residual > tol.balance {
                return false;
            }
            let flows = &self.incidence * theta;
            flows
                .iter()
                .zip(&capacities)
                .all(|(&flow, &cap)| flow.abs() <= cap + tol.flow)
        }
    }
}

/// First line of the network file format.
pub const NET_SCHEMA: &str = "storval-net/1";

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct NetParseError {
    pub line: usize,
    pub message: String,
}

/// Serializes a network in the `storval-net/1` format. Bus indices are
/// 1-based on disk; floats carry full round-trip precision.
pub fn write_network(net: &Network) -> String {
    use crate::report::format_float;
    let mut out = String::new();
    out.push_str(NET_SCHEMA);
    out.push('\n');
    out.push_str(&format!("nodes {}\n", net.node_count()));
    for i in 0..net.node_count() {
        out.push_str(&format!(
            "node {} {} {} {}\n",
            i + 1,
            format_float(net.alpha()[i]),
            format_float(net.beta()[i]),
            format_float(net.shunt_susceptances()[i]),
        ));
    }
    for line in net.lines() {
        out.push_str(&format!(
            "line {} {} {} {}\n",
            line.from + 1,
            line.to + 1,
            format_float(line.susceptance),
            format_float(line.capacity),
        ));
    }
    out
}

/// Parses the `storval-net/1` format.
///
/// Records are `nodes <m>`, then one `node <id> <alpha> <beta> <shunt>` per
/// bus (1-based ids, each exactly once) and `line <from> <to> <susceptance>
/// <capacity>` records. `#` starts a comment. Unknown records are rejected.
pub fn parse_network(text: &str) -> Result<Network, NetParseError> {
    let fail = |line: usize, message: String| NetParseError { line, message };
    let mut saw_header = false;
    let mut node_count: Option<usize> = None;
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut shunts: Vec<f64> = Vec::new();
    let mut node_seen: Vec<bool> = Vec::new();
    let mut lines_out: Vec<Line> = Vec::new();

    let parse_f64 = |line: usize, field: &str, what: &str| -> Result<f64, NetParseError> {
        field
            .parse()
            .map_err(|_| fail(line, format!("bad {what} `{field}`")))
    };

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != NET_SCHEMA {
                return Err(fail(
                    line_no,
                    format!("expected header `{NET_SCHEMA}`, found `{line}`"),
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "nodes" => {
                if node_count.is_some() {
                    return Err(fail(line_no, "duplicate `nodes` record".into()));
                }
                if fields.len() != 2 {
                    return Err(fail(line_no, "`nodes` takes exactly one value".into()));
                }
                let m: usize = fields[1]
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad node count `{}`", fields[1])))?;
                if m == 0 {
                    return Err(fail(line_no, "node count must be positive".into()));
                }
                node_count = Some(m);
                alpha = vec![0.0; m];
                beta = vec![0.0; m];
                shunts = vec![0.0; m];
                node_seen = vec![false; m];
            }
            "node" => {
                let m = node_count
                    .ok_or_else(|| fail(line_no, "`node` records must follow `nodes`".into()))?;
                if fields.len() != 5 {
                    return Err(fail(
                        line_no,
                        "`node` takes id, alpha, beta and shunt".into(),
                    ));
                }
                let id: usize = fields[1]
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad node id `{}`", fields[1])))?;
                if id == 0 || id > m {
                    return Err(fail(line_no, format!("node id {id} outside 1..={m}")));
                }
                if node_seen[id - 1] {
                    return Err(fail(line_no, format!("duplicate node record for id {id}")));
                }
                node_seen[id - 1] = true;
                alpha[id - 1] = parse_f64(line_no, fields[2], "alpha")?;
                beta[id - 1] = parse_f64(line_no, fields[3], "beta")?;
                shunts[id - 1] = parse_f64(line_no, fields[4], "shunt")?;
            }
            "line" => {
                let m = node_count
                    .ok_or_else(|| fail(line_no, "`line` records must follow `nodes`".into()))?;
                if fields.len() != 5 {
                    return Err(fail(
                        line_no,
                        "`line` takes from, to, susceptance and capacity".into(),
                    ));
                }
                let from: usize = fields[1]
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad endpoint `{}`", fields[1])))?;
                let to: usize = fields[2]
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad endpoint `{}`", fields[2])))?;
                for endpoint in [from, to] {
                    if endpoint == 0 || endpoint > m {
                        return Err(fail(
                            line_no,
                            format!("endpoint {endpoint} outside 1..={m}"),
                        ));
                    }
                }
                lines_out.push(Line {
                    from: from - 1,
                    to: to - 1,
                    susceptance: parse_f64(line_no, fields[3], "susceptance")?,
                    capacity: parse_f64(line_no, fields[4], "capacity")?,
                });
            }
            other => {
                return Err(fail(line_no, format!("unknown record `{other}`")));
            }
        }
    }
    if !saw_header {
        return Err(fail(1, format!("missing `{NET_SCHEMA}` header")));
    }
    let m = node_count.ok_or_else(|| fail(1, "missing `nodes` record".into()))?;
    if let Some(missing) = node_seen.iter().position(|seen| !seen) {
        return Err(fail(0, format!("no record for node {}", missing + 1)));
    }
    Network::new(m, lines_out, shunts, alpha, beta).map_err(|err| fail(0, err.to_string()))
}
