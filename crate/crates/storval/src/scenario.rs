//! Finite-support net-demand processes as scenario trees.
//!
//! A tree node carries a stage index, a demand vector, and the probability
//! of reaching it from its parent. A node therefore encodes an entire demand
//! history: the path from its root. Roots live at stage 0 and their
//! probabilities sum to one; every interior node's children probabilities
//! sum to one; every leaf sits at the final stage.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::report::format_float;

const PROB_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub stage: usize,
    pub parent: Option<usize>,
    /// Probability of this node given its parent (or the root probability).
    pub prob: f64,
    pub xi: Vec<f64>,
}

/// Immutable scenario tree over a horizon of `N` stages (`0..N-1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    horizon: usize,
    dim: usize,
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
    path_prob: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("tree has no nodes")]
    EmptyTree,
    #[error("tree would have {nodes} nodes, over the budget of {budget}")]
    BudgetExceeded { nodes: usize, budget: usize },
    #[error("node {node}: {problem}")]
    BadNode { node: usize, problem: String },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("node {node} is terminal and has no children to average over")]
    TerminalNode { node: usize },
    #[error("no value supplied for child node {child}")]
    MissingChildValue { child: usize },
    #[error("root probabilities sum to {sum}, expected 1")]
    RootProbSum { sum: f64 },
    #[error("children of node {node} have probabilities summing to {sum}, expected 1")]
    ChildProbSum { node: usize, sum: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

impl ScenarioTree {
    /// Validates and assembles a tree from raw node records. Node ids are
    /// their indices in `nodes`; parents must precede children.
    pub fn new(horizon: usize, nodes: Vec<TreeNode>, budget: usize) -> Result<Self, ScenarioError> {
        if horizon == 0 {
            return Err(ScenarioError::EmptyHorizon);
        }
        if nodes.is_empty() {
            return Err(ScenarioError::EmptyTree);
        }
        if nodes.len() > budget {
            return Err(ScenarioError::BudgetExceeded {
                nodes: nodes.len(),
                budget,
            });
        }
        let dim = nodes[0].xi.len();
        if dim == 0 {
            return Err(ScenarioError::BadNode {
                node: 0,
                problem: "demand vector is empty".into(),
            });
        }

        let bad = |node: usize, problem: String| ScenarioError::BadNode { node, problem };
        let mut children = vec![Vec::new(); nodes.len()];
        let mut roots = Vec::new();
        for (id, node) in nodes.iter().enumerate() {
            if node.xi.len() != dim {
                return Err(bad(
                    id,
                    format!("demand vector has length {}, expected {dim}", node.xi.len()),
                ));
            }
            if node.xi.iter().any(|v| !v.is_finite()) {
                return Err(bad(id, "demand vector has a non-finite entry".into()));
            }
            if !(node.prob > 0.0 && node.prob <= 1.0) {
                return Err(bad(id, format!("probability {} outside (0, 1]", node.prob)));
            }
            if node.stage >= horizon {
                return Err(bad(
                    id,
                    format!("stage {} outside horizon {horizon}", node.stage),
                ));
            }
            match node.parent {
                None => {
                    if node.stage != 0 {
                        return Err(bad(id, "non-root node is missing a parent".into()));
                    }
                    roots.push(id);
                }
                Some(parent) => {
                    if parent >= id {
                        return Err(bad(
                            id,
                            format!("parent {parent} does not precede the node"),
                        ));
                    }
                    if nodes[parent].stage + 1 != node.stage {
                        return Err(bad(
                            id,
                            format!(
                                "stage {} does not follow parent stage {}",
                                node.stage, nodes[parent].stage
                            ),
                        ));
                    }
                    children[parent].push(id);
                }
            }
        }
        if roots.is_empty() {
            return Err(ScenarioError::EmptyTree);
        }

        let root_sum: f64 = roots.iter().map(|&r| nodes[r].prob).sum();
        if (root_sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ScenarioError::RootProbSum { sum: root_sum });
        }
        for (id, node) in nodes.iter().enumerate() {
            if node.stage + 1 < horizon {
                let sum: f64 = children[id].iter().map(|&c| nodes[c].prob).sum();
                if children[id].is_empty() {
                    return Err(bad(id, "interior node has no children".into()));
                }
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    return Err(ScenarioError::ChildProbSum { node: id, sum });
                }
            } else if !children[id].is_empty() {
                return Err(bad(id, "terminal-stage node has children".into()));
            }
        }

        let mut path_prob = vec![0.0; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            path_prob[id] = match node.parent {
                None => node.prob,
                Some(parent) => path_prob[parent] * node.prob,
            };
        }

        Ok(Self {
            horizon,
            dim,
            nodes,
            children,
            roots,
            path_prob,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Dimension of the demand vectors.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, &TreeNode)> {
        self.nodes.iter().enumerate()
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.nodes[id].stage + 1 == self.horizon
    }

    /// Probability of the root-to-node path.
    pub fn path_probability(&self, id: usize) -> Result<f64, ScenarioError> {
        self.path_prob
            .get(id)
            .copied()
            .ok_or(ScenarioError::UnknownNode(id))
    }

    /// Expectation of `values` over the children of `id`, conditional on
    /// reaching `id`.
    pub fn conditional_expectation(
        &self,
        id: usize,
        values: &BTreeMap<usize, f64>,
    ) -> Result<f64, ScenarioError> {
        if id >= self.nodes.len() {
            return Err(ScenarioError::UnknownNode(id));
        }
        if self.is_terminal(id) {
            return Err(ScenarioError::TerminalNode { node: id });
        }
        let mut total = 0.0;
        for &child in &self.children[id] {
            let value = values
                .get(&child)
                .ok_or(ScenarioError::MissingChildValue { child })?;
            total += self.nodes[child].prob * value;
        }
        Ok(total)
    }

    /// The distinct demand vectors appearing in the tree, keyed by exact bit
    /// pattern, in first-appearance (node id) order.
    pub fn support(&self) -> Vec<Vec<f64>> {
        let mut seen = std::collections::BTreeSet::new();
        let mut support = Vec::new();
        for node in &self.nodes {
            let key: Vec<u64> = node.xi.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                support.push(node.xi.clone());
            }
        }
        support
    }

    /// Builds the tree of an i.i.d. process: every node at stages
    /// `0..horizon` branches into the full support.
    pub fn build_iid(
        support: &[(Vec<f64>, f64)],
        horizon: usize,
        budget: usize,
    ) -> Result<Self, ScenarioError> {
        if horizon == 0 {
            return Err(ScenarioError::EmptyHorizon);
        }
        if support.is_empty() {
            return Err(ScenarioError::InvalidDistribution("empty support".into()));
        }
        let dim = support[0].0.len();
        let mut prob_sum = 0.0;
        for (point, prob) in support {
            if point.len() != dim {
                return Err(ScenarioError::InvalidDistribution(
                    "support points have mixed dimensions".into(),
                ));
            }
            if !(prob > &0.0) {
                return Err(ScenarioError::InvalidDistribution(format!(
                    "support probability {prob} is not positive"
                )));
            }
            prob_sum += prob;
        }
        if (prob_sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ScenarioError::InvalidDistribution(format!(
                "support probabilities sum to {prob_sum}"
            )));
        }

        let branch = support.len();
        let mut expected: usize = 0;
        let mut layer: usize = 1;
        for _ in 0..horizon {
            layer = layer
                .checked_mul(branch)
                .ok_or(ScenarioError::BudgetExceeded {
                    nodes: usize::MAX,
                    budget,
                })?;
            expected = expected
                .checked_add(layer)
                .ok_or(ScenarioError::BudgetExceeded {
                    nodes: usize::MAX,
                    budget,
                })?;
            if expected > budget {
                return Err(ScenarioError::BudgetExceeded {
                    nodes: expected,
                    budget,
                });
            }
        }

        let mut nodes = Vec::with_capacity(expected);
        let mut frontier: Vec<Option<usize>> = vec![None];
        for stage in 0..horizon {
            let mut next = Vec::with_capacity(frontier.len() * branch);
            for parent in frontier {
                for (xi, prob) in support {
                    let id = nodes.len();
                    nodes.push(TreeNode {
                        stage,
                        parent,
                        prob: *prob,
                        xi: xi.clone(),
                    });
                    next.push(Some(id));
                }
            }
            frontier = next;
        }
        Self::new(horizon, nodes, budget)
    }

    /// Builds the history-expanded tree of a finite Markov chain. Zero
    /// transition probabilities produce no branch.
    pub fn build_markov(
        states: &[Vec<f64>],
        transition: &[Vec<f64>],
        initial: &[f64],
        horizon: usize,
        budget: usize,
    ) -> Result<Self, ScenarioError> {
        if horizon == 0 {
            return Err(ScenarioError::EmptyHorizon);
        }
        let count = states.len();
        if count == 0 {
            return Err(ScenarioError::InvalidDistribution("no states".into()));
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim) {
            return Err(ScenarioError::InvalidDistribution(
                "states have mixed dimensions".into(),
            ));
        }
        if initial.len() != count || transition.len() != count {
            return Err(ScenarioError::InvalidDistribution(
                "initial distribution and transition matrix must match the state count".into(),
            ));
        }
        for (row_index, row) in transition.iter().enumerate() {
            if row.len() != count {
                return Err(ScenarioError::InvalidDistribution(format!(
                    "transition row {row_index} has length {}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(ScenarioError::InvalidDistribution(format!(
                    "transition row {row_index} has a negative entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(ScenarioError::InvalidDistribution(format!(
                    "transition row {row_index} sums to {sum}"
                )));
            }
        }
        if initial.iter().any(|&p| p < 0.0) {
            return Err(ScenarioError::InvalidDistribution(
                "initial distribution has a negative entry".into(),
            ));
        }
        let initial_sum: f64 = initial.iter().sum();
        if (initial_sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ScenarioError::InvalidDistribution(format!(
                "initial distribution sums to {initial_sum}"
            )));
        }

        let mut nodes = Vec::new();
        // Frontier entries: (node id, state index).
        let mut frontier: Vec<(usize, usize)> = Vec::new();
        for (state, &prob) in initial.iter().enumerate() {
            if prob == 0.0 {
                continue;
            }
            let id = nodes.len();
            nodes.push(TreeNode {
                stage: 0,
                parent: None,
                prob,
                xi: states[state].clone(),
            });
            frontier.push((id, state));
        }
        if frontier.is_empty() {
            return Err(ScenarioError::InvalidDistribution(
                "initial distribution is all zero".into(),
            ));
        }
        for stage in 1..horizon {
            let mut next = Vec::new();
            for (parent, state) in frontier {
                for (to, &prob) in transition[state].iter().enumerate() {
                    if prob == 0.0 {
                        continue;
                    }
                    let id = nodes.len();
                    if id >= budget {
                        return Err(ScenarioError::BudgetExceeded {
                            nodes: id + 1,
                            budget,
                        });
                    }
                    nodes.push(TreeNode {
                        stage,
                        parent: Some(parent),
                        prob,
                        xi: states[to].clone(),
                    });
                    next.push((id, to));
                }
            }
            frontier = next;
        }
        Self::new(horizon, nodes, budget)
    }
}

/// First line of the scenario file format.
pub const TREE_SCHEMA: &str = "storval-tree/1";

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct TreeParseError {
    pub line: usize,
    pub message: String,
}

/// Serializes a tree in the `storval-tree/1` format. Floats are written with
/// 17 significant digits, so parsing the output reproduces the tree
/// bit-for-bit.
pub fn write_tree(tree: &ScenarioTree) -> String {
    let mut out = String::new();
    out.push_str(TREE_SCHEMA);
    out.push('\n');
    out.push_str(&format!("horizon {}\n", tree.horizon()));
    for (id, node) in tree.nodes() {
        let parent = match node.parent {
            None => "-".to_string(),
            Some(p) => p.to_string(),
        };
        out.push_str(&format!(
            "node {id} {} {parent} {}",
            node.stage,
            format_float(node.prob)
        ));
        for value in &node.xi {
            out.push(' ');
            out.push_str(&format_float(*value));
        }
        out.push('\n');
    }
    out
}

/// Parses the `storval-tree/1` format. Node ids must be dense and in order
/// (`0..count`), and parents must appear before their children.
pub fn parse_tree(text: &str, budget: usize) -> Result<ScenarioTree, TreeParseError> {
    let fail = |line: usize, message: String| TreeParseError { line, message };
    let mut horizon: Option<usize> = None;
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut saw_header = false;

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
            if line != TREE_SCHEMA {
                return Err(fail(
                    line_no,
                    format!("expected header `{TREE_SCHEMA}`, found `{line}`"),
                ));
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split_whitespace();
        let keyword = fields.next().expect("non-empty line has a first field");
        match keyword {
            "horizon" => {
                if horizon.is_some() {
                    return Err(fail(line_no, "duplicate `horizon` record".into()));
                }
                let value = fields
                    .next()
                    .ok_or_else(|| fail(line_no, "`horizon` needs a value".into()))?;
                if fields.next().is_some() {
                    return Err(fail(line_no, "`horizon` takes exactly one value".into()));
                }
                let parsed: usize = value
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad horizon `{value}`")))?;
                horizon = Some(parsed);
            }
            "node" => {
                if horizon.is_none() {
                    return Err(fail(line_no, "`node` records must follow `horizon`".into()));
                }
                let rest: Vec<&str> = fields.collect();
                if rest.len() < 4 {
                    return Err(fail(
                        line_no,
                        "`node` needs id, stage, parent, prob and a demand vector".into(),
                    ));
                }
                let id: usize = rest[0]
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad node id `{}`", rest[0])))?;
                if id != nodes.len() {
                    return Err(fail(
                        line_no,
                        format!(
                            "node ids must be dense and ordered; expected {}",
                            nodes.len()
                        ),
                    ));
                }
                let stage: usize = rest[1]
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad stage `{}`", rest[1])))?;
                let parent = if rest[2] == "-" {
                    None
                } else {
                    let parent: usize = rest[2]
                        .parse()
                        .map_err(|_| fail(line_no, format!("bad parent `{}`", rest[2])))?;
                    Some(parent)
                };
                let prob: f64 = rest[3]
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad probability `{}`", rest[3])))?;
                let xi: Vec<f64> = rest[4..]
                    .iter()
                    .map(|field| {
                        field
                            .parse()
                            .map_err(|_| fail(line_no, format!("bad demand value `{field}`")))
                    })
                    .collect::<Result<_, _>>()?;
                if xi.is_empty() {
                    return Err(fail(line_no, "demand vector is empty".into()));
                }
                match dim {
                    None => dim = Some(xi.len()),
                    Some(expected) if expected != xi.len() => {
                        return Err(fail(
                            line_no,
                            format!(
                                "demand vector has {} entries, expected {expected}",
                                xi.len()
                            ),
                        ));
                    }
                    _ => {}
                }
                nodes.push(TreeNode {
                    stage,
                    parent,
                    prob,
                    xi,
                });
            }
            other => {
                return Err(fail(line_no, format!("unknown record `{other}`")));
            }
        }
    }
    if !saw_header {
        return Err(fail(1, format!("missing `{TREE_SCHEMA}` header")));
    }
    let horizon = horizon.ok_or_else(|| fail(1, "missing `horizon` record".into()))?;
    ScenarioTree::new(horizon, nodes, budget).map_err(|err| fail(0, err.to_string()))
}
