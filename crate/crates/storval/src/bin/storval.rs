//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; see the crate examples for the same operations in code.
//!
//! Exit codes: 0 on success, 1 when a validation or verification check
//! fails, 2 on malformed inputs or bad arguments.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use storval::config::{Tolerances, DEFAULT_NODE_BUDGET};
use storval::dispatch;
use storval::dp::{self, DpError};
use storval::network::{self, FlowOperators, Network};
use storval::report::{format_float, CsvTable};
use storval::scenario::{self, ScenarioTree};
use storval::valuation::{self, ValuationError};
use storval::verify::{run_verify, VerifyError, VerifyOptions};

#[derive(Parser)]
#[command(
    name = "storval",
    about = "Storage valuation on DC power networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOptions {
    /// Write output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for dispatch sweeps (defaults to the core count).
    #[arg(long)]
    workers: Option<usize>,
    /// Maximum number of scenario-tree nodes accepted.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    /// Power-balance feasibility tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol_balance: f64,
    /// Line-flow feasibility tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol_flow: f64,
    /// Price probe step around demand points.
    #[arg(long, default_value_t = 1e-5)]
    tol_probe_delta: f64,
    /// Fallback tolerance for verification residuals.
    #[arg(long, default_value_t = 1e-8)]
    tol_verify: f64,
}

impl CommonOptions {
    fn validate(&self) -> Result<(), Failure> {
        for (flag, value) in [
            ("--tol-balance", self.tol_balance),
            ("--tol-flow", self.tol_flow),
            ("--tol-probe-delta", self.tol_probe_delta),
            ("--tol-verify", self.tol_verify),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Failure::Input(format!(
                    "{flag} must be a positive number, got {value}"
                )));
            }
        }
        if self.node_budget == 0 {
            return Err(Failure::Input("--node-budget must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Failure::Input("--workers must be at least 1".into()));
        }
        Ok(())
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            balance: self.tol_balance,
            flow: self.tol_flow,
            probe_delta: self.tol_probe_delta,
            verify: self.tol_verify,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single-period dispatch and print dispatch, angles, prices,
    /// flows and cost as CSV.
    Ed {
        /// Network file (storval-net/1).
        #[arg(long)]
        net: PathBuf,
        /// Net demand vector, comma-separated.
        #[arg(long)]
        xi: String,
        #[command(flatten)]
        common: CommonOptions,
    },
    /// Compute the per-bus storage value report over a scenario tree.
    Lmv {
        #[arg(long)]
        net: PathBuf,
        /// Scenario file (storval-tree/1).
        #[arg(long)]
        tree: PathBuf,
        /// Also report the dissipative value at this rate in (0, 1).
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        common: CommonOptions,
    },
    /// Sample nodal prices over a square demand grid (two-bus networks).
    Grid {
        #[arg(long)]
        net: PathBuf,
        /// Grid as min:max:steps applied to both demand axes.
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        common: CommonOptions,
    },
    /// Run the valuation-versus-dynamic-programming audit; exits 1 if any
    /// check fails.
    Verify {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Device capacities to test, as fractions of the safety radius.
        #[arg(long, default_value = "0.1,0.5,0.9")]
        eps: String,
        #[command(flatten)]
        common: CommonOptions,
    },
    /// Solve the grid dynamic program along a capacity ray and dump value
    /// samples for convexity plots.
    Dp {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Capacity vector, comma-separated.
        #[arg(long)]
        cap: String,
        /// Number of samples along the ray from zero to the full capacity.
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[command(flatten)]
        common: CommonOptions,
    },
    /// Evaluate the closed-form two-bus limiting values.
    Limits {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[command(flatten)]
        common: CommonOptions,
    },
    /// Generate a scenario file from a standard process.
    GenTree {
        #[command(subcommand)]
        kind: GenTreeKind,
    },
}

#[derive(Subcommand)]
enum GenTreeKind {
    /// Independent identically distributed demand.
    Iid {
        /// Support points `v1,v2;v1,v2;...` (one demand vector per point).
        #[arg(long)]
        support: String,
        /// Probabilities, comma-separated, matching the support points.
        #[arg(long)]
        probs: String,
        #[arg(long)]
        horizon: usize,
        #[command(flatten)]
        common: CommonOptions,
    },
    /// Two-or-more-state Markov chain demand.
    Markov {
        /// States `v1,v2;v1,v2;...` (one demand vector per state).
        #[arg(long)]
        states: String,
        /// Transition matrix rows `p11,p12;p21,p22;...`.
        #[arg(long)]
        transition: String,
        /// Initial state distribution, comma-separated.
        #[arg(long)]
        initial: String,
        #[arg(long)]
        horizon: usize,
        #[command(flatten)]
        common: CommonOptions,
    },
}

enum Failure {
    /// Malformed files or arguments: exit 2.
    Input(String),
    /// A check or model validation failed: exit 1.
    Validation(String),
}

impl Failure {
    fn code(&self) -> ExitCode {
        match self {
            Failure::Input(_) => ExitCode::from(2),
            Failure::Validation(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(msg) | Failure::Validation(msg) => msg,
        }
    }
}

fn input_err(context: &str, err: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{context}: {err}"))
}

impl From<ValuationError> for Failure {
    fn from(err: ValuationError) -> Self {
        match err {
            // Wrong shapes, rates or network kinds are caller mistakes; the
            // rest are model validation failures.
            ValuationError::DimensionMismatch { .. }
            | ValuationError::GammaOutOfRange(_)
            | ValuationError::NotTwoNode(_)
            | ValuationError::HeterogeneousCosts => Failure::Input(err.to_string()),
            _ => Failure::Validation(err.to_string()),
        }
    }
}

impl From<DpError> for Failure {
    fn from(err: DpError) -> Self {
        match err {
            DpError::DimensionMismatch { .. }
            | DpError::CapacityDimension { .. }
            | DpError::DeviceOutOfRange { .. }
            | DpError::NegativeCapacity(_)
            | DpError::GridTooSmall(_)
            | DpError::GammaOutOfRange(_)
            | DpError::BudgetExceeded { .. } => Failure::Input(err.to_string()),
            _ => Failure::Validation(err.to_string()),
        }
    }
}

impl From<VerifyError> for Failure {
    fn from(err: VerifyError) -> Self {
        match err {
            VerifyError::BadEpsilonFraction(_) => Failure::Input(err.to_string()),
            VerifyError::Valuation(inner) => inner.into(),
            VerifyError::Dp(inner) => inner.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch_command(cli.command) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.code()
        }
    }
}

fn dispatch_command(command: Command) -> Result<ExitCode, Failure> {
    let common = match &command {
        Command::Ed { common, .. }
        | Command::Lmv { common, .. }
        | Command::Grid { common, .. }
        | Command::Verify { common, .. }
        | Command::Dp { common, .. }
        | Command::Limits { common, .. } => common.clone(),
        Command::GenTree { kind } => match kind {
            GenTreeKind::Iid { common, .. } | GenTreeKind::Markov { common, .. } => common.clone(),
        },
    };
    common.validate()?;
    let run = || run_command(command);
    match common.workers {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|err| input_err("building worker pool", err))?;
            pool.install(run)
        }
        None => run(),
    }
}

fn run_command(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Ed { net, xi, common } => {
            let net = load_network(&net)?;
            let ops = build_ops(&net)?;
            let xi = parse_vector(&xi, "--xi")?;
            if xi.len() != net.node_count() {
                return Err(Failure::Input(format!(
                    "--xi has {} entries, expected {}",
                    xi.len(),
                    net.node_count()
                )));
            }
            let solution = dispatch::solve_ed(&net, &ops, &xi)
                .map_err(|e| Failure::Validation(e.to_string()))?;
            let mut table = CsvTable::new(["quantity", "index", "value"]);
            for (bus, value) in solution.dispatch.iter().enumerate() {
                table.push_row([
                    "dispatch".into(),
                    (bus + 1).to_string(),
                    format_float(*value),
                ]);
            }
            for (bus, value) in solution.angles.iter().enumerate() {
                table.push_row(["angle".into(), (bus + 1).to_string(), format_float(*value)]);
            }
            for (bus, value) in solution.prices.iter().enumerate() {
                table.push_row(["price".into(), (bus + 1).to_string(), format_float(*value)]);
            }
            for (line, value) in solution.line_flows.iter().enumerate() {
                table.push_row(["flow".into(), (line + 1).to_string(), format_float(*value)]);
            }
            table.push_row(["cost".into(), "1".into(), format_float(solution.cost)]);
            emit(&common, table.render())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Lmv {
            net,
            tree,
            gamma,
            common,
        } => {
            let net = load_network(&net)?;
            let ops = build_ops(&net)?;
            let tree = load_tree(&tree, common.node_budget)?;
            let tol = common.tolerances();
            let lattice = valuation::build_price_lattice(&net, &ops, &tree, &tol)?;
            let report = valuation::lmv(&lattice, &tree);
            let dissipative = match gamma {
                Some(gamma) => Some(valuation::lmv_dissipative(&lattice, &tree, gamma)?),
                None => None,
            };
            let mut header = vec![
                "node".to_string(),
                "lmv".to_string(),
                "upper_bound".to_string(),
                "tv_expectation".to_string(),
                "terminal_drift".to_string(),
                "tight".to_string(),
            ];
            if dissipative.is_some() {
                header.push("lmv_dissipative".to_string());
            }
            let mut table = CsvTable::new(header);
            for bus in 0..net.node_count() {
                let mut row = vec![
                    (bus + 1).to_string(),
                    format_float(report.lmv[bus]),
                    format_float(report.upper_bound[bus]),
                    format_float(report.tv_expectation[bus]),
                    format_float(report.terminal_drift[bus]),
                    report.tight[bus].to_string(),
                ];
                if let Some(values) = &dissipative {
                    row.push(format_float(values[bus]));
                }
                table.push_row(row);
            }
            emit(&common, table.render())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Grid { net, grid, common } => {
            let net = load_network(&net)?;
            if net.node_count() != 2 {
                return Err(Failure::Input(format!(
                    "grid sampling needs a two-bus network, got {} buses",
                    net.node_count()
                )));
            }
            let ops = build_ops(&net)?;
            let (min, max, steps) = parse_grid_range(&grid)?;
            let mut table = CsvTable::new(["xi1", "xi2", "lambda1", "lambda2"]);
            for i in 0..steps {
                let x1 = min + (max - min) * i as f64 / (steps - 1) as f64;
                for j in 0..steps {
                    let x2 = min + (max - min) * j as f64 / (steps - 1) as f64;
                    let prices = dispatch::price_fn(&net, &ops, &[x1, x2])
                        .map_err(|e| Failure::Validation(e.to_string()))?;
                    table.push_row([
                        format_float(x1),
                        format_float(x2),
                        format_float(prices[0]),
                        format_float(prices[1]),
                    ]);
                }
            }
            emit(&common, table.render())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            net,
            tree,
            eps,
            common,
        } => {
            let net = load_network(&net)?;
            let ops = build_ops(&net)?;
            let tree = load_tree(&tree, common.node_budget)?;
            let options = VerifyOptions {
                eps_fractions: parse_vector(&eps, "--eps")?,
                tolerances: common.tolerances(),
            };
            let audit = run_verify(&net, &ops, &tree, &options)?;
            let passed = audit.passed();
            emit(&common, audit.to_csv())?;
            if passed {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: verification failed; see the audit rows above");
                Ok(ExitCode::from(1))
            }
        }
        Command::Dp {
            net,
            tree,
            cap,
            steps,
            common,
        } => {
            let net = load_network(&net)?;
            let ops = build_ops(&net)?;
            let tree = load_tree(&tree, common.node_budget)?;
            let cap = parse_vector(&cap, "--cap")?;
            if steps < 2 {
                return Err(Failure::Input("--steps must be at least 2".into()));
            }
            let mut cache = dispatch::EdCache::new();
            let mut header = vec!["sample".to_string(), "scale".to_string()];
            for bus in 0..cap.len() {
                header.push(format!("b_{}", bus + 1));
            }
            header.push("value".to_string());
            let mut table = CsvTable::new(header);
            for sample in 0..steps {
                let scale = sample as f64 / (steps - 1) as f64;
                let capacities: Vec<f64> = cap.iter().map(|b| b * scale).collect();
                // Nested grids along the ray: sample k reuses the levels of
                // sample k-1, so values are monotone in the sample index.
                let grid_points = (sample + 1).max(2);
                let value = dp::solve_dp_grid(
                    &net,
                    &ops,
                    &tree,
                    &capacities,
                    grid_points,
                    common.node_budget,
                    &mut cache,
                )?
                .total_value;
                let mut row = vec![sample.to_string(), format_float(scale)];
                for capacity in &capacities {
                    row.push(format_float(*capacity));
                }
                row.push(format_float(value));
                table.push_row(row);
            }
            emit(&common, table.render())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Limits { net, tree, common } => {
            let net = load_network(&net)?;
            let tree = load_tree(&tree, common.node_budget)?;
            let limits = valuation::two_node_limits(&net, &tree)?;
            let mut table = CsvTable::new(["node", "lmv_f_zero", "lmv_f_inf"]);
            for bus in 0..2 {
                table.push_row([
                    (bus + 1).to_string(),
                    format_float(limits.lmv_f_zero[bus]),
                    format_float(limits.lmv_f_inf[bus]),
                ]);
            }
            emit(&common, table.render())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::GenTree { kind } => match kind {
            GenTreeKind::Iid {
                support,
                probs,
                horizon,
                common,
            } => {
                let points = parse_vector_list(&support, "--support")?;
                let probs = parse_vector(&probs, "--probs")?;
                if points.len() != probs.len() {
                    return Err(Failure::Input(format!(
                        "{} support points but {} probabilities",
                        points.len(),
                        probs.len()
                    )));
                }
                let support: Vec<(Vec<f64>, f64)> = points.into_iter().zip(probs).collect();
                let tree = ScenarioTree::build_iid(&support, horizon, common.node_budget)
                    .map_err(|e| input_err("building tree", e))?;
                emit(&common, scenario::write_tree(&tree))?;
                Ok(ExitCode::SUCCESS)
            }
            GenTreeKind::Markov {
                states,
                transition,
                initial,
                horizon,
                common,
            } => {
                let states = parse_vector_list(&states, "--states")?;
                let transition = parse_vector_list(&transition, "--transition")?;
                let initial = parse_vector(&initial, "--initial")?;
                let tree = ScenarioTree::build_markov(
                    &states,
                    &transition,
                    &initial,
                    horizon,
                    common.node_budget,
                )
                .map_err(|e| input_err("building tree", e))?;
                emit(&common, scenario::write_tree(&tree))?;
                Ok(ExitCode::SUCCESS)
            }
        },
    }
}

fn load_network(path: &PathBuf) -> Result<Network, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|err| input_err(&format!("reading {}", path.display()), err))?;
    network::parse_network(&text)
        .map_err(|err| input_err(&format!("parsing {}", path.display()), err))
}

fn build_ops(net: &Network) -> Result<FlowOperators, Failure> {
    FlowOperators::build(net).map_err(|err| input_err("building network operators", err))
}

fn load_tree(path: &PathBuf, budget: usize) -> Result<ScenarioTree, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|err| input_err(&format!("reading {}", path.display()), err))?;
    scenario::parse_tree(&text, budget)
        .map_err(|err| input_err(&format!("parsing {}", path.display()), err))
}

fn parse_vector(text: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|field| {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| Failure::Input(format!("{flag}: bad number `{field}`")))
        })
        .collect()
}

fn parse_vector_list(text: &str, flag: &str) -> Result<Vec<Vec<f64>>, Failure> {
    text.split(';')
        .map(|part| parse_vector(part, flag))
        .collect()
}

fn parse_grid_range(text: &str) -> Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Failure::Input(format!(
            "--grid expects min:max:steps, got `{text}`"
        )));
    }
    let min: f64 = parts[0]
        .parse()
        .map_err(|_| Failure::Input(format!("--grid: bad minimum `{}`", parts[0])))?;
    let max: f64 = parts[1]
        .parse()
        .map_err(|_| Failure::Input(format!("--grid: bad maximum `{}`", parts[1])))?;
    let steps: usize = parts[2]
        .parse()
        .map_err(|_| Failure::Input(format!("--grid: bad step count `{}`", parts[2])))?;
    if steps < 2 || !(max > min) {
        return Err(Failure::Input(
            "--grid needs max > min and at least 2 steps".into(),
        ));
    }
    Ok((min, max, steps))
}

fn emit(common: &CommonOptions, content: String) -> Result<(), Failure> {
    match &common.out {
        Some(path) => fs::write(path, content)
            .map_err(|err| input_err(&format!("writing {}", path.display()), err)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
