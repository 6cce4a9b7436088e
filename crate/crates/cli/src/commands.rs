//! One function per subcommand. Each writes its tables into the output
//! directory and returns a JSON report.

use std::path::{Path, PathBuf};

use discrete_hj::dhj::{jacobi_solution, rdhj_residual};
use discrete_hj::dmech::{
    action_sum_left, action_sum_right, integrate, left_equation_residual, right_equation_residual,
};
use discrete_hj::docp::{
    bellman_backward, costate_from_value, lq_value_analytic, rollout, terminal_penalty, Axis,
    BellmanConfig, ControlBox, ControlSearchConfig, GridSpec, LqProblem,
};
use discrete_hj::galerkin::{build_docp, discrete_dynamics, global_error, heisenberg_fd_closed_form, rk4_reference};
use discrete_hj::linhj::{
    riccati_fractional_step, riccati_sequence, step_matrix, Matrix, QuadraticGeneratingFunction,
    QuadraticLeftHamiltonian,
};
use discrete_hj::newton::symplectic_defect;
use discrete_hj::registry;
use discrete_hj::{DiscreteHamiltonian, PhasePoint, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{self, *};
use crate::convergence::report_convergence;
use crate::output::{coordinate_names, Table};
use crate::CliError;

/// Files written and the JSON report of one run.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub report: Value,
    /// Set when a residual check fails; the run still writes its outputs.
    pub failure: Option<String>,
}

fn core(context: &str) -> impl FnOnce(discrete_hj::Error) -> CliError + '_ {
    move |source| CliError::Core {
        context: context.to_string(),
        source,
    }
}

fn write_table(out: &Path, name: &str, table: &Table, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = out.join(name);
    table.write(&path)?;
    files.push(path);
    Ok(())
}

fn resolve_hamiltonian(
    spec: &HamiltonianSpec,
    h: Option<f64>,
) -> Result<(DiscreteHamiltonian, usize, f64, String), CliError> {
    match spec {
        HamiltonianSpec::Builtin { name, form } => {
            let model = registry::hamiltonians()
                .get(name)
                .map_err(|e| CliError::Validation(format!("hamiltonian.builtin.name: {e}")))?;
            let h = config::positive("h", h.unwrap_or(model.default_step()))?;
            let ham = match form {
                Form::Right => DiscreteHamiltonian::Right(model.right(h)),
                Form::Left => DiscreteHamiltonian::Left(model.left(h).ok_or_else(|| {
                    CliError::Validation(format!("built-in `{name}` has no left form"))
                })?),
            };
            Ok((ham, model.dim(), h, name.clone()))
        }
        HamiltonianSpec::Quadratic { m, k, l, form } => {
            if h.is_some() {
                return Err(CliError::Validation("`h` applies to built-in models only".into()));
            }
            let qdh = QuadraticLeftHamiltonian::new(config::matrix("M", m)?, config::matrix("K", k)?, config::matrix("L", l)?)
                .map_err(|e| CliError::Validation(format!("hamiltonian.quadratic: {e}")))?;
            let n = qdh.dim();
            let ham = match form {
                Form::Left => DiscreteHamiltonian::Left(qdh.to_left()),
                Form::Right => DiscreteHamiltonian::Right(qdh.to_right().map_err(core("right form of the quadratic Hamiltonian"))?),
            };
            Ok((ham, n, 1.0, "quadratic".into()))
        }
    }
}

pub fn integrate_cmd(cfg: &IntegrateConfig, out: &Path) -> Result<Outcome, CliError> {
    let (ham, n, h, name) = resolve_hamiltonian(&cfg.hamiltonian, cfg.h)?;
    let newton = cfg.newton.build()?;
    let z0 = PhasePoint::new(config::vector("q0", &cfg.q0, n)?, config::vector("p0", &cfg.p0, n)?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let traj = integrate(&ham, &z0, cfg.steps, &newton).map_err(core("integrate"))?;
    let (residual, actions) = match &ham {
        DiscreteHamiltonian::Right(hr) => (
            right_equation_residual(hr, &traj, &newton).map_err(core("residual"))?,
            action_sum_right(hr, &traj).map_err(core("action sum"))?,
        ),
        DiscreteHamiltonian::Left(hl) => (
            left_equation_residual(hl, &traj, &newton).map_err(core("residual"))?,
            action_sum_left(hl, &traj).map_err(core("action sum"))?,
        ),
    };
    let mut headers = vec!["k".to_string()];
    headers.extend(coordinate_names("q", n));
    headers.extend(coordinate_names("p", n));
    let mut table = Table::new(headers);
    for (k, z) in traj.points.iter().enumerate() {
        let row: Vec<f64> = z.q.iter().chain(z.p.iter()).copied().collect();
        table.push(k.to_string(), &row)?;
    }
    let mut files = Vec::new();
    write_table(out, "trajectory.csv", &table, &mut files)?;
    Ok(Outcome {
        files,
        report: json!({
            "hamiltonian": name,
            "form": match ham { DiscreteHamiltonian::Right(_) => "right", DiscreteHamiltonian::Left(_) => "left" },
            "h": h,
            "N": cfg.steps,
            "max_equation_residual": residual,
            "action_sum": actions.last().copied().unwrap_or(0.0),
        }),
        failure: None,
    })
}

pub fn riccati_cmd(cfg: &RiccatiConfig, out: &Path) -> Result<Outcome, CliError> {
    let qdh = QuadraticLeftHamiltonian::new(config::matrix("M", &cfg.m)?, config::matrix("K", &cfg.k)?, config::matrix("L", &cfg.l)?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let n = qdh.dim();
    let a0 = match &cfg.a0 {
        Some(rows) => config::matrix("A0", rows)?,
        None => Matrix::zeros(n, n),
    };
    let b0 = match &cfg.b0 {
        Some(b) => config::vector("b0", b, n)?,
        None => Vector::zeros(n),
    };
    let s0 = QuadraticGeneratingFunction::new(a0, b0, cfg.c0).map_err(|e| CliError::Validation(e.to_string()))?;
    let seq = riccati_sequence(&s0, &qdh, cfg.steps).map_err(core("riccati"))?;
    let mut fractional_gap = 0.0_f64;
    for pair in seq.windows(2) {
        let alt = riccati_fractional_step(&pair[0].a, &qdh).map_err(core("fractional Riccati step"))?;
        fractional_gap = fractional_gap.max((alt - &pair[1].a).amax());
    }
    let map = step_matrix(&qdh).map_err(core("step matrix"))?;

    let mut headers = vec!["k".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            headers.push(format!("A_{i}_{j}"));
        }
    }
    headers.extend((1..=n).map(|i| format!("b_{i}")));
    headers.push("c".into());
    let mut table = Table::new(headers);
    for (k, s) in seq.iter().enumerate() {
        let mut row: Vec<f64> = s.a.transpose().iter().copied().collect();
        row.extend(s.b.iter());
        row.push(s.c);
        table.push(k.to_string(), &row)?;
    }
    let mut files = Vec::new();
    write_table(out, "riccati.csv", &table, &mut files)?;
    Ok(Outcome {
        files,
        report: json!({
            "n": n,
            "N": cfg.steps,
            "fractional_step_gap": fractional_gap,
            "step_matrix_symplectic_defect": symplectic_defect(&map.matrix),
        }),
        failure: None,
    })
}

fn initial_conditions(ics: &InitialConditions, n: usize) -> Result<Vec<PhasePoint>, CliError> {
    match ics {
        InitialConditions::List(list) => list
            .iter()
            .enumerate()
            .map(|(i, ic)| {
                PhasePoint::new(
                    config::vector(&format!("initial_conditions[{i}].q"), &ic.q, n)?,
                    config::vector(&format!("initial_conditions[{i}].p"), &ic.p, n)?,
                )
                .map_err(|e| CliError::Validation(e.to_string()))
            })
            .collect(),
        InitialConditions::Random { count, seed, radius } => {
            let r = config::positive("radius", *radius)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let draw = |rng: &mut ChaCha8Rng| Vector::from_fn(n, |_, _| rng.random_range(-r..=r));
            Ok((0..*count)
                .map(|_| {
                    let q = draw(&mut rng);
                    let p = draw(&mut rng);
                    PhasePoint { q, p }
                })
                .collect())
        }
    }
}

pub fn hj_check_cmd(cfg: &HjCheckConfig, out: &Path) -> Result<Outcome, CliError> {
    let model = registry::hamiltonians()
        .get(&cfg.hamiltonian)
        .map_err(|e| CliError::Validation(format!("hamiltonian: {e}")))?;
    let h = config::positive("h", cfg.h.unwrap_or(model.default_step()))?;
    let tolerance = config::positive("tolerance", cfg.tolerance)?;
    let newton = cfg.newton.build()?;
    let ham = model.right(h);
    let ics = initial_conditions(&cfg.initial_conditions, model.dim())?;
    if ics.is_empty() {
        return Err(CliError::Validation("initial_conditions is empty".into()));
    }
    let mut table = Table::new(["ic", "k", "residual"]);
    let mut worst = 0.0_f64;
    let mut momentum_defect = 0.0_f64;
    for (i, z0) in ics.iter().enumerate() {
        let sol = jacobi_solution(&ham, z0, cfg.steps, &newton).map_err(core("Jacobi solution"))?;
        momentum_defect = momentum_defect.max(sol.momentum_defect);
        for k in 0..cfg.steps {
            let pts = &sol.trajectory.points;
            let r = rdhj_residual(&sol, &ham, k, &pts[k].q, &pts[k + 1].q).map_err(core("residual"))?;
            worst = worst.max(r.abs());
            table.push_raw(vec![i.to_string(), k.to_string(), crate::output::fmt_real(r)])?;
        }
    }
    let mut files = Vec::new();
    write_table(out, "hj_check.csv", &table, &mut files)?;
    let passed = worst <= tolerance;
    Ok(Outcome {
        files,
        report: json!({
            "hamiltonian": model.name(),
            "h": h,
            "N": cfg.steps,
            "initial_conditions": ics.len(),
            "max_residual": worst,
            "max_momentum_defect": momentum_defect,
            "tolerance": tolerance,
            "passed": passed,
        }),
        failure: (!passed).then(|| format!("max residual {worst:e} exceeds tolerance {tolerance:e}")),
    })
}

fn grid_spec(axes: &[AxisConfig]) -> Result<GridSpec, CliError> {
    let axes = axes
        .iter()
        .enumerate()
        .map(|(i, a)| Axis::new(a.min, a.max, a.points).map_err(|e| CliError::Validation(format!("grid[{i}]: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    GridSpec::new(axes).map_err(|e| CliError::Validation(format!("grid: {e}")))
}

fn control_box(name: &str, b: &BoxConfig, m: usize) -> Result<ControlBox, CliError> {
    ControlBox::new(
        config::vector(&format!("{name}.lower"), &b.lower, m)?,
        config::vector(&format!("{name}.upper"), &b.upper, m)?,
    )
    .map_err(|e| CliError::Validation(format!("{name}: {e}")))
}

fn terminal(t: &TerminalConfig, n: usize) -> Result<QuadraticGeneratingFunction, CliError> {
    let q = match t {
        TerminalConfig::Quadratic { p, s, r } => {
            let a = config::matrix("terminal.quadratic.P", p)?;
            let b = match s {
                Some(s) => config::vector("terminal.quadratic.s", s, n)?,
                None => Vector::zeros(n),
            };
            QuadraticGeneratingFunction::new(a, b, *r)
        }
        TerminalConfig::Penalty { target, mu } => terminal_penalty(&config::vector("terminal.penalty.target", target, n)?, *mu),
    };
    let q = q.map_err(|e| CliError::Validation(format!("terminal: {e}")))?;
    if q.dim() != n {
        return Err(CliError::Validation(format!("terminal has dimension {}, expected {n}", q.dim())));
    }
    Ok(q)
}

fn bellman_config(s: &SearchSettings) -> Result<BellmanConfig, CliError> {
    let interpolator = registry::interpolators()
        .get(&s.interpolator)
        .map_err(|e| CliError::Validation(format!("search.interpolator: {e}")))?;
    let search = ControlSearchConfig {
        scan_points: s.scan_points,
        ..ControlSearchConfig::default()
    };
    search.validate().map_err(|e| CliError::Validation(format!("search: {e}")))?;
    Ok(BellmanConfig {
        search,
        interpolator,
        ..BellmanConfig::default()
    })
}

fn lq_problem(cfg: &LqConfig, term: QuadraticGeneratingFunction, horizon: usize) -> Result<LqProblem, CliError> {
    let f = config::matrix("problem.F", &cfg.f)?;
    let g = config::matrix("problem.G", &cfg.g)?;
    let (n, m) = (f.nrows(), g.ncols());
    let opt_vec = |name: &str, v: &Option<Vec<f64>>, len: usize| match v {
        Some(v) => config::vector(name, v, len),
        None => Ok(Vector::zeros(len)),
    };
    LqProblem {
        e: opt_vec("problem.e", &cfg.e, n)?,
        q_lin: opt_vec("problem.q_lin", &cfg.q_lin, n)?,
        u_lin: opt_vec("problem.u_lin", &cfg.u_lin, m)?,
        n: match &cfg.n_cross {
            Some(rows) => config::matrix("problem.Ncross", rows)?,
            None => Matrix::zeros(n, m),
        },
        q: config::matrix("problem.Q", &cfg.q)?,
        r: config::matrix("problem.R", &cfg.r)?,
        f,
        g,
        terminal: term,
        horizon,
    }
    .validated()
    .map_err(|e| CliError::Validation(format!("problem: {e}")))
}

/// Value table, policy table and rollout shared by both Bellman commands.
struct BellmanTables {
    values: Table,
    policy: Table,
    rollout: Table,
    report: serde_json::Map<String, Value>,
}

fn solve_and_tabulate(
    ocp: &discrete_hj::docp::DiscreteOCP,
    grid: &GridSpec,
    term: &QuadraticGeneratingFunction,
    bcfg: &BellmanConfig,
    analytic: Option<&[QuadraticGeneratingFunction]>,
) -> Result<BellmanTables, CliError> {
    let (n, m) = (ocp.state_dim(), ocp.control_dim());
    let terminal_fn = |q: &Vector| term.value(q);
    let sol = bellman_backward(ocp, grid, &terminal_fn, bcfg).map_err(core("Bellman recursion"))?;
    let nodes = grid.nodes();
    let qn = coordinate_names("q", n);
    let un = coordinate_names("u", m);

    let mut headers = vec!["k".to_string()];
    headers.extend(qn.clone());
    headers.push("J".into());
    if analytic.is_some() {
        headers.push("J_analytic".into());
    }
    let mut values = Table::new(headers);
    let mut worst = 0.0_f64;
    for (k, stage) in sol.values.stages.iter().enumerate() {
        for (node, q) in nodes.iter().enumerate() {
            let mut row: Vec<f64> = q.iter().copied().collect();
            row.push(stage[node]);
            if let Some(exact) = analytic {
                let j = exact[k].value(q);
                worst = worst.max((j - stage[node]).abs());
                row.push(j);
            }
            values.push(k.to_string(), &row)?;
        }
    }

    let mut headers = vec!["k".to_string()];
    headers.extend(qn.clone());
    headers.extend(un.clone());
    let mut policy = Table::new(headers);
    for (k, stage) in sol.policy.controls.iter().enumerate() {
        for (q, u) in nodes.iter().zip(stage) {
            let row: Vec<f64> = q.iter().chain(u.iter()).copied().collect();
            policy.push(k.to_string(), &row)?;
        }
    }

    let path = rollout(ocp, &sol.policy, &ocp.q0, ocp.horizon).map_err(core("rollout"))?;
    let inside: Vec<Vector> = path.states.iter().take_while(|q| grid.contains(q)).cloned().collect();
    let costates = costate_from_value(&sol.values, &inside).map_err(core("costate"))?;
    let mut headers = vec!["k".to_string()];
    headers.extend(qn);
    headers.extend(coordinate_names("p", n));
    let mut rollout_table = Table::new(headers);
    let mut costate_gap = 0.0_f64;
    for (k, (q, est)) in inside.iter().zip(&costates).enumerate() {
        if let Some(exact) = analytic {
            costate_gap = costate_gap.max((&est.p + exact[k].gradient(q)).amax());
        }
        let row: Vec<f64> = q.iter().chain(est.p.iter()).copied().collect();
        rollout_table.push(k.to_string(), &row)?;
    }

    let mut report = serde_json::Map::new();
    report.insert("N".into(), json!(ocp.horizon));
    report.insert("grid_nodes".into(), json!(grid.node_count()));
    report.insert("value_at_q0".into(), json!(sol.values.value(0, &ocp.q0).map_err(core("value at q0"))?));
    report.insert("rollout_cost".into(), json!(path.cost));
    report.insert("rollout_controls".into(), json!(path.controls.iter().map(|u| u.as_slice().to_vec()).collect::<Vec<_>>()));
    report.insert("non_concave_nodes".into(), json!(sol.non_concave_nodes));
    report.insert("one_sided_costates".into(), json!(costates.iter().filter(|c| c.one_sided).count()));
    report.insert("rollout_states_outside_grid".into(), json!(path.states.len() - inside.len()));
    if let Some(exact) = analytic {
        report.insert("analytic_value_at_q0".into(), json!(exact[0].value(&ocp.q0)));
        report.insert("max_value_error".into(), json!(worst));
        report.insert("max_costate_error".into(), json!(costate_gap));
    }
    Ok(BellmanTables {
        values,
        policy,
        rollout: rollout_table,
        report,
    })
}

fn write_bellman(out: &Path, t: BellmanTables, mut head: serde_json::Map<String, Value>) -> Result<Outcome, CliError> {
    let mut files = Vec::new();
    write_table(out, "values.csv", &t.values, &mut files)?;
    write_table(out, "policy.csv", &t.policy, &mut files)?;
    write_table(out, "rollout.csv", &t.rollout, &mut files)?;
    head.extend(t.report);
    Ok(Outcome {
        files,
        report: Value::Object(head),
        failure: None,
    })
}

pub fn bellman_cmd(cfg: &BellmanRunConfig, out: &Path) -> Result<Outcome, CliError> {
    let n = cfg.problem.f.len();
    let term = terminal(&cfg.terminal, n)?;
    let problem = lq_problem(&cfg.problem, term.clone(), cfg.steps)?;
    let m = problem.control_dim();
    let grid = grid_spec(&cfg.grid)?;
    let ocp = problem
        .to_ocp(control_box("control_box", &cfg.control_box, m)?, config::vector("q0", &cfg.q0, n)?)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let analytic = match lq_value_analytic(&problem) {
        Ok(sol) => Some(sol.values),
        Err(e) => {
            log::warn!("no closed-form comparison: {e}");
            None
        }
    };
    let tables = solve_and_tabulate(&ocp, &grid, &term, &bellman_config(&cfg.search)?, analytic.as_deref())?;
    let mut head = serde_json::Map::new();
    head.insert("problem".into(), json!("lq"));
    head.insert("interpolator".into(), json!(cfg.search.interpolator));
    write_bellman(out, tables, head)
}

pub fn galerkin_bellman_cmd(cfg: &GalerkinBellmanConfig, out: &Path) -> Result<Outcome, CliError> {
    let system = registry::control_systems()
        .get(&cfg.system)
        .map_err(|e| CliError::Validation(format!("system: {e}")))?;
    let tableau = registry::tableaus()
        .get(&cfg.tableau)
        .map_err(|e| CliError::Validation(format!("tableau: {e}")))?;
    let (n, m) = (system.state_dim(), system.control_dim());
    let h = config::positive("h", cfg.h)?;
    let term = terminal(&cfg.terminal, n)?;
    let grid = grid_spec(&cfg.grid)?;
    let ocp = build_docp(
        system.clone(),
        (*tableau).clone(),
        h,
        cfg.steps,
        &control_box("stage_box", &cfg.stage_box, m)?,
        config::vector("q0", &cfg.q0, n)?,
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let tables = solve_and_tabulate(&ocp, &grid, &term, &bellman_config(&cfg.search)?, None)?;
    let mut head = serde_json::Map::new();
    head.insert("system".into(), json!(system.name()));
    head.insert("tableau".into(), json!(tableau.name));
    head.insert("stages".into(), json!(tableau.stages()));
    head.insert("h".into(), json!(h));
    head.insert("interpolator".into(), json!(cfg.search.interpolator));
    write_bellman(out, tables, head)
}

pub fn heisenberg_cmd(cfg: &HeisenbergConfig, out: &Path) -> Result<Outcome, CliError> {
    let h_min = config::positive("h_min", cfg.h_min)?;
    let h_max = config::positive("h_max", cfg.h_max)?;
    if h_max < h_min {
        return Err(CliError::Validation("h_max must be at least h_min".into()));
    }
    let (qr, ur) = (config::positive("state_radius", cfg.state_radius)?, config::positive("control_radius", cfg.control_radius)?);
    let tolerance = config::positive("tolerance", cfg.tolerance)?;
    let system = registry::control_systems().get("heisenberg").map_err(core("registry"))?;
    let tableau = registry::tableaus().get("stormer_verlet").map_err(core("registry"))?;
    let newton = discrete_hj::NewtonConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = Table::new([
        "sample", "h", "x", "y", "z", "u1", "v1", "u2", "v2", "x1", "y1", "z1", "x1_closed", "y1_closed", "z1_closed", "gap",
    ]);
    let mut worst = 0.0_f64;
    for i in 0..cfg.samples {
        let h = if h_max > h_min { rng.random_range(h_min..=h_max) } else { h_min };
        let q = Vector::from_fn(3, |_, _| rng.random_range(-qr..=qr));
        let u1 = Vector::from_fn(2, |_, _| rng.random_range(-ur..=ur));
        let u2 = Vector::from_fn(2, |_, _| rng.random_range(-ur..=ur));
        let generic = discrete_dynamics(system.as_ref(), &tableau, &q, &[u1.clone(), u2.clone()], h, &newton)
            .map_err(core("Galerkin step"))?;
        let closed = heisenberg_fd_closed_form(&q, &u1, &u2, h);
        let gap = (&generic - &closed).amax();
        worst = worst.max(gap);
        let mut row = vec![h];
        for v in [&q, &u1, &u2, &generic, &closed] {
            row.extend(v.iter());
        }
        row.push(gap);
        table.push(i.to_string(), &row)?;
    }
    let mut files = Vec::new();
    write_table(out, "heisenberg.csv", &table, &mut files)?;
    let passed = worst <= tolerance;
    Ok(Outcome {
        files,
        report: json!({
            "samples": cfg.samples,
            "max_gap": worst,
            "tolerance": tolerance,
            "passed": passed,
        }),
        failure: (!passed).then(|| format!("closed-form gap {worst:e} exceeds tolerance {tolerance:e}")),
    })
}

pub fn convergence_cmd(cfg: &ConvergenceConfig, out: &Path) -> Result<Outcome, CliError> {
    let system = registry::control_systems()
        .get(&cfg.system)
        .map_err(|e| CliError::Validation(format!("system: {e}")))?;
    let (n, m) = (system.state_dim(), system.control_dim());
    let q0 = config::vector("q0", &cfg.q0, n)?;
    if cfg.controls.len() != m {
        return Err(CliError::Validation(format!("`controls` has {} signals, {} has {m} controls", cfg.controls.len(), system.name())));
    }
    let t_end = config::positive("t_end", cfg.t_end)?;
    if cfg.steps.contains(&0) || cfg.reference_steps == 0 {
        return Err(CliError::Validation("step counts must be positive".into()));
    }
    let newton = cfg.newton.build()?;
    let signals = cfg.controls.clone();
    let control = move |t: f64| Vector::from_iterator(signals.len(), signals.iter().map(|s| s.eval(t)));
    let reference = rk4_reference(system.as_ref(), &control, &q0, t_end, cfg.reference_steps).map_err(core("reference solution"))?;
    let hs: Vec<f64> = cfg.steps.iter().map(|s| t_end / *s as f64).collect();

    let mut table = Table::new(["tableau", "steps", "h", "error", "slope"]);
    let mut reports = Vec::new();
    for name in &cfg.tableaus {
        let tableau = registry::tableaus()
            .get(name)
            .map_err(|e| CliError::Validation(format!("tableaus: {e}")))?;
        let errors = cfg
            .steps
            .iter()
            .map(|&steps| global_error(system.as_ref(), &tableau, &control, &q0, t_end, steps, &reference, &newton))
            .collect::<discrete_hj::Result<Vec<f64>>>()
            .map_err(core("convergence study"))?;
        let report = report_convergence(&hs, &errors)?;
        for (i, (&steps, (&h, &e))) in cfg.steps.iter().zip(hs.iter().zip(&errors)).enumerate() {
            let slope = if i == 0 { String::new() } else { report.slopes[i - 1].label() };
            table.push_raw(vec![name.clone(), steps.to_string(), crate::output::fmt_real(h), crate::output::fmt_real(e), slope])?;
        }
        reports.push(json!({
            "tableau": name,
            "stages": tableau.stages(),
            "report": report,
        }));
    }
    let mut files = Vec::new();
    write_table(out, "convergence.csv", &table, &mut files)?;
    Ok(Outcome {
        files,
        report: json!({
            "system": system.name(),
            "t_end": t_end,
            "reference_steps": cfg.reference_steps,
            "tableaus": reports,
        }),
        failure: None,
    })
}
