use pclocal::ball::{bfs_ball, local_radius};
use pclocal::explore::{default_spectral_tmax, locality_experiment, survival_runs, ExplorationParams, LocalityConfig};
use pclocal::graph::{FamilyKind, ImplicitGraph};
use pclocal::perc::{connection_ratio_report, connection_prob, pc_estimate, tree_pc_oracle, BISECTION_TOL};
use pclocal::walk::{quotient_identity_check, root_exit_report, spectral_estimate};
use pclocal::Error;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

/// CSV rows plus a JSON summary for the manifest.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: Value,
    /// Set when only part of the table could be produced.
    pub failure: Option<CliError>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
            summary: Value::Null,
            failure: None,
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

fn graph(cfg: &ExperimentConfig) -> Result<ImplicitGraph, CliError> {
    Ok(cfg.family()?.build()?)
}

fn joined<T: ToString>(xs: impl IntoIterator<Item = T>, sep: &str) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

pub fn graph_info(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let desc = cfg.family()?;
    let g = desc.build()?;
    let r = cfg.radius.unwrap_or(3);
    let ball = bfs_ball(&g, &g.root(), r)?;
    let mut t = Table::new(vec!["key", "value"]);
    t.push(row!["label", g.label()]);
    t.push(row!["degree", g.degree()]);
    t.push(row!["generators", joined(g.generators(), " ")]);
    t.push(row!["level_sizes", joined(ball.level_sizes(), ";")]);
    t.push(row!["edges", ball.num_edges()]);
    t.push(row!["self_loop_slots", ball.self_loop_slots()]);
    let mut summary = json!({
        "label": g.label(),
        "degree": g.degree(),
        "radius": r,
        "level_sizes": ball.level_sizes(),
    });
    if let Some(ctx) = g.coset_context() {
        let lr = local_radius(&g, &desc.base().build()?, r)?;
        t.push(row!["subgroup_generator", ctx.generator()]);
        t.push(row!["local_radius", lr.radius]);
        t.push(row!["local_radius_is_lower_bound", lr.lower_bound]);
        summary["local_radius"] = json!(lr.radius);
        summary["local_radius_is_lower_bound"] = json!(lr.lower_bound);
    }
    t.summary = summary;
    Ok(t)
}

pub fn ball(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let g = graph(cfg)?;
    let b = bfs_ball(&g, &g.root(), cfg.radius()?)?;
    let mut t = Table::new(vec!["level", "vertices", "edges_within", "edges_down"]);
    for (j, (&n, &(within, down))) in b.level_sizes().iter().zip(&b.level_edge_counts()).enumerate() {
        t.push(row![j, n, within, down]);
    }
    t.summary = json!({"vertices": b.len(), "edges": b.num_edges(), "self_loop_slots": b.self_loop_slots()});
    Ok(t)
}

pub fn harmonic(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let g = graph(cfg)?;
    let (dist, classes, rep) = root_exit_report(&g, cfg.radius()?)?;
    let mut t = Table::new(vec!["vertex", "class", "mu"]);
    for ((v, c), m) in dist.vertices.iter().zip(&classes).zip(&dist.mu) {
        t.push(row![v, c, m]);
    }
    t.summary = json!({
        "total": dist.total(),
        "global_ratio": rep.global_ratio,
        "within_class_max": rep.within_class_max(),
        "zero_mass": rep.zero_mass,
    });
    Ok(t)
}

pub fn assumption(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let g = graph(cfg)?;
    let rmax = cfg.radius()?;
    let p = ExperimentConfig::probability("--p", cfg.p)?;
    let seed = cfg.seed()?;
    let trials = cfg.trials(100_000)?;
    let mut t = Table::new(vec![
        "n",
        "mu_ratio",
        "mu_within_class",
        "b_min_ratio",
        "b_max_ratio",
        "sigma_min",
        "sigma_max",
        "zero_flag",
        "holds",
    ]);
    let mut all = true;
    for n in 1..=rmax {
        let (_, classes, mu) = root_exit_report(&g, n)?;
        let b = bfs_ball(&g, &g.root(), n)?;
        let rep = connection_ratio_report(&b, p, trials, seed, &classes)?;
        all &= rep.holds();
        t.push(row![
            n,
            mu.global_ratio,
            mu.within_class_max(),
            rep.min_ratio,
            rep.max_ratio,
            rep.sigma_min,
            rep.sigma_max,
            rep.zero_flag,
            rep.holds()
        ]);
    }
    t.summary = json!({"p": p, "trials": trials, "connection_bounds_hold": all});
    Ok(t)
}

pub fn spectral(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let g = graph(cfg)?;
    let tmax = cfg.tmax.unwrap_or_else(|| default_spectral_tmax(g.kind()));
    let est = spectral_estimate(&g, tmax)?;
    let mut t = Table::new(vec!["t", "return_prob", "root"]);
    for &(s, root) in &est.roots {
        t.push(row![s, est.returns[s], root]);
    }
    t.summary = json!({
        "tmax": tmax,
        "rho_hat": est.rho_hat,
        "rho_linear": est.rho_linear,
        "rho_free": est.rho_free,
        "rho_lo": est.rho_lo,
        "rho_hi": est.rho_hi,
        "lambda_hat": est.lambda_hat,
        "lambda_pessimistic": est.lambda_pessimistic,
    });
    Ok(t)
}

pub fn quotient_check(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let desc = cfg.family()?;
    let ns = match (desc.quotient_n, &cfg.n_list) {
        (Some(n), None) => vec![n],
        _ => cfg.n_list()?,
    };
    let jmax = cfg.radius.unwrap_or(10);
    let base = desc.base().build()?;
    let mut t = Table::new(vec!["n", "j", "residual"]);
    let mut worst = 0.0f64;
    for n in ns {
        let q = desc.with_quotient(n).build()?;
        let ctx = q.coset_context().expect("quotient graph").clone();
        for j in 1..=jmax {
            let r = quotient_identity_check(&base, &q, &ctx, j)?;
            worst = worst.max(r);
            t.push(row![n, j, r]);
        }
    }
    t.summary = json!({"max_residual": worst});
    Ok(t)
}

pub fn percolate(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let g = graph(cfg)?;
    let r = cfg.radius()?;
    let p = ExperimentConfig::probability("--p", cfg.p)?;
    let seed = cfg.seed()?;
    let trials = cfg.trials(10_000)?;
    let b = bfs_ball(&g, &g.root(), r)?;
    let est = connection_prob(&b, p, trials, seed)?;
    let mut t = Table::new(vec!["vertex", "class", "b", "stderr"]);
    for (v, e) in est.vertices.iter().zip(&est.estimates) {
        t.push(row![v, g.sphere_class(v), e.value, e.stderr]);
    }
    t.summary = json!({"p": p, "radius": r, "trials": trials, "sphere_size": est.vertices.len()});
    Ok(t)
}

pub fn pc_estimate_cmd(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let g = graph(cfg)?;
    let ns: Vec<usize> = match (&cfg.n_list, cfg.radius) {
        (None, Some(r)) => vec![r],
        _ => cfg.n_list()?.into_iter().map(|n| n as usize).collect(),
    };
    let theta = cfg.theta_star()?;
    let seed = cfg.seed()?;
    let trials = cfg.trials(20_000)?;
    let rep = pc_estimate(&g, &ns, theta, trials, seed)?;
    let tree = (g.kind() == FamilyKind::Tree && !g.is_quotient()).then(|| g.degree());
    let mut t = Table::new(vec!["n", "p_hat", "stderr", "trials", "tree_oracle"]);
    for pt in &rep.points {
        let oracle = match tree {
            Some(d) => tree_pc_oracle(d, pt.n, theta, BISECTION_TOL)?.to_string(),
            None => String::new(),
        };
        t.push(row![pt.n, pt.p_hat, pt.stderr, pt.trials, oracle]);
    }
    t.summary = json!({"theta_star": theta, "p_hat": rep.estimate().p_hat, "stderr": rep.estimate().stderr});
    Ok(t)
}

pub fn explore(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let desc = cfg.family()?;
    let g = desc.build()?;
    let r_n = match (cfg.radius, desc.quotient_n) {
        (Some(r), _) => r,
        (None, Some(n)) => local_radius(&g, &desc.base().build()?, n as usize + 2)?.radius,
        (None, None) => return Err(CliError::missing("--radius (or --quotient-n)")),
    };
    let tmax = cfg.tmax.unwrap_or_else(|| default_spectral_tmax(g.kind()));
    let lambda = spectral_estimate(&g, tmax)?.lambda_pessimistic;
    let params = ExplorationParams {
        p: ExperimentConfig::probability("--p", cfg.p)?,
        eps: ExperimentConfig::probability("--eps", cfg.eps)?,
        eps1: ExperimentConfig::probability("--eps1", cfg.eps1)?,
        r_n,
        lambda,
        cap: cfg.cap.unwrap_or(10_000),
        step_cap: None,
    };
    let runs = cfg.runs.unwrap_or(200);
    let (summary, traces) = survival_runs(&g, &params, runs, cfg.seed()?)?;
    let mut t = Table::new(vec!["run", "t", "size", "z", "xi", "stop_cause"]);
    for (k, tr) in traces.iter().enumerate() {
        for s in 0..tr.sizes.len() {
            let xi = tr.xi.get(s).map(|x| x.to_string()).unwrap_or_default();
            let stop = if s + 1 == tr.sizes.len() { tr.stop.as_str() } else { "" };
            t.push(row![k, s, tr.sizes[s], tr.z_counts[s], xi, stop]);
        }
    }
    t.summary = json!({
        "r_n": r_n,
        "lambda": lambda,
        "open_probability": 1.0 - (1.0 - params.p) * (1.0 - params.eps) * (1.0 - params.eps1),
        "survival": summary,
    });
    Ok(t)
}

pub fn locality(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let desc = cfg.family()?.base();
    let ns = cfg.n_list()?;
    let mut lc = LocalityConfig::new(cfg.seed()?);
    lc.theta_star = cfg.theta_star()?;
    lc.trials = cfg.trials(lc.trials)?;
    lc.estimator_radius = cfg.radius.unwrap_or(lc.estimator_radius);
    lc.spectral_tmax = cfg.tmax;
    let mut t = Table::new(vec![
        "n",
        "r_n",
        "r_n_lower_bound",
        "lambda_hat",
        "lambda_sq_r_n",
        "pc_n",
        "se_n",
        "pc_g",
        "se_g",
        "abs_diff",
    ]);
    let (rows, trend, failure) = match locality_experiment(&desc, &ns, &lc) {
        Ok(rep) => (rep.rows, rep.trend, None),
        Err(Error::PartialLocality { rows, cause }) => (rows, None, Some(CliError::Core(*cause))),
        Err(e) => return Err(e.into()),
    };
    for r in &rows {
        t.push(row![
            r.n,
            r.r_n,
            r.r_n_lower_bound,
            r.lambda_hat,
            r.lambda_sq_r_n,
            r.pc_n,
            r.se_n,
            r.pc_g,
            r.se_g,
            r.abs_diff
        ]);
    }
    t.summary = json!({
        "theta_star": lc.theta_star,
        "estimator_radius": lc.estimator_radius,
        "trend": trend,
        "error": failure.as_ref().map(|e| e.to_string()),
    });
    t.failure = failure;
    Ok(t)
}
