//! One function per experiment; each returns named checks, estimates and
//! the module reports behind them.

use std::sync::Arc;

use crate::asymptotics::{
    check_drift_bound, decay_experiment, estimate_invariant_measure, gaussian_cdf, half_gaussian_cdf, ks_statistic,
    supermartingale_test, DecayOptions, InvariantOptions,
};
use crate::det_solver::{default_levels, solve_gd, solve_penalized, verify_vi, DetProblem, DetScheme, GenSolution};
use crate::error::{Error, Result};
use crate::hspace::{HPath, HSpace, Point, TimeGrid};
use crate::monotone_ops::{audit_h1, sample_graph_pairs};
use crate::rng::RngSeed;
use crate::sde_solver::{default_picard_weight, solve_msde, solve_sde, GenSolutionStoch, SdeScheme};
use crate::stochastic::{integrate_operator, sample_qwiener, Estimate};

use super::artifacts::{Check, Outcome, Series};
use super::build;
use super::config::{Experiment, Loaded, OracleSpec};

/// Fixed seed of the comparison pairs used by the variational certificate.
const VI_PAIR_SEED: u64 = 0x5eed;
const VI_PAIRS: usize = 16;

pub fn run(loaded: &Loaded) -> Result<Outcome> {
    match loaded.scenario.experiment {
        Experiment::SolveDet => solve_det(loaded),
        Experiment::SolveSde => solve_sde_run(loaded),
        Experiment::Convergence => convergence(loaded),
        Experiment::Stability => stability(loaded),
        Experiment::Invariant => invariant(loaded),
        Experiment::Audit => audit(loaded),
    }
}

fn grid(loaded: &Loaded) -> Result<Arc<TimeGrid>> {
    let g = &loaded.scenario.grid;
    TimeGrid::uniform(g.horizon, g.steps).map(Arc::new)
}

fn seed(loaded: &Loaded) -> Result<RngSeed> {
    loaded
        .seed()
        .ok_or_else(|| loaded.locate("ensemble.seed", "a seed is required"))
}

fn paths(loaded: &Loaded) -> usize {
    loaded.scenario.ensemble.as_ref().map_or(1, |e| e.paths)
}

fn component_header(prefix: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    (1..=dim).map(move |i| format!("{prefix}{i}"))
}

fn vi_check(space: &HSpace, op: &crate::monotone_ops::MonotoneOperator, sol: &GenSolution, tol: f64) -> Result<(Check, crate::det_solver::ViReport)> {
    let pairs = sample_graph_pairs(op, space, VI_PAIRS, RngSeed::new(VI_PAIR_SEED), 1.0)?;
    let report = verify_vi(space, sol, &pairs, op.alpha(), tol)?;
    let check = Check {
        name: "vi-certificate".into(),
        pass: report.pass,
        value: report.min_value,
        threshold: -tol,
    };
    Ok((check, report))
}

fn identity_check(value: f64, scale: f64, tol: f64) -> Check {
    Check::at_most("identity-residual", value, tol * (1.0 + scale))
}

fn solve_det(loaded: &Loaded) -> Result<Outcome> {
    let sc = &loaded.scenario;
    let space = build::space(loaded)?;
    let op = build::operator(loaded, &space)?;
    let u0 = build::point(loaded, "input.u0", &space, &sc.input.u0)?;
    let grid = grid(loaded)?;
    let dim = space.dim();
    let f = match &sc.input.forcing {
        Some(f) => build::point(loaded, "input.forcing", &space, f)?,
        None => Point::zeros(dim),
    };
    let forcing = HPath::constant(grid.clone(), f.as_slice());
    let noise = if sc.noise.is_some() && !matches!(sc.diffusion, crate::sde_solver::Diffusion::Zero) {
        let problem = build::sde_problem(loaded)?;
        if !problem.diffusion.is_additive() {
            return Err(loaded.locate("diffusion", "a deterministic run needs additive noise"));
        }
        let columns = problem.diffusion.matrix_at(&vec![0.0; dim], problem.noise.modes());
        let w = sample_qwiener(&space, &problem.noise, grid.clone(), seed(loaded)?.child(0));
        integrate_operator(&columns, &w)?
    } else {
        HPath::zeros(grid.clone(), dim)
    };
    let problem = DetProblem::new(space.clone(), op.clone(), u0, forcing, noise)?;
    let sol = match sc.scheme {
        SdeScheme::Prox => solve_gd(&problem, &default_levels(&grid), DetScheme::Prox, sc.tolerances.cauchy)?,
        SdeScheme::Penalized { eps } => solve_penalized(&problem, eps)?,
    };

    let mut out = Outcome::default();
    let scale = sol.u.sup_norm(&space) + sol.eta.sup_norm(&space);
    out.checks.push(identity_check(sol.residual_identity, scale, sc.tolerances.identity));
    if sc.scheme == SdeScheme::Prox {
        let (check, report) = vi_check(&space, &op, &sol, sc.tolerances.vi)?;
        out.checks.push(check);
        out.report("vi", &report);
    }
    for (i, v) in sol.u.last().iter().enumerate() {
        out.estimates.insert(format!("u{}_final", i + 1), *v);
    }
    out.estimates.insert("bv_eta_xstar".into(), sol.bv_eta_xstar);
    out.report("diagnostics", &sol.diagnostics);

    let mut series = Series::new(
        std::iter::once("t".to_string())
            .chain(component_header("u", dim))
            .chain(component_header("eta", dim))
            .collect(),
    );
    for k in 0..sol.u.len() {
        let mut row = vec![sol.u.times()[k]];
        row.extend_from_slice(sol.u.node(k));
        row.extend_from_slice(sol.eta.node(k));
        series.rows.push(row);
    }
    out.series = Some(series);
    Ok(out)
}

/// Ensemble mean of each component and of `|u|^2` over time.
fn mean_series(space: &HSpace, sol: &GenSolutionStoch) -> Series {
    let dim = space.dim();
    let mut series = Series::new(
        std::iter::once("t".to_string())
            .chain(component_header("mean_u", dim))
            .chain(std::iter::once("mean_sq_norm".to_string()))
            .collect(),
    );
    let Some(first) = sol.paths.first() else {
        return series;
    };
    let n = sol.paths.len() as f64;
    for k in 0..first.u.len() {
        let mut row = vec![first.u.times()[k]];
        let mut sq = 0.0;
        let mut mean = vec![0.0; dim];
        for p in &sol.paths {
            let x = p.u.node(k);
            for c in 0..dim {
                mean[c] += x[c] / n;
            }
            sq += space.norm_sq(x) / n;
        }
        row.extend(mean);
        row.push(sq);
        series.rows.push(row);
    }
    series
}

fn final_estimates(out: &mut Outcome, space: &HSpace, sol: &GenSolutionStoch) {
    let dim = space.dim();
    for c in 0..dim {
        let v: Vec<f64> = sol.paths.iter().map(|p| p.u.last()[c]).collect();
        let e = Estimate::from_samples(&v);
        out.estimates.insert(format!("u{}_final_mean", c + 1), e.mean);
        out.estimates.insert(format!("u{}_final_stderr", c + 1), e.stderr);
    }
    let sq: Vec<f64> = sol.paths.iter().map(|p| space.norm_sq(p.u.last())).collect();
    let e = Estimate::from_samples(&sq);
    out.estimates.insert("final_sq_norm_mean".into(), e.mean);
    out.estimates.insert("final_sq_norm_stderr".into(), e.stderr);
}

fn solve_sde_run(loaded: &Loaded) -> Result<Outcome> {
    let sc = &loaded.scenario;
    let problem = build::sde_problem(loaded)?;
    let sol = solve_sde(&problem, sc.scheme, grid(loaded)?, seed(loaded)?, paths(loaded))?;
    let space = &problem.space;
    let mut out = Outcome::default();
    let scale = sol.paths.iter().map(|p| p.u.sup_norm(space) + p.eta.sup_norm(space)).fold(0.0, f64::max);
    out.checks.push(identity_check(sol.max_identity_residual(), scale, sc.tolerances.identity));
    let ratio = sol.moment_ratio(space, problem.u0.as_slice());
    out.checks.push(Check::at_most("moment-ratio-finite", ratio, f64::MAX));
    final_estimates(&mut out, space, &sol);
    out.estimates.insert("moment_ratio".into(), ratio);
    out.report("constants", &problem.constants);
    out.series = Some(mean_series(space, &sol));
    Ok(out)
}

fn convergence(loaded: &Loaded) -> Result<Outcome> {
    let sc = &loaded.scenario;
    let spec = sc.convergence.clone().unwrap_or_default();
    let problem = build::sde_problem(loaded)?;
    let grid = grid(loaded)?;
    let a_weight = spec
        .a_weight
        .unwrap_or_else(|| default_picard_weight(&problem, grid.horizon()));
    let mut out = Outcome::default();
    out.estimates.insert("a_weight".into(), a_weight);
    let sol = match solve_msde(&problem, grid.clone(), seed(loaded)?, paths(loaded), sc.tolerances.picard, a_weight) {
        Ok(sol) => sol,
        Err(Error::NoContraction { ratio, history }) => {
            out.checks.push(Check::at_most("picard-contraction", ratio, spec.max_ratio));
            out.report("increments", &history);
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.checks.push(Check::at_most(
        "picard-contraction",
        sol.diagnostics["max_contraction_ratio"],
        spec.max_ratio,
    ));
    out.checks.push(Check::at_most(
        "picard-iterations",
        sol.picard_iters as f64,
        spec.max_iterations as f64,
    ));
    out.estimates.insert("picard_iterations".into(), sol.picard_iters as f64);
    out.report("diagnostics", &sol.diagnostics);
    final_estimates(&mut out, &problem.space, &sol);
    out.series = Some(mean_series(&problem.space, &sol));
    Ok(out)
}

fn stability(loaded: &Loaded) -> Result<Outcome> {
    let sc = &loaded.scenario;
    let spec = sc.stability.as_ref().expect("resolved scenario has [stability]");
    let problem = build::sde_problem(loaded)?;
    let space = &problem.space;
    let grid = grid(loaded)?;
    let u0 = build::point(loaded, "stability.u0", space, &spec.u0)?;
    let v0 = build::point(loaded, "stability.v0", space, &spec.v0)?;
    let options = DecayOptions {
        theta: spec.theta,
        slack: spec.slack,
    };
    let seed = seed(loaded)?;
    let n = paths(loaded);
    let (report, ensemble) = decay_experiment(&problem, &u0, &v0, &grid, &spec.times, n, seed, options)?;
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("decay-bound", report.bound_violations as f64, 0.0));
    let lags: Vec<(usize, usize)> = (1..ensemble.times.len()).map(|j| (j - 1, j)).collect();
    if !lags.is_empty() && n >= 10 {
        let sm = supermartingale_test(&ensemble, report.beta, &lags)?;
        out.checks.push(Check {
            name: "supermartingale".into(),
            pass: sm.pass,
            value: sm.worst_z,
            threshold: 3.0,
        });
        out.report("supermartingale", &sm);
    }
    if let (Some(x0), Some(y0)) = (&spec.x0, &spec.y0) {
        let x0 = build::point(loaded, "stability.x0", space, x0)?;
        let y0 = build::point(loaded, "stability.y0", space, y0)?;
        let drift = check_drift_bound(&problem, &x0, &y0, &grid, n, seed.child(1 << 32), spec.drift_checks)?;
        out.checks.push(Check::at_most("drift-bound-level", drift.level_ratio, 1.0));
        out.checks.push(Check::at_most("drift-bound-increment", drift.increment_ratio, 1.0));
        out.report("drift_bound", &drift);
    }
    out.estimates.insert("beta0".into(), report.beta0);
    out.estimates.insert("measured_rate".into(), report.measured_rate);
    let mut series = Series::new(vec![
        "t".into(),
        "mean_sq_diff".into(),
        "stderr".into(),
        "bound".into(),
    ]);
    for ((t, e), b) in report.times.iter().zip(&report.mean_sq_diff).zip(&report.bound) {
        series.rows.push(vec![*t, e.mean, e.stderr, *b]);
    }
    out.series = Some(series);
    out.report("decay", &report);
    Ok(out)
}

fn invariant(loaded: &Loaded) -> Result<Outcome> {
    let sc = &loaded.scenario;
    let spec = sc.invariant.clone().unwrap_or_default();
    let problem = build::sde_problem(loaded)?;
    let space = &problem.space;
    let grid = &sc.grid;
    let mut options = InvariantOptions::for_problem(&problem, grid.horizon / grid.steps as f64, paths(loaded), seed(loaded)?)
        .map_err(|e| loaded.locate("operator.modulus", e.to_string()))?;
    options.horizon = grid.horizon;
    if let Some(b) = spec.burn_in {
        options.burn_in = b;
    }
    if options.burn_in >= options.horizon {
        return Err(loaded.locate("invariant.burn_in", "must be below grid.horizon"));
    }
    if let Some(initials) = &spec.initials {
        options.initials = initials
            .iter()
            .map(|x| build::point(loaded, "invariant.initials", space, x))
            .collect::<Result<_>>()?;
    }
    options.stationarity_tol = spec.stationarity_tol;
    options.floor_factor = spec.floor_factor;
    let (measure, report) = estimate_invariant_measure(&problem, &options)?;

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("stationarity", report.stationarity_gap, spec.stationarity_tol));
    if let Some(worst) = report.cross_distances.iter().copied().reduce(f64::max) {
        out.checks.push(Check::at_most("initial-condition-independence", worst, spec.floor_factor * report.noise_floor));
    }
    if let Some(oracle) = &spec.oracle {
        let ks = match *oracle {
            OracleSpec::Gaussian { mean, scale } => ks_statistic(&measure, |x| gaussian_cdf(x, mean, scale)),
            OracleSpec::HalfGaussian { lo, scale } => ks_statistic(&measure, |x| half_gaussian_cdf(x, lo, scale)),
        };
        out.checks.push(Check::at_most("ks-oracle", ks, spec.ks_tol));
    }
    for (c, (m, v)) in report.mean.iter().zip(&report.variance).enumerate() {
        out.estimates.insert(format!("u{}_mean", c + 1), *m);
        out.estimates.insert(format!("u{}_variance", c + 1), *v);
    }
    out.report("invariant", &report);
    let mut series = Series::new(
        std::iter::once("sample".to_string())
            .chain(component_header("u", space.dim()))
            .collect(),
    );
    for i in 0..measure.len() {
        let mut row = vec![i as f64];
        row.extend_from_slice(measure.sample(i));
        series.rows.push(row);
    }
    out.series = Some(series);
    Ok(out)
}

pub fn audit(loaded: &Loaded) -> Result<Outcome> {
    let Some(spec) = &loaded.scenario.audit else {
        return Err(loaded.locate("audit", "missing [audit] table"));
    };
    let space = build::space(loaded)?;
    let op = build::operator(loaded, &space)?;
    let h0 = build::point(loaded, "audit.h0", &space, &spec.h0)?;
    let seed = loaded.seed().unwrap_or(RngSeed::new(0));
    let report = audit_h1(&op, &space, &h0, spec.r0, spec.a1, spec.a2, spec.samples, seed)?;
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("h1-feasible", report.worst_violation, 0.0));
    out.report("h1", &report);
    Ok(out)
}
