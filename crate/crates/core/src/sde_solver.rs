//! Stochastic inclusions `du + A u dt ∋ f(u) dt + B(u) dW`.
//!
//! Per path, the proximal scheme
//! `u' = J_h(u + h f(u) + B(u) ΔW + h alpha u)` is the fixed point of the
//! discrete Picard map `v -> GS(A; u0, f(v), ∫B(v) dW)`; [`solve_msde`] runs
//! that iteration explicitly and [`solve_sde_prox`] steps to its fixed point
//! directly.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::det_solver::{
    blowup_limit, check_penalty, check_prox_step, solve_gd, DetProblem, DetScheme, GenSolution, MollifyLevel,
    PenaltyDrift, ProxStepper,
};
use crate::error::{check_dim, Error, Result};
use crate::hspace::{HPath, HSpace, Point, TimeGrid};
use crate::monotone_ops::{LipschitzMap, MonotoneOperator};
use crate::rng::{NoiseStream, RngSeed};
use crate::stochastic::{integrate_operator, project_martingale, sample_qwiener, Estimate, QWienerSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Drift {
    Zero,
    Constant { value: Vec<f64> },
    /// `u -> M u + offset`.
    Linear { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

impl Drift {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Drift::Zero => Ok(()),
            Drift::Constant { value } => check_dim(dim, value.len()),
            Drift::Linear { matrix, offset } => {
                check_dim(dim, offset.len())?;
                check_dim(dim, matrix.len())?;
                for row in matrix {
                    check_dim(dim, row.len())?;
                }
                Ok(())
            }
        }
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Constant { value } => out.copy_from_slice(value),
            Drift::Linear { matrix, offset } => {
                for (i, row) in matrix.iter().enumerate() {
                    out[i] = offset[i] + row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    pub fn is_state_dependent(&self) -> bool {
        matches!(self, Drift::Linear { matrix, .. } if matrix.iter().flatten().any(|v| *v != 0.0))
    }

    fn constants(&self, space: &HSpace) -> (f64, f64) {
        match self {
            Drift::Zero => (0.0, 0.0),
            Drift::Constant { value } => (0.0, space.norm_h(value)),
            Drift::Linear { matrix, offset } => {
                let l1 = LipschitzMap::Linear { matrix: matrix.clone() }.lipschitz(space);
                (l1, l1.max(space.norm_h(offset)))
            }
        }
    }
}

/// `B(u) e_i = columns[i] + sigma[i] * u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Diffusion {
    Zero,
    Additive { columns: Vec<Vec<f64>> },
    Multiplicative { sigma: Vec<f64> },
    Affine { columns: Vec<Vec<f64>>, sigma: Vec<f64> },
}

impl Diffusion {
    fn parts(&self) -> (Option<&[Vec<f64>]>, Option<&[f64]>) {
        match self {
            Diffusion::Zero => (None, None),
            Diffusion::Additive { columns } => (Some(columns), None),
            Diffusion::Multiplicative { sigma } => (None, Some(sigma)),
            Diffusion::Affine { columns, sigma } => (Some(columns), Some(sigma)),
        }
    }

    fn validate(&self, dim: usize, modes: usize) -> Result<()> {
        let (columns, sigma) = self.parts();
        if let Some(columns) = columns {
            check_dim(modes, columns.len())?;
            for c in columns {
                check_dim(dim, c.len())?;
            }
        }
        if let Some(sigma) = sigma {
            check_dim(modes, sigma.len())?;
        }
        Ok(())
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, Diffusion::Zero | Diffusion::Additive { .. })
    }

    /// `out += B(u) dw` for coordinate increments `dw`.
    pub fn add_increment(&self, u: &[f64], dw: &[f64], out: &mut [f64]) {
        let (columns, sigma) = self.parts();
        if let Some(columns) = columns {
            for (i, col) in columns.iter().enumerate() {
                for c in 0..out.len() {
                    out[c] += dw[i] * col[c];
                }
            }
        }
        if let Some(sigma) = sigma {
            let s: f64 = sigma.iter().zip(dw).map(|(a, b)| a * b).sum();
            for c in 0..out.len() {
                out[c] += s * u[c];
            }
        }
    }

    /// `B(u)` as a `dim x modes` matrix.
    pub fn matrix_at(&self, u: &[f64], modes: usize) -> DMatrix<f64> {
        let dim = u.len();
        let (columns, sigma) = self.parts();
        DMatrix::from_fn(dim, modes, |c, i| {
            columns.map_or(0.0, |cols| cols[i][c]) + sigma.map_or(0.0, |s| s[i] * u[c])
        })
    }

    fn constants(&self, space: &HSpace, noise: &QWienerSpec) -> (f64, f64) {
        let (columns, sigma) = self.parts();
        let lam = noise.eigenvalues();
        let l = sigma.map_or(0.0, |s| s.iter().zip(lam).map(|(a, b)| b * a * a).sum());
        let c = columns.map_or(0.0, |cols| cols.iter().zip(lam).map(|(col, b)| b * space.norm_sq(col)).sum());
        (l, 2.0 * l.max(c))
    }
}

/// Lipschitz and growth constants of the coefficients: `|f(u) - f(v)| <= l1 |u - v|`,
/// `|f(u)| <= b1 (1 + |u|)`, `|B(u) - B(v)|_Q^2 <= l |u - v|^2`,
/// `|B(u)|_Q^2 <= b (1 + |u|^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeConstants {
    pub l1: f64,
    pub b1: f64,
    pub l: f64,
    pub b: f64,
}

#[derive(Clone, Debug)]
pub struct SdeProblem {
    pub space: HSpace,
    pub op: MonotoneOperator,
    pub u0: Point,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub noise: QWienerSpec,
    pub constants: SdeConstants,
}

impl SdeProblem {
    pub fn new(
        space: HSpace,
        op: MonotoneOperator,
        u0: Point,
        drift: Drift,
        diffusion: Diffusion,
        noise: QWienerSpec,
    ) -> Result<Self> {
        let dim = space.dim();
        check_dim(dim, op.dim())?;
        check_dim(dim, u0.len())?;
        drift.validate(dim)?;
        diffusion.validate(dim, noise.modes())?;
        let (l1, b1) = drift.constants(&space);
        let (l, b) = diffusion.constants(&space, &noise);
        Ok(SdeProblem {
            space,
            op,
            u0,
            drift,
            diffusion,
            noise,
            constants: SdeConstants { l1, b1, l, b },
        })
    }

    pub fn with_u0(&self, u0: Point) -> Result<Self> {
        check_dim(self.space.dim(), u0.len())?;
        let mut p = self.clone();
        p.u0 = u0;
        Ok(p)
    }

    /// Decay rate `2a - 2L - L1` of the mean-square distance of two solutions.
    pub fn beta0(&self) -> f64 {
        2.0 * self.op.modulus() - 2.0 * self.constants.l - self.constants.l1
    }

    /// The rate `a - L1 - L/2` obtained from the energy argument for the drift bound.
    pub fn beta0_energy(&self) -> f64 {
        self.op.modulus() - self.constants.l1 - 0.5 * self.constants.l
    }

    /// Largest sampled Lipschitz quotients of `f` and of `B` in the Q-norm.
    pub fn sampled_constants(&self, samples: usize, seed: RngSeed) -> (f64, f64) {
        let dim = self.space.dim();
        let modes = self.noise.modes();
        let mut noise = NoiseStream::new(seed, dim);
        let (mut u, mut v) = (vec![0.0; dim], vec![0.0; dim]);
        let (mut fu, mut fv, mut d) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
        let (mut l1, mut l) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            noise.fill_step(&mut u);
            noise.fill_step(&mut v);
            let duv = self.space.dist_h(&u, &v);
            if duv == 0.0 {
                continue;
            }
            self.drift.apply(&u, &mut fu);
            self.drift.apply(&v, &mut fv);
            for c in 0..dim {
                d[c] = fu[c] - fv[c];
            }
            l1 = l1.max(self.space.norm_h(&d) / duv);
            let db = self.diffusion.matrix_at(&u, modes) - self.diffusion.matrix_at(&v, modes);
            l = l.max(self.noise.q_norm_sq(&self.space, &db) / (duv * duv));
        }
        (l1, l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum SdeScheme {
    Prox,
    Penalized { eps: f64 },
}

impl SdeScheme {
    fn check(&self, op: &MonotoneOperator, grid: &TimeGrid) -> Result<()> {
        match *self {
            SdeScheme::Prox => check_prox_step(op, grid),
            SdeScheme::Penalized { eps } => check_penalty(op, grid, eps),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct PathSummary {
    pub sup_u_sq: f64,
    pub bv_eta_xstar: f64,
    pub residual_identity: f64,
}

/// Integrates one path, calling `visit(k, u_k, eta_k)` at every node.
pub(crate) fn integrate_path(
    problem: &SdeProblem,
    scheme: SdeScheme,
    grid: &TimeGrid,
    seed: RngSeed,
    start: &[f64],
    mut visit: impl FnMut(usize, &[f64], &[f64]),
) -> Result<PathSummary> {
    let space = &problem.space;
    let dim = space.dim();
    let modes = problem.noise.modes();
    let mut noise = NoiseStream::new(seed, modes);
    let limit = blowup_limit(space, start);
    let mut stepper = ProxStepper::new(space, &problem.op);
    let penalty = match scheme {
        SdeScheme::Penalized { eps } => Some(PenaltyDrift::new(space, &problem.op, eps)),
        SdeScheme::Prox => None,
    };

    let mut u = start.to_vec();
    let mut eta = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut d_eta = vec![0.0; dim];
    let mut incr = vec![0.0; dim];
    let mut fu = vec![0.0; dim];
    let mut dw = vec![0.0; modes];
    let mut g_now = vec![0.0; dim];
    let mut g_next = vec![0.0; dim];
    let mut target = start.to_vec();
    let mut defect = vec![0.0; dim];
    if let Some(p) = &penalty {
        p.eval(&u, &mut g_now)?;
    }
    let mut summary = PathSummary {
        sup_u_sq: space.norm_sq(&u),
        ..PathSummary::default()
    };
    visit(0, &u, &eta);

    for k in 0..grid.steps() {
        let h = grid.step(k);
        problem.noise.draw_increment(&mut noise, h, &mut dw);
        problem.drift.apply(&u, &mut fu);
        for c in 0..dim {
            incr[c] = h * fu[c];
        }
        problem.diffusion.add_increment(&u, &dw, &mut incr);
        for c in 0..dim {
            target[c] += incr[c];
        }
        match &penalty {
            None => stepper.step(h, &u, &incr, &mut next, &mut d_eta)?,
            Some(p) => {
                for c in 0..dim {
                    next[c] = u[c] - h * g_now[c] + incr[c];
                }
                p.eval(&next, &mut g_next)?;
                for c in 0..dim {
                    d_eta[c] = 0.5 * h * (g_now[c] + g_next[c]);
                }
                std::mem::swap(&mut g_now, &mut g_next);
            }
        }
        let norm_sq = space.norm_sq(&next);
        if !(norm_sq.sqrt() <= limit) {
            return Err(Error::Blowup {
                t: grid.nodes()[k + 1],
                norm: norm_sq.sqrt(),
                limit,
            });
        }
        for c in 0..dim {
            eta[c] += d_eta[c];
            defect[c] = next[c] + eta[c] - target[c];
        }
        std::mem::swap(&mut u, &mut next);
        summary.sup_u_sq = summary.sup_u_sq.max(norm_sq);
        summary.bv_eta_xstar += space.norm_xstar(&d_eta);
        summary.residual_identity = summary.residual_identity.max(space.norm_h(&defect));
        visit(k + 1, &u, &eta);
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSolutionStoch {
    pub paths: Vec<GenSolution>,
    pub seed: RngSeed,
    pub picard_iters: usize,
    pub eps: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl GenSolutionStoch {
    /// `(E sup|u|^2 + E ||eta||_BV) / (1 + |u0|^2)`.
    pub fn moment_ratio(&self, space: &HSpace, u0: &[f64]) -> f64 {
        let n = self.paths.len().max(1) as f64;
        let sup: f64 = self.paths.iter().map(|p| p.u.sup_norm(space).powi(2)).sum::<f64>() / n;
        let bv: f64 = self.paths.iter().map(|p| p.bv_eta_xstar).sum::<f64>() / n;
        (sup + bv) / (1.0 + space.norm_sq(u0))
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.paths.iter().map(|p| p.residual_identity).fold(0.0, f64::max)
    }
}

fn det_scheme(scheme: SdeScheme) -> DetScheme {
    match scheme {
        SdeScheme::Prox => DetScheme::Prox,
        SdeScheme::Penalized { eps } => DetScheme::Penalized { eps },
    }
}

/// Full path records for `n_paths` independent paths.
pub fn solve_sde(
    problem: &SdeProblem,
    scheme: SdeScheme,
    grid: Arc<TimeGrid>,
    seed: RngSeed,
    n_paths: usize,
) -> Result<GenSolutionStoch> {
    scheme.check(&problem.op, &grid)?;
    let space = &problem.space;
    let dim = space.dim();
    let start = problem.op.project_domain(space, &problem.u0)?;
    let paths: Vec<Result<GenSolution>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut u = HPath::zeros(grid.clone(), dim);
            let mut eta = HPath::zeros(grid.clone(), dim);
            let summary = integrate_path(problem, scheme, &grid, seed.child(p), start.as_slice(), |k, uk, ek| {
                u.node_mut(k).copy_from_slice(uk);
                eta.node_mut(k).copy_from_slice(ek);
            })?;
            Ok(GenSolution {
                u,
                eta,
                bv_eta_xstar: summary.bv_eta_xstar,
                residual_identity: summary.residual_identity,
                scheme: det_scheme(scheme),
                diagnostics: BTreeMap::new(),
            })
        })
        .collect();
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = GenSolutionStoch {
        paths,
        seed,
        picard_iters: 0,
        eps: match scheme {
            SdeScheme::Penalized { eps } => Some(eps),
            SdeScheme::Prox => None,
        },
        diagnostics: BTreeMap::new(),
    };
    let ratio = out.moment_ratio(space, start.as_slice());
    out.diagnostics.insert("moment_ratio".into(), ratio);
    out.diagnostics.insert("identity_residual".into(), out.max_identity_residual());
    Ok(out)
}

pub fn solve_sde_prox(problem: &SdeProblem, grid: Arc<TimeGrid>, seed: RngSeed, n_paths: usize) -> Result<GenSolutionStoch> {
    solve_sde(problem, SdeScheme::Prox, grid, seed, n_paths)
}

/// Euler-Maruyama for the Yosida-penalized equation; requires `h <= eps / 4`.
pub fn solve_sde_penalized(
    problem: &SdeProblem,
    eps: f64,
    grid: Arc<TimeGrid>,
    seed: RngSeed,
    n_paths: usize,
) -> Result<GenSolutionStoch> {
    solve_sde(problem, SdeScheme::Penalized { eps }, grid, seed, n_paths)
}

/// States at selected nodes, laid out `[path][node][component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSamples {
    pub nodes: Vec<usize>,
    pub dim: usize,
    pub n_paths: usize,
    pub values: Vec<f64>,
    pub sup_u_sq: Vec<f64>,
    pub bv_eta: Vec<f64>,
}

impl StateSamples {
    pub fn state(&self, path: usize, slot: usize) -> &[f64] {
        let base = (path * self.nodes.len() + slot) * self.dim;
        &self.values[base..base + self.dim]
    }
}

/// Lean ensemble run that keeps only the states at `nodes`. Paths started
/// from different initial values with the same seed share their noise.
pub fn simulate_states(
    problem: &SdeProblem,
    scheme: SdeScheme,
    grid: &TimeGrid,
    seed: RngSeed,
    n_paths: usize,
    nodes: &[usize],
) -> Result<StateSamples> {
    scheme.check(&problem.op, grid)?;
    if nodes.iter().any(|&k| k > grid.steps()) {
        return Err(Error::invalid("nodes", "index beyond the grid"));
    }
    let space = &problem.space;
    let dim = space.dim();
    let start = problem.op.project_domain(space, &problem.u0)?;
    let per_path: Vec<Result<(Vec<f64>, PathSummary)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut values = vec![0.0; nodes.len() * dim];
            let summary = integrate_path(problem, scheme, grid, seed.child(p), start.as_slice(), |k, uk, _| {
                for (slot, &node) in nodes.iter().enumerate() {
                    if node == k {
                        values[slot * dim..(slot + 1) * dim].copy_from_slice(uk);
                    }
                }
            })?;
            Ok((values, summary))
        })
        .collect();
    let mut values = Vec::with_capacity(n_paths * nodes.len() * dim);
    let mut sup_u_sq = Vec::with_capacity(n_paths);
    let mut bv_eta = Vec::with_capacity(n_paths);
    for r in per_path {
        let (v, s) = r?;
        values.extend(v);
        sup_u_sq.push(s.sup_u_sq);
        bv_eta.push(s.bv_eta_xstar);
    }
    Ok(StateSamples {
        nodes: nodes.to_vec(),
        dim,
        n_paths,
        values,
        sup_u_sq,
        bv_eta,
    })
}

/// Additive noise: solves the deterministic problem driven by the projections
/// of `M = ∫ B dW` on the leading `k` directions of `H` for every `k` in
/// `levels`, and certifies that the ensemble is Cauchy in mean square.
pub fn solve_gs_additive(
    problem: &SdeProblem,
    grid: Arc<TimeGrid>,
    seed: RngSeed,
    n_paths: usize,
    levels: &[usize],
    cauchy_tol: f64,
) -> Result<GenSolutionStoch> {
    if !problem.diffusion.is_additive() || problem.drift.is_state_dependent() {
        return Err(Error::invalid(
            "diffusion",
            "projection scheme needs additive noise and a state-independent drift",
        ));
    }
    if levels.is_empty() || levels.iter().any(|&k| k == 0 || k > problem.space.dim()) {
        return Err(Error::invalid("levels", "each level must lie in 1..=dim"));
    }
    let space = &problem.space;
    let dim = space.dim();
    let modes = problem.noise.modes();
    let basis = QWienerSpec::coordinate(space, vec![1.0; dim])?.basis().to_vec();
    let columns = problem.diffusion.matrix_at(&vec![0.0; dim], modes);
    let mut f = vec![0.0; dim];
    problem.drift.apply(&vec![0.0; dim], &mut f);
    let forcing = HPath::constant(grid.clone(), &f);

    struct PathOut {
        sol: GenSolution,
        gaps: Vec<f64>,
        tails: Vec<f64>,
    }
    let per_path: Vec<Result<PathOut>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let w = sample_qwiener(space, &problem.noise, grid.clone(), seed.child(p));
            let m = integrate_operator(&columns, &w)?;
            let mut sols = Vec::with_capacity(levels.len());
            let mut tails = Vec::with_capacity(levels.len());
            for &k in levels {
                let mk = project_martingale(space, &m, k, &basis)?;
                tails.push(space.dist_h(mk.last(), m.last()).powi(2));
                let det = DetProblem::new(space.clone(), problem.op.clone(), problem.u0.clone(), forcing.clone(), mk)?;
                sols.push(solve_gd(&det, &[MollifyLevel::Exact], DetScheme::Prox, f64::INFINITY)?);
            }
            let mut gaps = Vec::with_capacity(levels.len().saturating_sub(1));
            for j in 1..sols.len() {
                gaps.push(sols[j].u.sup_distance(space, &sols[j - 1].u)?.powi(2));
            }
            Ok(PathOut {
                sol: sols.pop().expect("non-empty levels"),
                gaps,
                tails,
            })
        })
        .collect();
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let n = per_path.len().max(1) as f64;
    let mut diagnostics = BTreeMap::new();
    let mut mean_gaps = vec![0.0; levels.len().saturating_sub(1)];
    let mut mean_tails = vec![0.0; levels.len()];
    for p in &per_path {
        for (j, g) in p.gaps.iter().enumerate() {
            mean_gaps[j] += g / n;
        }
        for (j, t) in p.tails.iter().enumerate() {
            mean_tails[j] += t / n;
        }
    }
    for (j, g) in mean_gaps.iter().enumerate() {
        diagnostics.insert(format!("level{:02}_mean_sq_gap", j + 1), *g);
    }
    for (j, t) in mean_tails.iter().enumerate() {
        diagnostics.insert(format!("level{j:02}_projection_tail"), *t);
    }
    if let Some(&last) = mean_gaps.last() {
        if last > cauchy_tol {
            return Err(Error::NonCauchy {
                gaps: mean_gaps,
                last_gap: last,
                tol: cauchy_tol,
            });
        }
    }
    let mut out = GenSolutionStoch {
        paths: per_path.into_iter().map(|p| p.sol).collect(),
        seed,
        picard_iters: 0,
        eps: None,
        diagnostics,
    };
    let ratio = out.moment_ratio(space, problem.u0.as_slice());
    out.diagnostics.insert("moment_ratio".into(), ratio);
    Ok(out)
}

/// `sup_t e^{-a t} (E sup_{s <= t} |v(s)|^2)^{1/2}` over an ensemble.
pub fn picard_norm(space: &HSpace, paths: &[HPath], a: f64) -> f64 {
    if paths.is_empty() {
        return 0.0;
    }
    let len = paths[0].len();
    let times = paths[0].times();
    let mut mean_running = vec![0.0; len];
    for p in paths {
        let mut running = 0.0f64;
        for k in 0..len {
            running = running.max(space.norm_sq(p.node(k)));
            mean_running[k] += running;
        }
    }
    let n = paths.len() as f64;
    (0..len)
        .map(|k| (-a * times[k]).exp() * (mean_running[k] / n).sqrt())
        .fold(0.0, f64::max)
}

/// `2 (C1 + 1)` with the conservative `C1 = 8 e^{2 alpha T} (L1^2 T + L)`.
pub fn default_picard_weight(problem: &SdeProblem, horizon: f64) -> f64 {
    let c = &problem.constants;
    let c1 = 8.0 * (2.0 * problem.op.alpha() * horizon).exp() * (c.l1 * c.l1 * horizon + c.l);
    2.0 * (c1 + 1.0)
}

/// Picard iteration `v -> GS(A; u0, f(v), ∫ B(v) dW)` on frozen noise, in the
/// weighted norm [`picard_norm`] with weight `a_weight`.
pub fn solve_msde(
    problem: &SdeProblem,
    grid: Arc<TimeGrid>,
    seed: RngSeed,
    n_paths: usize,
    picard_tol: f64,
    a_weight: f64,
) -> Result<GenSolutionStoch> {
    const MAX_ITER: usize = 100;
    const RATIO_LIMIT: f64 = 0.9;
    check_prox_step(&problem.op, &grid)?;
    let space = &problem.space;
    let dim = space.dim();
    let modes = problem.noise.modes();
    let steps = grid.steps();
    let start = problem.op.project_domain(space, &problem.u0)?;
    let limit = blowup_limit(space, start.as_slice());

    let noise: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut stream = NoiseStream::new(seed.child(p), modes);
            let mut dw = vec![0.0; steps * modes];
            for k in 0..steps {
                problem.noise.draw_increment(&mut stream, grid.step(k), &mut dw[k * modes..(k + 1) * modes]);
            }
            dw
        })
        .collect();

    let mut current: Vec<GenSolution> = (0..n_paths)
        .map(|_| GenSolution {
            u: HPath::constant(grid.clone(), start.as_slice()),
            eta: HPath::zeros(grid.clone(), dim),
            bv_eta_xstar: 0.0,
            residual_identity: 0.0,
            scheme: DetScheme::Prox,
            diagnostics: BTreeMap::new(),
        })
        .collect();
    let mut history = Vec::new();
    let mut ratios = Vec::new();
    let mut iterations = 0;
    loop {
        if iterations >= MAX_ITER {
            return Err(Error::NonConvergence {
                what: "Picard iteration".into(),
                iterations,
                residual: *history.last().unwrap_or(&f64::NAN),
            });
        }
        iterations += 1;
        let next: Vec<Result<GenSolution>> = current
            .par_iter()
            .zip(noise.par_iter())
            .map(|(v, dw)| picard_map(problem, &grid, v, dw, start.as_slice(), limit))
            .collect();
        let next = next.into_iter().collect::<Result<Vec<_>>>()?;
        let diffs: Vec<HPath> = next
            .iter()
            .zip(&current)
            .map(|(a, b)| a.u.sub(&b.u))
            .collect::<Result<_>>()?;
        let d = picard_norm(space, &diffs, a_weight);
        if let Some(&prev) = history.last() {
            if prev > 0.0 {
                let ratio = d / prev;
                ratios.push(ratio);
                if ratio > RATIO_LIMIT && d > picard_tol {
                    return Err(Error::NoContraction {
                        ratio,
                        history: history.clone(),
                    });
                }
            }
        }
        history.push(d);
        current = next;
        if d <= picard_tol {
            break;
        }
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("a_weight".into(), a_weight);
    diagnostics.insert("final_increment".into(), *history.last().unwrap());
    diagnostics.insert(
        "max_contraction_ratio".into(),
        ratios.iter().copied().fold(0.0, f64::max),
    );
    for (j, d) in history.iter().enumerate() {
        diagnostics.insert(format!("increment{j:02}"), *d);
    }
    let mut out = GenSolutionStoch {
        paths: current,
        seed,
        picard_iters: iterations,
        eps: None,
        diagnostics,
    };
    let ratio = out.moment_ratio(space, start.as_slice());
    out.diagnostics.insert("moment_ratio".into(), ratio);
    Ok(out)
}

fn picard_map(
    problem: &SdeProblem,
    grid: &TimeGrid,
    v: &GenSolution,
    dw: &[f64],
    start: &[f64],
    limit: f64,
) -> Result<GenSolution> {
    let space = &problem.space;
    let dim = space.dim();
    let modes = problem.noise.modes();
    let mut stepper = ProxStepper::new(space, &problem.op);
    let mut u = HPath::zeros(v.u.grid().clone(), dim);
    let mut eta = HPath::zeros(v.u.grid().clone(), dim);
    u.node_mut(0).copy_from_slice(start);
    let mut incr = vec![0.0; dim];
    let mut fv = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut d_eta = vec![0.0; dim];
    let mut target = start.to_vec();
    let mut defect = vec![0.0; dim];
    let mut residual = 0.0f64;
    let mut bv = 0.0;
    for k in 0..grid.steps() {
        let h = grid.step(k);
        let vk = v.u.node(k);
        problem.drift.apply(vk, &mut fv);
        for c in 0..dim {
            incr[c] = h * fv[c];
        }
        problem.diffusion.add_increment(vk, &dw[k * modes..(k + 1) * modes], &mut incr);
        stepper.step(h, u.node(k), &incr, &mut next, &mut d_eta)?;
        let norm = space.norm_h(&next);
        if !(norm <= limit) {
            return Err(Error::Blowup {
                t: grid.nodes()[k + 1],
                norm,
                limit,
            });
        }
        u.node_mut(k + 1).copy_from_slice(&next);
        let prev = eta.node(k).to_vec();
        let e = eta.node_mut(k + 1);
        for c in 0..dim {
            e[c] = prev[c] + d_eta[c];
            target[c] += incr[c];
            defect[c] = next[c] + e[c] - target[c];
        }
        residual = residual.max(space.norm_h(&defect));
        bv += space.norm_xstar(&d_eta);
    }
    Ok(GenSolution {
        u,
        eta,
        bv_eta_xstar: bv,
        residual_identity: residual,
        scheme: DetScheme::Prox,
        diagnostics: BTreeMap::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub label: String,
    pub seed: RngSeed,
    pub n_paths: usize,
    pub estimates: BTreeMap<String, Estimate>,
    pub values: BTreeMap<String, f64>,
    pub pass: bool,
    #[serde(skip)]
    pub runtime: Duration,
}

/// `E sup|u|^{2p} + E ||eta||_BV^p` against `1 + |u0|^{2p}` for scaled initial
/// values, and the mean-square sensitivity to a perturbation of `u0`. The
/// bound is accepted when the ratios stay within a factor of four.
pub fn check_moment_bounds(
    problem: &SdeProblem,
    scheme: SdeScheme,
    grid: &TimeGrid,
    seed: RngSeed,
    n_paths: usize,
    p: f64,
    scales: &[f64],
) -> Result<EnsembleReport> {
    let clock = std::time::Instant::now();
    let space = &problem.space;
    let mut estimates = BTreeMap::new();
    let mut values = BTreeMap::new();
    let mut ratios = Vec::new();
    let last = grid.steps();
    for (j, &s) in scales.iter().enumerate() {
        let scaled = problem.with_u0(&problem.u0 * s)?;
        let samples = simulate_states(&scaled, scheme, grid, seed, n_paths, &[last])?;
        let moments: Vec<f64> = samples
            .sup_u_sq
            .iter()
            .zip(&samples.bv_eta)
            .map(|(sq, bv)| sq.powf(p) + bv.powf(p))
            .collect();
        let est = Estimate::from_samples(&moments);
        let ratio = est.mean / (1.0 + space.norm_sq(scaled.u0.as_slice()).powf(p));
        estimates.insert(format!("scale{j:02}_moment"), est);
        values.insert(format!("scale{j:02}_ratio"), ratio);
        ratios.push(ratio);
    }
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    values.insert("spread".into(), spread);
    Ok(EnsembleReport {
        label: "moment-bounds".into(),
        seed,
        n_paths,
        estimates,
        values,
        pass: spread <= 4.0 && max.is_finite(),
        runtime: clock.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::det_solver::solve_penalized;
    use crate::monotone_ops::{Graph1D, OperatorKind};

    fn scalar_problem(kind: OperatorKind, modulus: f64, diffusion: Diffusion) -> SdeProblem {
        let space = HSpace::euclidean(1);
        let op = MonotoneOperator::new(kind, &space).unwrap().with_modulus(modulus).unwrap();
        let noise = QWienerSpec::coordinate(&space, vec![1.0]).unwrap();
        SdeProblem::new(space, op, Point::from_element(1, 1.0), Drift::Zero, diffusion, noise).unwrap()
    }

    fn linear(a: f64) -> OperatorKind {
        OperatorKind::LinearSpd { matrix: vec![vec![a]] }
    }

    #[test]
    fn constants_of_multiplicative_noise() {
        let p = scalar_problem(linear(1.0), 1.0, Diffusion::Multiplicative { sigma: vec![0.5] });
        assert_eq!(p.constants.l, 0.25);
        assert_eq!(p.beta0(), 1.5);
        let (l1, l) = p.sampled_constants(200, RngSeed::new(1));
        assert!(l1 <= p.constants.l1 + 1e-12 && l <= p.constants.l + 1e-12);
    }

    #[test]
    fn zero_noise_reduces_to_deterministic_penalization() {
        let kind = OperatorKind::ScalarGraph(Graph1D::Interval {
            lo: 0.0,
            hi: f64::INFINITY,
        });
        let mut p = scalar_problem(kind, 0.0, Diffusion::Zero);
        p.drift = Drift::Constant { value: vec![-1.0] };
        let grid = Arc::new(TimeGrid::uniform(2.0, 800).unwrap());
        let eps = 0.01;
        let stoch = solve_sde_penalized(&p, eps, grid.clone(), RngSeed::new(1), 2).unwrap();
        let det = DetProblem::autonomous(p.space.clone(), p.op.clone(), p.u0.clone(), &[-1.0], grid).unwrap();
        let det = solve_penalized(&det, eps).unwrap();
        for path in &stoch.paths {
            assert!(path.u.sup_distance(&p.space, &det.u).unwrap() < 1e-14);
            assert!(path.eta.sup_distance(&p.space, &det.eta).unwrap() < 1e-14);
        }
    }

    #[test]
    fn picard_fixed_point_is_the_prox_scheme() {
        let p = scalar_problem(linear(1.0), 1.0, Diffusion::Multiplicative { sigma: vec![0.5] });
        let grid = Arc::new(TimeGrid::uniform(1.0, 100).unwrap());
        let seed = RngSeed::new(0xbeef);
        let direct = solve_sde_prox(&p, grid.clone(), seed, 20).unwrap();
        let a = default_picard_weight(&p, 1.0);
        let picard = solve_msde(&p, grid, seed, 20, 1e-13, a).unwrap();
        for (x, y) in direct.paths.iter().zip(&picard.paths) {
            let d = x.u.sup_distance(&p.space, &y.u).unwrap();
            assert!(d < 1e-10, "{d:e} after {} iterations", picard.picard_iters);
        }
        assert!(picard.diagnostics["max_contraction_ratio"] <= 0.55);
    }

    #[test]
    fn picard_norm_of_exponential_is_one() {
        let s = HSpace::euclidean(1);
        let grid = Arc::new(TimeGrid::uniform(3.0, 300).unwrap());
        let a = 0.7;
        let path = HPath::from_fn(grid, 1, |t, out| out[0] = (a * t).exp());
        assert!((picard_norm(&s, &[path], a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflected_paths_stay_in_domain() {
        let kind = OperatorKind::ScalarGraph(Graph1D::Interval {
            lo: 0.0,
            hi: f64::INFINITY,
        });
        let p = scalar_problem(kind, 0.0, Diffusion::Additive { columns: vec![vec![1.0]] });
        let grid = Arc::new(TimeGrid::uniform(1.0, 200).unwrap());
        let sol = solve_sde_prox(&p, grid, RngSeed::new(3), 16).unwrap();
        for path in &sol.paths {
            assert!(path.u.data().iter().all(|v| *v >= 0.0));
            assert!(path.residual_identity < 1e-12);
        }
    }

    #[test]
    fn projection_levels_for_additive_noise() {
        let space = HSpace::euclidean(3);
        let op = MonotoneOperator::new(
            OperatorKind::IndicatorConvex(crate::monotone_ops::ConvexSet::Ball {
                center: vec![0.0; 3],
                radius: 1.0,
            }),
            &space,
        )
        .unwrap();
        let noise = QWienerSpec::coordinate(&space, vec![1.0, 0.25, 0.0625]).unwrap();
        let columns = (0..3)
            .map(|i| {
                let mut c = vec![0.0; 3];
                c[i] = 1.0;
                c
            })
            .collect();
        let p = SdeProblem::new(space, op, Point::zeros(3), Drift::Zero, Diffusion::Additive { columns }, noise).unwrap();
        let grid = Arc::new(TimeGrid::uniform(1.0, 100).unwrap());
        let sol = solve_gs_additive(&p, grid, RngSeed::new(9), 50, &[1, 2, 3], 1.0).unwrap();
        let g1 = sol.diagnostics["level01_mean_sq_gap"];
        let g2 = sol.diagnostics["level02_mean_sq_gap"];
        assert!(g2 < g1, "{g1} {g2}");
        assert_eq!(sol.diagnostics["level02_projection_tail"], 0.0);
    }

    #[test]
    fn blowup_is_reported() {
        let p = scalar_problem(OperatorKind::Zero, 0.0, Diffusion::Zero);
        let mut p = p;
        p.drift = Drift::Linear {
            matrix: vec![vec![50.0]],
            offset: vec![0.0],
        };
        let grid = Arc::new(TimeGrid::uniform(1.0, 100).unwrap());
        assert!(matches!(
            solve_sde_prox(&p, grid, RngSeed::new(1), 1),
            Err(Error::Blowup { .. })
        ));
    }
}
