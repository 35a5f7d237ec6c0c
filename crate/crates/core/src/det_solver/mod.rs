//! Deterministic evolution inclusions `du + A u dt ∋ f dt + dM`.
//!
//! A generalized solution is a pair `(u, eta)` with `u + eta = u0 + ∫f + M`,
//! `eta` of bounded variation in `X*` and the variational inequality against
//! every graph point of `A`. Two time discretizations are provided: the
//! semi-implicit proximal step, which produces the pair directly, and the
//! explicit Yosida penalization. [`solve_gd`] drives either of them along a
//! sequence of mollified inputs.

mod checks;
mod mollify;

pub use checks::{
    check_apriori, check_stability_pair, stability_sweep, verify_vi, AprioriReport, StabilityPair,
    StabilitySweep, ViReport,
};
pub use mollify::mollify;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hspace::{bv_norm, HPath, HSpace, NormKind, Point, TimeGrid};
use crate::monotone_ops::{MonotoneOperator, OperatorKind};

pub(crate) const BLOWUP_FACTOR: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct DetProblem {
    pub space: HSpace,
    pub op: MonotoneOperator,
    pub u0: Point,
    /// Forcing `f`, read at the left end of every step.
    pub forcing: HPath,
    /// Driving path `M` with `M(0) = 0`.
    pub noise: HPath,
}

impl DetProblem {
    pub fn new(space: HSpace, op: MonotoneOperator, u0: Point, forcing: HPath, noise: HPath) -> Result<Self> {
        let dim = space.dim();
        check_dim(dim, op.dim())?;
        check_dim(dim, u0.len())?;
        check_dim(dim, forcing.dim())?;
        check_dim(dim, noise.dim())?;
        if forcing.grid() != noise.grid() {
            return Err(Error::invalid("forcing", "forcing and noise must share one grid"));
        }
        if noise.node(0).iter().any(|v| *v != 0.0) {
            return Err(Error::invalid("noise", "M(0) must vanish"));
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("u0", "must be finite"));
        }
        Ok(DetProblem {
            space,
            op,
            u0,
            forcing,
            noise,
        })
    }

    /// Constant forcing and no driving path.
    pub fn autonomous(space: HSpace, op: MonotoneOperator, u0: Point, f: &[f64], grid: Arc<TimeGrid>) -> Result<Self> {
        let dim = space.dim();
        let forcing = HPath::constant(grid.clone(), f);
        let noise = HPath::zeros(grid, dim);
        DetProblem::new(space, op, u0, forcing, noise)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.noise.grid()
    }

    pub fn with_noise(&self, noise: HPath) -> Result<Self> {
        DetProblem::new(self.space.clone(), self.op.clone(), self.u0.clone(), self.forcing.clone(), noise)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum DetScheme {
    Prox,
    Penalized { eps: f64 },
}

/// One member of the approximating sequence used by [`solve_gd`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifyLevel {
    /// Mollification with kernel width `1 / n`.
    Mollified(f64),
    /// The grid-resolved input itself.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSolution {
    pub u: HPath,
    pub eta: HPath,
    pub bv_eta_xstar: f64,
    pub residual_identity: f64,
    pub scheme: DetScheme,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Proximal step `u' = J_h(u + incr + h alpha u)` with the matching increment
/// `d eta = u + incr - u'`.
pub(crate) struct ProxStepper<'a> {
    space: &'a HSpace,
    op: &'a MonotoneOperator,
    work: Vec<f64>,
    /// Resolvent matrix of a linear operator for the last step size.
    linear: Option<(f64, DMatrix<f64>)>,
}

impl<'a> ProxStepper<'a> {
    pub(crate) fn new(space: &'a HSpace, op: &'a MonotoneOperator) -> Self {
        ProxStepper {
            space,
            op,
            work: vec![0.0; space.dim()],
            linear: None,
        }
    }

    pub(crate) fn step(&mut self, h: f64, u: &[f64], incr: &[f64], next: &mut [f64], d_eta: &mut [f64]) -> Result<()> {
        let alpha = self.op.alpha();
        for i in 0..u.len() {
            self.work[i] = u[i] + incr[i] + h * alpha * u[i];
        }
        if matches!(self.op.kind(), OperatorKind::LinearSpd { .. })
            && self.linear.as_ref().is_none_or(|(step, _)| *step != h) {
                self.linear = self.op.linear_resolvent_matrix(h).map(|m| (h, m));
            }
        match &self.linear {
            Some((_, m)) => {
                for (i, out) in next.iter_mut().enumerate() {
                    *out = (0..self.work.len()).map(|j| m[(i, j)] * self.work[j]).sum();
                }
            }
            None => self.op.resolvent_into(self.space, h, &self.work, next)?,
        }
        for i in 0..u.len() {
            d_eta[i] = u[i] + incr[i] - next[i];
        }
        Ok(())
    }
}

/// Penalized drift `A_eps u - alpha u`.
pub(crate) struct PenaltyDrift<'a> {
    space: &'a HSpace,
    op: &'a MonotoneOperator,
    eps: f64,
}

impl<'a> PenaltyDrift<'a> {
    pub(crate) fn new(space: &'a HSpace, op: &'a MonotoneOperator, eps: f64) -> Self {
        PenaltyDrift { space, op, eps }
    }

    pub(crate) fn eval(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.op.yosida_into(self.space, self.eps, u, out)?;
        let alpha = self.op.alpha();
        for i in 0..u.len() {
            out[i] -= alpha * u[i];
        }
        Ok(())
    }
}

pub(crate) fn check_prox_step(op: &MonotoneOperator, grid: &TimeGrid) -> Result<()> {
    let h = grid.max_step();
    if h * op.alpha() > 0.5 {
        return Err(Error::StepCondition(format!(
            "h * alpha = {} exceeds 1/2",
            h * op.alpha()
        )));
    }
    Ok(())
}

pub(crate) fn check_penalty(op: &MonotoneOperator, grid: &TimeGrid, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0 / (op.alpha() + 1.0)) {
        return Err(Error::invalid(
            "eps",
            format!("must lie in (0, {})", 1.0 / (op.alpha() + 1.0)),
        ));
    }
    let h = grid.max_step();
    if h > eps / 4.0 * (1.0 + 1e-12) {
        return Err(Error::StepCondition(format!("h = {h} exceeds eps / 4 = {}", eps / 4.0)));
    }
    Ok(())
}

pub(crate) fn blowup_limit(space: &HSpace, u0: &[f64]) -> f64 {
    BLOWUP_FACTOR * (1.0 + space.norm_h(u0))
}

/// Semi-implicit proximal scheme. The initial value is first projected onto
/// the closure of the domain.
pub fn solve_prox(problem: &DetProblem) -> Result<GenSolution> {
    let DetProblem {
        space,
        op,
        u0,
        forcing,
        noise,
    } = problem;
    let grid = problem.grid().clone();
    check_prox_step(op, &grid)?;
    let dim = space.dim();
    let start = op.project_domain(space, u0)?;
    let limit = blowup_limit(space, start.as_slice());

    let mut u = HPath::zeros(grid.clone(), dim);
    let mut eta = HPath::zeros(grid.clone(), dim);
    u.node_mut(0).copy_from_slice(start.as_slice());
    let mut stepper = ProxStepper::new(space, op);
    let mut incr = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut d_eta = vec![0.0; dim];
    let mut integral_f = vec![0.0; dim];
    let mut residual = 0.0f64;
    let mut defect = vec![0.0; dim];

    for k in 0..grid.steps() {
        let h = grid.step(k);
        let (f, m0, m1) = (forcing.node(k), noise.node(k), noise.node(k + 1));
        for i in 0..dim {
            incr[i] = h * f[i] + (m1[i] - m0[i]);
            integral_f[i] += h * f[i];
        }
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
        let prev_eta = eta.node(k).to_vec();
        let e = eta.node_mut(k + 1);
        for i in 0..dim {
            e[i] = prev_eta[i] + d_eta[i];
            defect[i] = next[i] + e[i] - (start[i] + integral_f[i] + m1[i]);
        }
        residual = residual.max(space.norm_h(&defect));
    }

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("u0_projection_distance".into(), space.dist_h(u0.as_slice(), start.as_slice()));
    diagnostics.insert("max_step".into(), grid.max_step());
    Ok(GenSolution {
        bv_eta_xstar: bv_norm(space, &eta, NormKind::XStar),
        u,
        eta,
        residual_identity: residual,
        scheme: DetScheme::Prox,
        diagnostics,
    })
}

/// Explicit Euler for `du + (A_eps u - alpha u) dt = f dt + dM`; `eta` is the
/// trapezoidal integral of the penalized drift.
pub fn solve_penalized(problem: &DetProblem, eps: f64) -> Result<GenSolution> {
    let DetProblem {
        space,
        op,
        u0,
        forcing,
        noise,
    } = problem;
    let grid = problem.grid().clone();
    check_penalty(op, &grid, eps)?;
    let dim = space.dim();
    let start = op.project_domain(space, u0)?;
    let limit = blowup_limit(space, start.as_slice());
    let drift = PenaltyDrift::new(space, op, eps);

    let mut u = HPath::zeros(grid.clone(), dim);
    let mut eta = HPath::zeros(grid.clone(), dim);
    u.node_mut(0).copy_from_slice(start.as_slice());
    let mut g_now = vec![0.0; dim];
    let mut g_next = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut integral_f = vec![0.0; dim];
    let mut defect = vec![0.0; dim];
    let mut residual = 0.0f64;
    drift.eval(start.as_slice(), &mut g_now)?;

    for k in 0..grid.steps() {
        let h = grid.step(k);
        let (f, m0, m1) = (forcing.node(k), noise.node(k), noise.node(k + 1));
        let cur = u.node(k);
        for i in 0..dim {
            next[i] = cur[i] - h * g_now[i] + h * f[i] + (m1[i] - m0[i]);
            integral_f[i] += h * f[i];
        }
        let norm = space.norm_h(&next);
        if !(norm <= limit) {
            return Err(Error::Blowup {
                t: grid.nodes()[k + 1],
                norm,
                limit,
            });
        }
        drift.eval(&next, &mut g_next)?;
        u.node_mut(k + 1).copy_from_slice(&next);
        let prev_eta = eta.node(k).to_vec();
        let e = eta.node_mut(k + 1);
        for i in 0..dim {
            e[i] = prev_eta[i] + 0.5 * h * (g_now[i] + g_next[i]);
            defect[i] = next[i] + e[i] - (start[i] + integral_f[i] + m1[i]);
        }
        residual = residual.max(space.norm_h(&defect));
        std::mem::swap(&mut g_now, &mut g_next);
    }

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("eps".into(), eps);
    diagnostics.insert("max_step".into(), grid.max_step());
    Ok(GenSolution {
        bv_eta_xstar: bv_norm(space, &eta, NormKind::XStar),
        u,
        eta,
        residual_identity: residual,
        scheme: DetScheme::Penalized { eps },
        diagnostics,
    })
}

pub fn solve_with(problem: &DetProblem, scheme: DetScheme) -> Result<GenSolution> {
    match scheme {
        DetScheme::Prox => solve_prox(problem),
        DetScheme::Penalized { eps } => solve_penalized(problem, eps),
    }
}

/// Widths from `T / 8` down to a sixty-fourth of the step, then the exact input.
pub fn default_levels(grid: &TimeGrid) -> Vec<MollifyLevel> {
    let mut levels = Vec::new();
    let finest = 64.0 / grid.max_step();
    let mut n = 8.0 / grid.horizon();
    while n < finest {
        levels.push(MollifyLevel::Mollified(n));
        n *= 4.0;
    }
    levels.push(MollifyLevel::Mollified(finest));
    levels.push(MollifyLevel::Exact);
    levels
}

/// Solves along the approximating sequence of inputs and certifies that the
/// solutions form a Cauchy sequence in `C([0, T]; H)`. Returns the last
/// member, with the gaps and the BV bounds of every level in its diagnostics.
pub fn solve_gd(problem: &DetProblem, levels: &[MollifyLevel], scheme: DetScheme, cauchy_tol: f64) -> Result<GenSolution> {
    if levels.is_empty() {
        return Err(Error::invalid("levels", "need at least one level"));
    }
    let space = &problem.space;
    let mut gaps = Vec::new();
    let mut bv_sup = 0.0f64;
    let mut previous: Option<GenSolution> = None;
    let mut diagnostics = BTreeMap::new();
    for (j, level) in levels.iter().enumerate() {
        let member = match *level {
            MollifyLevel::Exact => problem.clone(),
            MollifyLevel::Mollified(n) => {
                if !(n > 0.0) {
                    return Err(Error::invalid("levels", "mollifier index must be positive"));
                }
                problem.with_noise(mollify(&problem.noise, n))?
            }
        };
        let sol = solve_with(&member, scheme)?;
        bv_sup = bv_sup.max(sol.bv_eta_xstar);
        diagnostics.insert(format!("level{j:02}_bv"), sol.bv_eta_xstar);
        if let Some(prev) = &previous {
            let gap = sol.u.sup_distance(space, &prev.u)?;
            diagnostics.insert(format!("level{j:02}_gap"), gap);
            gaps.push(gap);
        }
        previous = Some(sol);
    }
    let mut sol = previous.expect("at least one level");
    if let Some(&last) = gaps.last() {
        if last > cauchy_tol {
            return Err(Error::NonCauchy {
                gaps,
                last_gap: last,
                tol: cauchy_tol,
            });
        }
    }
    diagnostics.insert("bv_sup_over_levels".into(), bv_sup);
    diagnostics.insert("levels".into(), levels.len() as f64);
    sol.diagnostics.extend(diagnostics);
    Ok(sol)
}
