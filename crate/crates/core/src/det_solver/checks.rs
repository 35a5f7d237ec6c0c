use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::hspace::{HSpace, NormKind, Point};
use crate::monotone_ops::H1Audit;

use super::{solve_with, DetProblem, DetScheme, GenSolution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViReport {
    /// Smallest value of the certificate over all node intervals and pairs.
    pub min_value: f64,
    /// Node indices `(s, t)` where the minimum occurs.
    pub worst_interval: (usize, usize),
    pub pairs_checked: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Checks `∫_s^t (u - x, d eta - y dτ) + alpha ∫_s^t |u - x|^2 dτ >= 0` for the
/// given graph points `[x, y]` of `A` and every pair of grid nodes `s < t`.
///
/// The quadrature is the one the proximal scheme satisfies exactly: `u` is
/// taken at the right node and the `alpha` term uses the product of the two
/// end values. Failure means `min_value < -tol * (1 + total variation of the
/// integrand)`.
pub fn verify_vi(space: &HSpace, sol: &GenSolution, pairs: &[(Point, Point)], alpha: f64, tol: f64) -> Result<ViReport> {
    let dim = space.dim();
    check_dim(dim, sol.u.dim())?;
    let grid = sol.u.grid();
    let mut min_value = f64::INFINITY;
    let mut worst = (0, 0);
    let mut pass = true;
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    let mut c = vec![0.0; dim];
    for (x, y) in pairs {
        check_dim(dim, x.len())?;
        check_dim(dim, y.len())?;
        let mut prefix = 0.0;
        let mut best_prefix = 0.0;
        let mut best_index = 0;
        let mut scale = 0.0;
        let mut local_min = f64::INFINITY;
        let mut local_worst = (0, 0);
        for k in 0..grid.steps() {
            let h = grid.step(k);
            let (u0, u1) = (sol.u.node(k), sol.u.node(k + 1));
            let (e0, e1) = (sol.eta.node(k), sol.eta.node(k + 1));
            for i in 0..dim {
                a[i] = u1[i] - x[i];
                b[i] = (e1[i] - e0[i]) - y[i] * h;
                c[i] = u0[i] - x[i];
            }
            let term = space.inner(&a, &b) + alpha * h * space.inner(&c, &a);
            scale += term.abs();
            prefix += term;
            let value = prefix - best_prefix;
            if value < local_min {
                local_min = value;
                local_worst = (best_index, k + 1);
            }
            if prefix > best_prefix {
                best_prefix = prefix;
                best_index = k + 1;
            }
        }
        if local_min < -tol * (1.0 + scale) {
            pass = false;
        }
        if local_min < min_value {
            min_value = local_min;
            worst = local_worst;
        }
    }
    Ok(ViReport {
        min_value,
        worst_interval: worst,
        pairs_checked: pairs.len(),
        tol,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityPair {
    /// `sup_t |u - v|^2`.
    pub lhs: f64,
    pub initial: f64,
    pub forcing_l1: f64,
    pub noise_sup: f64,
    pub cross: f64,
    /// `lhs / (initial + forcing_l1 + noise_sup + cross)`; zero when the
    /// inputs coincide.
    pub ratio: f64,
}

/// Terms of the continuous-dependence estimate for two solved problems on a
/// common grid.
pub fn check_stability_pair(
    space: &HSpace,
    first: (&DetProblem, &GenSolution),
    second: (&DetProblem, &GenSolution),
) -> Result<StabilityPair> {
    let (p1, s1) = first;
    let (p2, s2) = second;
    let lhs = s1.u.sup_distance(space, &s2.u)?.powi(2);
    let initial = space.dist_h(s1.u.node(0), s2.u.node(0)).powi(2);
    let grid = p1.grid();
    let mut l1 = 0.0;
    for k in 0..grid.steps() {
        l1 += grid.step(k) * space.dist_h(p1.forcing.node(k), p2.forcing.node(k));
    }
    let dm = p1.noise.sub(&p2.noise)?;
    let d_eta = s1.eta.sub(&s2.eta)?;
    let noise_sup = dm.sup_norm(space).powi(2);
    let cross = dm.sup_norm_with(space, NormKind::X) * crate::hspace::bv_norm(space, &d_eta, NormKind::XStar);
    let rhs = initial + l1 * l1 + noise_sup + cross;
    Ok(StabilityPair {
        lhs,
        initial,
        forcing_l1: l1 * l1,
        noise_sup,
        cross,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySweep {
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Largest over smallest positive ratio.
    pub spread: f64,
    pub stable: bool,
}

/// Measures the stability ratio for perturbations of decreasing size; the
/// constant is accepted when the ratios stay within a factor of four.
pub fn stability_sweep(
    problem: &DetProblem,
    perturb: impl Fn(&DetProblem, f64) -> Result<DetProblem>,
    scales: &[f64],
    scheme: DetScheme,
) -> Result<StabilitySweep> {
    let base = solve_with(problem, scheme)?;
    let mut ratios = Vec::with_capacity(scales.len());
    for &s in scales {
        let other = perturb(problem, s)?;
        let sol = solve_with(&other, scheme)?;
        ratios.push(check_stability_pair(&problem.space, (problem, &base), (&other, &sol))?.ratio);
    }
    let positive: Vec<f64> = ratios.iter().copied().filter(|r| *r > 0.0).collect();
    let spread = if positive.is_empty() {
        1.0
    } else {
        positive.iter().copied().fold(0.0, f64::max) / positive.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(StabilitySweep {
        scales: scales.to_vec(),
        ratios,
        spread,
        stable: spread <= 4.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    /// `max_t (lhs(t) - rhs(t))`; non-positive when the energy bound holds.
    pub max_excess: f64,
    pub worst_time: f64,
    /// `(sup |u|^2 + ||eta||_BV) / (1 + |u0|^2 + ||f||_L1^2 + sup |M|^2)`.
    pub growth_ratio: f64,
    pub pass: bool,
}

/// Energy inequality
/// `|u - M - h0|^2 + 2 r0 ||eta||_BV <= |u0 - h0|^2 + 2|a2| t + 2|a1| ∫|u|^2
///  + 2 ∫(f, u - M - h0) + 2 ∫(M, d eta)`
/// in the discrete form satisfied by the proximal scheme (right-node
/// quadratures, plus the `alpha` correction that vanishes as `h -> 0`).
pub fn check_apriori(problem: &DetProblem, sol: &GenSolution, audit: &H1Audit) -> Result<AprioriReport> {
    let space = &problem.space;
    let dim = space.dim();
    check_dim(dim, audit.h0.len())?;
    let grid = problem.grid();
    let alpha = problem.op.alpha();
    let h0 = &audit.h0;
    let mut v = vec![0.0; dim];
    let mut d_eta = vec![0.0; dim];
    let mut du = vec![0.0; dim];
    let mut shifted = vec![0.0; dim];

    for i in 0..dim {
        v[i] = sol.u.node(0)[i] - h0[i];
    }
    let initial = space.norm_sq(&v);
    let mut bv = 0.0;
    let mut rhs_acc = initial;
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst_time = 0.0;
    let mut rhs_max = initial;
    for k in 0..grid.steps() {
        let h = grid.step(k);
        let (u0, u1) = (sol.u.node(k), sol.u.node(k + 1));
        let m1 = problem.noise.node(k + 1);
        let f = problem.forcing.node(k);
        for i in 0..dim {
            d_eta[i] = sol.eta.node(k + 1)[i] - sol.eta.node(k)[i];
            v[i] = u1[i] - m1[i] - h0[i];
            du[i] = u0[i] - u1[i];
            shifted[i] = u1[i] - h0[i];
        }
        bv += space.norm_xstar(&d_eta);
        rhs_acc += 2.0 * audit.a2.abs() * h
            + 2.0 * audit.a1.abs() * h * space.norm_sq(u1)
            + 2.0 * h * space.inner(f, &v)
            + 2.0 * space.inner(&d_eta, m1);
        if alpha != 0.0 {
            rhs_acc += 2.0 * alpha * h * (space.inner(&shifted, &du) + audit.r0 * space.norm_xstar(&du));
        }
        let lhs = space.norm_sq(&v) + 2.0 * audit.r0 * bv;
        let excess = lhs - rhs_acc;
        rhs_max = rhs_max.max(rhs_acc.abs());
        if excess > max_excess {
            max_excess = excess;
            worst_time = grid.nodes()[k + 1];
        }
    }

    let mut f_l1 = 0.0;
    for k in 0..grid.steps() {
        f_l1 += grid.step(k) * space.norm_h(problem.forcing.node(k));
    }
    let m_sup = problem.noise.sup_norm(space);
    let u_sup = sol.u.sup_norm(space);
    let growth_ratio = (u_sup * u_sup + sol.bv_eta_xstar)
        / (1.0 + space.norm_sq(problem.u0.as_slice()) + f_l1 * f_l1 + m_sup * m_sup);
    Ok(AprioriReport {
        max_excess,
        worst_time,
        growth_ratio,
        pass: max_excess <= 1e-9 * (1.0 + rhs_max),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::det_solver::solve_prox;
    use crate::hspace::TimeGrid;
    use crate::monotone_ops::{audit_h1, sample_graph_pairs, Graph1D, MonotoneOperator, OperatorKind};
    use crate::rng::RngSeed;

    fn obstacle() -> DetProblem {
        let space = HSpace::euclidean(1);
        let op = MonotoneOperator::new(
            OperatorKind::ScalarGraph(Graph1D::Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            }),
            &space,
        )
        .unwrap();
        let grid = Arc::new(TimeGrid::uniform(2.0, 1000).unwrap());
        DetProblem::autonomous(space, op, Point::from_element(1, 1.0), &[-1.0], grid).unwrap()
    }

    #[test]
    fn vi_certificate_and_its_negation() {
        let p = obstacle();
        let sol = solve_prox(&p).unwrap();
        let pairs = sample_graph_pairs(&p.op, &p.space, 50, RngSeed::new(4), 2.0).unwrap();
        let report = verify_vi(&p.space, &sol, &pairs, 0.0, 1e-8).unwrap();
        assert!(report.pass, "{report:?}");
        let mut flipped = sol.clone();
        flipped.eta = sol.eta.scale(-1.0);
        let bad = verify_vi(&p.space, &flipped, &pairs, 0.0, 1e-8).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn stability_calibrates_on_initial_shift() {
        let p = obstacle();
        let sweep = stability_sweep(
            &p,
            |q, s| {
                let mut q = q.clone();
                q.u0[0] += s;
                Ok(q)
            },
            &[0.1, 0.01, 0.001],
            DetScheme::Prox,
        )
        .unwrap();
        assert!(sweep.stable);
        for r in &sweep.ratios {
            assert!((r - 1.0).abs() < 1e-8, "{r}");
        }
    }

    #[test]
    fn apriori_bound_for_obstacle() {
        let p = obstacle();
        let sol = solve_prox(&p).unwrap();
        let audit = audit_h1(&p.op, &p.space, &Point::from_element(1, 1.0), 0.5, 0.0, 0.0, 300, RngSeed::new(2)).unwrap();
        assert!(audit.feasible);
        let rep = check_apriori(&p, &sol, &audit).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.growth_ratio.is_finite());
    }
}
