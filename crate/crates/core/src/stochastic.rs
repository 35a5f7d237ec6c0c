//! Q-Wiener processes, Itô sums and martingale diagnostics.
//!
//! `W = Σ sqrt(λ_i) β_i e_i` for an H-orthonormal family `e_i`. Operators
//! `B` from the noise coordinates into `H` are stored as `dim x modes`
//! matrices whose column `i` is `B e_i`, so `|B|_Q^2 = Σ λ_i |B e_i|_H^2`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hspace::{HPath, HSpace, Point, TimeGrid};
use crate::rng::{NoiseStream, RngSeed};

#[derive(Clone, Debug, PartialEq)]
pub struct QWienerSpec {
    eigenvalues: Vec<f64>,
    basis: Vec<Point>,
}

impl QWienerSpec {
    pub fn new(space: &HSpace, eigenvalues: Vec<f64>, basis: Vec<Point>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("eigenvalues", "need at least one mode"));
        }
        check_dim(eigenvalues.len(), basis.len())?;
        if eigenvalues.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid("eigenvalues", "must be finite and non-negative"));
        }
        for (i, e) in basis.iter().enumerate() {
            check_dim(space.dim(), e.len())?;
            for (j, f) in basis.iter().enumerate().take(i + 1) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (space.inner(e.as_slice(), f.as_slice()) - target).abs() > 1e-10 {
                    return Err(Error::invalid("basis", "must be orthonormal in H"));
                }
            }
        }
        Ok(QWienerSpec { eigenvalues, basis })
    }

    /// Coordinate directions rescaled to unit H-norm.
    pub fn coordinate(space: &HSpace, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() > space.dim() {
            return Err(Error::invalid("eigenvalues", "more modes than dimensions"));
        }
        let basis = (0..eigenvalues.len())
            .map(|i| {
                let mut e = Point::zeros(space.dim());
                e[i] = 1.0 / space.weights()[i].sqrt();
                e
            })
            .collect();
        QWienerSpec::new(space, eigenvalues, basis)
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &[Point] {
        &self.basis
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// The embedding of noise coordinates into H (column `i` is `e_i`).
    pub fn embedding(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.basis)
    }

    pub fn q_norm_sq(&self, space: &HSpace, b: &DMatrix<f64>) -> f64 {
        (0..self.modes())
            .map(|i| self.eigenvalues[i] * space.norm_sq(b.column(i).as_slice()))
            .sum()
    }

    /// Fills `out[i] = sqrt(λ_i h) ξ_i` for the next step of `noise`.
    pub(crate) fn draw_increment(&self, noise: &mut NoiseStream, h: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.eigenvalues[i] * h).sqrt() * noise.next_normal();
        }
    }
}

/// A sampled path together with the coordinate increments that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    pub path: HPath,
    /// `steps x modes`, each entry `sqrt(λ_i h_k) ξ_{k,i}`.
    pub increments: Vec<f64>,
    pub modes: usize,
    pub seed: RngSeed,
}

impl SamplePath {
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.modes..(k + 1) * self.modes]
    }
}

pub fn sample_qwiener(space: &HSpace, spec: &QWienerSpec, grid: Arc<TimeGrid>, seed: RngSeed) -> SamplePath {
    let modes = spec.modes();
    let dim = space.dim();
    let mut noise = NoiseStream::new(seed, modes);
    let mut increments = vec![0.0; grid.steps() * modes];
    let mut path = HPath::zeros(grid.clone(), dim);
    for k in 0..grid.steps() {
        let dw = &mut increments[k * modes..(k + 1) * modes];
        spec.draw_increment(&mut noise, grid.step(k), dw);
        let prev = path.node(k).to_vec();
        let next = path.node_mut(k + 1);
        next.copy_from_slice(&prev);
        for (i, e) in spec.basis.iter().enumerate() {
            for c in 0..dim {
                next[c] += dw[i] * e[c];
            }
        }
    }
    SamplePath {
        path,
        increments,
        modes,
        seed,
    }
}

/// Left-point sums `I(t_k) = Σ_{i<k} (f(t_i), m(t_{i+1}) - m(t_i))`, a scalar path.
pub fn ito_integral(space: &HSpace, f: &HPath, m: &HPath) -> Result<HPath> {
    check_dim(f.data().len(), m.data().len())?;
    let dim = m.dim();
    let mut out = HPath::zeros(m.grid().clone(), 1);
    let mut dm = vec![0.0; dim];
    for k in 0..m.len() - 1 {
        for c in 0..dim {
            dm[c] = m.node(k + 1)[c] - m.node(k)[c];
        }
        let next = out.node(k)[0] + space.inner(f.node(k), &dm);
        out.node_mut(k + 1)[0] = next;
    }
    Ok(out)
}

/// `∫ B dW` for a constant operator `B`, an H-valued path.
pub fn integrate_operator(b: &DMatrix<f64>, w: &SamplePath) -> Result<HPath> {
    check_dim(w.modes, b.ncols())?;
    let dim = b.nrows();
    let mut out = HPath::zeros(w.path.grid().clone(), dim);
    for k in 0..w.path.len() - 1 {
        let dw = w.increment(k);
        let prev = out.node(k).to_vec();
        let next = out.node_mut(k + 1);
        for c in 0..dim {
            next[c] = prev[c] + (0..w.modes).map(|i| b[(c, i)] * dw[i]).sum::<f64>();
        }
    }
    Ok(out)
}

/// Realized quadratic variation `Σ |Δm|^2` along the grid.
pub fn quadratic_variation(space: &HSpace, m: &HPath) -> HPath {
    let dim = m.dim();
    let mut out = HPath::zeros(m.grid().clone(), 1);
    let mut dm = vec![0.0; dim];
    for k in 0..m.len() - 1 {
        for c in 0..dim {
            dm[c] = m.node(k + 1)[c] - m.node(k)[c];
        }
        let next = out.node(k)[0] + space.norm_sq(&dm);
        out.node_mut(k + 1)[0] = next;
    }
    out
}

/// `Σ_{i<k} (m(t), h_i) h_i` for an H-orthonormal family `h_i`.
pub fn project_martingale(space: &HSpace, m: &HPath, k: usize, basis: &[Point]) -> Result<HPath> {
    if k > basis.len() {
        return Err(Error::invalid("k", "exceeds the number of basis vectors"));
    }
    let dim = m.dim();
    for b in &basis[..k] {
        check_dim(dim, b.len())?;
    }
    Ok(HPath::from_fn(m.grid().clone(), dim, |t, out| {
        let idx = m.grid().locate(t);
        let v = m.node(idx);
        out.iter_mut().for_each(|o| *o = 0.0);
        for b in &basis[..k] {
            let c = space.inner(v, b.as_slice());
            for i in 0..dim {
                out[i] += c * b[i];
            }
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                samples: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    /// `E|I(T)|^2 / ∫|B|_Q^2 dt`.
    pub isometry_ratio: Estimate,
    /// `E sup_t |I(t)|`.
    pub sup_moment: Estimate,
    /// `3 E (∫|B|_Q^2 dt)^{1/2}`.
    pub bdg_bound: f64,
    /// `E sup_t |W(t)|` against `3 E sqrt(<W>(T))` for the driving process.
    pub martingale_sup: Estimate,
    pub martingale_bound: Estimate,
    pub isometry_tol: f64,
    pub pass: bool,
}

/// Monte Carlo check of the Itô isometry and the `r = 1` maximal inequality
/// with constant 3 for a constant integrand.
pub fn check_isometry_bdg(
    space: &HSpace,
    spec: &QWienerSpec,
    b: &DMatrix<f64>,
    grid: Arc<TimeGrid>,
    n_paths: usize,
    seed: RngSeed,
    isometry_tol: f64,
) -> Result<IsometryReport> {
    check_dim(space.dim(), b.nrows())?;
    check_dim(spec.modes(), b.ncols())?;
    let qnorm = spec.q_norm_sq(space, b);
    if !(qnorm > 0.0) {
        return Err(Error::invalid("b", "integrand has zero Q-norm"));
    }
    let horizon = grid.horizon();
    let per_path: Vec<Result<[f64; 4]>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let w = sample_qwiener(space, spec, grid.clone(), seed.child(p));
            let integral = integrate_operator(b, &w)?;
            let qv = quadratic_variation(space, &w.path);
            Ok([
                space.norm_sq(integral.last()),
                integral.sup_norm(space),
                w.path.sup_norm(space),
                3.0 * qv.last()[0].sqrt(),
            ])
        })
        .collect();
    let mut cols = [vec![], vec![], vec![], vec![]];
    for r in per_path {
        let r = r?;
        for i in 0..4 {
            cols[i].push(r[i]);
        }
    }
    let iso = Estimate::from_samples(&cols[0]);
    let isometry_ratio = Estimate {
        mean: iso.mean / (qnorm * horizon),
        stderr: iso.stderr / (qnorm * horizon),
        samples: iso.samples,
    };
    let sup_moment = Estimate::from_samples(&cols[1]);
    let bdg_bound = 3.0 * (qnorm * horizon).sqrt();
    let martingale_sup = Estimate::from_samples(&cols[2]);
    let martingale_bound = Estimate::from_samples(&cols[3]);
    let pass = (isometry_ratio.mean - 1.0).abs() <= isometry_tol
        && sup_moment.mean <= bdg_bound
        && martingale_sup.mean <= martingale_bound.mean;
    Ok(IsometryReport {
        isometry_ratio,
        sup_moment,
        bdg_bound,
        martingale_sup,
        martingale_bound,
        isometry_tol,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpReport {
    /// `sup_t` of the absolute defect in the integration-by-parts identity.
    pub sup_defect: f64,
    pub identity_residual: f64,
}

/// Defect of
/// `|u - m|^2 = |u|^2 - 2∫(u, dm) - 2∫(m, f) ds + 2∫(m, d eta) - <m>`
/// with all integrals as left-point sums and `<m>` the realized variation.
/// Requires `u + eta = u0 + ∫ f + m` on the grid.
pub fn check_ibp(space: &HSpace, u: &HPath, eta: &HPath, m: &HPath, f: &HPath, u0: &[f64]) -> Result<IbpReport> {
    let dim = space.dim();
    for p in [u, eta, m, f] {
        check_dim(dim, p.dim())?;
        check_dim(u.len(), p.len())?;
    }
    check_dim(dim, u0.len())?;
    let grid = u.grid();
    let mut integral_f = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut residual = 0.0f64;
    let mut scale = 1.0f64;
    for k in 0..u.len() {
        if k > 0 {
            let h = grid.step(k - 1);
            for c in 0..dim {
                integral_f[c] += h * f.node(k - 1)[c];
            }
        }
        for c in 0..dim {
            scratch[c] = u.node(k)[c] + eta.node(k)[c] - u0[c] - integral_f[c] - m.node(k)[c];
        }
        residual = residual.max(space.norm_h(&scratch));
        scale = scale.max(space.norm_h(u.node(k))).max(space.norm_h(eta.node(k)));
    }
    if residual > 1e-8 * scale {
        return Err(Error::invalid(
            "u",
            format!("u + eta differs from u0 + ∫f + m by {residual:.3e}"),
        ));
    }

    let mut acc = 0.0;
    let mut sup = 0.0f64;
    let mut dm = vec![0.0; dim];
    let mut d_eta = vec![0.0; dim];
    for k in 0..u.len() {
        for c in 0..dim {
            scratch[c] = u.node(k)[c] - m.node(k)[c];
        }
        let defect = space.norm_sq(&scratch) - space.norm_sq(u.node(k)) + acc;
        sup = sup.max(defect.abs());
        if k + 1 < u.len() {
            let h = grid.step(k);
            for c in 0..dim {
                dm[c] = m.node(k + 1)[c] - m.node(k)[c];
                d_eta[c] = eta.node(k + 1)[c] - eta.node(k)[c];
            }
            acc += 2.0 * space.inner(u.node(k), &dm) + 2.0 * h * space.inner(m.node(k), f.node(k))
                - 2.0 * space.inner(m.node(k), &d_eta)
                + space.norm_sq(&dm);
        }
    }
    Ok(IbpReport {
        sup_defect: sup,
        identity_residual: residual,
    })
}
