//! The pivot Hilbert space, its compactly embedded subspace and time paths.
//!
//! `H` is `R^dim` with a diagonal weighted inner product. The smaller space
//! `X` uses the lifted norm `|(I + s S) x|_H` for a positive semidefinite
//! smoother `S`, and `X*` the dual norm `|(I + s S)^{-1} x|_H`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::rng::{NoiseStream, RngSeed};

pub type Point = DVector<f64>;

#[derive(Clone, Debug)]
pub enum XNorm {
    SameAsH,
    SpectralSmooth { s: f64, smoother: DMatrix<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    H,
    X,
    XStar,
}

#[derive(Clone, Debug)]
pub struct HSpace {
    dim: usize,
    weights: Vec<f64>,
    xnorm: XNorm,
    gamma0: f64,
    lift: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl HSpace {
    pub fn new(dim: usize, weights: Vec<f64>, xnorm: XNorm, gamma0: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        check_dim(dim, weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights", "must be finite and positive"));
        }
        if !(gamma0.is_finite() && gamma0 > 0.0) {
            return Err(Error::invalid("gamma0", "must be finite and positive"));
        }
        let lift = match &xnorm {
            XNorm::SameAsH => None,
            XNorm::SpectralSmooth { s, smoother } => {
                if smoother.nrows() != dim || smoother.ncols() != dim {
                    return Err(Error::invalid("smoother", format!("must be {dim}x{dim}")));
                }
                if !(s.is_finite() && *s >= 0.0) {
                    return Err(Error::invalid("s", "must be finite and non-negative"));
                }
                let lifted = DMatrix::identity(dim, dim) + smoother * *s;
                let inverse = lifted
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::invalid("smoother", "I + sS is singular"))?;
                Some((lifted, inverse))
            }
        };
        Ok(HSpace {
            dim,
            weights,
            xnorm,
            gamma0,
            lift,
        })
    }

    /// Unweighted `R^dim` with `X = H`.
    pub fn euclidean(dim: usize) -> Self {
        HSpace::new(dim, vec![1.0; dim], XNorm::SameAsH, 1.0).expect("valid euclidean space")
    }

    /// Cell-average space on `(0, 1)` with `cells` equal cells.
    pub fn cells(cells: usize) -> Result<Self> {
        let w = 1.0 / cells as f64;
        HSpace::new(cells, vec![w; cells], XNorm::SameAsH, 1.0)
    }

    /// Neumann second-difference matrix, a convenient smoother for `X`.
    pub fn neumann_laplacian(dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim.saturating_sub(1) {
            m[(i, i)] += 1.0;
            m[(i + 1, i + 1)] += 1.0;
            m[(i, i + 1)] -= 1.0;
            m[(i + 1, i)] -= 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn xnorm(&self) -> &XNorm {
        &self.xnorm
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn x_equals_h(&self) -> bool {
        self.lift.is_none()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.dim);
        debug_assert_eq!(b.len(), self.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.weights[i] * a[i] * b[i];
        }
        acc
    }

    pub fn norm_sq(&self, a: &[f64]) -> f64 {
        self.inner(a, a)
    }

    pub fn norm_h(&self, a: &[f64]) -> f64 {
        self.norm_sq(a).sqrt()
    }

    pub fn dist_h(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let d = a[i] - b[i];
            acc += self.weights[i] * d * d;
        }
        acc.sqrt()
    }

    pub fn norm_x(&self, a: &[f64]) -> f64 {
        match &self.lift {
            None => self.norm_h(a),
            Some((lifted, _)) => {
                let v = lifted * DVector::from_column_slice(a);
                self.norm_h(v.as_slice())
            }
        }
    }

    pub fn norm_xstar(&self, a: &[f64]) -> f64 {
        match &self.lift {
            None => self.norm_h(a),
            Some((_, inverse)) => {
                let v = inverse * DVector::from_column_slice(a);
                self.norm_h(v.as_slice())
            }
        }
    }

    pub fn norm(&self, kind: NormKind, a: &[f64]) -> f64 {
        match kind {
            NormKind::H => self.norm_h(a),
            NormKind::X => self.norm_x(a),
            NormKind::XStar => self.norm_xstar(a),
        }
    }

    /// Largest observed `|x|_H / ||x||_X` over Gaussian samples; the embedding
    /// constant is consistent when this does not exceed `gamma0`.
    pub fn check_embedding(&self, samples: usize, seed: RngSeed) -> EmbeddingCheck {
        let mut noise = NoiseStream::new(seed, self.dim);
        let mut x = vec![0.0; self.dim];
        let mut worst = 0.0f64;
        for _ in 0..samples {
            noise.fill_step(&mut x);
            let nx = self.norm_x(&x);
            if nx > 0.0 {
                worst = worst.max(self.norm_h(&x) / nx);
            }
        }
        EmbeddingCheck {
            worst_ratio: worst,
            gamma0: self.gamma0,
            ok: worst <= self.gamma0 * (1.0 + 1e-12),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EmbeddingCheck {
    pub worst_ratio: f64,
    pub gamma0: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon", "must be finite and positive"));
        }
        if steps == 0 {
            return Err(Error::invalid("steps", "must be positive"));
        }
        let h = horizon / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
        nodes[steps] = horizon;
        Ok(TimeGrid { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::invalid("nodes", "need at least two nodes starting at 0"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::invalid("nodes", "must be strictly increasing and finite"));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn step(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn max_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Every `factor`-th node; requires `factor` to divide the step count.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::invalid("factor", "must divide the number of steps"));
        }
        Ok(TimeGrid {
            nodes: self.nodes.iter().step_by(factor).copied().collect(),
        })
    }

    /// Index of the last node not after `t`.
    pub fn locate(&self, t: f64) -> usize {
        match self.nodes.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(self.nodes.len() - 1),
        }
    }
}

/// A path sampled on a grid; between nodes it is linear, outside `[0, T]` it
/// is held constant.
#[derive(Clone, Debug, PartialEq)]
pub struct HPath {
    grid: Arc<TimeGrid>,
    dim: usize,
    data: Vec<f64>,
}

impl HPath {
    pub fn new(grid: Arc<TimeGrid>, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(grid.len() * dim, data.len())?;
        Ok(HPath { grid, dim, data })
    }

    pub fn zeros(grid: Arc<TimeGrid>, dim: usize) -> Self {
        let n = grid.len() * dim;
        HPath {
            grid,
            dim,
            data: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<TimeGrid>, value: &[f64]) -> Self {
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(grid.len() * value.len())
            .collect();
        HPath {
            grid,
            dim: value.len(),
            data,
        }
    }

    pub fn from_fn(grid: Arc<TimeGrid>, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut data = vec![0.0; grid.len() * dim];
        for (k, &t) in grid.nodes().iter().enumerate() {
            f(t, &mut data[k * dim..(k + 1) * dim]);
        }
        HPath { grid, dim, data }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn point(&self, k: usize) -> Point {
        Point::from_column_slice(self.node(k))
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.len() - 1)
    }

    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let nodes = self.grid.nodes();
        if t <= nodes[0] {
            out.copy_from_slice(self.node(0));
            return;
        }
        if t >= self.grid.horizon() {
            out.copy_from_slice(self.last());
            return;
        }
        let k = self.grid.locate(t);
        let (t0, t1) = (nodes[k], nodes[k + 1]);
        let lam = (t - t0) / (t1 - t0);
        let (a, b) = (self.node(k), self.node(k + 1));
        for i in 0..self.dim {
            out[i] = a[i] + lam * (b[i] - a[i]);
        }
    }

    /// Piecewise-linear interpolation onto another grid.
    pub fn resample(&self, grid: Arc<TimeGrid>) -> HPath {
        let mut buf = vec![0.0; self.dim];
        HPath::from_fn(grid, self.dim, |t, out| {
            self.value_at(t, &mut buf);
            out.copy_from_slice(&buf);
        })
    }

    pub fn sup_norm(&self, space: &HSpace) -> f64 {
        (0..self.len())
            .map(|k| space.norm_h(self.node(k)))
            .fold(0.0, f64::max)
    }

    pub fn sup_norm_with(&self, space: &HSpace, kind: NormKind) -> f64 {
        (0..self.len())
            .map(|k| space.norm(kind, self.node(k)))
            .fold(0.0, f64::max)
    }

    /// Sup over nodes of the H-distance to a path on the same grid.
    pub fn sup_distance(&self, space: &HSpace, other: &HPath) -> Result<f64> {
        check_dim(self.data.len(), other.data.len())?;
        Ok((0..self.len())
            .map(|k| space.dist_h(self.node(k), other.node(k)))
            .fold(0.0, f64::max))
    }

    pub fn sub(&self, other: &HPath) -> Result<HPath> {
        check_dim(self.data.len(), other.data.len())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(HPath {
            grid: self.grid.clone(),
            dim: self.dim,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> HPath {
        HPath {
            grid: self.grid.clone(),
            dim: self.dim,
            data: self.data.iter().map(|a| c * a).collect(),
        }
    }
}

/// Total variation of a path over its grid partition, measured in `kind`.
pub fn bv_norm(space: &HSpace, path: &HPath, kind: NormKind) -> f64 {
    let dim = path.dim();
    let mut diff = vec![0.0; dim];
    let mut total = 0.0;
    for k in 0..path.len().saturating_sub(1) {
        let (a, b) = (path.node(k), path.node(k + 1));
        for i in 0..dim {
            diff[i] = b[i] - a[i];
        }
        total += space.norm(kind, &diff);
    }
    total
}

/// `sup { ||p(t) - p(s)|| : |t - s| <= delta }` over grid nodes.
pub fn modulus_of_continuity(space: &HSpace, path: &HPath, delta: f64, kind: NormKind) -> f64 {
    let times = path.times();
    let dim = path.dim();
    let slack = 1e-12 * path.grid().horizon().max(1.0);
    let mut diff = vec![0.0; dim];
    let mut worst = 0.0f64;
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            if times[j] - times[i] > delta + slack {
                break;
            }
            let (a, b) = (path.node(i), path.node(j));
            for c in 0..dim {
                diff[c] = b[c] - a[c];
            }
            worst = worst.max(space.norm(kind, &diff));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(steps: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(1.0, steps).unwrap())
    }

    #[test]
    fn weighted_inner_product() {
        let s = HSpace::new(2, vec![2.0, 0.5], XNorm::SameAsH, 1.0).unwrap();
        assert_eq!(s.inner(&[1.0, 2.0], &[3.0, 4.0]), 2.0 * 3.0 + 0.5 * 8.0);
        assert!((s.norm_h(&[1.0, 2.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(HSpace::new(2, vec![1.0, 0.0], XNorm::SameAsH, 1.0).is_err());
        assert!(HSpace::new(2, vec![1.0], XNorm::SameAsH, 1.0).is_err());
    }

    #[test]
    fn smoothing_norms_bracket_h() {
        let l = HSpace::neumann_laplacian(4);
        let s = HSpace::new(4, vec![1.0; 4], XNorm::SpectralSmooth { s: 0.3, smoother: l }, 1.0)
            .unwrap();
        let x = [1.0, -2.0, 0.5, 3.0];
        assert!(s.norm_x(&x) >= s.norm_h(&x));
        assert!(s.norm_xstar(&x) <= s.norm_h(&x));
        assert!(s.check_embedding(500, RngSeed::new(3)).ok);
    }

    #[test]
    fn bv_of_monotone_segments() {
        let g = grid(4);
        let p = HPath::new(g, 1, vec![0.0, 2.0, 1.0, 1.0, 4.0]).unwrap();
        let s = HSpace::euclidean(1);
        assert_eq!(bv_norm(&s, &p, NormKind::H), 2.0 + 1.0 + 0.0 + 3.0);
    }

    #[test]
    fn modulus_of_linear_path() {
        let g = grid(100);
        let p = HPath::from_fn(g, 1, |t, out| out[0] = t);
        let s = HSpace::euclidean(1);
        let m = modulus_of_continuity(&s, &p, 0.1, NormKind::H);
        assert!((m - 0.1).abs() < 1e-12, "{m}");
    }

    #[test]
    fn interpolation_and_extension() {
        let g = grid(2);
        let p = HPath::new(g, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let mut out = [0.0];
        p.value_at(0.75, &mut out);
        assert!((out[0] - 2.0).abs() < 1e-15);
        p.value_at(-1.0, &mut out);
        assert_eq!(out[0], 0.0);
        p.value_at(7.0, &mut out);
        assert_eq!(out[0], 3.0);
    }

    #[test]
    fn grid_locate_and_coarsen() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        assert_eq!(g.locate(0.0), 0);
        assert_eq!(g.locate(0.26), 2);
        assert_eq!(g.locate(1.0), 8);
        let c = g.coarsen(2).unwrap();
        assert_eq!(c.steps(), 4);
        assert!(g.coarsen(3).is_err());
    }
}
