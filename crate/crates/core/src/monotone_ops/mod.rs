//! Maximal monotone operators through their resolvents.
//!
//! An operator `A` carries a shift `alpha >= 0` such that `A + alpha I` is
//! maximal monotone. Only the resolvent `J = (I + eps (A + alpha I))^{-1}`
//! and the Yosida approximation `(x - J x) / eps` of the shifted operator are
//! computed here; time steppers account for `-alpha I` explicitly.

mod audit;
mod convex;
mod graph;
mod laplacian;
mod lipschitz;

pub use audit::{audit_h1, sample_graph_pairs, H1Audit};
pub use convex::ConvexSet;
pub use graph::Graph1D;
pub use lipschitz::LipschitzMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hspace::{HSpace, Point};

use lipschitz::{h_similar, min_symmetric_eigenvalue, to_matrix};

const FB_TOL: f64 = 1e-13;
const FB_MAX_ITER: usize = 50_000;
const DOMAIN_EPS: f64 = 1e-8;

/// Subdifferential part of a composite operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "kebab-case")]
pub enum ProxTerm {
    Graph(Graph1D),
    Convex(ConvexSet),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OperatorKind {
    Zero,
    /// `x -> M x` with positive semidefinite H-symmetric part.
    LinearSpd { matrix: Vec<Vec<f64>> },
    ScalarGraph(Graph1D),
    IndicatorConvex(ConvexSet),
    /// `A0 + d(phi)` with Lipschitz `A0`.
    Composite { a0: LipschitzMap, phi: ProxTerm },
    /// Cell-centred `-u''` on `(0, 1)` with boundary graph and reaction term.
    LaplacianBoundary {
        cells: usize,
        boundary: Graph1D,
        reaction: LipschitzMap,
    },
}

impl OperatorKind {
    pub const NAMES: [&'static str; 6] = [
        "zero",
        "linear-spd",
        "scalar-graph",
        "indicator-convex",
        "composite",
        "laplacian-boundary",
    ];
}

enum Prox<'a> {
    Graph(&'a Graph1D),
    Convex(&'a ConvexSet),
    Dirichlet(&'a Graph1D),
}

impl Prox<'_> {
    fn apply(&self, space: &HSpace, c: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Prox::Graph(g) => {
                for i in 0..z.len() {
                    out[i] = g.resolvent(c, z[i]);
                }
                Ok(())
            }
            Prox::Convex(set) => {
                set.project(space, z, out);
                Ok(())
            }
            Prox::Dirichlet(b) => laplacian::dirichlet_resolvent(b, c, z, out),
        }
    }

    fn is_iterative(&self) -> bool {
        match self {
            Prox::Graph(g) | Prox::Dirichlet(g) if g.is_iterative() => true,
            Prox::Dirichlet(_) => true,
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MonotoneOperator {
    kind: OperatorKind,
    dim: usize,
    alpha: f64,
    modulus: f64,
    matrix: Option<DMatrix<f64>>,
}

impl MonotoneOperator {
    pub fn new(kind: OperatorKind, space: &HSpace) -> Result<Self> {
        let dim = space.dim();
        let mut matrix = None;
        let alpha = match &kind {
            OperatorKind::Zero => 0.0,
            OperatorKind::LinearSpd { matrix: rows } => {
                let m = to_matrix(rows, dim)?;
                let shift = (-min_symmetric_eigenvalue(&h_similar(space, &m))).max(0.0);
                matrix = Some(m);
                // Round-off in the eigenvalue should not register as a shift.
                if shift < 1e-12 {
                    0.0
                } else {
                    shift
                }
            }
            OperatorKind::ScalarGraph(g) => {
                g.validate()?;
                0.0
            }
            OperatorKind::IndicatorConvex(set) => {
                set.validate(space)?;
                0.0
            }
            OperatorKind::Composite { a0, phi } => {
                a0.validate(space)?;
                match phi {
                    ProxTerm::Graph(g) => g.validate()?,
                    ProxTerm::Convex(set) => set.validate(space)?,
                }
                a0.monotonicity_shift(space)
            }
            OperatorKind::LaplacianBoundary {
                cells,
                boundary,
                reaction,
            } => {
                check_dim(dim, *cells)?;
                if *cells < 1 {
                    return Err(Error::invalid("cells", "must be positive"));
                }
                let w = 1.0 / *cells as f64;
                if space.weights().iter().any(|v| (v - w).abs() > 1e-12 * w) {
                    return Err(Error::invalid(
                        "weights",
                        "the Laplacian operator needs the uniform cell space (weights 1/cells)",
                    ));
                }
                boundary.validate()?;
                if !matches!(reaction, LipschitzMap::Linear { .. }) {
                    reaction.validate(space)?;
                } else {
                    return Err(Error::invalid("reaction", "must act componentwise"));
                }
                reaction.monotonicity_shift(space)
            }
        };
        Ok(MonotoneOperator {
            kind,
            dim,
            alpha,
            modulus: 0.0,
            matrix,
        })
    }

    /// Raises the shift; it may not go below the one derived from the kind.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= self.alpha) {
            return Err(Error::invalid(
                "alpha",
                format!("must be finite and at least {}", self.alpha),
            ));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Declares the strong monotonicity modulus `a` of `A`.
    pub fn with_modulus(mut self, modulus: f64) -> Result<Self> {
        if !(modulus.is_finite() && modulus >= 0.0) {
            return Err(Error::invalid("modulus", "must be finite and non-negative"));
        }
        self.modulus = modulus;
        Ok(self)
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn modulus(&self) -> f64 {
        self.modulus
    }

    pub fn is_iterative(&self) -> bool {
        match &self.kind {
            OperatorKind::ScalarGraph(g) => g.is_iterative(),
            OperatorKind::Composite { a0, phi } => {
                let prox = match phi {
                    ProxTerm::Graph(g) => Prox::Graph(g),
                    ProxTerm::Convex(c) => Prox::Convex(c),
                };
                !matches!(a0, LipschitzMap::Affine { .. }) || prox.is_iterative()
            }
            OperatorKind::LaplacianBoundary { .. } => true,
            _ => false,
        }
    }

    /// `J^alpha_eps x = (I + eps (A + alpha I))^{-1} x`.
    pub fn resolvent(&self, space: &HSpace, eps: f64, x: &Point) -> Result<Point> {
        let mut out = Point::zeros(x.len());
        self.resolvent_into(space, eps, x.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    pub fn resolvent_into(&self, space: &HSpace, eps: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, out.len())?;
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::invalid("eps", "must be finite and non-negative"));
        }
        let c = 1.0 + eps * self.alpha;
        match &self.kind {
            OperatorKind::Zero => {
                for i in 0..x.len() {
                    out[i] = x[i] / c;
                }
            }
            OperatorKind::LinearSpd { .. } => {
                let m = self.matrix.as_ref().expect("matrix cached at construction");
                let system = DMatrix::identity(self.dim, self.dim) * c + m * eps;
                let y = system
                    .lu()
                    .solve(&DVector::from_column_slice(x))
                    .ok_or_else(|| Error::invalid("eps", "resolvent system is singular"))?;
                out.copy_from_slice(y.as_slice());
            }
            OperatorKind::ScalarGraph(g) => {
                for i in 0..x.len() {
                    out[i] = g.resolvent(eps / c, x[i] / c);
                }
            }
            OperatorKind::IndicatorConvex(set) => {
                let z: Vec<f64> = x.iter().map(|v| v / c).collect();
                set.project(space, &z, out);
            }
            OperatorKind::Composite { a0, phi } => {
                let prox = match phi {
                    ProxTerm::Graph(g) => Prox::Graph(g),
                    ProxTerm::Convex(set) => Prox::Convex(set),
                };
                self.composite_resolvent(space, a0, &prox, eps, x, out)?;
            }
            OperatorKind::LaplacianBoundary {
                boundary, reaction, ..
            } => {
                self.composite_resolvent(space, reaction, &Prox::Dirichlet(boundary), eps, x, out)?;
            }
        }
        Ok(())
    }

    /// `(I (1 + eps alpha) + eps M)^{-1}` for the linear kind, for callers
    /// that apply the same resolvent many times.
    pub(crate) fn linear_resolvent_matrix(&self, eps: f64) -> Option<DMatrix<f64>> {
        let m = self.matrix.as_ref()?;
        let c = 1.0 + eps * self.alpha;
        (DMatrix::identity(self.dim, self.dim) * c + m * eps).try_inverse()
    }

    /// Solves `0 ∈ y + eps (A0 y + alpha y + d(phi)(y)) - x` by forward-backward
    /// iteration `y <- prox_{g eps phi}(y - g (y + eps (A0 + alpha) y - x))`,
    /// halving the step `g` whenever the increments stop shrinking.
    fn composite_resolvent(
        &self,
        space: &HSpace,
        a0: &LipschitzMap,
        prox: &Prox<'_>,
        eps: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        if let LipschitzMap::Affine { slope, offset } = *a0 {
            let c = 1.0 + eps * (slope + self.alpha);
            if let Prox::Graph(g) = prox {
                for i in 0..x.len() {
                    out[i] = g.resolvent(eps / c, (x[i] - eps * offset) / c);
                }
                return Ok(());
            }
            let z: Vec<f64> = x.iter().map(|v| (v - eps * offset) / c).collect();
            return prox.apply(space, eps / c, &z, out);
        }
        if let Some((lo, hi)) = a0.slope_range() {
            return self.shifted_resolvent(space, a0, prox, eps, (lo + hi) / 2.0, x, out);
        }
        let n = x.len();
        let mut y = x.to_vec();
        let mut a0y = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut step = 1.0;
        let mut previous = f64::INFINITY;
        let mut last = f64::INFINITY;
        for _ in 0..FB_MAX_ITER {
            a0.apply(&y, &mut a0y);
            for i in 0..n {
                let residual = y[i] + eps * (a0y[i] + self.alpha * y[i]) - x[i];
                trial[i] = y[i] - step * residual;
            }
            prox.apply(space, step * eps, &trial, &mut next)?;
            let change = space.dist_h(&next, &y);
            last = change;
            if !change.is_finite() {
                break;
            }
            if change <= FB_TOL * (1.0 + space.norm_h(&next)) {
                out.copy_from_slice(&next);
                return Ok(());
            }
            if change > 0.999 * previous {
                step *= 0.5;
                previous = f64::INFINITY;
                if step < 1e-8 {
                    break;
                }
                continue;
            }
            previous = change;
            y.copy_from_slice(&next);
        }
        Err(Error::NonConvergence {
            what: "composite resolvent".into(),
            iterations: FB_MAX_ITER,
            residual: last,
        })
    }

    /// Componentwise `A0` with slopes centred at `mid`: the fixed point of
    /// `y <- prox_{eps / c}((x - eps (A0 y + alpha y - k y)) / c)` with
    /// `k = alpha + mid` and `c = 1 + eps k`. The inner map has Lipschitz
    /// constant `r <= k`, so the iteration contracts by `eps r / (1 + eps k)`.
    fn shifted_resolvent(
        &self,
        space: &HSpace,
        a0: &LipschitzMap,
        prox: &Prox<'_>,
        eps: f64,
        mid: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let n = x.len();
        let k = self.alpha + mid;
        let c = 1.0 + eps * k;
        let mut y = x.to_vec();
        let mut a0y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut last = f64::INFINITY;
        for _ in 0..FB_MAX_ITER {
            a0.apply(&y, &mut a0y);
            for i in 0..n {
                z[i] = (x[i] - eps * (a0y[i] + (self.alpha - k) * y[i])) / c;
            }
            prox.apply(space, eps / c, &z, out)?;
            let change = space.dist_h(out, &y);
            last = change;
            if !change.is_finite() {
                break;
            }
            if change <= FB_TOL * (1.0 + space.norm_h(out)) {
                return Ok(());
            }
            y.copy_from_slice(out);
        }
        Err(Error::NonConvergence {
            what: "composite resolvent".into(),
            iterations: FB_MAX_ITER,
            residual: last,
        })
    }

    /// `(x - J^alpha_eps x) / eps`, the Yosida approximation of `A + alpha I`.
    pub fn yosida(&self, space: &HSpace, eps: f64, x: &Point) -> Result<Point> {
        let mut out = Point::zeros(x.len());
        self.yosida_into(space, eps, x.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    pub fn yosida_into(&self, space: &HSpace, eps: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if !(eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        self.resolvent_into(space, eps, x, out)?;
        for i in 0..x.len() {
            out[i] = (x[i] - out[i]) / eps;
        }
        Ok(())
    }

    /// A point of the graph of `A` itself: `[J z, A_eps z - alpha J z]`.
    pub fn graph_pair(&self, space: &HSpace, eps: f64, z: &Point) -> Result<(Point, Point)> {
        let x = self.resolvent(space, eps, z)?;
        let mut y = (z - &x) / eps;
        y.axpy(-self.alpha, &x, 1.0);
        Ok((x, y))
    }

    /// Element of least norm of `A x`, as the limit of Yosida approximations.
    pub fn minimal_section(&self, space: &HSpace, x: &Point, tol: f64) -> Result<Point> {
        check_dim(self.dim, x.len())?;
        let mut eps = 1.0;
        let mut prev = self.yosida(space, eps, x)?;
        let mut doubling = 0;
        for _ in 0..80 {
            eps *= 0.5;
            let next = self.yosida(space, eps, x)?;
            let (np, nn) = (space.norm_h(prev.as_slice()), space.norm_h(next.as_slice()));
            let gap = space.dist_h(next.as_slice(), prev.as_slice());
            if gap <= tol * (1.0 + nn) {
                let mut y = next;
                y.axpy(-self.alpha, x, 1.0);
                return Ok(y);
            }
            // Outside the domain |A_eps x| grows like dist / eps.
            if np > 0.0 && nn / np > 1.9 && eps * nn > 1e-6 * (1.0 + space.norm_h(x.as_slice())) {
                doubling += 1;
                if doubling >= 4 {
                    return Err(Error::OutOfDomain { distance: eps * nn });
                }
            } else {
                doubling = 0;
            }
            prev = next;
        }
        Err(Error::NonConvergence {
            what: "minimal section".into(),
            iterations: 80,
            residual: f64::NAN,
        })
    }

    /// Projection onto the closure of the domain, approximated by `J_eps` with
    /// a tiny `eps`. Points whose displacement shrinks in proportion to `eps`
    /// lie in the domain and are returned unchanged.
    pub fn project_domain(&self, space: &HSpace, x: &Point) -> Result<Point> {
        let coarse = self.resolvent(space, DOMAIN_EPS, x)?;
        let d_coarse = space.dist_h(coarse.as_slice(), x.as_slice());
        if d_coarse == 0.0 {
            return Ok(x.clone());
        }
        let fine = self.resolvent(space, DOMAIN_EPS * 1e-2, x)?;
        let d_fine = space.dist_h(fine.as_slice(), x.as_slice());
        if d_fine <= 0.05 * d_coarse {
            Ok(x.clone())
        } else {
            Ok(coarse)
        }
    }
}
