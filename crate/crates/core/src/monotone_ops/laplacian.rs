//! Resolvent of the discrete Neumann-Robin Dirichlet energy on `(0, 1)`.
//!
//! The energy is `1/2 sum (u[i+1] - u[i])^2 / dx + j(u[0]) + j(u[n-1])` with
//! `dj = beta`; its H-gradient with cell weights `dx` is the cell-centred
//! `-u''` plus the boundary flux `beta(u) / dx` in the end cells. The
//! resolvent eliminates the interior with two tridiagonal solves and treats
//! the 2x2 boundary inclusion by coordinate descent.

use crate::error::{Error, Result};

use super::graph::Graph1D;

const COUPLING_TOL: f64 = 1e-14;
const COUPLING_MAX_ITER: usize = 10_000;

/// Solves `(diag + off * T) y = rhs` for the Neumann second-difference `T`.
fn solve_neumann_tridiagonal(dx: f64, coupling: f64, rhs: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    let diag = |i: usize| {
        let degree = if n == 1 {
            0.0
        } else if i == 0 || i == n - 1 {
            1.0
        } else {
            2.0
        };
        dx + coupling * degree
    };
    let off = -coupling;
    // Thomas forward sweep; scratch holds the modified super-diagonal.
    let mut denom = diag(0);
    scratch[0] = off / denom;
    out[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag(i) - off * scratch[i - 1];
        scratch[i] = off / denom;
        out[i] = (rhs[i] - off * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
}

/// `y + c * grad(energy)(y) ∋ z` in the cell-weighted space.
pub(crate) fn dirichlet_resolvent(boundary: &Graph1D, c: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
    let n = z.len();
    if c == 0.0 {
        out.copy_from_slice(z);
        return Ok(());
    }
    let dx = 1.0 / n as f64;
    let coupling = c / dx;
    let mut scratch = vec![0.0; n];
    let rhs: Vec<f64> = z.iter().map(|v| dx * v).collect();
    let mut v = vec![0.0; n];
    solve_neumann_tridiagonal(dx, coupling, &rhs, &mut v, &mut scratch);

    let mut unit = vec![0.0; n];
    unit[0] = 1.0;
    let mut m0 = vec![0.0; n];
    solve_neumann_tridiagonal(dx, coupling, &unit, &mut m0, &mut scratch);
    unit[0] = 0.0;
    unit[n - 1] = 1.0;
    let mut m1 = vec![0.0; n];
    solve_neumann_tridiagonal(dx, coupling, &unit, &mut m1, &mut scratch);

    if n == 1 {
        // Both boundary points sit in the single cell: flux 2 beta(y) / dx.
        let g = m0[0];
        out[0] = boundary.resolvent(2.0 * c * g, v[0]);
        return Ok(());
    }

    let g = [[m0[0], m1[0]], [m0[n - 1], m1[n - 1]]];
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let q = [
        [g[1][1] / det, -g[0][1] / det],
        [-g[1][0] / det, g[0][0] / det],
    ];
    let r = [v[0], v[n - 1]];
    let qr = [q[0][0] * r[0] + q[0][1] * r[1], q[1][0] * r[0] + q[1][1] * r[1]];

    let mut y = r;
    let mut converged = false;
    let mut change = f64::INFINITY;
    for _ in 0..COUPLING_MAX_ITER {
        change = 0.0;
        for k in 0..2 {
            let l = 1 - k;
            let target = (qr[k] - q[k][l] * y[l]) / q[k][k];
            let next = boundary.resolvent(c / q[k][k], target);
            change = f64::max(change, (next - y[k]).abs());
            y[k] = next;
        }
        if change <= COUPLING_TOL * (1.0 + y[0].abs() + y[1].abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "boundary coupling of the Laplacian resolvent".into(),
            iterations: COUPLING_MAX_ITER,
            residual: change,
        });
    }

    let d = [r[0] - y[0], r[1] - y[1]];
    let t = [q[0][0] * d[0] + q[0][1] * d[1], q[1][0] * d[0] + q[1][1] * d[1]];
    for i in 0..n {
        out[i] = v[i] - t[0] * m0[i] - t[1] * m1[i];
    }
    out[0] = y[0];
    out[n - 1] = y[1];
    Ok(())
}
