use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::hspace::{HSpace, Point};
use crate::rng::{NoiseStream, RngSeed};

use super::MonotoneOperator;

/// Outcome of sampling the coercivity condition
/// `r0 ||y||_X* <= (y, x - h0) + a1 |x|^2 + a2` on the graph of `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H1Audit {
    pub h0: Vec<f64>,
    pub r0: f64,
    pub a1: f64,
    pub a2: f64,
    pub sample_count: usize,
    pub worst_violation: f64,
    pub feasible: bool,
}

/// Graph points `[J z, A_eps z - alpha J z]` for Gaussian `z` of the given
/// scale and log-uniform `eps` in `[1e-3, 10]`.
pub fn sample_graph_pairs(
    op: &MonotoneOperator,
    space: &HSpace,
    count: usize,
    seed: RngSeed,
    scale: f64,
) -> Result<Vec<(Point, Point)>> {
    let dim = space.dim();
    let mut noise = NoiseStream::new(seed, dim + 1);
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let mut z = Point::zeros(dim);
        noise.fill_step(z.as_mut_slice());
        z *= scale;
        let eps = 10f64.powf(-3.0 + 4.0 * noise.next_uniform());
        pairs.push(op.graph_pair(space, eps, &z)?);
    }
    Ok(pairs)
}

pub fn audit_h1(
    op: &MonotoneOperator,
    space: &HSpace,
    h0: &Point,
    r0: f64,
    a1: f64,
    a2: f64,
    samples: usize,
    seed: RngSeed,
) -> Result<H1Audit> {
    check_dim(space.dim(), h0.len())?;
    let mut worst = f64::NEG_INFINITY;
    for scale in [0.1, 1.0, 10.0] {
        let pairs = sample_graph_pairs(op, space, samples.div_ceil(3), seed.child(scale as u64), scale)?;
        for (x, y) in &pairs {
            let shifted = x - h0;
            let v = r0 * space.norm_xstar(y.as_slice())
                - space.inner(y.as_slice(), shifted.as_slice())
                - a1 * space.norm_sq(x.as_slice())
                - a2;
            worst = worst.max(v);
        }
    }
    Ok(H1Audit {
        h0: h0.as_slice().to_vec(),
        r0,
        a1,
        a2,
        sample_count: 3 * samples.div_ceil(3),
        worst_violation: worst,
        feasible: worst <= 0.0,
    })
}
