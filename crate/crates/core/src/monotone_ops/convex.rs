use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hspace::HSpace;

/// Closed convex sets whose H-projection is available in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum ConvexSet {
    Box {
        #[serde(with = "crate::serde_ext::floats")]
        lo: Vec<f64>,
        #[serde(with = "crate::serde_ext::floats")]
        hi: Vec<f64>,
    },
    Ball { center: Vec<f64>, radius: f64 },
    /// `{ x : (normal, x)_H <= offset }`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
}

impl ConvexSet {
    pub fn validate(&self, space: &HSpace) -> Result<()> {
        let dim = space.dim();
        match self {
            ConvexSet::Box { lo, hi } => {
                check_dim(dim, lo.len())?;
                check_dim(dim, hi.len())?;
                if lo.iter().zip(hi).any(|(a, b)| a.is_nan() || b.is_nan() || a > b) {
                    return Err(Error::invalid("box", "requires lo <= hi componentwise"));
                }
            }
            ConvexSet::Ball { center, radius } => {
                check_dim(dim, center.len())?;
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::invalid("radius", "must be finite and non-negative"));
                }
            }
            ConvexSet::HalfSpace { normal, offset } => {
                check_dim(dim, normal.len())?;
                if space.norm_h(normal) == 0.0 || !offset.is_finite() {
                    return Err(Error::invalid("half-space", "needs a nonzero normal and finite offset"));
                }
            }
        }
        Ok(())
    }

    pub fn project(&self, space: &HSpace, x: &[f64], out: &mut [f64]) {
        match self {
            ConvexSet::Box { lo, hi } => {
                for i in 0..x.len() {
                    out[i] = x[i].clamp(lo[i], hi[i]);
                }
            }
            ConvexSet::Ball { center, radius } => {
                let d = space.dist_h(x, center);
                if d <= *radius {
                    out.copy_from_slice(x);
                } else {
                    let s = radius / d;
                    for i in 0..x.len() {
                        out[i] = center[i] + s * (x[i] - center[i]);
                    }
                }
            }
            ConvexSet::HalfSpace { normal, offset } => {
                let excess = space.inner(normal, x) - offset;
                if excess <= 0.0 {
                    out.copy_from_slice(x);
                } else {
                    let s = excess / space.norm_sq(normal);
                    for i in 0..x.len() {
                        out[i] = x[i] - s * normal[i];
                    }
                }
            }
        }
    }
}
