use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROOT_TOL: f64 = 1e-15;

/// Maximal monotone graphs in `R x R`, applied componentwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "graph", rename_all = "kebab-case")]
pub enum Graph1D {
    /// `r -> slope * r`.
    Linear { slope: f64 },
    /// Subdifferential of `weight * |r|`.
    Sign { weight: f64 },
    /// `r -> coeff * |r|^(exponent - 1) * r`.
    Power { coeff: f64, exponent: f64 },
    /// Enthalpy graph: `solid * r` below zero, the jump `[0, latent]` at zero
    /// and `latent + liquid * r` above.
    Stefan { solid: f64, liquid: f64, latent: f64 },
    /// Subdifferential of the indicator of `[lo, hi]`.
    Interval {
        #[serde(with = "crate::serde_ext::float")]
        lo: f64,
        #[serde(with = "crate::serde_ext::float")]
        hi: f64,
    },
}

impl Graph1D {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Graph1D::Linear { slope } => slope.is_finite() && slope >= 0.0,
            Graph1D::Sign { weight } => weight.is_finite() && weight >= 0.0,
            Graph1D::Power { coeff, exponent } => {
                coeff.is_finite() && coeff >= 0.0 && exponent.is_finite() && exponent >= 1.0
            }
            Graph1D::Stefan {
                solid,
                liquid,
                latent,
            } => {
                [solid, liquid, latent].iter().all(|v| v.is_finite() && *v >= 0.0)
            }
            Graph1D::Interval { lo, hi } => !lo.is_nan() && !hi.is_nan() && lo <= hi && lo < f64::INFINITY && hi > f64::NEG_INFINITY,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("graph", format!("{self:?} is not a maximal monotone graph")))
        }
    }

    pub fn is_iterative(&self) -> bool {
        matches!(self, Graph1D::Power { exponent, .. } if *exponent != 1.0)
    }

    /// Solves `y + eps * beta(y) ∋ x`.
    pub fn resolvent(&self, eps: f64, x: f64) -> f64 {
        match *self {
            Graph1D::Linear { slope } => x / (1.0 + eps * slope),
            Graph1D::Sign { weight } => {
                let t = eps * weight;
                if x > t {
                    x - t
                } else if x < -t {
                    x + t
                } else {
                    0.0
                }
            }
            Graph1D::Power { coeff, exponent } => {
                if exponent == 1.0 {
                    return x / (1.0 + eps * coeff);
                }
                let beta = |y: f64| coeff * y.abs().powf(exponent - 1.0) * y;
                let slope = |y: f64| 1.0 + eps * coeff * exponent * y.abs().powf(exponent - 1.0);
                let (lo, hi) = if x >= 0.0 { (0.0, x) } else { (x, 0.0) };
                newton_bracketed(|y| y + eps * beta(y) - x, slope, lo, hi)
            }
            Graph1D::Stefan {
                solid,
                liquid,
                latent,
            } => {
                if x < 0.0 {
                    x / (1.0 + eps * solid)
                } else if x <= eps * latent {
                    0.0
                } else {
                    (x - eps * latent) / (1.0 + eps * liquid)
                }
            }
            Graph1D::Interval { lo, hi } => x.clamp(lo, hi),
        }
    }

    /// Element of least modulus of `beta(r)`; `None` outside the domain.
    pub fn minimal_section(&self, r: f64) -> Option<f64> {
        match *self {
            Graph1D::Linear { slope } => Some(slope * r),
            Graph1D::Sign { weight } => Some(if r == 0.0 { 0.0 } else { weight * r.signum() }),
            Graph1D::Power { coeff, exponent } => Some(coeff * r.abs().powf(exponent - 1.0) * r),
            Graph1D::Stefan {
                solid,
                liquid,
                latent,
            } => Some(if r < 0.0 {
                solid * r
            } else if r == 0.0 {
                0.0
            } else {
                latent + liquid * r
            }),
            Graph1D::Interval { lo, hi } => (lo <= r && r <= hi).then_some(0.0),
        }
    }
}

/// Root of an increasing function on a bracket that changes sign: Newton
/// steps while they stay inside the shrinking bracket, bisection otherwise.
fn newton_bracketed(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    if g(lo) >= 0.0 {
        return lo;
    }
    if g(hi) <= 0.0 {
        return hi;
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = g(y);
        if v == 0.0 {
            return y;
        }
        if v > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let newton = y - v / dg(y);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - y).abs() <= ROOT_TOL * (1.0 + y.abs()) || hi - lo <= ROOT_TOL * (1.0 + y.abs()) {
            return next;
        }
        y = next;
    }
    y
}
