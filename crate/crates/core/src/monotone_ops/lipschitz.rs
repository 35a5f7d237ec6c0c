use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hspace::HSpace;

/// Lipschitz perturbations `A0` of a subdifferential; `A0 + alpha0 I` is
/// monotone for the shift reported by [`LipschitzMap::monotonicity_shift`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "kebab-case")]
pub enum LipschitzMap {
    /// `x -> M x`, rows given in order.
    Linear { matrix: Vec<Vec<f64>> },
    /// Componentwise `r -> slope * r + offset`.
    Affine { slope: f64, offset: f64 },
    /// Componentwise `r -> amplitude * sin(frequency * r)`.
    Sine { amplitude: f64, frequency: f64 },
    /// Componentwise `r -> scale * tanh(r)`.
    Tanh { scale: f64 },
}

pub(crate) fn to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    check_dim(dim, rows.len())?;
    for r in rows {
        check_dim(dim, r.len())?;
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix", "entries must be finite"));
    }
    Ok(m)
}

/// `W^{1/2} M W^{-1/2}`: the matrix in an H-orthonormal basis.
pub(crate) fn h_similar(space: &HSpace, m: &DMatrix<f64>) -> DMatrix<f64> {
    let w = space.weights();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        m[(i, j)] * (w[i] / w[j]).sqrt()
    })
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

impl LipschitzMap {
    pub fn validate(&self, space: &HSpace) -> Result<()> {
        match self {
            LipschitzMap::Linear { matrix } => to_matrix(matrix, space.dim()).map(|_| ()),
            LipschitzMap::Affine { slope, offset } if slope.is_finite() && offset.is_finite() => Ok(()),
            LipschitzMap::Sine {
                amplitude,
                frequency,
            } if amplitude.is_finite() && frequency.is_finite() => Ok(()),
            LipschitzMap::Tanh { scale } if scale.is_finite() => Ok(()),
            _ => Err(Error::invalid("map", "parameters must be finite")),
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            LipschitzMap::Linear { matrix } => {
                for (i, row) in matrix.iter().enumerate() {
                    out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            LipschitzMap::Affine { slope, offset } => {
                for i in 0..x.len() {
                    out[i] = slope * x[i] + offset;
                }
            }
            LipschitzMap::Sine {
                amplitude,
                frequency,
            } => {
                for i in 0..x.len() {
                    out[i] = amplitude * (frequency * x[i]).sin();
                }
            }
            LipschitzMap::Tanh { scale } => {
                for i in 0..x.len() {
                    out[i] = scale * x[i].tanh();
                }
            }
        }
    }

    /// Lipschitz constant with respect to the H norm.
    pub fn lipschitz(&self, space: &HSpace) -> f64 {
        match self {
            LipschitzMap::Linear { matrix } => match to_matrix(matrix, space.dim()) {
                Ok(m) => h_similar(space, &m).singular_values().max(),
                Err(_) => f64::INFINITY,
            },
            LipschitzMap::Affine { slope, .. } => slope.abs(),
            LipschitzMap::Sine {
                amplitude,
                frequency,
            } => (amplitude * frequency).abs(),
            LipschitzMap::Tanh { scale } => scale.abs(),
        }
    }

    /// Bounds on the slope of a componentwise map, `None` for matrices.
    pub(crate) fn slope_range(&self) -> Option<(f64, f64)> {
        match *self {
            LipschitzMap::Linear { .. } => None,
            LipschitzMap::Affine { slope, .. } => Some((slope, slope)),
            LipschitzMap::Sine {
                amplitude,
                frequency,
            } => {
                let r = (amplitude * frequency).abs();
                Some((-r, r))
            }
            LipschitzMap::Tanh { scale } => Some((scale.min(0.0), scale.max(0.0))),
        }
    }

    /// Smallest `alpha0 >= 0` making `A0 + alpha0 I` monotone.
    pub fn monotonicity_shift(&self, space: &HSpace) -> f64 {
        let shift = match self {
            LipschitzMap::Linear { matrix } => match to_matrix(matrix, space.dim()) {
                Ok(m) => -min_symmetric_eigenvalue(&h_similar(space, &m)),
                Err(_) => f64::INFINITY,
            },
            LipschitzMap::Affine { slope, .. } => -slope,
            LipschitzMap::Sine {
                amplitude,
                frequency,
            } => (amplitude * frequency).abs(),
            LipschitzMap::Tanh { scale } => -scale,
        };
        shift.max(0.0)
    }
}
