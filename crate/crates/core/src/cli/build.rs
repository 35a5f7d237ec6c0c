//! Turns a resolved scenario into solver inputs.

use crate::error::{Error, Result};
use crate::hspace::{HSpace, Point, XNorm};
use crate::monotone_ops::MonotoneOperator;
use crate::sde_solver::SdeProblem;
use crate::stochastic::QWienerSpec;

use super::config::Loaded;

/// Re-labels solver-side validation failures with the scenario field.
fn field_error(loaded: &Loaded, field: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => loaded.locate(field, other.to_string()),
    }
}

pub fn space(loaded: &Loaded) -> Result<HSpace> {
    let sc = &loaded.scenario;
    let spec = &sc.space;
    let built = if let Some(cells) = spec.cells {
        if spec.weights.is_some() {
            return Err(loaded.locate("space.weights", "`cells` fixes the weights"));
        }
        HSpace::cells(cells)
    } else {
        let dim = spec.dim.unwrap_or(sc.input.u0.len());
        let weights = spec.weights.clone().unwrap_or_else(|| vec![1.0; dim]);
        HSpace::new(dim, weights, XNorm::SameAsH, 1.0)
    };
    built.map_err(|e| field_error(loaded, "space", e))
}

pub fn operator(loaded: &Loaded, space: &HSpace) -> Result<MonotoneOperator> {
    let spec = &loaded.scenario.operator;
    let mut op = MonotoneOperator::new(spec.kind.clone(), space).map_err(|e| field_error(loaded, "operator", e))?;
    if let Some(alpha) = spec.alpha {
        op = op.with_alpha(alpha).map_err(|e| field_error(loaded, "operator.alpha", e))?;
    }
    if let Some(modulus) = spec.modulus {
        op = op.with_modulus(modulus).map_err(|e| field_error(loaded, "operator.modulus", e))?;
    }
    Ok(op)
}

pub fn point(loaded: &Loaded, field: &str, space: &HSpace, values: &[f64]) -> Result<Point> {
    if values.len() != space.dim() {
        return Err(loaded.locate(field, format!("expected {} components, got {}", space.dim(), values.len())));
    }
    Ok(Point::from_column_slice(values))
}

pub fn noise(loaded: &Loaded, space: &HSpace) -> Result<QWienerSpec> {
    let Some(spec) = &loaded.scenario.noise else {
        return Err(loaded.locate("noise", "missing [noise] table"));
    };
    let built = match &spec.basis {
        None => QWienerSpec::coordinate(space, spec.eigenvalues.clone()),
        Some(basis) => {
            let basis = basis.iter().map(|b| Point::from_column_slice(b)).collect();
            QWienerSpec::new(space, spec.eigenvalues.clone(), basis)
        }
    };
    built.map_err(|e| field_error(loaded, "noise", e))
}

pub fn sde_problem(loaded: &Loaded) -> Result<SdeProblem> {
    let sc = &loaded.scenario;
    let space = space(loaded)?;
    let op = operator(loaded, &space)?;
    let u0 = point(loaded, "input.u0", &space, &sc.input.u0)?;
    let noise = noise(loaded, &space)?;
    SdeProblem::new(space, op, u0, sc.drift.clone(), sc.diffusion.clone(), noise)
        .map_err(|e| field_error(loaded, "diffusion", e))
}
