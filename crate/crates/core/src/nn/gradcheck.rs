//! Central finite-difference gradient checks, run in `f64`.

use crate::error::{Error, Result};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where `max_rel_error` occurs.
    pub worst_index: usize,
    pub numeric: Vec<f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference stencil, both at step [`FD_STEP`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, truncation error O(h²).
    #[default]
    ThreePoint,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, truncation error O(h⁴).
    /// Needed where curvature is large next to a small gradient, e.g. a
    /// cosine term evaluated at a short vector.
    FivePoint,
}

/// Compare `analytic` against central differences of `f` at `params`.
pub fn grad_check(
    f: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    analytic: &[f64],
    tolerance: f64,
) -> Result<GradCheckReport> {
    grad_check_with(f, params, analytic, tolerance, Stencil::ThreePoint)
}

/// [`grad_check`] with an explicit stencil.
pub fn grad_check_with(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    analytic: &[f64],
    tolerance: f64,
    stencil: Stencil,
) -> Result<GradCheckReport> {
    if analytic.len() != params.len() {
        return Err(crate::error::shape_err(
            "grad_check",
            format!("analytic [{}]", analytic.len()),
            format!("params [{}]", params.len()),
        ));
    }
    let mut eval = |p: &[f64]| -> Result<f64> {
        let v = f(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Diverged("objective under gradient check".into()))
        }
    };
    eval(params)?;
    let mut x = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let (mut worst, mut worst_index) = (0.0f64, 0);
    for i in 0..x.len() {
        let orig = x[i];
        let mut at = |offset: f64| -> Result<f64> {
            x[i] = orig + offset;
            let v = eval(&x);
            x[i] = orig;
            v
        };
        let h = FD_STEP;
        let n = match stencil {
            Stencil::ThreePoint => (at(h)? - at(-h)?) / (2.0 * h),
            Stencil::FivePoint => {
                (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h)
            }
        };
        let r = relative_error(analytic[i], n);
        if r > worst {
            worst = r;
            worst_index = i;
        }
        numeric.push(n);
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        worst_index,
        numeric,
        tolerance,
    })
}
