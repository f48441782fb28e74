//! Named analytic initial-data profiles.
//!
//! All profiles are evaluated at cell centers and are nonnegative for the
//! parameter ranges the constructors accept; strict positivity is then
//! guaranteed by the initial-data regularization in the solver.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Analytic initial-data profile.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `base + amp * exp(-|x - center|^2 / (2 sigma^2))`.
    GaussianBump {
        base: f64,
        amp: f64,
        center: [f64; 2],
        sigma: f64,
    },
    /// Sum of two Gaussian bumps over a common base level.
    TwoBumps {
        base: f64,
        amp1: f64,
        center1: [f64; 2],
        sigma1: f64,
        amp2: f64,
        center2: [f64; 2],
        sigma2: f64,
    },
    /// `base + amp * (-1)^(ix+iy)`; requires `base > |amp|` so the data
    /// stays positive. Rough-data stress profile.
    CheckerboardPositive {
        base: f64,
        amp: f64,
    },
}

fn gaussian(x: [f64; 2], center: [f64; 2], sigma: f64, dims: usize) -> f64 {
    let mut r2 = (x[0] - center[0]) * (x[0] - center[0]);
    if dims == 2 {
        r2 += (x[1] - center[1]) * (x[1] - center[1]);
    }
    (-r2 / (2.0 * sigma * sigma)).exp()
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        match *self {
            Profile::Constant { value } => {
                if !(value >= 0.0) || !value.is_finite() {
                    return bad(format!("constant profile needs value >= 0, got {value}"));
                }
            }
            Profile::GaussianBump { base, amp, sigma, .. } => {
                if !(base >= 0.0) || !(amp >= 0.0) || !(sigma > 0.0) {
                    return bad(format!(
                        "gaussian-bump needs base >= 0, amp >= 0, sigma > 0, got {base}/{amp}/{sigma}"
                    ));
                }
            }
            Profile::TwoBumps {
                base,
                amp1,
                sigma1,
                amp2,
                sigma2,
                ..
            } => {
                if !(base >= 0.0) || !(amp1 >= 0.0) || !(amp2 >= 0.0) || !(sigma1 > 0.0) || !(sigma2 > 0.0) {
                    return bad("two-bumps needs nonnegative base/amps and positive sigmas".into());
                }
            }
            Profile::CheckerboardPositive { base, amp } => {
                if !(base > amp.abs()) {
                    return bad(format!(
                        "checkerboard-positive needs base > |amp|, got {base}/{amp}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, grid: &Grid) -> Result<Field> {
        self.validate()?;
        let field = match self {
            Profile::Constant { value } => grid.constant_field(*value),
            Profile::GaussianBump {
                base,
                amp,
                center,
                sigma,
            } => grid.field_from_fn(|x| base + amp * gaussian(x, *center, *sigma, grid.dims())),
            Profile::TwoBumps {
                base,
                amp1,
                center1,
                sigma1,
                amp2,
                center2,
                sigma2,
            } => grid.field_from_fn(|x| {
                base + amp1 * gaussian(x, *center1, *sigma1, grid.dims())
                    + amp2 * gaussian(x, *center2, *sigma2, grid.dims())
            }),
            Profile::CheckerboardPositive { base, amp } => {
                let nx = grid.nx();
                let mut f = grid.constant_field(*base);
                for i in 0..grid.cell_count() {
                    let parity = (i % nx + i / nx) % 2;
                    f.values[i] += if parity == 0 { *amp } else { -*amp };
                }
                f
            }
        };
        Ok(field)
    }
}
